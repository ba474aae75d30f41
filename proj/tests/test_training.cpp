#include <doctest.h>

#include <cmath>
#include <numbers>
#include <random>
#include <vector>

#include "ckan/experiments.hpp"
#include "ckan/mfkan.hpp"
#include "ckan/training.hpp"
#include "gradcheck.hpp"
#include "helpers.hpp"

using namespace ckan;

namespace {

Dataset sample_1d(std::size_t n, double lo, double hi, double (*f)(double), std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  Dataset d(1);
  for (double x : testing::uniform(rng, n, lo, hi)) d.add(std::vector<double>{x}, f(x));
  return d;
}

PhysicsWave small_wave(std::uint64_t seed, std::size_t n = 6) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  PhysicsWave w;
  for (std::size_t i = 0; i < n; ++i) {
    w.collocation.push_back({u(rng), u(rng)});
    w.ic_points.push_back({u(rng), 0.0});
    w.bc_points.push_back({static_cast<double>(i % 2), u(rng)});
  }
  return w;
}

MfkanModel small_mfkan(std::uint64_t seed) {
  KanNetwork low = init_network({1, 5, 1}, 5, 3, seed + 100);
  return init_mfkan(Box({0.0}, {1.0}), low, {2, 3, 1}, 5, 3, seed);
}

}  // namespace

TEST_CASE("mse_loss: examples") {
  Dataset d(1);
  d.add(std::vector<double>{0.0}, 1.0);
  d.add(std::vector<double>{1.0}, -1.0);
  auto zero = [](std::span<const double>) { return 0.0; };
  CHECK(mse_loss(zero, d) == 1.0);

  Dataset one(1);
  one.add(std::vector<double>{0.5}, 0.25);
  auto c = [](std::span<const double>) { return 1.0; };
  CHECK(mse_loss(c, one) == doctest::Approx(0.75 * 0.75));

  const KanModel m = init_kan_model(Box({0.0}, {1.0}), {1, 3, 1}, 5, 3, 1);
  Dataset exact(1);
  for (double x : {0.1, 0.4, 0.9}) exact.add(std::vector<double>{x}, model_forward(m, std::vector<double>{x})[0]);
  CHECK(mse_loss(m, exact) == 0.0);

  CHECK_THROWS_AS(mse_loss(zero, Dataset(1)), Error);
}

TEST_CASE("hf_loss: examples") {
  MfkanModel m = small_mfkan(3);
  Dataset d(1);
  for (double x : {0.05, 0.3, 0.62, 0.9}) d.add(std::vector<double>{x}, 0.0);

  m.mixing_alpha = 0.0;
  for (std::size_t i = 0; i < d.size(); ++i) d.targets[i] = hf_forward(m, d.input(i))[0];
  CHECK(hf_loss(m, d, 1.0, 4, 0.0) == 0.0);

  m.mixing_alpha = 0.5;
  for (std::size_t i = 0; i < d.size(); ++i) d.targets[i] = hf_forward(m, d.input(i))[0];
  CHECK(hf_loss(m, d, 1.0, 4, 0.0) == doctest::Approx(0.0625).epsilon(1e-14));

  // Norm oracle: per layer, mean over edges of the mean-square edge value on 64 grid samples.
  double norm = 0.0;
  for (const auto& layer : m.kan_nonlinear.layers) {
    double acc = 0.0;
    for (const auto& e : layer.edges) {
      double ms = 0.0;
      for (int s = 0; s < 64; ++s) {
        const double x = layer.grid.domain_lo() + (layer.grid.domain_hi() - layer.grid.domain_lo()) * s / 63.0;
        const double v = edge_eval(e, layer.grid, x);
        ms += v * v;
      }
      acc += ms / 64.0;
    }
    norm += acc / static_cast<double>(layer.edges.size());
  }
  CHECK(hf_loss(m, d, 0.0, 4, 1.0) == doctest::Approx(norm).epsilon(1e-12));

  // The data term is a sum, not a mean.
  Dataset shifted = d;
  for (auto& y : shifted.targets) y += 0.5;
  CHECK(hf_loss(m, shifted, 0.0, 4, 0.0) == doctest::Approx(0.25 * 4).epsilon(1e-12));

  CHECK_THROWS_AS(hf_loss(m, Dataset(1), 1.0, 4, 0.0), Error);
  CHECK_THROWS_AS(hf_loss(m, d, 1.0, 0, 0.0), Error);
}

TEST_CASE("wave_pde_loss: exact solution annihilates every term") {
  const PhysicsWave w = small_wave(1, 50);
  JetField exact = [](std::span<const double> x, std::span<const int> dims) {
    return wave_exact_jet(x[0], x[1], dims);
  };
  const WaveLossBreakdown b = wave_pde_loss(exact, w);
  CHECK(b.ic <= 1e-10);
  CHECK(b.t <= 1e-10);
  CHECK(b.bc <= 1e-10);
  CHECK(b.res <= 1e-10);
  CHECK(b.total <= 1e-10);
}

TEST_CASE("wave_pde_loss: zero field leaves only the initial-condition term") {
  const PhysicsWave w = small_wave(2, 30);
  JetField zero = [](std::span<const double>, std::span<const int> dims) { return Jet2(dims.size()); };
  const WaveLossBreakdown b = wave_pde_loss(zero, w);
  double ic = 0.0;
  for (const auto& p : w.ic_points) {
    const double v = std::sin(std::numbers::pi * p[0]) + 0.5 * std::sin(4 * std::numbers::pi * p[0]);
    ic += v * v;
  }
  ic /= static_cast<double>(w.ic_points.size());
  CHECK(b.res == 0.0);
  CHECK(b.bc == 0.0);
  CHECK(b.t == 0.0);
  CHECK(b.ic == doctest::Approx(ic).epsilon(1e-14));
  CHECK(b.total == doctest::Approx(ic).epsilon(1e-14));
}

TEST_CASE("wave_pde_loss: total weighting and lambda_res = 0") {
  const KanModel m = init_kan_model(Box::cube(2, 0.0, 1.0), {2, 3, 1}, 5, 3, 4);
  PhysicsWave a = small_wave(3, 10);
  const WaveLossBreakdown b = wave_pde_loss(m, a);
  CHECK(b.total == doctest::Approx(b.ic + b.t + b.bc + 0.01 * b.res).epsilon(1e-14));
  a.lambda_res = 0.0;
  PhysicsWave c = a;
  for (auto& p : c.collocation) p = {1.0 - p[0], 0.5 * p[1]};
  CHECK(wave_pde_loss(m, a).total == wave_pde_loss(m, c).total);

  PhysicsWave empty = a;
  empty.bc_points.clear();
  CHECK_THROWS_AS(wave_pde_loss(m, empty), Error);
}

TEST_CASE("wave_pde_loss: model and loss_and_grad agree") {
  const FbkanModel f = init_fbkan(uniform_decomposition(Box::cube(2, 0.0, 1.0), {2, 2}, 0.2), {2, 3, 1}, 5, 3, 5);
  const PhysicsWave w = small_wave(4, 8);
  const LossValue v = loss_and_grad(LossSpec{w}, f, {});
  const WaveLossBreakdown b = wave_pde_loss(f, w);
  CHECK(v.total == b.total);
  CHECK(v.components == std::vector<double>{b.ic, b.t, b.bc, b.res});
  CHECK(component_names(LossSpec{w}) == std::vector<std::string>{"ic", "t", "bc", "res"});
}

TEST_CASE("grad: zero-residual data gives a zero gradient") {
  const KanModel m = init_kan_model(Box({0.0}, {1.0}), {1, 3, 1}, 5, 3, 8);
  Dataset d(1);
  for (double x : {0.2, 0.5, 0.7}) d.add(std::vector<double>{x}, model_forward(m, std::vector<double>{x})[0]);
  for (double g : grad(LossSpec{DataMSE{d}}, m)) CHECK(g == 0.0);
}

TEST_CASE("grad: single edge, single point, hand chain rule for w_b and w_s") {
  KanModel m = init_kan_model(Box({-1.0}, {1.0}), {1, 1}, 5, 3, 2);
  const double x = 0.3, y = 0.9;
  Dataset d(1);
  d.add(std::vector<double>{x}, y);
  const auto& e = m.net.layers[0].edges[0];
  const double s = eval_spline(m.net.layers[0].grid, e.coeffs, x);
  const double b = x / (1.0 + std::exp(-x));
  const double r = e.w_b * b + e.w_s * s - y;
  const auto g = grad(LossSpec{DataMSE{d}}, m);
  const std::size_t nb = e.coeffs.size();
  CHECK(g[nb] == doctest::Approx(2.0 * r * b).epsilon(1e-13));
  CHECK(g[nb + 1] == doctest::Approx(2.0 * r * s).epsilon(1e-13));
  const auto B = eval_basis(m.net.layers[0].grid, x);
  for (std::size_t i = 0; i < nb; ++i) CHECK(g[i] == doctest::Approx(2.0 * r * e.w_s * B[i]).epsilon(1e-13));
}

TEST_CASE("grad: DataMSE on a random [1,3,1] model vs finite differences") {
  const KanModel m = init_kan_model(Box({0.0}, {2.0}), {1, 3, 1}, 5, 3, 10);
  const Dataset d = sample_1d(10, 0.0, 2.0, f1, 11);
  const auto r = testing::check_gradient(LossSpec{DataMSE{d}}, m);
  CHECK(r.checked > 30u);
  CHECK(r.failures == 0u);
}

TEST_CASE("grad: DataMSE on FBKAN vs finite differences") {
  const FbkanModel f = init_fbkan(uniform_decomposition(Box({0.0}, {2.0}), {3}, 0.2), {1, 3, 1}, 5, 3, 12);
  const Dataset d = sample_1d(12, 0.0, 2.0, f1, 13);
  const auto r = testing::check_gradient(LossSpec{DataMSE{d}}, f);
  CHECK(r.checked > 50u);
  CHECK(r.failures == 0u);
}

TEST_CASE("grad: MultiFidelityHF including the mixing weight") {
  MfkanModel m = small_mfkan(14);
  m.mixing_alpha = 0.4;
  const Dataset d = sample_1d(5, 0.0, 1.0, f_high, 15);
  for (double w : {0.0, 1.0}) {
    const LossSpec spec = MultiFidelityHF{d, 0.5, 4, w};
    const auto r = testing::check_gradient(spec, m);
    CHECK(r.checked > 20u);
    CHECK(r.failures == 0u);
  }
  // d/d alpha = data part + n * lambda * alpha^(n-1).
  const LossSpec spec = MultiFidelityHF{d, 0.5, 4, 0.0};
  const auto g = grad(spec, m);
  double data = 0.0;
  for (std::size_t i = 0; i < d.size(); ++i) {
    MfkanModel a = m, b = m;
    a.mixing_alpha = 1.0;
    b.mixing_alpha = 0.0;
    const double knl = hf_forward(a, d.input(i))[0];
    const double kl = hf_forward(b, d.input(i))[0];
    data += 2.0 * (hf_forward(m, d.input(i))[0] - d.targets[i]) * (knl - kl);
  }
  CHECK(g.back() == doctest::Approx(data + 4 * 0.5 * std::pow(0.4, 3)).epsilon(1e-12));
}

TEST_CASE("grad: PhysicsWave on KAN and FBKAN vs finite differences") {
  const PhysicsWave w = small_wave(16, 5);
  const KanModel k = init_kan_model(Box::cube(2, 0.0, 1.0), {2, 3, 1}, 5, 3, 17);
  const auto rk = testing::check_gradient(LossSpec{w}, k);
  CHECK(rk.checked > 40u);
  CHECK(rk.failures == 0u);
  const FbkanModel f = init_fbkan(uniform_decomposition(Box::cube(2, 0.0, 1.0), {2, 2}, 0.2), {2, 2, 1}, 4, 3, 18);
  const auto rf = testing::check_gradient(LossSpec{w}, f);
  CHECK(rf.checked > 40u);
  CHECK(rf.failures == 0u);
}

TEST_CASE("loss_and_grad: mismatched loss/model combinations") {
  const KanModel k = init_kan_model(Box({0.0}, {1.0}), {1, 2, 1}, 5, 3, 1);
  Dataset d(1);
  d.add(std::vector<double>{0.5}, 1.0);
  CHECK_THROWS_AS(loss_and_grad(LossSpec{MultiFidelityHF{d}}, k, {}), Error);
  CHECK_THROWS_AS(loss_and_grad(LossSpec{small_wave(1)}, k, {}), Error);
  CHECK_THROWS_AS(loss_and_grad(LossSpec{small_wave(1)}, small_mfkan(1), {}), Error);
  std::vector<double> g(3);
  CHECK_THROWS_AS(loss_and_grad(LossSpec{DataMSE{d}}, k, g), Error);
}

TEST_CASE("adam_step: examples") {
  AdamState s(3);
  std::vector<double> p{0.5, -1.0, 2.0};
  const std::vector<double> zero(3, 0.0);
  adam_step(s, p, zero, 1e-2);
  CHECK(p == std::vector<double>{0.5, -1.0, 2.0});

  AdamState s1(1);
  std::vector<double> q{0.0};
  const std::vector<double> g{0.3};
  adam_step(s1, q, g, 1e-2);
  CHECK(q[0] == doctest::Approx(-1e-2 * 0.3 / (0.3 + 1e-8)).epsilon(1e-12));
  CHECK(s1.t == 1);

  AdamState a(2), b(2);
  std::vector<double> pa{1.0, 2.0}, pb{1.0, 2.0};
  for (int i = 0; i < 10; ++i) {
    const std::vector<double> gi{std::sin(i), std::cos(i)};
    adam_step(a, pa, gi, 1e-2);
    adam_step(b, pb, gi, 1e-2);
  }
  CHECK(pa == pb);

  AdamState t(2);
  std::vector<double> pt{1.0, 2.0};
  for (int i = 0; i < 100; ++i) adam_step(t, pt, std::vector<double>{5.0, -3.0}, 1e-12);
  CHECK(std::abs(pt[0] - 1.0) <= 1e-9);
  CHECK(std::abs(pt[1] - 2.0) <= 1e-9);

  std::vector<double> wrong{1.0};
  CHECK_THROWS_AS(adam_step(t, wrong, g, 1e-2), Error);
}

TEST_CASE("train: config validation and history length") {
  KanModel m = init_kan_model(Box({0.0}, {1.0}), {1, 2, 1}, 5, 3, 1);
  Dataset d(1);
  d.add(std::vector<double>{0.5}, 0.0);
  TrainConfig c;
  c.epochs = 0;
  CHECK_THROWS_AS(train(m, LossSpec{DataMSE{d}}, c), Error);
  c.epochs = 1;
  c.learning_rate = 0.0;
  CHECK_THROWS_AS(train(m, LossSpec{DataMSE{d}}, c), Error);
  c.learning_rate = 1e-2;
  c.full_batch = false;
  CHECK_THROWS_AS(train(m, LossSpec{DataMSE{d}}, c), Error);
  c.full_batch = true;
  const LossHistory h = train(m, LossSpec{DataMSE{d}}, c);
  CHECK(h.size() == 2u);
  CHECK(h.component_names == std::vector<std::string>{"mse"});
  CHECK(h.components.size() == 2u);
}

TEST_CASE("train: constant zero target, loss decreases; runs are deterministic") {
  const Dataset d = sample_1d(20, 0.0, 1.0, [](double) { return 0.0; }, 3);
  TrainConfig c;
  c.epochs = 200;
  KanModel a = init_kan_model(Box({0.0}, {1.0}), {1, 3, 1}, 5, 3, 4);
  KanModel b = a;
  const LossHistory ha = train(a, LossSpec{DataMSE{d}}, c);
  const LossHistory hb = train(b, LossSpec{DataMSE{d}}, c);
  CHECK(ha.final() < ha.initial());
  CHECK(ha.final() < 1e-3);
  CHECK(flatten_params(a) == flatten_params(b));
  CHECK(ha.totals == hb.totals);
}

TEST_CASE("train: divergence aborts with the epoch") {
  KanModel m = init_kan_model(Box({0.0}, {1.0}), {1, 2, 1}, 5, 3, 1);
  const Dataset d = sample_1d(5, 0.0, 1.0, f1, 1);
  TrainConfig c;
  c.epochs = 10;
  c.learning_rate = 1e300;
  try {
    train(m, LossSpec{DataMSE{d}}, c);
    FAIL("expected divergence");
  } catch (const DivergedError& e) {
    CHECK(e.code() == ErrorCode::Diverged);
    CHECK(e.epoch() >= 1u);
    CHECK(e.epoch() <= 10u);
  }
}

TEST_CASE("train: mixing alpha stays in [0, 1]") {
  MfkanModel m = small_mfkan(5);
  const Dataset d = sample_1d(5, 0.0, 1.0, f_high, 6);
  TrainConfig c;
  c.epochs = 50;
  c.learning_rate = 0.5;
  const LossHistory h = train(m, LossSpec{MultiFidelityHF{d, 100.0, 4, 0.0}}, c);
  CHECK(h.size() == 51u);
  CHECK(m.mixing_alpha >= 0.0);
  CHECK(m.mixing_alpha <= 1.0);
}
