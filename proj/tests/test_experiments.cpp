#include <doctest.h>

#include <cmath>
#include <numbers>
#include <vector>

#include "ckan/experiments.hpp"
#include "helpers.hpp"

using namespace ckan;

TEST_CASE("target functions: values") {
  CHECK(f1(0.0) == 1.0);
  CHECK(f1(1.0) == doctest::Approx(std::exp(std::sin(0.3 * std::numbers::pi))).epsilon(1e-15));
  CHECK(f1(1.0) == doctest::Approx(2.24570).epsilon(1e-5));
  CHECK(f1(2.0) == doctest::Approx(0.55556).epsilon(1e-4));
  for (double t : {0.0, 0.3, 0.77}) {
    CHECK(f2(0.0, t) == 0.0);
    CHECK(f2(t, 0.0) == 0.0);
  }
  CHECK(f2(std::sqrt(1.0 / 12.0), std::sqrt(1.0 / 16.0)) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(f_low(0.0) == doctest::Approx(-0.84864).epsilon(1e-5));
  const double eps = 1e-12;
  CHECK(f_low(0.5 + eps) - f_low(0.5) == doctest::Approx(0.3).epsilon(1e-8));
  for (double x : {0.0, 0.2, 0.5, 0.51, 0.9, 1.0}) CHECK(f_high(x) == 2.0 * f_low(x) - 2.0 * x + 2.0);
}

TEST_CASE("wave_exact: boundary and initial conditions") {
  const double pi = std::numbers::pi;
  for (double t : {0.0, 0.13, 0.5, 0.91}) {
    CHECK(std::abs(wave_exact(0.0, t)) < 1e-15);
    CHECK(std::abs(wave_exact(1.0, t)) < 1e-14);
  }
  for (double x : {0.1, 0.25, 0.6}) {
    CHECK(wave_exact(x, 0.0) == doctest::Approx(wave_initial_profile(x)).epsilon(1e-14));
    CHECK(wave_initial_profile(x) == doctest::Approx(std::sin(pi * x) + 0.5 * std::sin(4 * pi * x)).epsilon(1e-14));
  }
}

TEST_CASE("wave_exact_jet: PDE residual and finite differences") {
  const std::vector<int> both{0, 1};
  const double c = kWaveSpeed;
  for (double x : {0.11, 0.4, 0.83}) {
    for (double t : {0.0, 0.27, 0.9}) {
      const Jet2 j = wave_exact_jet(x, t, both);
      CHECK(j.value == wave_exact(x, t));
      CHECK(std::abs(j.d2[1] - c * c * j.d2[0]) <= 1e-10);
      CHECK(j.d1[0] == doctest::Approx(testing::central_diff([&](double s) { return wave_exact(s, t); }, x, 1e-6))
                           .epsilon(1e-7)
                           .scale(1e-6));
      CHECK(j.d1[1] == doctest::Approx(testing::central_diff([&](double s) { return wave_exact(x, s); }, t, 1e-6))
                           .epsilon(1e-7)
                           .scale(1e-6));
      CHECK(j.d2[0] ==
            doctest::Approx(testing::central_diff2([&](double s) { return wave_exact(s, t); }, x, 1e-4)).epsilon(1e-5));
    }
  }
  const std::vector<int> bad{2};
  CHECK_THROWS_AS(wave_exact_jet(0.1, 0.1, bad), Error);
}

TEST_CASE("default_spec: shapes") {
  const auto e1 = default_spec("exp1");
  CHECK(e1.domain == Box({0.0}, {2.0}));
  CHECK(e1.n_train == 400);
  CHECK(e1.ensemble_size == 4);
  CHECK(e1.subdomains == std::vector<int>{10});
  CHECK(e1.alpha == 0.05);
  const auto e2 = default_spec("exp2");
  CHECK(e2.domain == Box::cube(2, 0.0, 1.0));
  CHECK(e2.subdomain_count() == 4);
  const auto e3 = default_spec("exp3");
  CHECK(e3.models == std::vector<ModelKind>{ModelKind::Mfkan});
  CHECK(e3.n_train == 5);
  CHECK(e3.ensemble_size == 5);
  const auto e4 = default_spec("exp4");
  CHECK(e4.n_collocation + e4.n_ic + e4.n_bc == e4.n_train);
  CHECK(e4.kan_widths == std::vector<int>{2, 5, 5, 1});
  CHECK(e4.ensemble_size == 10);
  CHECK(e4.overlap == 0.8);
  CHECK(e1.overlap == 0.2);
  CHECK_THROWS_AS(default_spec("exp5"), Error);
  try {
    default_spec("nope");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::UnknownExperiment);
  }
}

TEST_CASE("sample_dataset: sizes, ranges, determinism") {
  for (const char* id : {"exp1", "exp2", "exp3", "exp4"}) {
    const auto spec = default_spec(id);
    const auto a = sample_dataset(spec);
    const auto b = sample_dataset(spec);
    CHECK(a.calibration.size() == spec.n_cal);
    CHECK(a.test.size() == spec.n_test);
    CHECK(a.calibration == b.calibration);
    CHECK(a.test == b.test);
    CHECK(a.train == b.train);
    for (std::size_t i = 0; i < a.test.size(); ++i) CHECK(spec.domain.contains(a.test.input(i)));
    CHECK_FALSE(a.calibration.inputs == std::vector<double>(a.test.inputs.begin(),
                                                             a.test.inputs.begin() + static_cast<std::ptrdiff_t>(
                                                                                         a.calibration.inputs.size())));
    if (spec.id == "exp4") {
      CHECK(a.train.empty());
      CHECK(a.physics.collocation.size() == spec.n_collocation);
      CHECK(a.physics.ic_points.size() == spec.n_ic);
      REQUIRE(a.physics.bc_points.size() == spec.n_bc);
      std::size_t left = 0;
      for (const auto& p : a.physics.bc_points) {
        CHECK((p[0] == 0.0 || p[0] == 1.0));
        left += p[0] == 0.0 ? 1 : 0;
      }
      CHECK(left == spec.n_bc / 2);
      for (const auto& p : a.physics.ic_points) CHECK(p[1] == 0.0);
    } else {
      CHECK(a.train.size() == spec.n_train);
    }
    if (spec.id == "exp3") {
      CHECK(a.lf_train.size() == spec.n_lf);
      for (std::size_t i = 0; i < a.lf_train.size(); ++i) CHECK(a.lf_train.targets[i] == f_low(a.lf_train.input(i)[0]));
      for (std::size_t i = 0; i < a.train.size(); ++i) CHECK(a.train.targets[i] == f_high(a.train.input(i)[0]));
    }
    auto other = spec;
    other.data_seed += 1;
    CHECK_FALSE(sample_dataset(other).test == a.test);
  }
}

TEST_CASE("validate: rejects bad specs") {
  auto check_code = [](ExperimentSpec s, ErrorCode code) {
    try {
      validate(s);
      FAIL("expected an error");
    } catch (const Error& e) {
      CHECK(e.code() == code);
    }
  };
  const auto base = default_spec("exp1");
  auto s = base;
  s.alpha = 0.0;
  check_code(s, ErrorCode::InvalidArgument);
  s = base;
  s.ensemble_size = 1;
  check_code(s, ErrorCode::InvalidArgument);
  s = base;
  s.kan_widths = {2, 5, 1};
  check_code(s, ErrorCode::WidthMismatch);
  s = base;
  s.subdomains = {2, 2};
  check_code(s, ErrorCode::WidthMismatch);
  s = base;
  s.models = {ModelKind::Mfkan};
  check_code(s, ErrorCode::InvalidArgument);
  s = base;
  s.id = "exp9";
  check_code(s, ErrorCode::UnknownExperiment);
  s = base;
  s.n_cal = 0;
  check_code(s, ErrorCode::InvalidArgument);
  s = base;
  s.train.epochs = 0;
  check_code(s, ErrorCode::InvalidArgument);
  auto w = default_spec("exp4");
  w.n_bc += 1;
  check_code(w, ErrorCode::InvalidArgument);
  CHECK_NOTHROW(validate(default_spec("exp3")));
}

TEST_CASE("evaluate_model: rows and dumps") {
  ExperimentSpec spec = default_spec("exp1");
  Dataset cal(1), test(1);
  std::vector<EnsembleStats> cs, ts;
  for (int i = 0; i < 40; ++i) {
    cal.add(std::vector<double>{i / 20.0}, 0.1 * (i % 5));
    cs.push_back({0.0, 0.1});
  }
  for (int i = 0; i < 10; ++i) {
    test.add(std::vector<double>{i / 5.0}, 0.05 * i);
    ts.push_back({0.0, 0.1});
  }
  const auto ev = evaluate_model("kan", cs, cal, ts, test, 0.1, 4, 1, 9);
  // Scores are {0, 1, 2, 3, 4} x 8; rank ceil(41 * 0.9) = 37 -> 4.
  CHECK(ev.calibration.q_hat == doctest::Approx(4.0));
  CHECK(ev.conformal_row.model == "kan");
  CHECK(ev.conformal_row.intervals_kind == "conformal");
  CHECK(ev.ensemble_row.intervals_kind == "ensemble");
  CHECK(ev.conformal_row.avg_piw == doctest::Approx(0.8));
  CHECK(ev.ensemble_row.avg_piw == doctest::Approx(2 * 1.96 * 0.1));
  // Targets 0.05 i are covered by [-0.4, 0.4] for i <= 8.
  CHECK(ev.conformal_row.coverage == doctest::Approx(0.9));
  CHECK(ev.ensemble_row.coverage == doctest::Approx(0.4));
  CHECK(ev.conformal_row.n_cal == 40);
  CHECK(ev.conformal_row.M == 4);
  CHECK(ev.conformal_row.seed == 9);
  CHECK(ev.conformal_dump.y_true == test.targets);
  CHECK(ev.conformal_dump.covered.size() == 10);
  CHECK(ev.conformal_dump.covered[8]);
  CHECK_FALSE(ev.conformal_dump.covered[9]);
}

TEST_CASE("run_experiment and run_ablation: tiny configurations") {
  ExperimentSpec spec = default_spec("exp1");
  spec.n_train = 40;
  spec.n_cal = 30;
  spec.n_test = 50;
  spec.ensemble_size = 2;
  spec.train.epochs = 5;
  const auto rec = run_experiment(spec);
  CHECK(rec.rows.size() == 4);
  CHECK(rec.row("fbkan", "conformal").L == 10);
  CHECK(rec.row("kan", "ensemble").L == 1);
  CHECK(rec.calibrations.size() == 2);
  CHECK(run_experiment(spec).rows[0].coverage == rec.rows[0].coverage);

  spec.models = {ModelKind::Fbkan};
  const auto sweep = run_ablation(AblationAxis::Subdomains, {1, 2, 3, 4, 5}, spec, 1);
  REQUIRE(sweep.points.size() == 5);
  for (std::size_t i = 0; i < 5; ++i) {
    CHECK(sweep.points[i].value == static_cast<double>(i + 1));
    CHECK(sweep.points[i].record.row("fbkan", "conformal").L == i + 1);
  }
  CHECK(parse_axis(axis_name(AblationAxis::CalibrationSize)) == AblationAxis::CalibrationSize);
  CHECK_THROWS_AS(parse_axis("bogus"), Error);
}
