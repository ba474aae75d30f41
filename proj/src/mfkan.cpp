#include "ckan/mfkan.hpp"

#include <algorithm>
#include <cmath>

#include "ckan/error.hpp"
#include "ckan/seed.hpp"
#include "ckan/training.hpp"

namespace ckan {

KanNetwork make_linear_kan(int in_width, int out_width, std::uint64_t seed) {
  KanNetwork net = init_network({in_width, out_width}, 1, 1, seed);
  net.silu_branch = false;
  for (auto& layer : net.layers) {
    for (auto& e : layer.edges) e.w_b = 0.0;
  }
  return net;
}

MfkanModel init_mfkan(const Box& domain, KanNetwork kan_low, const std::vector<int>& nonlinear_widths,
                      int intervals, int degree, std::uint64_t seed) {
  const int m0 = kan_low.input_width();
  require(static_cast<std::size_t>(m0) == domain.dims(), ErrorCode::WidthMismatch,
          "init_mfkan: low-fidelity input width must equal the domain dimension");
  require(nonlinear_widths.size() >= 3, ErrorCode::InvalidArgument,
          "init_mfkan: the nonlinear KAN needs at least one hidden layer");
  require(nonlinear_widths.front() == m0 + kan_low.output_width(), ErrorCode::WidthMismatch,
          "init_mfkan: nonlinear input width must be m0 + low-fidelity output width");
  require(degree >= 2, ErrorCode::InvalidArgument, "init_mfkan: nonlinear KAN degree must be >= 2");
  MfkanModel model;
  model.domain = domain;
  model.kan_linear = make_linear_kan(nonlinear_widths.front(), nonlinear_widths.back(), derive_seed(seed, 0));
  model.kan_nonlinear = init_network(nonlinear_widths, intervals, degree, derive_seed(seed, 1));
  model.kan_low = std::move(kan_low);
  model.mixing_alpha = 0.5;
  model.low_frozen = true;
  return model;
}

namespace {

void make_z(const MfkanModel& model, std::span<const double> x, KanTape& low, std::vector<double>& z) {
  require(x.size() == model.domain.dims(), ErrorCode::WidthMismatch, "MFKAN: input dimension mismatch");
  const std::size_t m0 = x.size();
  z.resize(m0 + static_cast<std::size_t>(model.kan_low.output_width()));
  for (std::size_t d = 0; d < m0; ++d) z[d] = model.domain.to_unit(d, x[d]);
  low.forward_seeded(model.kan_low, std::span<const double>(z).first(m0), {}, {}, false);
  const auto y = low.out_value();
  std::copy(y.begin(), y.end(), z.begin() + static_cast<std::ptrdiff_t>(m0));
}

}  // namespace

std::vector<double> hf_forward(const MfkanModel& model, std::span<const double> x) {
  KanTape low;
  std::vector<double> z;
  make_z(model, x, low, z);
  const auto lin = network_forward(model.kan_linear, z);
  const auto nl = network_forward(model.kan_nonlinear, z);
  std::vector<double> out(lin.size());
  const double a = model.mixing_alpha;
  for (std::size_t q = 0; q < out.size(); ++q) out[q] = a * nl[q] + (1.0 - a) * lin[q];
  return out;
}

namespace {

double phi_norm_impl(const KanNetwork& net, double weight, std::span<double> grad,
                     std::vector<double>* per_layer) {
  const bool want_grad = !grad.empty();
  std::size_t off = 0;
  double total = 0.0;
  LocalBasis local;
  for (const auto& layer : net.layers) {
    const int nb = layer.grid.basis_count();
    const double lo = layer.grid.domain_lo();
    const double hi = layer.grid.domain_hi();
    const double edge_scale = 1.0 / (static_cast<double>(layer.in_width) * layer.out_width);
    const double sample_scale = 1.0 / kPhiNormSamples;
    double layer_sum = 0.0;
    for (std::size_t e = 0; e < layer.edges.size(); ++e) {
      const EdgeFunction& edge = layer.edges[e];
      const double wb = net.silu_branch ? edge.w_b : 0.0;
      double* ge = want_grad ? grad.data() + off + e * static_cast<std::size_t>(nb + 2) : nullptr;
      double sq = 0.0;
      for (int s = 0; s < kPhiNormSamples; ++s) {
        const double x = (s == kPhiNormSamples - 1) ? hi : lo + (hi - lo) * s / (kPhiNormSamples - 1);
        eval_local_basis(layer.grid, x, 0, local);
        double spline = 0.0;
        for (int j = 0; j < local.count; ++j) spline += edge.coeffs[local.first + j] * local.values[0][j];
        const double b = silu_derivs(x)[0];
        const double phi = wb * b + edge.w_s * spline;
        sq += phi * phi;
        if (ge != nullptr) {
          const double g = weight * edge_scale * sample_scale * 2.0 * phi;
          for (int j = 0; j < local.count; ++j) ge[local.first + j] += g * edge.w_s * local.values[0][j];
          if (net.silu_branch) ge[nb] += g * b;
          ge[nb + 1] += g * spline;
        }
      }
      layer_sum += sq * sample_scale;
    }
    const double norm = layer_sum * edge_scale;
    if (per_layer != nullptr) per_layer->push_back(norm);
    total += norm;
    off += layer.edges.size() * static_cast<std::size_t>(nb + 2);
  }
  return total;
}

}  // namespace

std::vector<double> phi_nl_norm(const KanNetwork& kan_nonlinear) {
  std::vector<double> out;
  phi_norm_impl(kan_nonlinear, 0.0, {}, &out);
  return out;
}

double phi_nl_norm_sum(const KanNetwork& net, double weight, std::span<double> grad) {
  if (!grad.empty()) {
    require(grad.size() == param_count(net), ErrorCode::LengthMismatch, "phi_nl_norm_sum: gradient size");
  }
  return phi_norm_impl(net, weight, grad, nullptr);
}

std::size_t param_count(const MfkanModel& model) {
  return param_count(model.kan_linear) + param_count(model.kan_nonlinear) + 1;
}

std::vector<double> flatten_params(const MfkanModel& model) {
  std::vector<double> out(param_count(model));
  const std::size_t nl = param_count(model.kan_linear);
  const std::size_t nn = param_count(model.kan_nonlinear);
  flatten_params(model.kan_linear, std::span<double>(out).first(nl));
  flatten_params(model.kan_nonlinear, std::span<double>(out).subspan(nl, nn));
  out.back() = model.mixing_alpha;
  return out;
}

void unflatten_params(MfkanModel& model, std::span<const double> params) {
  require(params.size() == param_count(model), ErrorCode::LengthMismatch, "unflatten_params(MFKAN): length");
  const std::size_t nl = param_count(model.kan_linear);
  const std::size_t nn = param_count(model.kan_nonlinear);
  unflatten_params(model.kan_linear, params.first(nl));
  unflatten_params(model.kan_nonlinear, params.subspan(nl, nn));
  model.mixing_alpha = params.back();
}

MfkanSession::MfkanSession(const MfkanModel& model)
    : model_(model),
      linear_params_(param_count(model.kan_linear)),
      nonlinear_params_(param_count(model.kan_nonlinear)) {
  require(model.kan_linear.output_width() == 1 && model.kan_nonlinear.output_width() == 1,
          ErrorCode::WidthMismatch, "MfkanSession: scalar-output heads required");
  adj_.resize(1);
}

double MfkanSession::forward(std::span<const double> x, bool record) {
  make_z(model_, x, low_, z_);
  linear_.forward_seeded(model_.kan_linear, z_, {}, {}, record);
  nonlinear_.forward_seeded(model_.kan_nonlinear, z_, {}, {}, record);
  k_linear_ = linear_.out_value()[0];
  k_nonlinear_ = nonlinear_.out_value()[0];
  const double a = model_.mixing_alpha;
  return a * k_nonlinear_ + (1.0 - a) * k_linear_;
}

void MfkanSession::backward(double adjoint, std::span<double> grad) {
  const double a = model_.mixing_alpha;
  adj_[0] = adjoint * (1.0 - a);
  linear_.backward(model_.kan_linear, adj_, {}, {}, grad.first(linear_params_));
  adj_[0] = adjoint * a;
  nonlinear_.backward(model_.kan_nonlinear, adj_, {}, {}, grad.subspan(linear_params_, nonlinear_params_));
  grad[linear_params_ + nonlinear_params_] += adjoint * (k_nonlinear_ - k_linear_);
}

KanNetwork train_low_fidelity(const Box& domain, const Dataset& lf_data, const LowFidelityArchitecture& arch,
                              const TrainConfig& config, LossHistory* history) {
  require(!lf_data.empty(), ErrorCode::EmptyDataset, "train_low_fidelity: empty dataset");
  KanModel model = init_kan_model(domain, arch.widths, arch.intervals, arch.degree, arch.seed);
  LossHistory h = train(model, LossSpec{DataMSE{lf_data}}, config);
  if (history != nullptr) *history = std::move(h);
  return std::move(model.net);
}

MfkanModel train_high_fidelity(MfkanModel model, const Dataset& hf_data, double lambda_alpha, int exponent_n,
                               double linear_weight_w, const TrainConfig& config, LossHistory* history) {
  require(model.low_frozen, ErrorCode::InvalidArgument,
          "train_high_fidelity: the low-fidelity network must be frozen");
  require(!hf_data.empty(), ErrorCode::EmptyDataset, "train_high_fidelity: empty dataset");
  LossHistory h = train(model, LossSpec{MultiFidelityHF{hf_data, lambda_alpha, exponent_n, linear_weight_w}}, config);
  if (history != nullptr) *history = std::move(h);
  return model;
}

}  // namespace ckan
