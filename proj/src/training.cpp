#include "ckan/training.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace ckan {

std::vector<std::string> component_names(const LossSpec& spec) {
  struct Visitor {
    std::vector<std::string> operator()(const DataMSE&) const { return {"mse"}; }
    std::vector<std::string> operator()(const MultiFidelityHF&) const { return {"data", "alpha_reg", "phi_reg"}; }
    std::vector<std::string> operator()(const PhysicsWave&) const { return {"ic", "t", "bc", "res"}; }
  };
  return std::visit(Visitor{}, spec);
}

double wave_initial_profile(double x) {
  constexpr double pi = std::numbers::pi;
  return std::sin(pi * x) + 0.5 * std::sin(4.0 * pi * x);
}

namespace {

constexpr int kDimX = 0;
constexpr int kDimT = 1;

void check_wave_spec(const PhysicsWave& spec) {
  require(!spec.collocation.empty() && !spec.ic_points.empty() && !spec.bc_points.empty(),
          ErrorCode::EmptyDataset, "wave_pde_loss: empty point set");
  require(std::isfinite(spec.lambda_res) && spec.lambda_res >= 0.0, ErrorCode::InvalidArgument,
          "wave_pde_loss: lambda_res must be finite and >= 0");
  require(std::isfinite(spec.wave_speed_c), ErrorCode::InvalidArgument, "wave_pde_loss: wave speed must be finite");
}

void finish(WaveLossBreakdown& out, double lambda_res) {
  out.total = out.ic + out.t + out.bc + lambda_res * out.res;
}

// Session must provide forward(x, dims, record) -> const Jet2& and
// backward(const Jet2&, grad).
template <class Session>
double data_mse(Session& session, const Dataset& data, double scale, bool sum, std::span<double> grad) {
  require(!data.empty(), ErrorCode::EmptyDataset, "loss: empty dataset");
  const bool want = !grad.empty();
  const double norm = sum ? 1.0 : 1.0 / static_cast<double>(data.size());
  Jet2 adj(0);
  double acc = 0.0;
  for (std::size_t i = 0; i < data.size(); ++i) {
    const double f = session.forward(data.input(i), {}, want).value;
    const double r = f - data.targets[i];
    acc += r * r;
    if (want) {
      adj.value = scale * 2.0 * r * norm;
      session.backward(adj, grad);
    }
  }
  return acc * norm;
}

template <class Session>
WaveLossBreakdown wave_loss(Session& session, const PhysicsWave& spec, std::span<double> grad) {
  check_wave_spec(spec);
  const bool want = !grad.empty();
  WaveLossBreakdown out;
  const double c2 = spec.wave_speed_c * spec.wave_speed_c;

  const std::array<int, 1> t_only{kDimT};
  const double n_ic = static_cast<double>(spec.ic_points.size());
  Jet2 adj_ic(1);
  for (const Point2& p : spec.ic_points) {
    const Jet2& j = session.forward(p, t_only, want);
    const double r = j.value - wave_initial_profile(p[0]);
    const double ft = j.d1[0];
    out.ic += r * r;
    out.t += ft * ft;
    if (want) {
      adj_ic.value = 2.0 * r / n_ic;
      adj_ic.d1[0] = 2.0 * ft / n_ic;
      session.backward(adj_ic, grad);
    }
  }
  out.ic /= n_ic;
  out.t /= n_ic;

  const double n_bc = static_cast<double>(spec.bc_points.size());
  Jet2 adj_bc(0);
  for (const Point2& p : spec.bc_points) {
    const double f = session.forward(p, {}, want).value;
    out.bc += f * f;
    if (want) {
      adj_bc.value = 2.0 * f / n_bc;
      session.backward(adj_bc, grad);
    }
  }
  out.bc /= n_bc;

  const std::array<int, 2> both{kDimX, kDimT};
  const double n_res = static_cast<double>(spec.collocation.size());
  Jet2 adj_res(2);
  for (const Point2& p : spec.collocation) {
    const Jet2& j = session.forward(p, both, want);
    const double r = j.d2[1] - c2 * j.d2[0];
    out.res += r * r;
    if (want) {
      const double g = spec.lambda_res * 2.0 * r / n_res;
      adj_res.d2[0] = -c2 * g;
      adj_res.d2[1] = g;
      session.backward(adj_res, grad);
    }
  }
  out.res /= n_res;
  finish(out, spec.lambda_res);
  return out;
}

template <class Model>
void check_grad_size(const Model& model, std::span<double> grad) {
  if (!grad.empty()) {
    require(grad.size() == param_count(model), ErrorCode::LengthMismatch, "loss_and_grad: gradient size");
  }
}

std::size_t input_dims(const KanModel& m) { return m.domain.dims(); }
std::size_t input_dims(const FbkanModel& m) { return m.decomposition.domain.dims(); }

template <class Session, class Model>
LossValue single_fidelity_loss(const LossSpec& spec, const Model& model, std::span<double> grad) {
  check_grad_size(model, grad);
  Session session(model);
  LossValue out;
  if (const auto* d = std::get_if<DataMSE>(&spec)) {
    out.total = data_mse(session, d->data, 1.0, false, grad);
    out.components = {out.total};
  } else if (const auto* w = std::get_if<PhysicsWave>(&spec)) {
    require(input_dims(model) == 2, ErrorCode::WidthMismatch, "wave loss: model input must be (x, t)");
    const WaveLossBreakdown b = wave_loss(session, *w, grad);
    out.total = b.total;
    out.components = {b.ic, b.t, b.bc, b.res};
  } else {
    fail(ErrorCode::InvalidArgument, "loss_and_grad: the multi-fidelity loss requires an MFKAN model");
  }
  return out;
}

// Adapts a JetField to the session interface; backward is never called.
class FieldSession {
 public:
  explicit FieldSession(const JetField& field) : field_(field) {}
  const Jet2& forward(std::span<const double> x, std::span<const int> dims, bool) {
    out_ = field_(x, dims);
    require(out_.dims() == dims.size(), ErrorCode::WidthMismatch, "wave_pde_loss: jet unavailable");
    return out_;
  }
  void backward(const Jet2&, std::span<double>) {}

 private:
  const JetField& field_;
  Jet2 out_;
};

class MfkanValueSession {
 public:
  explicit MfkanValueSession(const MfkanModel& model) : session_(model) {}
  const Jet2& forward(std::span<const double> x, std::span<const int>, bool record) {
    out_.value = session_.forward(x, record);
    return out_;
  }
  void backward(const Jet2& adj, std::span<double> grad) { session_.backward(adj.value, grad); }

 private:
  MfkanSession session_;
  Jet2 out_;
};

}  // namespace

WaveLossBreakdown wave_pde_loss(const JetField& field, const PhysicsWave& spec) {
  FieldSession session(field);
  return wave_loss(session, spec, {});
}

WaveLossBreakdown wave_pde_loss(const KanModel& model, const PhysicsWave& spec) {
  KanModelSession session(model);
  return wave_loss(session, spec, {});
}

WaveLossBreakdown wave_pde_loss(const FbkanModel& model, const PhysicsWave& spec) {
  FbkanSession session(model);
  return wave_loss(session, spec, {});
}

double mse_loss(const KanModel& model, const Dataset& data) {
  KanModelSession session(model);
  return data_mse(session, data, 1.0, false, {});
}

double mse_loss(const FbkanModel& model, const Dataset& data) {
  FbkanSession session(model);
  return data_mse(session, data, 1.0, false, {});
}

double mse_loss(const MfkanModel& model, const Dataset& data) {
  MfkanValueSession session(model);
  return data_mse(session, data, 1.0, false, {});
}

double mse_loss(const std::function<double(std::span<const double>)>& model, const Dataset& data) {
  require(!data.empty(), ErrorCode::EmptyDataset, "mse_loss: empty dataset");
  double acc = 0.0;
  for (std::size_t i = 0; i < data.size(); ++i) {
    const double r = model(data.input(i)) - data.targets[i];
    acc += r * r;
  }
  return acc / static_cast<double>(data.size());
}

namespace {

void check_hf(const MultiFidelityHF& s) {
  require(s.exponent_n >= 1, ErrorCode::InvalidArgument, "hf_loss: exponent_n must be >= 1");
  require(std::isfinite(s.lambda_alpha) && s.lambda_alpha >= 0.0, ErrorCode::InvalidArgument,
          "hf_loss: lambda_alpha must be finite and >= 0");
  require(std::isfinite(s.linear_weight_w) && s.linear_weight_w >= 0.0, ErrorCode::InvalidArgument,
          "hf_loss: linear_weight_w must be finite and >= 0");
}

LossValue hf_loss_grad(const MfkanModel& model, const MultiFidelityHF& s, std::span<double> grad) {
  check_hf(s);
  check_grad_size(model, grad);
  MfkanValueSession session(model);
  const double data = data_mse(session, s.data, 1.0, true, grad);
  const double a = model.mixing_alpha;
  const double alpha_reg = s.lambda_alpha * std::pow(a, s.exponent_n);
  double phi_reg = 0.0;
  if (s.linear_weight_w != 0.0) {
    const std::size_t nl = param_count(model.kan_linear);
    const std::size_t nn = param_count(model.kan_nonlinear);
    std::span<double> g = grad.empty() ? std::span<double>() : grad.subspan(nl, nn);
    phi_reg = s.linear_weight_w * phi_nl_norm_sum(model.kan_nonlinear, s.linear_weight_w, g);
  }
  if (!grad.empty()) {
    grad.back() += s.lambda_alpha * s.exponent_n * std::pow(a, s.exponent_n - 1);
  }
  return LossValue{data + alpha_reg + phi_reg, {data, alpha_reg, phi_reg}};
}

}  // namespace

double hf_loss(const MfkanModel& model, const Dataset& hf_data, double lambda_alpha, int exponent_n,
               double linear_weight_w) {
  return hf_loss_grad(model, MultiFidelityHF{hf_data, lambda_alpha, exponent_n, linear_weight_w}, {}).total;
}

LossValue loss_and_grad(const LossSpec& spec, const KanModel& model, std::span<double> grad) {
  return single_fidelity_loss<KanModelSession>(spec, model, grad);
}

LossValue loss_and_grad(const LossSpec& spec, const FbkanModel& model, std::span<double> grad) {
  return single_fidelity_loss<FbkanSession>(spec, model, grad);
}

LossValue loss_and_grad(const LossSpec& spec, const MfkanModel& model, std::span<double> grad) {
  if (const auto* hf = std::get_if<MultiFidelityHF>(&spec)) return hf_loss_grad(model, *hf, grad);
  if (const auto* d = std::get_if<DataMSE>(&spec)) {
    check_grad_size(model, grad);
    MfkanValueSession session(model);
    const double v = data_mse(session, d->data, 1.0, false, grad);
    return LossValue{v, {v}};
  }
  fail(ErrorCode::InvalidArgument, "loss_and_grad: the wave loss is not defined for MFKAN models");
}

void adam_step(AdamState& state, std::span<double> params, std::span<const double> grads, double lr) {
  require(params.size() == grads.size() && state.m.size() == params.size() && state.v.size() == params.size(),
          ErrorCode::LengthMismatch, "adam_step: length mismatch");
  ++state.t;
  const double bc1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.t));
  const double bc2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.t));
  for (std::size_t i = 0; i < params.size(); ++i) {
    const double g = grads[i];
    state.m[i] = state.beta1 * state.m[i] + (1.0 - state.beta1) * g;
    state.v[i] = state.beta2 * state.v[i] + (1.0 - state.beta2) * g * g;
    const double mhat = state.m[i] / bc1;
    const double vhat = state.v[i] / bc2;
    params[i] -= lr * mhat / (std::sqrt(vhat) + state.eps);
  }
}

void project(MfkanModel& model) { model.mixing_alpha = std::clamp(model.mixing_alpha, 0.0, 1.0); }

}  // namespace ckan
