#pragma once

#include <array>
#include <cmath>
#include <cstddef>
#include <functional>
#include <numbers>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "ckan/dataset.hpp"
#include "ckan/error.hpp"
#include "ckan/fbkan.hpp"
#include "ckan/jet.hpp"
#include "ckan/kan_network.hpp"
#include "ckan/mfkan.hpp"

namespace ckan {

// ---------------------------------------------------------------------------
// Loss specifications

struct DataMSE {
  Dataset data;
};

/// sum_j (K_H(x_j) - y_j)^2 + lambda_alpha * alpha^n + w * sum_layers |Phi_nl|.
struct MultiFidelityHF {
  Dataset data;
  double lambda_alpha = 1e-4;
  int exponent_n = 4;
  double linear_weight_w = 0.0;
};

using Point2 = std::array<double, 2>;

/// Physics-informed loss for f_tt = c^2 f_xx on inputs (x, t).
struct PhysicsWave {
  std::vector<Point2> collocation;
  std::vector<Point2> ic_points;  // (x, 0)
  std::vector<Point2> bc_points;  // (0, t) or (1, t)
  double lambda_res = 0.01;
  double wave_speed_c = std::numbers::sqrt2;
};

using LossSpec = std::variant<DataMSE, MultiFidelityHF, PhysicsWave>;

std::vector<std::string> component_names(const LossSpec& spec);

struct LossValue {
  double total = 0.0;
  std::vector<double> components;
};

// ---------------------------------------------------------------------------
// Loss evaluation

/// Initial displacement sin(pi x) + 0.5 sin(4 pi x).
double wave_initial_profile(double x);

struct WaveLossBreakdown {
  double ic = 0.0;
  double t = 0.0;
  double bc = 0.0;
  double res = 0.0;
  double total = 0.0;
};

/// Jet-capable scalar field on (x, t): returns value and derivatives along
/// the requested input dimensions.
using JetField = std::function<Jet2(std::span<const double>, std::span<const int>)>;

WaveLossBreakdown wave_pde_loss(const JetField& field, const PhysicsWave& spec);
WaveLossBreakdown wave_pde_loss(const KanModel& model, const PhysicsWave& spec);
WaveLossBreakdown wave_pde_loss(const FbkanModel& model, const PhysicsWave& spec);

double mse_loss(const KanModel& model, const Dataset& data);
double mse_loss(const FbkanModel& model, const Dataset& data);
double mse_loss(const MfkanModel& model, const Dataset& data);
double mse_loss(const std::function<double(std::span<const double>)>& model, const Dataset& data);

double hf_loss(const MfkanModel& model, const Dataset& hf_data, double lambda_alpha, int exponent_n,
               double linear_weight_w);

/// Loss at the model's current parameters. When grad is non-empty the
/// gradient with respect to the flattened trainable parameters is added
/// into it.
LossValue loss_and_grad(const LossSpec& spec, const KanModel& model, std::span<double> grad);
LossValue loss_and_grad(const LossSpec& spec, const FbkanModel& model, std::span<double> grad);
LossValue loss_and_grad(const LossSpec& spec, const MfkanModel& model, std::span<double> grad);

template <class Model>
std::vector<double> grad(const LossSpec& spec, const Model& model) {
  std::vector<double> g(param_count(model), 0.0);
  const LossValue v = loss_and_grad(spec, model, g);
  require(std::isfinite(v.total), ErrorCode::NonFinite, "grad: non-finite loss");
  return g;
}

// ---------------------------------------------------------------------------
// Optimization

struct AdamState {
  std::vector<double> m;
  std::vector<double> v;
  long long t = 0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;

  AdamState() = default;
  explicit AdamState(std::size_t n) : m(n, 0.0), v(n, 0.0) {}
};

/// One bias-corrected Adam update of params in place.
void adam_step(AdamState& state, std::span<double> params, std::span<const double> grads, double lr);

/// Keeps parameters feasible after an optimizer step.
inline void project(KanModel&) {}
inline void project(FbkanModel&) {}
void project(MfkanModel& model);

inline void validate(const TrainConfig& config) {
  require(config.learning_rate > 0.0 && std::isfinite(config.learning_rate), ErrorCode::InvalidArgument,
          "train: learning_rate must be positive");
  require(config.epochs >= 1, ErrorCode::InvalidArgument, "train: epochs must be >= 1");
  require(config.full_batch, ErrorCode::InvalidArgument, "train: only full-batch training is supported");
}

/// Runs config.epochs full-batch Adam steps on `model` in place. The history
/// has epochs + 1 entries, starting with the loss at the initial parameters.
/// Throws DivergedError when the loss becomes non-finite.
template <class Model>
LossHistory train(Model& model, const LossSpec& spec, const TrainConfig& config) {
  validate(config);
  const std::size_t n = param_count(model);
  std::vector<double> params = flatten_params(model);
  std::vector<double> g(n, 0.0);
  AdamState state(n);
  LossHistory history;
  history.component_names = component_names(spec);
  history.totals.reserve(static_cast<std::size_t>(config.epochs) + 1);
  for (int epoch = 0; epoch <= config.epochs; ++epoch) {
    const bool last = epoch == config.epochs;
    std::fill(g.begin(), g.end(), 0.0);
    const LossValue v = loss_and_grad(spec, model, last ? std::span<double>() : std::span<double>(g));
    if (!std::isfinite(v.total)) {
      throw DivergedError(static_cast<std::size_t>(epoch),
                          "training diverged: non-finite loss at epoch " + std::to_string(epoch));
    }
    history.totals.push_back(v.total);
    history.components.push_back(v.components);
    if (last) break;
    adam_step(state, params, g, config.learning_rate);
    unflatten_params(model, params);
    project(model);
    params = flatten_params(model);
  }
  return history;
}

}  // namespace ckan
