#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "ckan/box.hpp"
#include "ckan/dataset.hpp"
#include "ckan/kan_network.hpp"

namespace ckan {

/// Frozen low-fidelity KAN feeding a linear and a nonlinear correlation KAN
/// that are blended as alpha * nonlinear + (1 - alpha) * linear. All three
/// networks see the input after it is mapped from `domain` onto [-1, 1].
struct MfkanModel {
  Box domain;
  KanNetwork kan_low;
  KanNetwork kan_linear;
  KanNetwork kan_nonlinear;
  double mixing_alpha = 0.5;
  bool low_frozen = false;

  friend bool operator==(const MfkanModel&, const MfkanModel&) = default;
};

/// Degree-1, single-interval KAN without hidden layers and with the silu
/// branch disabled: a globally linear map of its inputs on the grid domain.
KanNetwork make_linear_kan(int in_width, int out_width, std::uint64_t seed);

/// Builds the high-fidelity heads around a (frozen) low-fidelity network.
MfkanModel init_mfkan(const Box& domain, KanNetwork kan_low, const std::vector<int>& nonlinear_widths,
                      int intervals, int degree, std::uint64_t seed);

std::vector<double> hf_forward(const MfkanModel& model, std::span<const double> x);

/// Per-layer mean over edges of the squared edge magnitude, where an edge's
/// magnitude is the RMS of edge_eval over 64 equispaced points of the layer
/// grid domain.
std::vector<double> phi_nl_norm(const KanNetwork& kan_nonlinear);

inline constexpr int kPhiNormSamples = 64;

/// Sum of phi_nl_norm over layers; adds weight * gradient into grad (the
/// network's flattened order) when grad is non-empty.
double phi_nl_norm_sum(const KanNetwork& net, double weight, std::span<double> grad);

/// Trainable parameters: [kan_linear..., kan_nonlinear..., mixing_alpha].
std::size_t param_count(const MfkanModel& model);
std::vector<double> flatten_params(const MfkanModel& model);
void unflatten_params(MfkanModel& model, std::span<const double> params);

struct LowFidelityArchitecture {
  std::vector<int> widths{1, 5, 1};
  int intervals = 5;
  int degree = 3;
  std::uint64_t seed = 0;
};

/// Trains a KAN on low-fidelity data under the mean squared error (inputs
/// mapped from `domain` onto [-1, 1]). The result is meant to be frozen.
KanNetwork train_low_fidelity(const Box& domain, const Dataset& lf_data,
                              const LowFidelityArchitecture& arch, const TrainConfig& config,
                              LossHistory* history = nullptr);

/// Optimizes kan_linear, kan_nonlinear and mixing_alpha under the
/// high-fidelity loss; alpha is clamped to [0, 1] after every step.
MfkanModel train_high_fidelity(MfkanModel model, const Dataset& hf_data, double lambda_alpha,
                               int exponent_n, double linear_weight_w, const TrainConfig& config,
                               LossHistory* history = nullptr);

class MfkanSession {
 public:
  explicit MfkanSession(const MfkanModel& model);

  double forward(std::span<const double> x, bool record);
  void backward(double adjoint, std::span<double> grad);

 private:
  const MfkanModel& model_;
  KanTape low_, linear_, nonlinear_;
  std::vector<double> z_;
  std::size_t linear_params_;
  std::size_t nonlinear_params_;
  double k_linear_ = 0.0;
  double k_nonlinear_ = 0.0;
  std::vector<double> adj_;
};

}  // namespace ckan
