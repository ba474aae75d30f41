#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "ckan/box.hpp"
#include "ckan/jet.hpp"
#include "ckan/spline_basis.hpp"

namespace ckan {

struct SiluJet {
  double value;
  double d1;
  double d2;
};

/// b(x) = x / (1 + exp(-x)) with exact first and second derivatives.
SiluJet silu_jet(double x);

/// b and its first three derivatives.
std::array<double, 4> silu_derivs(double x);

/// phi(x) = w_b * b(x) + w_s * sum_i coeffs[i] * B_i(x). The knot grid
/// lives in the owning layer.
struct EdgeFunction {
  double w_b = 1.0;
  double w_s = 1.0;
  std::vector<double> coeffs;

  friend bool operator==(const EdgeFunction&, const EdgeFunction&) = default;
};

double edge_eval(const EdgeFunction& edge, const KnotGrid& grid, double x);

struct KanLayer {
  int in_width = 0;
  int out_width = 0;
  KnotGrid grid;
  std::vector<EdgeFunction> edges;  // row-major, out_width x in_width

  KanLayer(int in, int out, KnotGrid g);

  EdgeFunction& edge(int q, int p) { return edges[static_cast<std::size_t>(q) * in_width + p]; }
  const EdgeFunction& edge(int q, int p) const {
    return edges[static_cast<std::size_t>(q) * in_width + p];
  }

  friend bool operator==(const KanLayer&, const KanLayer&) = default;
};

/// Layered KAN. When `silu_branch` is false every w_b is held at zero and
/// excluded from training (used for the purely piecewise-linear correlation
/// network of a multi-fidelity model).
struct KanNetwork {
  std::vector<int> widths;
  std::vector<KanLayer> layers;
  std::uint64_t seed = 0;
  bool silu_branch = true;

  int input_width() const { return widths.front(); }
  int output_width() const { return widths.back(); }

  friend bool operator==(const KanNetwork&, const KanNetwork&) = default;
};

std::vector<double> layer_forward(const KanLayer& layer, std::span<const double> x,
                                  bool silu_branch = true);

std::vector<double> network_forward(const KanNetwork& net, std::span<const double> x);

/// Forward pass carrying first and diagonal second derivatives with respect
/// to the inputs listed in active_dims. The value channel is bit-identical to
/// network_forward.
std::vector<Jet2> network_forward_jet(const KanNetwork& net, std::span<const double> x,
                                      std::span<const int> active_dims);

/// Coefficients ~ Normal(0, 0.1), w_b = w_s = 1, grids on [grid_lo, grid_hi].
KanNetwork init_network(const std::vector<int>& widths, int intervals, int degree,
                        std::uint64_t seed, double grid_lo = -1.0, double grid_hi = 1.0);

std::size_t param_count(const KanNetwork& net);

/// Layer-major, then out index, in index, then [coeffs..., w_b, w_s].
std::vector<double> flatten_params(const KanNetwork& net);
void flatten_params(const KanNetwork& net, std::span<double> out);
void unflatten_params(KanNetwork& net, std::span<const double> params);

/// Records one forward pass (optionally with derivative channels) so that a
/// reverse sweep can accumulate parameter gradients. One tape serves one
/// network at a time; reuse it across points to avoid reallocation.
class KanTape {
 public:
  /// Input jets: value[p], d1[p * dims + d], d2[p * dims + d].
  void forward(const KanNetwork& net, std::span<const double> value, std::span<const double> d1,
               std::span<const double> d2, int dims, bool record_for_backward);

  /// Plain inputs with derivative directions seeded as d(x_p)/d(dir) =
  /// seed_scale[p] when p == active_dims[dir].
  void forward_seeded(const KanNetwork& net, std::span<const double> x,
                      std::span<const int> active_dims, std::span<const double> seed_scale,
                      bool record_for_backward);

  int dims() const noexcept { return dims_; }
  std::span<const double> out_value() const { return values_.back(); }
  std::span<const double> out_d1() const { return d1_.back(); }
  std::span<const double> out_d2() const { return d2_.back(); }

  /// Adds the parameter gradient of sum_q (adj_value[q] * y_q + adj_d1 . y'_q
  /// + adj_d2 . y''_q) into grad (flattened order). The adjoint spans for the
  /// derivative channels may be empty when dims() == 0.
  void backward(const KanNetwork& net, std::span<const double> adj_value,
                std::span<const double> adj_d1, std::span<const double> adj_d2,
                std::span<double> grad);

 private:
  void run(const KanNetwork& net, int dims, bool record_for_backward);

  struct LayerRecord {
    std::vector<LocalBasis> basis;               // per input
    std::vector<std::array<double, 4>> silu;     // per input
    std::vector<std::array<double, 4>> phi;      // per edge: phi and derivatives
    std::vector<std::array<double, 3>> spline;   // per edge: spline and derivatives
  };

  int dims_ = 0;
  bool recorded_ = false;
  std::vector<std::vector<double>> values_;  // layer inputs, then the output
  std::vector<std::vector<double>> d1_;
  std::vector<std::vector<double>> d2_;
  std::vector<LayerRecord> records_;
  std::vector<double> adj_v_, adj_d1_, adj_d2_, next_v_, next_d1_, next_d2_;
  std::vector<std::size_t> offsets_;
};

/// A KAN whose inputs are first mapped affinely from `domain` onto [-1, 1].
struct KanModel {
  Box domain;
  KanNetwork net;

  friend bool operator==(const KanModel&, const KanModel&) = default;
};

std::vector<double> model_forward(const KanModel& model, std::span<const double> x);
std::vector<Jet2> model_forward_jet(const KanModel& model, std::span<const double> x,
                                    std::span<const int> active_dims);

KanModel init_kan_model(const Box& domain, const std::vector<int>& widths, int intervals, int degree,
                        std::uint64_t seed);

std::size_t param_count(const KanModel& model);
std::vector<double> flatten_params(const KanModel& model);
void unflatten_params(KanModel& model, std::span<const double> params);

/// Forward/reverse workspace for a scalar-output KanModel; derivatives are
/// taken with respect to the unnormalized inputs.
class KanModelSession {
 public:
  explicit KanModelSession(const KanModel& model);

  const Jet2& forward(std::span<const double> x, std::span<const int> active_dims, bool record);
  void backward(const Jet2& adjoint, std::span<double> grad);

 private:
  const KanModel& model_;
  KanTape tape_;
  std::vector<double> u_;
  std::vector<double> scale_;
  std::vector<double> adj_v_;
  Jet2 out_;
};

}  // namespace ckan
