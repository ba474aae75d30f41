#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "ckan/box.hpp"
#include "ckan/jet.hpp"
#include "ckan/kan_network.hpp"

namespace ckan {

struct Subdomain {
  std::vector<double> center;
  std::vector<double> half_width;

  bool contains_open(std::span<const double> x) const;

  friend bool operator==(const Subdomain&, const Subdomain&) = default;
};

/// Tensor-product overlapping decomposition of a box. Subdomains are ordered
/// row-major over the per-dimension indices (dimension 0 slowest).
struct Decomposition {
  Box domain;
  std::vector<int> counts;
  double overlap_fraction = 0.2;
  std::vector<Subdomain> subdomains;

  std::size_t size() const noexcept { return subdomains.size(); }

  friend bool operator==(const Decomposition&, const Decomposition&) = default;
};

Decomposition uniform_decomposition(const Box& domain, const std::vector<int>& per_dim_counts,
                                    double overlap_fraction);

/// Unnormalized window prod_d [1 + cos(pi (x_d - mu_d) / sigma_d)]^2 inside
/// the support and 0 outside, with derivatives along every dimension.
Jet2 window_jet(const Subdomain& sub, std::span<const double> x);

/// w_j = what_j / sum_k what_k; exactly (1) for a single subdomain.
std::vector<double> pou_weights(const Decomposition& decomp, std::span<const double> x);

/// Normalized weights with derivatives along `active_dims`. Entries for
/// subdomains whose support excludes x are zero jets.
std::vector<Jet2> pou_weight_jets(const Decomposition& decomp, std::span<const double> x,
                                  std::span<const int> active_dims);

struct FbkanModel {
  Decomposition decomposition;
  std::vector<KanNetwork> kans;

  friend bool operator==(const FbkanModel&, const FbkanModel&) = default;
};

/// Members share the architecture; member j is seeded with derive_seed(seed, j).
FbkanModel init_fbkan(const Decomposition& decomp, const std::vector<int>& widths, int intervals,
                      int degree, std::uint64_t seed);

/// Affine map of x from the support of `sub` onto [-1, 1]^d.
std::vector<double> to_member_coords(const Subdomain& sub, std::span<const double> x);

std::vector<double> fbkan_forward(const FbkanModel& model, std::span<const double> x);
std::vector<Jet2> fbkan_forward_jet(const FbkanModel& model, std::span<const double> x,
                                    std::span<const int> active_dims);

std::size_t param_count(const FbkanModel& model);
std::vector<double> flatten_params(const FbkanModel& model);
void unflatten_params(FbkanModel& model, std::span<const double> params);

/// Reusable forward/reverse workspace for a scalar-output FBKAN. Only
/// members with a non-zero window are evaluated.
class FbkanSession {
 public:
  explicit FbkanSession(const FbkanModel& model);

  /// Records a forward pass. dims may be empty for value-only evaluation.
  const Jet2& forward(std::span<const double> x, std::span<const int> active_dims, bool record);
  void backward(const Jet2& adjoint, std::span<double> grad);

 private:
  const FbkanModel& model_;
  std::vector<KanTape> tapes_;
  std::vector<std::size_t> offsets_;
  std::vector<int> active_;
  std::vector<Jet2> weights_;
  std::vector<double> raw_;
  std::vector<double> seed_;
  std::vector<double> adj_v_, adj_d1_, adj_d2_;
  Jet2 out_;
};

}  // namespace ckan
