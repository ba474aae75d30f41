#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "ckan/error.hpp"

namespace ckan {

/// Scalar-target regression samples; inputs stored row-major (size() x dim).
struct Dataset {
  std::size_t dim = 0;
  std::vector<double> inputs;
  std::vector<double> targets;

  Dataset() = default;
  explicit Dataset(std::size_t d) : dim(d) {}

  std::size_t size() const noexcept { return targets.size(); }
  bool empty() const noexcept { return targets.empty(); }

  std::span<const double> input(std::size_t i) const {
    return std::span<const double>(inputs).subspan(i * dim, dim);
  }

  void add(std::span<const double> x, double y) {
    require(x.size() == dim, ErrorCode::WidthMismatch, "Dataset::add: input dimension mismatch");
    inputs.insert(inputs.end(), x.begin(), x.end());
    targets.push_back(y);
  }

  /// First n samples.
  Dataset head(std::size_t n) const {
    require(n <= size(), ErrorCode::InvalidArgument, "Dataset::head: not enough samples");
    Dataset out(dim);
    out.inputs.assign(inputs.begin(), inputs.begin() + static_cast<std::ptrdiff_t>(n * dim));
    out.targets.assign(targets.begin(), targets.begin() + static_cast<std::ptrdiff_t>(n));
    return out;
  }

  friend bool operator==(const Dataset&, const Dataset&) = default;
};

struct TrainConfig {
  double learning_rate = 1e-2;
  int epochs = 2000;
  std::uint64_t seed = 0;
  bool full_batch = true;

  friend bool operator==(const TrainConfig&, const TrainConfig&) = default;
};

/// Loss per epoch. totals[0] is the loss at the initial parameters; row e of
/// `components` holds the named loss terms at the same point.
struct LossHistory {
  std::vector<std::string> component_names;
  std::vector<double> totals;
  std::vector<std::vector<double>> components;

  std::size_t size() const noexcept { return totals.size(); }
  double initial() const { return totals.front(); }
  double final() const { return totals.back(); }
};

}  // namespace ckan
