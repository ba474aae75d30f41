#pragma once

#include <cstddef>
#include <span>
#include <utility>
#include <vector>

#include "ckan/error.hpp"

namespace ckan {

/// Axis-aligned box, one [lo, hi] pair per dimension.
struct Box {
  std::vector<double> lo;
  std::vector<double> hi;

  Box() = default;
  Box(std::vector<double> lo_, std::vector<double> hi_) : lo(std::move(lo_)), hi(std::move(hi_)) {
    require(lo.size() == hi.size() && !lo.empty(), ErrorCode::InvalidDomain,
            "box: lo/hi must be non-empty and of equal length");
    for (std::size_t d = 0; d < lo.size(); ++d) {
      require(hi[d] > lo[d], ErrorCode::InvalidDomain, "box: hi must exceed lo in every dimension");
    }
  }

  static Box cube(std::size_t dims, double lo, double hi) {
    return Box(std::vector<double>(dims, lo), std::vector<double>(dims, hi));
  }

  std::size_t dims() const noexcept { return lo.size(); }
  double span(std::size_t d) const { return hi[d] - lo[d]; }

  /// Affine map of coordinate d onto [-1, 1].
  double to_unit(std::size_t d, double x) const { return -1.0 + 2.0 * (x - lo[d]) / (hi[d] - lo[d]); }
  double unit_scale(std::size_t d) const { return 2.0 / (hi[d] - lo[d]); }

  bool contains(std::span<const double> x) const {
    if (x.size() != lo.size()) return false;
    for (std::size_t d = 0; d < lo.size(); ++d) {
      if (x[d] < lo[d] || x[d] > hi[d]) return false;
    }
    return true;
  }

  friend bool operator==(const Box&, const Box&) = default;
};

}  // namespace ckan
