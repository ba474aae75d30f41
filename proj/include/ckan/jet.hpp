#pragma once

#include <cstddef>
#include <vector>

namespace ckan {

/// A value together with its first and diagonal second derivatives with
/// respect to a set of active input dimensions. Mixed partials are not
/// carried.
struct Jet2 {
  double value = 0.0;
  std::vector<double> d1;
  std::vector<double> d2;

  Jet2() = default;
  explicit Jet2(std::size_t dims, double v = 0.0) : value(v), d1(dims, 0.0), d2(dims, 0.0) {}

  std::size_t dims() const noexcept { return d1.size(); }

  void reset(std::size_t dims) {
    value = 0.0;
    d1.assign(dims, 0.0);
    d2.assign(dims, 0.0);
  }
};

}  // namespace ckan
