#pragma once

#include <array>
#include <cstddef>
#include <span>
#include <utility>
#include <vector>

#include <Eigen/Dense>

namespace ckan {

/// Uniform knot vector on [domain_lo, domain_hi] with `intervals` cells and
/// `degree` extra knots continuing the same spacing past each end.
///
/// knots()[degree] == domain_lo and knots()[degree + intervals] == domain_hi.
/// basis_count() == intervals + degree B-splines are supported on the domain.
class KnotGrid {
 public:
  KnotGrid(double domain_lo, double domain_hi, int intervals, int degree);

  double domain_lo() const noexcept { return lo_; }
  double domain_hi() const noexcept { return hi_; }
  int intervals() const noexcept { return intervals_; }
  int degree() const noexcept { return degree_; }
  double step() const noexcept { return step_; }
  const std::vector<double>& knots() const noexcept { return knots_; }
  int basis_count() const noexcept { return intervals_ + degree_; }

  /// Index of the knot span used for x. Inputs outside the domain map to the
  /// first or last interior span, which yields the polynomial extension of
  /// the boundary pieces.
  int span_index(double x) const noexcept;

  bool contains(double x) const noexcept { return x >= lo_ && x <= hi_; }

  friend bool operator==(const KnotGrid&, const KnotGrid&) = default;

 private:
  double lo_;
  double hi_;
  int intervals_;
  int degree_;
  double step_;
  std::vector<double> knots_;
};

KnotGrid build_grid(double domain_lo, double domain_hi, int intervals, int degree);

inline constexpr int kMaxDerivOrder = 3;
inline constexpr int kMaxDegree = 5;

/// The degree+1 B-splines that are non-zero on one knot span, together with
/// their derivatives. values[r][j] is the r-th derivative of basis function
/// first + j.
struct LocalBasis {
  int first = 0;
  int count = 0;
  int orders = 0;
  std::array<std::array<double, kMaxDegree + 1>, kMaxDerivOrder + 1> values{};
};

/// Non-zero basis functions at x and derivatives up to max_order (<= 3).
/// Derivative orders above the degree are zero.
void eval_local_basis(const KnotGrid& grid, double x, int max_order, LocalBasis& out);

/// All basis_count() B-spline values at x.
std::vector<double> eval_basis(const KnotGrid& grid, double x);

/// basis_count() x (max_order + 1) matrix; column r holds the r-th
/// derivatives. max_order may be 0..3.
Eigen::MatrixXd eval_basis_derivs(const KnotGrid& grid, double x, int max_order);

/// Refines `grid` to `new_intervals` cells and refits the spline with
/// coefficients `coeffs` on the new grid by least squares over
/// max(10 * new_basis_count, 200) equispaced domain samples.
std::pair<KnotGrid, std::vector<double>> extend_grid(const KnotGrid& grid,
                                                     std::span<const double> coeffs,
                                                     int new_intervals);

/// sum_i coeffs[i] * B_i(x).
double eval_spline(const KnotGrid& grid, std::span<const double> coeffs, double x);

}  // namespace ckan
