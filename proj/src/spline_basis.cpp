#include "ckan/spline_basis.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "ckan/error.hpp"

namespace ckan {

KnotGrid::KnotGrid(double domain_lo, double domain_hi, int intervals, int degree)
    : lo_(domain_lo), hi_(domain_hi), intervals_(intervals), degree_(degree) {
  require(std::isfinite(domain_lo) && std::isfinite(domain_hi) && domain_hi > domain_lo,
          ErrorCode::InvalidDomain, "knot grid: domain_hi must exceed domain_lo");
  require(intervals >= 1, ErrorCode::ZeroIntervals, "knot grid: intervals must be >= 1");
  require(degree >= 0 && degree <= kMaxDegree, ErrorCode::InvalidArgument,
          "knot grid: degree must be in [0, " + std::to_string(kMaxDegree) + "]");
  step_ = (hi_ - lo_) / intervals_;
  const int n = intervals_ + 2 * degree_ + 1;
  knots_.resize(n);
  for (int j = 0; j < n; ++j) {
    const int offset = j - degree_;
    knots_[j] = lo_ + (hi_ - lo_) * static_cast<double>(offset) / intervals_;
  }
  knots_[degree_] = lo_;
  knots_[degree_ + intervals_] = hi_;
}

int KnotGrid::span_index(double x) const noexcept {
  const double cell = std::floor((x - lo_) / step_);
  int s;
  if (!(cell >= 0.0)) {
    s = 0;
  } else if (cell >= intervals_ - 1) {
    s = intervals_ - 1;
  } else {
    s = static_cast<int>(cell);
  }
  // Correct for rounding in the division so that knots[s] <= x < knots[s+1]
  // holds whenever x is inside the domain.
  if (s > 0 && x < knots_[degree_ + s]) --s;
  if (s < intervals_ - 1 && x >= knots_[degree_ + s + 1]) ++s;
  return degree_ + s;
}

KnotGrid build_grid(double domain_lo, double domain_hi, int intervals, int degree) {
  return KnotGrid(domain_lo, domain_hi, intervals, degree);
}

void eval_local_basis(const KnotGrid& grid, double x, int max_order, LocalBasis& out) {
  const int p = grid.degree();
  const int span = grid.span_index(x);
  const std::vector<double>& U = grid.knots();
  const int n = std::min(max_order, p);

  // Triangular table of basis values (upper part) and knot differences
  // (lower part), as in the standard derivative algorithm.
  std::array<std::array<double, kMaxDegree + 1>, kMaxDegree + 1> ndu{};
  std::array<double, kMaxDegree + 1> left{};
  std::array<double, kMaxDegree + 1> right{};
  ndu[0][0] = 1.0;
  for (int j = 1; j <= p; ++j) {
    left[j] = x - U[span + 1 - j];
    right[j] = U[span + j] - x;
    double saved = 0.0;
    for (int r = 0; r < j; ++r) {
      ndu[j][r] = right[r + 1] + left[j - r];
      const double temp = ndu[r][j - 1] / ndu[j][r];
      ndu[r][j] = saved + right[r + 1] * temp;
      saved = left[j - r] * temp;
    }
    ndu[j][j] = saved;
  }

  out.first = span - p;
  out.count = p + 1;
  out.orders = max_order + 1;
  for (int j = 0; j <= p; ++j) out.values[0][j] = ndu[j][p];
  for (int k = 1; k <= max_order; ++k) {
    for (int j = 0; j <= p; ++j) out.values[k][j] = 0.0;
  }

  std::array<std::array<double, kMaxDegree + 1>, 2> a{};
  for (int r = 0; r <= p; ++r) {
    int s1 = 0;
    int s2 = 1;
    a[0][0] = 1.0;
    for (int k = 1; k <= n; ++k) {
      double d = 0.0;
      const int rk = r - k;
      const int pk = p - k;
      if (r >= k) {
        a[s2][0] = a[s1][0] / ndu[pk + 1][rk];
        d = a[s2][0] * ndu[rk][pk];
      }
      const int j1 = rk >= -1 ? 1 : -rk;
      const int j2 = (r - 1 <= pk) ? k - 1 : p - r;
      for (int j = j1; j <= j2; ++j) {
        a[s2][j] = (a[s1][j] - a[s1][j - 1]) / ndu[pk + 1][rk + j];
        d += a[s2][j] * ndu[rk + j][pk];
      }
      if (r <= pk) {
        a[s2][k] = -a[s1][k - 1] / ndu[pk + 1][r];
        d += a[s2][k] * ndu[r][pk];
      }
      out.values[k][r] = d;
      std::swap(s1, s2);
    }
  }
  double factor = p;
  for (int k = 1; k <= n; ++k) {
    for (int j = 0; j <= p; ++j) out.values[k][j] *= factor;
    factor *= (p - k);
  }
}

namespace {

void check_finite(double x) {
  require(std::isfinite(x), ErrorCode::NonFinite, "B-spline evaluation: non-finite input");
}

}  // namespace

std::vector<double> eval_basis(const KnotGrid& grid, double x) {
  check_finite(x);
  LocalBasis local;
  eval_local_basis(grid, x, 0, local);
  std::vector<double> out(grid.basis_count(), 0.0);
  for (int j = 0; j < local.count; ++j) out[local.first + j] = local.values[0][j];
  return out;
}

Eigen::MatrixXd eval_basis_derivs(const KnotGrid& grid, double x, int max_order) {
  check_finite(x);
  require(max_order >= 0 && max_order <= kMaxDerivOrder, ErrorCode::InvalidArgument,
          "eval_basis_derivs: max_order must be in [0, 3]");
  LocalBasis local;
  eval_local_basis(grid, x, max_order, local);
  Eigen::MatrixXd out = Eigen::MatrixXd::Zero(grid.basis_count(), max_order + 1);
  for (int r = 0; r <= max_order; ++r) {
    for (int j = 0; j < local.count; ++j) out(local.first + j, r) = local.values[r][j];
  }
  return out;
}

double eval_spline(const KnotGrid& grid, std::span<const double> coeffs, double x) {
  require(static_cast<int>(coeffs.size()) == grid.basis_count(), ErrorCode::LengthMismatch,
          "eval_spline: coefficient count does not match the grid");
  LocalBasis local;
  eval_local_basis(grid, x, 0, local);
  double s = 0.0;
  for (int j = 0; j < local.count; ++j) s += coeffs[local.first + j] * local.values[0][j];
  return s;
}

std::pair<KnotGrid, std::vector<double>> extend_grid(const KnotGrid& grid,
                                                     std::span<const double> coeffs,
                                                     int new_intervals) {
  require(static_cast<int>(coeffs.size()) == grid.basis_count(), ErrorCode::LengthMismatch,
          "extend_grid: coefficient count does not match the grid");
  require(new_intervals >= grid.intervals(), ErrorCode::InvalidArgument,
          "extend_grid: new grid must not be coarser than the old one");

  KnotGrid fine(grid.domain_lo(), grid.domain_hi(), new_intervals, grid.degree());
  const int nb = fine.basis_count();
  const int samples = std::max(10 * nb, 200);

  Eigen::MatrixXd design = Eigen::MatrixXd::Zero(samples, nb);
  Eigen::VectorXd rhs(samples);
  LocalBasis local;
  for (int s = 0; s < samples; ++s) {
    const double t = static_cast<double>(s) / (samples - 1);
    const double x = (s == samples - 1) ? grid.domain_hi()
                                        : grid.domain_lo() + t * (grid.domain_hi() - grid.domain_lo());
    rhs(s) = eval_spline(grid, coeffs, x);
    eval_local_basis(fine, x, 0, local);
    for (int j = 0; j < local.count; ++j) design(s, local.first + j) = local.values[0][j];
  }

  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(design);
  require(qr.rank() == nb, ErrorCode::Internal, "extend_grid: rank-deficient refit");
  Eigen::VectorXd solution = qr.solve(rhs);
  return {std::move(fine), std::vector<double>(solution.data(), solution.data() + nb)};
}

}  // namespace ckan
