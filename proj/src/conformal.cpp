#include "ckan/conformal.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace ckan {

std::vector<double> nonconformity_scores(std::span<const EnsembleStats> stats, std::span<const double> targets) {
  require(stats.size() == targets.size(), ErrorCode::LengthMismatch, "nonconformity_scores: length mismatch");
  std::vector<double> out(stats.size());
  for (std::size_t i = 0; i < stats.size(); ++i) {
    require(std::isfinite(targets[i]), ErrorCode::NonFinite, "nonconformity_scores: non-finite target");
    out[i] = std::abs(targets[i] - stats[i].mean) / std::max(stats[i].std, kSigmaFloor);
  }
  return out;
}

namespace {

std::size_t quantile_rank(std::size_t n, double alpha) {
  require(alpha > 0.0 && alpha < 1.0, ErrorCode::InvalidArgument, "conformal: alpha must lie in (0, 1)");
  // (n + 1)(1 - alpha) is often an integer in exact arithmetic; snap before ceil.
  const double r = static_cast<double>(n + 1) * (1.0 - alpha);
  const double nearest = std::round(r);
  const double k = std::abs(r - nearest) <= 1e-9 * std::max(1.0, r) ? nearest : std::ceil(r);
  return static_cast<std::size_t>(std::max(k, 1.0));
}

}  // namespace

double conformal_quantile(std::span<const double> scores, double miscoverage_alpha,
                          std::vector<std::string>* warnings) {
  require(!scores.empty(), ErrorCode::EmptyDataset, "conformal_quantile: no scores");
  const std::size_t n = scores.size();
  const std::size_t k = quantile_rank(n, miscoverage_alpha);
  if (k > n) {
    if (warnings != nullptr) {
      warnings->push_back("calibration set too small: n = " + std::to_string(n) + " needs rank " +
                          std::to_string(k) + "; q_hat = inf");
    }
    return std::numeric_limits<double>::infinity();
  }
  std::vector<double> s(scores.begin(), scores.end());
  std::nth_element(s.begin(), s.begin() + static_cast<std::ptrdiff_t>(k - 1), s.end());
  return s[k - 1];
}

ConformalCalibration calibrate(std::span<const EnsembleStats> stats, std::span<const double> targets,
                               double miscoverage_alpha) {
  ConformalCalibration cal;
  cal.miscoverage_alpha = miscoverage_alpha;
  cal.sorted_scores = nonconformity_scores(stats, targets);
  cal.n_cal = cal.sorted_scores.size();
  cal.q_hat = conformal_quantile(cal.sorted_scores, miscoverage_alpha, &cal.warnings);
  std::sort(cal.sorted_scores.begin(), cal.sorted_scores.end());
  return cal;
}

PredictionInterval conformal_interval(const EnsembleStats& stats, double q_hat) {
  require(q_hat >= 0.0, ErrorCode::InvalidArgument, "conformal_interval: q_hat must be >= 0");
  if (std::isinf(q_hat)) {
    return PredictionInterval{-std::numeric_limits<double>::infinity(), std::numeric_limits<double>::infinity()};
  }
  const double half = q_hat * std::max(stats.std, kSigmaFloor);
  return PredictionInterval{stats.mean - half, stats.mean + half};
}

double coverage(std::span<const PredictionInterval> intervals, std::span<const double> targets) {
  require(intervals.size() == targets.size(), ErrorCode::LengthMismatch, "coverage: length mismatch");
  require(!targets.empty(), ErrorCode::EmptyDataset, "coverage: empty input");
  std::size_t hit = 0;
  for (std::size_t i = 0; i < targets.size(); ++i) {
    if (targets[i] >= intervals[i].lower && targets[i] <= intervals[i].upper) ++hit;
  }
  return static_cast<double>(hit) / static_cast<double>(targets.size());
}

PiwStats piw_stats(std::span<const PredictionInterval> intervals) {
  require(!intervals.empty(), ErrorCode::EmptyDataset, "piw_stats: empty input");
  PiwStats out;
  double sum = 0.0;
  for (const auto& iv : intervals) {
    const double w = std::abs(iv.upper - iv.lower);
    if (!std::isfinite(w)) out.infinite = true;
    sum += w;
  }
  const double n = static_cast<double>(intervals.size());
  out.average = sum / n;
  if (out.infinite) {
    out.average = std::numeric_limits<double>::infinity();
    out.std = std::numeric_limits<double>::infinity();
    return out;
  }
  double ss = 0.0;
  for (const auto& iv : intervals) {
    const double d = std::abs(iv.upper - iv.lower) - out.average;
    ss += d * d;
  }
  out.std = std::sqrt(ss / n);
  return out;
}

}  // namespace ckan
