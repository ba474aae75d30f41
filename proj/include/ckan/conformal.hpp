#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "ckan/uq_ensemble.hpp"

namespace ckan {

/// Lower bound applied to the ensemble standard deviation both when scoring
/// and when building intervals.
inline constexpr double kSigmaFloor = 1e-8;

struct ConformalCalibration {
  double miscoverage_alpha = 0.05;
  std::size_t n_cal = 0;
  std::vector<double> sorted_scores;
  double q_hat = 0.0;  // +inf when the calibration set is too small
  std::vector<std::string> warnings;
};

/// |y - mean| / max(std, kSigmaFloor).
std::vector<double> nonconformity_scores(std::span<const EnsembleStats> stats, std::span<const double> targets);

/// k-th smallest score with k = ceil((n + 1)(1 - alpha)); +inf when k > n.
/// A warning is appended to `warnings` (when given) in the +inf case.
double conformal_quantile(std::span<const double> scores, double miscoverage_alpha,
                          std::vector<std::string>* warnings = nullptr);

ConformalCalibration calibrate(std::span<const EnsembleStats> stats, std::span<const double> targets,
                               double miscoverage_alpha);

PredictionInterval conformal_interval(const EnsembleStats& stats, double q_hat);

/// Fraction of targets inside their closed interval.
double coverage(std::span<const PredictionInterval> intervals, std::span<const double> targets);

struct PiwStats {
  double average = 0.0;
  double std = 0.0;
  bool infinite = false;  // some interval has infinite width
};

/// Mean and population standard deviation of interval widths.
PiwStats piw_stats(std::span<const PredictionInterval> intervals);

}  // namespace ckan
