#include "ckan/uq_ensemble.hpp"

#include <cmath>

namespace ckan {

double predict(const KanModel& model, std::span<const double> x) {
  require(model.net.output_width() == 1, ErrorCode::WidthMismatch, "predict: scalar output required");
  return model_forward(model, x)[0];
}

double predict(const FbkanModel& model, std::span<const double> x) {
  const auto y = fbkan_forward(model, x);
  require(y.size() == 1, ErrorCode::WidthMismatch, "predict: scalar output required");
  return y[0];
}

double predict(const MfkanModel& model, std::span<const double> x) {
  const auto y = hf_forward(model, x);
  require(y.size() == 1, ErrorCode::WidthMismatch, "predict: scalar output required");
  return y[0];
}

EnsembleStats ensemble_stats(std::span<const double> member_outputs) {
  require(!member_outputs.empty(), ErrorCode::InvalidArgument, "ensemble_stats: no member outputs");
  const double m = static_cast<double>(member_outputs.size());
  double sum = 0.0;
  for (double v : member_outputs) sum += v;
  const double mean = sum / m;
  double ss = 0.0;
  for (double v : member_outputs) ss += (v - mean) * (v - mean);
  return EnsembleStats{mean, std::sqrt(ss / m)};
}

PredictionInterval sigma_interval(const EnsembleStats& stats, double kappa) {
  require(kappa >= 0.0, ErrorCode::InvalidArgument, "sigma_interval: kappa must be >= 0");
  return PredictionInterval{stats.mean - kappa * stats.std, stats.mean + kappa * stats.std};
}

}  // namespace ckan
