#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "ckan/box.hpp"
#include "ckan/conformal.hpp"
#include "ckan/dataset.hpp"
#include "ckan/fbkan.hpp"
#include "ckan/jet.hpp"
#include "ckan/kan_network.hpp"
#include "ckan/mfkan.hpp"
#include "ckan/training.hpp"
#include "ckan/uq_ensemble.hpp"

namespace ckan {

// ---------------------------------------------------------------------------
// Target functions

/// exp(sin(0.3 pi x^2)) on [0, 2].
double f1(double x);
/// sin(6 pi x^2) sin(8 pi y^2) on [0, 1]^2.
double f2(double x, double y);
/// Low-fidelity jump function on [0, 1]; the left branch owns x = 0.5.
double f_low(double x);
/// 2 f_low(x) - 2x + 2.
double f_high(double x);

inline constexpr double kWaveSpeed = 1.4142135623730950488;

/// sin(pi x) cos(c pi t) + 0.5 sin(4 pi x) cos(4 c pi t).
double wave_exact(double x, double t, double c = kWaveSpeed);
/// Value with first and second partials along the requested dimensions
/// (0 = x, 1 = t).
Jet2 wave_exact_jet(double x, double t, std::span<const int> active_dims, double c = kWaveSpeed);

// ---------------------------------------------------------------------------
// Experiment definitions

enum class ModelKind { Kan, Fbkan, Mfkan };

const char* model_name(ModelKind kind);
ModelKind parse_model_kind(const std::string& name);

struct ExperimentSpec {
  std::string id;
  std::vector<ModelKind> models;
  Box domain;
  std::size_t ensemble_size = 4;
  std::vector<int> subdomains;  // per-dimension counts
  double overlap = 0.2;
  std::vector<int> kan_widths;
  std::vector<int> fbkan_widths;
  int intervals = 5;
  int degree = 3;
  std::size_t n_train = 0;
  std::size_t n_cal = 0;
  std::size_t n_test = 0;
  double alpha = 0.05;
  TrainConfig train;
  std::uint64_t data_seed = 0;
  std::uint64_t model_seed = 0;
  std::size_t threads = 1;

  // Multi-fidelity (exp3).
  std::size_t n_lf = 0;
  std::vector<int> lf_widths{1, 5, 1};
  std::vector<int> nonlinear_widths{2, 3, 1};
  double lambda_alpha = 1e-4;
  int exponent_n = 4;
  double linear_weight_w = 0.0;
  bool shared_low_fidelity = true;

  // Physics-informed (exp4); n_train = n_collocation + n_ic + n_bc.
  std::size_t n_collocation = 0;
  std::size_t n_ic = 0;
  std::size_t n_bc = 0;
  double lambda_res = 0.01;
  double wave_speed = kWaveSpeed;

  std::size_t subdomain_count() const;
};

/// Defaults for "exp1" ... "exp4"; throws UnknownExperiment otherwise.
ExperimentSpec default_spec(const std::string& id);

/// Checks sizes, alpha, widths and experiment-specific fields.
void validate(const ExperimentSpec& spec);

struct DatasetSplit {
  Dataset train;        // exp3: high-fidelity training set
  Dataset calibration;
  Dataset test;
  Dataset lf_train;     // exp3 only
  PhysicsWave physics;  // exp4 only
  std::uint64_t seed = 0;
};

/// Independent uniform draws over the experiment domain, one RNG stream per split.
DatasetSplit sample_dataset(const ExperimentSpec& spec);

/// Exact targets for `n` uniform draws over the experiment domain using
/// stream `stream` of `seed` (calibration/test-type data).
Dataset sample_targets(const ExperimentSpec& spec, std::size_t n, std::uint64_t seed, std::uint64_t stream);

// ---------------------------------------------------------------------------
// Running

struct TrainedModels {
  std::optional<Ensemble<KanModel>> kan;
  std::optional<Ensemble<FbkanModel>> fbkan;
  std::optional<Ensemble<MfkanModel>> mfkan;
  std::vector<KanNetwork> low_fidelity;  // one shared net, or one per member
  std::vector<LossHistory> low_fidelity_histories;
};

/// Trains every model kind listed in the spec.
TrainedModels train_models(const ExperimentSpec& spec, const DatasetSplit& split);

/// Ensemble statistics of one model kind at every input of `data`.
std::vector<EnsembleStats> model_stats(const TrainedModels& models, ModelKind kind, const Dataset& data);

struct ResultRow {
  std::string model;
  std::string intervals_kind;  // "ensemble" or "conformal"
  double coverage = 0.0;
  double avg_piw = 0.0;
  double std_piw = 0.0;
  bool infinite_width = false;
  double alpha = 0.05;
  std::size_t n_cal = 0;
  std::size_t M = 0;
  std::size_t L = 1;
  std::uint64_t seed = 0;
};

struct PointDump {
  std::string model;
  std::string intervals_kind;
  std::size_t dim = 0;
  std::vector<double> inputs;  // row-major
  std::vector<double> y_true;
  std::vector<double> mean;
  std::vector<double> std;
  std::vector<double> lower;
  std::vector<double> upper;
  std::vector<bool> covered;
};

struct ModelEvaluation {
  ConformalCalibration calibration;
  ResultRow ensemble_row;
  ResultRow conformal_row;
  PointDump ensemble_dump;
  PointDump conformal_dump;
};

/// Calibrates on (cal_stats, cal targets) and scores both interval kinds on the test set.
ModelEvaluation evaluate_model(const std::string& model, std::span<const EnsembleStats> cal_stats,
                               const Dataset& calibration, std::span<const EnsembleStats> test_stats,
                               const Dataset& test, double alpha, std::size_t M, std::size_t L,
                               std::uint64_t seed);

/// Scores both interval kinds with an existing calibration record.
ModelEvaluation evaluate_calibrated(const std::string& model, ConformalCalibration calibration,
                                    std::span<const EnsembleStats> test_stats, const Dataset& test,
                                    std::size_t M, std::size_t L, std::uint64_t seed);

struct ResultsRecord {
  ExperimentSpec spec;
  std::vector<ResultRow> rows;
  std::vector<PointDump> dumps;
  std::vector<ConformalCalibration> calibrations;  // one per model, in spec order
  std::vector<double> mixing_alphas;                // exp3: trained alpha per member
  std::vector<std::pair<std::string, LossHistory>> histories;

  const ResultRow& row(const std::string& model, const std::string& kind) const;
};

/// Sample, train, calibrate and evaluate.
ResultsRecord run_experiment(const ExperimentSpec& spec);

/// Calibrate and evaluate already-trained models on a split.
ResultsRecord evaluate_experiment(const ExperimentSpec& spec, const TrainedModels& models,
                                  const DatasetSplit& split);

enum class AblationAxis { EnsembleSize, Subdomains, CalibrationSize };

AblationAxis parse_axis(const std::string& name);
const char* axis_name(AblationAxis axis);

struct SweepPoint {
  double value = 0.0;
  std::size_t repeat = 0;
  ResultsRecord record;
};

struct SweepResult {
  AblationAxis axis = AblationAxis::EnsembleSize;
  std::vector<SweepPoint> points;
};

/// One record per grid value. The subdomain axis takes 1-D counts (or the
/// same count per dimension). The calibration-size axis trains once and,
/// for every size, draws `repeats` independent calibration sets.
SweepResult run_ablation(AblationAxis axis, const std::vector<double>& grid, const ExperimentSpec& base,
                         std::size_t repeats = 20);

}  // namespace ckan
