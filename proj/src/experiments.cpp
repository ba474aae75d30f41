#include "ckan/experiments.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

#include "ckan/seed.hpp"

namespace ckan {

namespace {
constexpr double kPi = std::numbers::pi;

// RNG streams of the data seed.
enum Stream : std::uint64_t {
  kTrain = 1,
  kCalibration = 2,
  kTest = 3,
  kLowFidelity = 4,
  kCollocation = 5,
  kInitial = 6,
  kBoundary = 7,
  kSweepBase = 1000,
};
}  // namespace

double f1(double x) { return std::exp(std::sin(0.3 * kPi * x * x)); }

double f2(double x, double y) { return std::sin(6.0 * kPi * x * x) * std::sin(8.0 * kPi * y * y); }

double f_low(double x) {
  const double a = 6.0 * x - 2.0;
  const double smooth = 0.5 * a * a * std::sin(12.0 * x - 4.0) + 10.0 * (x - 0.5);
  return x <= 0.5 ? 0.1 * (smooth - 5.0) : 0.1 * (smooth - 2.0);
}

double f_high(double x) { return 2.0 * f_low(x) - 2.0 * x + 2.0; }

double wave_exact(double x, double t, double c) {
  return std::sin(kPi * x) * std::cos(c * kPi * t) + 0.5 * std::sin(4.0 * kPi * x) * std::cos(4.0 * c * kPi * t);
}

Jet2 wave_exact_jet(double x, double t, std::span<const int> active_dims, double c) {
  const double s1 = std::sin(kPi * x), c1 = std::cos(kPi * x);
  const double s4 = std::sin(4.0 * kPi * x), c4 = std::cos(4.0 * kPi * x);
  const double ct1 = std::cos(c * kPi * t), st1 = std::sin(c * kPi * t);
  const double ct4 = std::cos(4.0 * c * kPi * t), st4 = std::sin(4.0 * c * kPi * t);
  Jet2 out(active_dims.size(), s1 * ct1 + 0.5 * s4 * ct4);
  for (std::size_t i = 0; i < active_dims.size(); ++i) {
    if (active_dims[i] == 0) {
      out.d1[i] = kPi * c1 * ct1 + 2.0 * kPi * c4 * ct4;
      out.d2[i] = -kPi * kPi * s1 * ct1 - 8.0 * kPi * kPi * s4 * ct4;
    } else if (active_dims[i] == 1) {
      out.d1[i] = -c * kPi * s1 * st1 - 2.0 * c * kPi * s4 * st4;
      out.d2[i] = -c * c * kPi * kPi * s1 * ct1 - 8.0 * c * c * kPi * kPi * s4 * ct4;
    } else {
      fail(ErrorCode::WidthMismatch, "wave_exact_jet: active dimension out of range");
    }
  }
  return out;
}

const char* model_name(ModelKind kind) {
  switch (kind) {
    case ModelKind::Kan: return "kan";
    case ModelKind::Fbkan: return "fbkan";
    case ModelKind::Mfkan: return "mfkan";
  }
  return "?";
}

ModelKind parse_model_kind(const std::string& name) {
  if (name == "kan") return ModelKind::Kan;
  if (name == "fbkan") return ModelKind::Fbkan;
  if (name == "mfkan") return ModelKind::Mfkan;
  fail(ErrorCode::InvalidArgument, "unknown model kind '" + name + "'");
}

std::size_t ExperimentSpec::subdomain_count() const {
  std::size_t l = 1;
  for (int c : subdomains) l *= static_cast<std::size_t>(std::max(c, 0));
  return l;
}

ExperimentSpec default_spec(const std::string& id) {
  ExperimentSpec s;
  s.id = id;
  s.intervals = 5;
  s.degree = 3;
  s.alpha = 0.05;
  s.train.learning_rate = 1e-2;
  if (id == "exp1") {
    s.models = {ModelKind::Kan, ModelKind::Fbkan};
    s.domain = Box({0.0}, {2.0});
    s.ensemble_size = 4;
    s.subdomains = {10};
    s.kan_widths = {1, 5, 1};
    s.fbkan_widths = {1, 3, 1};
    s.n_train = 400;
    s.n_cal = 500;
    s.n_test = 1000;
    s.train.epochs = 2000;
  } else if (id == "exp2") {
    s.models = {ModelKind::Kan, ModelKind::Fbkan};
    s.domain = Box::cube(2, 0.0, 1.0);
    s.ensemble_size = 4;
    s.subdomains = {2, 2};
    s.kan_widths = {2, 5, 1};
    s.fbkan_widths = {2, 3, 1};
    s.n_train = 2000;
    s.n_cal = 1000;
    s.n_test = 1000;
    s.train.epochs = 5000;
  } else if (id == "exp3") {
    s.models = {ModelKind::Mfkan};
    s.domain = Box({0.0}, {1.0});
    s.ensemble_size = 5;
    s.subdomains = {1};
    s.n_lf = 120;
    s.n_train = 5;
    s.n_cal = 40;
    s.n_test = 200;
    s.lf_widths = {1, 5, 1};
    s.nonlinear_widths = {2, 3, 1};
    s.lambda_alpha = 1.0;
    s.exponent_n = 4;
    s.linear_weight_w = 0.0;
    s.train.epochs = 2000;
  } else if (id == "exp4") {
    s.models = {ModelKind::Kan, ModelKind::Fbkan};
    s.domain = Box::cube(2, 0.0, 1.0);
    s.ensemble_size = 10;
    s.subdomains = {2, 2};
    // The windows are only C1 at their support edges and steep for narrow
    // overlaps; the wave residual's second derivatives then swamp training.
    s.overlap = 0.8;
    s.kan_widths = {2, 5, 5, 1};
    s.fbkan_widths = {2, 5, 5, 1};
    s.n_collocation = 600;
    s.n_ic = 200;
    s.n_bc = 200;
    s.n_train = 1000;
    s.n_cal = 1200;
    s.n_test = 10000;
    s.lambda_res = 0.01;
    s.wave_speed = kWaveSpeed;
    s.train.epochs = 5000;
  } else {
    fail(ErrorCode::UnknownExperiment, "unknown experiment '" + id + "' (expected exp1..exp4)");
  }
  return s;
}

void validate(const ExperimentSpec& s) {
  if (s.id != "exp1" && s.id != "exp2" && s.id != "exp3" && s.id != "exp4") {
    fail(ErrorCode::UnknownExperiment, "unknown experiment '" + s.id + "'");
  }
  require(!s.models.empty(), ErrorCode::InvalidArgument, "experiment: no models selected");
  require(s.alpha > 0.0 && s.alpha < 1.0, ErrorCode::InvalidArgument, "experiment: alpha must lie in (0, 1)");
  require(s.ensemble_size >= 2, ErrorCode::InvalidArgument, "experiment: ensemble size must be >= 2");
  require(s.n_train > 0 && s.n_cal > 0 && s.n_test > 0, ErrorCode::InvalidArgument,
          "experiment: dataset sizes must be positive");
  require(s.threads >= 1, ErrorCode::InvalidArgument, "experiment: threads must be >= 1");
  require(s.overlap > 0.0 && s.overlap < 1.0, ErrorCode::InvalidArgument, "experiment: overlap must lie in (0, 1)");
  validate(s.train);
  const int d = static_cast<int>(s.domain.dims());
  for (ModelKind k : s.models) {
    if (k == ModelKind::Kan) {
      require(s.kan_widths.size() >= 2 && s.kan_widths.front() == d && s.kan_widths.back() == 1,
              ErrorCode::WidthMismatch, "experiment: KAN widths must map the input dimension to 1");
    } else if (k == ModelKind::Fbkan) {
      require(s.fbkan_widths.size() >= 2 && s.fbkan_widths.front() == d && s.fbkan_widths.back() == 1,
              ErrorCode::WidthMismatch, "experiment: FBKAN widths must map the input dimension to 1");
      require(s.subdomains.size() == s.domain.dims(), ErrorCode::WidthMismatch,
              "experiment: one subdomain count per input dimension");
    } else {
      require(s.id == "exp3", ErrorCode::InvalidArgument, "experiment: MFKAN is only defined for exp3");
      require(s.n_lf > 0, ErrorCode::InvalidArgument, "experiment: low-fidelity set must be non-empty");
    }
  }
  if (s.id == "exp4") {
    require(s.n_collocation > 0 && s.n_ic > 0 && s.n_bc > 0, ErrorCode::InvalidArgument,
            "experiment: physics point sets must be non-empty");
    require(s.n_collocation + s.n_ic + s.n_bc == s.n_train, ErrorCode::InvalidArgument,
            "experiment: collocation + IC + BC counts must equal the training size");
  } else {
    require(std::find(s.models.begin(), s.models.end(), ModelKind::Mfkan) == s.models.end() || s.id == "exp3",
            ErrorCode::InvalidArgument, "experiment: MFKAN is only defined for exp3");
  }
}

namespace {

double target(const ExperimentSpec& spec, std::span<const double> x) {
  if (spec.id == "exp1") return f1(x[0]);
  if (spec.id == "exp2") return f2(x[0], x[1]);
  if (spec.id == "exp3") return f_high(x[0]);
  return wave_exact(x[0], x[1], spec.wave_speed);
}

std::vector<double> uniform_point(const Box& box, std::mt19937_64& rng) {
  std::vector<double> x(box.dims());
  for (std::size_t d = 0; d < box.dims(); ++d) {
    std::uniform_real_distribution<double> u(box.lo[d], box.hi[d]);
    x[d] = u(rng);
  }
  return x;
}

}  // namespace

Dataset sample_targets(const ExperimentSpec& spec, std::size_t n, std::uint64_t seed, std::uint64_t stream) {
  std::mt19937_64 rng(derive_seed(seed, stream));
  Dataset out(spec.domain.dims());
  for (std::size_t i = 0; i < n; ++i) {
    const auto x = uniform_point(spec.domain, rng);
    out.add(x, target(spec, x));
  }
  return out;
}

DatasetSplit sample_dataset(const ExperimentSpec& spec) {
  validate(spec);
  DatasetSplit split;
  split.seed = spec.data_seed;
  split.calibration = sample_targets(spec, spec.n_cal, spec.data_seed, kCalibration);
  split.test = sample_targets(spec, spec.n_test, spec.data_seed, kTest);
  if (spec.id == "exp4") {
    split.train = Dataset(2);
    PhysicsWave& p = split.physics;
    p.lambda_res = spec.lambda_res;
    p.wave_speed_c = spec.wave_speed;
    std::uniform_real_distribution<double> u(0.0, 1.0);
    std::mt19937_64 rc(derive_seed(spec.data_seed, kCollocation));
    for (std::size_t i = 0; i < spec.n_collocation; ++i) {
      const double x = u(rc);
      p.collocation.push_back({x, u(rc)});
    }
    std::mt19937_64 ri(derive_seed(spec.data_seed, kInitial));
    for (std::size_t i = 0; i < spec.n_ic; ++i) p.ic_points.push_back({u(ri), 0.0});
    std::mt19937_64 rb(derive_seed(spec.data_seed, kBoundary));
    // First half on x = 0, the rest on x = 1.
    const std::size_t left = spec.n_bc / 2;
    for (std::size_t i = 0; i < spec.n_bc; ++i) p.bc_points.push_back({i < left ? 0.0 : 1.0, u(rb)});
  } else {
    split.train = sample_targets(spec, spec.n_train, spec.data_seed, kTrain);
  }
  if (spec.id == "exp3") {
    std::mt19937_64 rng(derive_seed(spec.data_seed, kLowFidelity));
    split.lf_train = Dataset(1);
    for (std::size_t i = 0; i < spec.n_lf; ++i) {
      const auto x = uniform_point(spec.domain, rng);
      split.lf_train.add(x, f_low(x[0]));
    }
  }
  return split;
}

namespace {

LossSpec training_loss(const ExperimentSpec& spec, const DatasetSplit& split) {
  if (spec.id == "exp4") return split.physics;
  return DataMSE{split.train};
}

LowFidelityArchitecture lf_arch(const ExperimentSpec& spec, std::uint64_t seed) {
  LowFidelityArchitecture a;
  a.widths = spec.lf_widths;
  a.intervals = spec.intervals;
  a.degree = spec.degree;
  a.seed = seed;
  return a;
}

std::size_t model_subdomains(const ExperimentSpec& spec, ModelKind kind) {
  return kind == ModelKind::Fbkan ? spec.subdomain_count() : 1;
}

}  // namespace

TrainedModels train_models(const ExperimentSpec& spec, const DatasetSplit& split) {
  validate(spec);
  TrainedModels out;
  const LossSpec loss = training_loss(spec, split);
  for (ModelKind kind : spec.models) {
    switch (kind) {
      case ModelKind::Kan: {
        std::function<KanModel(std::uint64_t)> factory = [&](std::uint64_t seed) {
          return init_kan_model(spec.domain, spec.kan_widths, spec.intervals, spec.degree, seed);
        };
        out.kan = train_ensemble(factory, loss, spec.train, spec.ensemble_size, spec.model_seed, spec.threads);
        break;
      }
      case ModelKind::Fbkan: {
        const Decomposition decomp = uniform_decomposition(spec.domain, spec.subdomains, spec.overlap);
        std::function<FbkanModel(std::uint64_t)> factory = [&](std::uint64_t seed) {
          return init_fbkan(decomp, spec.fbkan_widths, spec.intervals, spec.degree, seed);
        };
        out.fbkan = train_ensemble(factory, loss, spec.train, spec.ensemble_size, spec.model_seed, spec.threads);
        break;
      }
      case ModelKind::Mfkan: {
        const LossSpec hf = MultiFidelityHF{split.train, spec.lambda_alpha, spec.exponent_n, spec.linear_weight_w};
        const std::uint64_t lf_seed = derive_seed(spec.model_seed, 0x1F);
        std::function<MfkanModel(std::uint64_t)> factory;
        if (spec.shared_low_fidelity) {
          LossHistory h;
          out.low_fidelity.push_back(
              train_low_fidelity(spec.domain, split.lf_train, lf_arch(spec, lf_seed), spec.train, &h));
          out.low_fidelity_histories.push_back(std::move(h));
          const KanNetwork& low = out.low_fidelity.front();
          factory = [&spec, &low](std::uint64_t seed) {
            return init_mfkan(spec.domain, low, spec.nonlinear_widths, spec.intervals, spec.degree, seed);
          };
        } else {
          // Member j gets its own low-fidelity net, trained inside the factory.
          factory = [&spec, &split](std::uint64_t seed) {
            KanNetwork low = train_low_fidelity(spec.domain, split.lf_train,
                                                lf_arch(spec, derive_seed(seed, 0x1F)), spec.train);
            return init_mfkan(spec.domain, std::move(low), spec.nonlinear_widths, spec.intervals, spec.degree,
                              seed);
          };
        }
        out.mfkan = train_ensemble(factory, hf, spec.train, spec.ensemble_size, spec.model_seed, spec.threads);
        if (!spec.shared_low_fidelity) {
          for (const auto& m : out.mfkan->members) out.low_fidelity.push_back(m.kan_low);
        }
        break;
      }
    }
  }
  return out;
}

std::vector<EnsembleStats> model_stats(const TrainedModels& models, ModelKind kind, const Dataset& data) {
  switch (kind) {
    case ModelKind::Kan:
      require(models.kan.has_value(), ErrorCode::InvalidArgument, "model_stats: KAN ensemble not trained");
      return ensemble_stats(*models.kan, data);
    case ModelKind::Fbkan:
      require(models.fbkan.has_value(), ErrorCode::InvalidArgument, "model_stats: FBKAN ensemble not trained");
      return ensemble_stats(*models.fbkan, data);
    case ModelKind::Mfkan:
      require(models.mfkan.has_value(), ErrorCode::InvalidArgument, "model_stats: MFKAN ensemble not trained");
      return ensemble_stats(*models.mfkan, data);
  }
  fail(ErrorCode::Internal, "model_stats: unknown kind");
}

namespace {

void score(const std::string& model, const std::string& kind, std::span<const PredictionInterval> iv,
           std::span<const EnsembleStats> stats, const Dataset& test, ResultRow& row, PointDump& dump) {
  row.model = model;
  row.intervals_kind = kind;
  row.coverage = coverage(iv, test.targets);
  const PiwStats piw = piw_stats(iv);
  row.avg_piw = piw.average;
  row.std_piw = piw.std;
  row.infinite_width = piw.infinite;
  dump.model = model;
  dump.intervals_kind = kind;
  dump.dim = test.dim;
  dump.inputs = test.inputs;
  dump.y_true = test.targets;
  for (std::size_t i = 0; i < test.size(); ++i) {
    dump.mean.push_back(stats[i].mean);
    dump.std.push_back(stats[i].std);
    dump.lower.push_back(iv[i].lower);
    dump.upper.push_back(iv[i].upper);
    dump.covered.push_back(test.targets[i] >= iv[i].lower && test.targets[i] <= iv[i].upper);
  }
}

}  // namespace

ModelEvaluation evaluate_model(const std::string& model, std::span<const EnsembleStats> cal_stats,
                               const Dataset& calibration, std::span<const EnsembleStats> test_stats,
                               const Dataset& test, double alpha, std::size_t M, std::size_t L,
                               std::uint64_t seed) {
  return evaluate_calibrated(model, calibrate(cal_stats, calibration.targets, alpha), test_stats, test, M, L,
                             seed);
}

ModelEvaluation evaluate_calibrated(const std::string& model, ConformalCalibration calibration,
                                    std::span<const EnsembleStats> test_stats, const Dataset& test,
                                    std::size_t M, std::size_t L, std::uint64_t seed) {
  require(test_stats.size() == test.size(), ErrorCode::LengthMismatch, "evaluate_model: test size");
  ModelEvaluation ev;
  ev.calibration = std::move(calibration);
  const double alpha = ev.calibration.miscoverage_alpha;
  std::vector<PredictionInterval> raw(test.size()), conf(test.size());
  for (std::size_t i = 0; i < test.size(); ++i) {
    raw[i] = sigma_interval(test_stats[i]);
    conf[i] = conformal_interval(test_stats[i], ev.calibration.q_hat);
  }
  for (ResultRow* r : {&ev.ensemble_row, &ev.conformal_row}) {
    r->alpha = alpha;
    r->n_cal = ev.calibration.n_cal;
    r->M = M;
    r->L = L;
    r->seed = seed;
  }
  score(model, "ensemble", raw, test_stats, test, ev.ensemble_row, ev.ensemble_dump);
  score(model, "conformal", conf, test_stats, test, ev.conformal_row, ev.conformal_dump);
  return ev;
}

const ResultRow& ResultsRecord::row(const std::string& model, const std::string& kind) const {
  for (const auto& r : rows) {
    if (r.model == model && r.intervals_kind == kind) return r;
  }
  fail(ErrorCode::InvalidArgument, "results: no row for " + model + "/" + kind);
}

ResultsRecord evaluate_experiment(const ExperimentSpec& spec, const TrainedModels& models,
                                  const DatasetSplit& split) {
  ResultsRecord rec;
  rec.spec = spec;
  for (ModelKind kind : spec.models) {
    const auto cal = model_stats(models, kind, split.calibration);
    const auto test = model_stats(models, kind, split.test);
    ModelEvaluation ev = evaluate_model(model_name(kind), cal, split.calibration, test, split.test, spec.alpha,
                                        spec.ensemble_size, model_subdomains(spec, kind), spec.model_seed);
    rec.rows.push_back(ev.conformal_row);
    rec.rows.push_back(ev.ensemble_row);
    rec.dumps.push_back(std::move(ev.conformal_dump));
    rec.dumps.push_back(std::move(ev.ensemble_dump));
    rec.calibrations.push_back(std::move(ev.calibration));
  }
  auto add_histories = [&rec](const std::string& name, const auto& ens) {
    for (std::size_t j = 0; j < ens.histories.size(); ++j) {
      rec.histories.emplace_back(name + "_" + std::to_string(j), ens.histories[j]);
    }
  };
  if (models.kan) add_histories("kan", *models.kan);
  if (models.fbkan) add_histories("fbkan", *models.fbkan);
  if (models.mfkan) {
    for (std::size_t j = 0; j < models.low_fidelity_histories.size(); ++j) {
      rec.histories.emplace_back("low_fidelity_" + std::to_string(j), models.low_fidelity_histories[j]);
    }
    add_histories("mfkan", *models.mfkan);
    for (const auto& m : models.mfkan->members) rec.mixing_alphas.push_back(m.mixing_alpha);
  }
  return rec;
}

ResultsRecord run_experiment(const ExperimentSpec& spec) {
  const DatasetSplit split = sample_dataset(spec);
  const TrainedModels models = train_models(spec, split);
  return evaluate_experiment(spec, models, split);
}

AblationAxis parse_axis(const std::string& name) {
  if (name == "ensemble_size" || name == "ensemble-size") return AblationAxis::EnsembleSize;
  if (name == "subdomains") return AblationAxis::Subdomains;
  if (name == "calibration_size" || name == "calibration-size") return AblationAxis::CalibrationSize;
  fail(ErrorCode::InvalidArgument, "unknown sweep axis '" + name + "'");
}

const char* axis_name(AblationAxis axis) {
  switch (axis) {
    case AblationAxis::EnsembleSize: return "ensemble_size";
    case AblationAxis::Subdomains: return "subdomains";
    case AblationAxis::CalibrationSize: return "calibration_size";
  }
  return "?";
}

namespace {

std::size_t positive_count(double v, const char* what) {
  require(v >= 1.0 && std::floor(v) == v, ErrorCode::InvalidArgument, std::string("sweep: ") + what +
                                                                          " values must be positive integers");
  return static_cast<std::size_t>(v);
}

}  // namespace

SweepResult run_ablation(AblationAxis axis, const std::vector<double>& grid, const ExperimentSpec& base,
                         std::size_t repeats) {
  require(!grid.empty(), ErrorCode::InvalidArgument, "sweep: empty grid");
  SweepResult out;
  out.axis = axis;
  if (axis == AblationAxis::CalibrationSize) {
    require(repeats >= 1, ErrorCode::InvalidArgument, "sweep: repeats must be >= 1");
    const DatasetSplit split = sample_dataset(base);
    const TrainedModels models = train_models(base, split);
    std::vector<std::vector<EnsembleStats>> test_stats;
    for (ModelKind kind : base.models) test_stats.push_back(model_stats(models, kind, split.test));
    for (std::size_t gi = 0; gi < grid.size(); ++gi) {
      const std::size_t n = positive_count(grid[gi], "calibration size");
      for (std::size_t r = 0; r < repeats; ++r) {
        SweepPoint pt;
        pt.value = grid[gi];
        pt.repeat = r;
        pt.record.spec = base;
        pt.record.spec.n_cal = n;
        const Dataset cal = sample_targets(base, n, base.data_seed, kSweepBase + gi * repeats + r);
        for (std::size_t mi = 0; mi < base.models.size(); ++mi) {
          const ModelKind kind = base.models[mi];
          const auto cal_stats = model_stats(models, kind, cal);
          ModelEvaluation ev = evaluate_model(model_name(kind), cal_stats, cal, test_stats[mi], split.test,
                                              base.alpha, base.ensemble_size, model_subdomains(base, kind),
                                              base.model_seed);
          pt.record.rows.push_back(ev.conformal_row);
          pt.record.rows.push_back(ev.ensemble_row);
          pt.record.calibrations.push_back(std::move(ev.calibration));
        }
        out.points.push_back(std::move(pt));
      }
    }
    return out;
  }
  for (double v : grid) {
    ExperimentSpec spec = base;
    if (axis == AblationAxis::EnsembleSize) {
      spec.ensemble_size = positive_count(v, "ensemble size");
    } else {
      const int c = static_cast<int>(positive_count(v, "subdomain count"));
      spec.subdomains.assign(spec.domain.dims(), c);
    }
    SweepPoint pt;
    pt.value = v;
    pt.record = run_experiment(spec);
    out.points.push_back(std::move(pt));
  }
  return out;
}

}  // namespace ckan
