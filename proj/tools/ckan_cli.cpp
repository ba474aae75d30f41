// ckan: train, calibrate and evaluate KAN / FBKAN / MFKAN ensembles.
//
// Exit codes: 0 success, 1 divergence or other numeric failure, 2 usage,
// configuration or I/O error.

#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "ckan/checkpoint.hpp"
#include "ckan/experiments.hpp"

namespace fs = std::filesystem;
using namespace ckan;

namespace {

struct Overrides {
  std::string config;
  std::string experiment;
  std::string models;
  std::uint64_t seed = 0;
  std::uint64_t data_seed = 0;
  std::size_t threads = 1;
  double alpha = 0.05;
  std::size_t ensemble_size = 4;
  std::string subdomains;
  double overlap = 0.2;
  int epochs = 0;
  double lr = 0.0;
};

struct Common {
  CLI::App* app = nullptr;
  Overrides o;
  std::string out = ".";

  bool given(const char* flag) const { return app->count(flag) > 0; }
};

void add_common(Common& c, CLI::App* app) {
  c.app = app;
  app->add_option("--config", c.o.config, "JSON config; absent fields take the experiment defaults");
  app->add_option("--experiment", c.o.experiment, "exp1 | exp2 | exp3 | exp4");
  app->add_option("--out", c.out, "output directory")->capture_default_str();
  app->add_option("--seed", c.o.seed, "model seed (member j uses seed + j)");
  app->add_option("--data-seed", c.o.data_seed, "dataset sampling seed");
  app->add_option("--threads", c.o.threads, "ensemble worker threads")->check(CLI::PositiveNumber);
  app->add_option("--alpha", c.o.alpha, "miscoverage level");
  app->add_option("--ensemble-size", c.o.ensemble_size, "ensemble members M");
  app->add_option("--subdomains", c.o.subdomains, "FBKAN subdomains per dimension, e.g. 8 or 2x2");
  app->add_option("--overlap", c.o.overlap, "FBKAN overlap fraction");
  app->add_option("--epochs", c.o.epochs, "training epochs");
  app->add_option("--lr", c.o.lr, "Adam learning rate");
  app->add_option("--models", c.o.models, "comma-separated subset of kan,fbkan,mfkan");
}

std::vector<std::string> split_list(const std::string& s, const std::string& seps) {
  std::vector<std::string> out;
  std::string cur;
  for (char ch : s) {
    if (seps.find(ch) != std::string::npos) {
      out.push_back(cur);
      cur.clear();
    } else {
      cur += ch;
    }
  }
  out.push_back(cur);
  return out;
}

std::vector<int> parse_subdomains(const std::string& text, std::size_t dims) {
  std::vector<int> counts;
  for (const auto& part : split_list(text, "x,")) {
    try {
      std::size_t used = 0;
      const int v = std::stoi(part, &used);
      if (used != part.size()) throw std::invalid_argument(part);
      counts.push_back(v);
    } catch (const std::exception&) {
      fail(ErrorCode::InvalidArgument, "--subdomains: cannot parse '" + text + "'");
    }
  }
  if (counts.size() == 1 && dims > 1) counts.assign(dims, counts.front());
  return counts;
}

std::vector<double> parse_grid(const std::string& text) {
  std::vector<double> grid;
  for (const auto& part : split_list(text, ",")) {
    try {
      std::size_t used = 0;
      grid.push_back(std::stod(part, &used));
      if (used != part.size()) throw std::invalid_argument(part);
    } catch (const std::exception&) {
      fail(ErrorCode::InvalidArgument, "sweep grid: cannot parse '" + text + "'");
    }
  }
  return grid;
}

ExperimentSpec build_spec(const Common& c, const std::string& fallback_id = "") {
  Json doc = Json::object();
  if (!c.o.config.empty()) doc = read_json(c.o.config);
  std::string id = c.o.experiment;
  if (id.empty() && doc.is_object() && doc.contains("id")) id = doc.at("id").get<std::string>();
  if (id.empty()) id = fallback_id;
  if (id.empty()) fail(ErrorCode::InvalidArgument, "no experiment given (use --experiment or a config id)");
  ExperimentSpec spec = spec_from_json(doc, default_spec(id));
  spec.id = id;
  if (c.given("--seed")) spec.model_seed = c.o.seed;
  if (c.given("--data-seed")) spec.data_seed = c.o.data_seed;
  if (c.given("--threads")) spec.threads = c.o.threads;
  if (c.given("--alpha")) spec.alpha = c.o.alpha;
  if (c.given("--ensemble-size")) spec.ensemble_size = c.o.ensemble_size;
  if (c.given("--subdomains")) spec.subdomains = parse_subdomains(c.o.subdomains, spec.domain.dims());
  if (c.given("--overlap")) spec.overlap = c.o.overlap;
  if (c.given("--epochs")) spec.train.epochs = c.o.epochs;
  if (c.given("--lr")) spec.train.learning_rate = c.o.lr;
  if (c.given("--models")) {
    spec.models.clear();
    for (const auto& name : split_list(c.o.models, ",")) spec.models.push_back(parse_model_kind(name));
  }
  validate(spec);
  return spec;
}

fs::path prepare_out(const std::string& dir) {
  const fs::path p(dir);
  std::error_code ec;
  fs::create_directories(p, ec);
  if (ec || !fs::is_directory(p)) throw Error(ErrorCode::Io, "cannot create output directory '" + dir + "'");
  return p;
}

void write_histories(const fs::path& out, const std::vector<std::pair<std::string, LossHistory>>& hs) {
  for (const auto& [name, h] : hs) write_history_csv(out / ("history_" + name + ".csv"), h);
}

std::vector<std::pair<std::string, LossHistory>> collect_histories(const TrainedModels& m) {
  std::vector<std::pair<std::string, LossHistory>> out;
  auto add = [&out](const std::string& name, const std::vector<LossHistory>& hs) {
    for (std::size_t j = 0; j < hs.size(); ++j) out.emplace_back(name + "_" + std::to_string(j), hs[j]);
  };
  if (m.kan) add("kan", m.kan->histories);
  if (m.fbkan) add("fbkan", m.fbkan->histories);
  if (m.mfkan) {
    add("low_fidelity", m.low_fidelity_histories);
    add("mfkan", m.mfkan->histories);
  }
  return out;
}

void save_models(const fs::path& out, const std::string& id, const TrainedModels& m) {
  if (m.kan) save_ensemble(out, id, "kan", *m.kan);
  if (m.fbkan) save_ensemble(out, id, "fbkan", *m.fbkan);
  if (m.mfkan) save_ensemble(out, id, "mfkan", *m.mfkan);
}

void print_warnings(const ConformalCalibration& cal) {
  for (const auto& w : cal.warnings) std::cerr << "warning: " << w << '\n';
}

void print_rows(const std::vector<ResultRow>& rows) {
  for (const auto& r : rows) {
    std::printf("%-6s %-9s coverage=%.4f avg_piw=%.6g std_piw=%.6g%s\n", r.model.c_str(), r.intervals_kind.c_str(),
                r.coverage, r.avg_piw, r.std_piw, r.infinite_width ? " (infinite)" : "");
  }
}

int cmd_train(const Common& c) {
  const ExperimentSpec spec = build_spec(c);
  const fs::path out = prepare_out(c.out);
  write_json(out / "config.json", to_json(spec));
  const DatasetSplit split = sample_dataset(spec);
  if (!split.train.empty()) write_dataset_csv(out / "train.csv", split.train);
  write_dataset_csv(out / "calibration.csv", split.calibration);
  write_dataset_csv(out / "test.csv", split.test);
  if (!split.lf_train.empty()) write_dataset_csv(out / "lf_train.csv", split.lf_train);
  const TrainedModels models = train_models(spec, split);
  save_models(out, spec.id, models);
  write_histories(out, collect_histories(models));
  for (ModelKind k : spec.models) std::printf("wrote %s\n", (out / (std::string(model_name(k)) + "_manifest.json")).c_str());
  return 0;
}

// Calibration and test data default to the split sampled from the
// experiment config, so train, calibrate, evaluate reproduces `experiment`.
Dataset data_or_split(const Common& c, const std::string& path, const std::string& id, bool calibration) {
  if (!path.empty()) return read_dataset_csv(path);
  const DatasetSplit split = sample_dataset(build_spec(c, id));
  return calibration ? split.calibration : split.test;
}

int cmd_calibrate(const Common& c, const std::string& ensemble, const std::string& data) {
  EnsembleManifest manifest;
  const auto members = load_ensemble(ensemble, &manifest);
  const ExperimentSpec spec = build_spec(c, manifest.experiment);
  const Dataset cal = data_or_split(c, data, manifest.experiment, true);
  const auto stats = ensemble_stats(members, cal);
  const ConformalCalibration record = calibrate(stats, cal.targets, spec.alpha);
  print_warnings(record);
  const fs::path out = prepare_out(c.out);
  const fs::path path = out / ("calibration_" + manifest.model + ".json");
  write_json(path, to_json(record));
  std::printf("q_hat=%.17g n_cal=%zu alpha=%g\nwrote %s\n", record.q_hat, record.n_cal, record.miscoverage_alpha,
              path.c_str());
  return 0;
}

int cmd_evaluate(const Common& c, const std::string& ensemble, const std::string& calibration,
                 const std::string& data) {
  EnsembleManifest manifest;
  const auto members = load_ensemble(ensemble, &manifest);
  ConformalCalibration record = calibration_from_json(read_json(calibration));
  if (c.given("--alpha") && c.o.alpha != record.miscoverage_alpha) {
    throw Error(ErrorCode::Schema, "calibration was made for alpha=" + std::to_string(record.miscoverage_alpha) +
                                       " but --alpha=" + std::to_string(c.o.alpha));
  }
  print_warnings(record);
  const Dataset test = data_or_split(c, data, manifest.experiment, false);
  const auto stats = ensemble_stats(members, test);
  std::size_t L = 1;
  if (const auto* f = std::get_if<FbkanModel>(&members.front())) L = f->decomposition.size();
  ModelEvaluation ev = evaluate_calibrated(manifest.model, std::move(record), stats, test, members.size(), L,
                                           manifest.base_seed);
  const fs::path out = prepare_out(c.out);
  const std::vector<ResultRow> rows{ev.conformal_row, ev.ensemble_row};
  write_results_csv(out / ("results_" + manifest.model + ".csv"), rows);
  write_points_csv(out / ("points_" + manifest.model + "_conformal.csv"), ev.conformal_dump);
  write_points_csv(out / ("points_" + manifest.model + "_ensemble.csv"), ev.ensemble_dump);
  print_rows(rows);
  return 0;
}

int cmd_experiment(const Common& c, const std::string& id, bool save) {
  const ExperimentSpec spec = build_spec(c, id);
  const fs::path out = prepare_out(c.out);
  write_json(out / "config.json", to_json(spec));
  const DatasetSplit split = sample_dataset(spec);
  const TrainedModels models = train_models(spec, split);
  const ResultsRecord rec = evaluate_experiment(spec, models, split);
  if (save) save_models(out, spec.id, models);
  write_results_csv(out / "results.csv", rec.rows);
  for (const auto& d : rec.dumps) write_points_csv(out / ("points_" + d.model + "_" + d.intervals_kind + ".csv"), d);
  write_histories(out, rec.histories);
  for (std::size_t i = 0; i < spec.models.size(); ++i) {
    print_warnings(rec.calibrations[i]);
    write_json(out / ("calibration_" + std::string(model_name(spec.models[i])) + ".json"),
               to_json(rec.calibrations[i]));
  }
  if (!rec.mixing_alphas.empty()) {
    std::ofstream f(out / "mixing_alpha.csv");
    f << "member,alpha\n";
    for (std::size_t j = 0; j < rec.mixing_alphas.size(); ++j) {
      char buf[32];
      std::snprintf(buf, sizeof buf, "%.17g", rec.mixing_alphas[j]);
      f << j << ',' << buf << '\n';
    }
    if (!f) throw Error(ErrorCode::Io, "cannot write mixing_alpha.csv");
    for (double a : rec.mixing_alphas) std::printf("mixing_alpha=%.6g\n", a);
  }
  print_rows(rec.rows);
  return 0;
}

int cmd_sweep(const Common& c, const std::string& axis_text, const std::string& grid_text, std::size_t repeats) {
  const AblationAxis axis = parse_axis(axis_text);
  const std::vector<double> grid = parse_grid(grid_text);
  const ExperimentSpec spec = build_spec(c, "exp1");
  const fs::path out = prepare_out(c.out);
  write_json(out / "config.json", to_json(spec));
  const SweepResult sweep = run_ablation(axis, grid, spec, repeats);
  const fs::path path = out / ("sweep_" + std::string(axis_name(axis)) + ".csv");
  write_sweep_csv(path, sweep);
  for (const auto& p : sweep.points) {
    for (const auto& r : p.record.rows) {
      if (r.intervals_kind != "conformal") continue;
      std::printf("%s=%g repeat=%zu %s coverage=%.4f avg_piw=%.6g\n", axis_name(axis), p.value, p.repeat,
                  r.model.c_str(), r.coverage, r.avg_piw);
    }
  }
  std::printf("wrote %s\n", path.c_str());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"KAN, FBKAN and MFKAN ensembles with split conformal prediction intervals"};
  app.require_subcommand(1);

  Common train_c, cal_c, eval_c, exp_c, sweep_c;
  auto* train = app.add_subcommand("train", "train ensembles and write checkpoints");
  add_common(train_c, train);

  std::string cal_ensemble, cal_data;
  auto* cal = app.add_subcommand("calibrate", "compute the conformal quantile for a trained ensemble");
  add_common(cal_c, cal);
  cal->add_option("--ensemble", cal_ensemble, "ensemble manifest")->required();
  cal->add_option("--data", cal_data, "calibration CSV (default: sampled from the experiment config)");

  std::string eval_ensemble, eval_cal, eval_data;
  auto* eval = app.add_subcommand("evaluate", "score ensemble and conformal intervals on test data");
  add_common(eval_c, eval);
  eval->add_option("--ensemble", eval_ensemble, "ensemble manifest")->required();
  eval->add_option("--calibration", eval_cal, "calibration record")->required();
  eval->add_option("--data", eval_data, "test CSV (default: sampled from the experiment config)");

  std::string exp_id;
  bool exp_save = false;
  auto* exp = app.add_subcommand("experiment", "sample, train, calibrate and evaluate one experiment");
  add_common(exp_c, exp);
  exp->add_option("id", exp_id, "exp1 | exp2 | exp3 | exp4");
  exp->add_flag("--save-models", exp_save, "also write member checkpoints");

  std::string sweep_axis, sweep_grid;
  std::size_t sweep_repeats = 20;
  auto* sweep = app.add_subcommand("sweep", "ablation over ensemble_size, subdomains or calibration_size");
  add_common(sweep_c, sweep);
  sweep->add_option("axis", sweep_axis, "ensemble_size | subdomains | calibration_size")->required();
  sweep->add_option("grid", sweep_grid, "comma-separated values")->required();
  sweep->add_option("--repeats", sweep_repeats, "calibration draws per size (calibration_size only)")
      ->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 2;
  }

  try {
    if (*train) return cmd_train(train_c);
    if (*cal) return cmd_calibrate(cal_c, cal_ensemble, cal_data);
    if (*eval) return cmd_evaluate(eval_c, eval_ensemble, eval_cal, eval_data);
    if (*exp) return cmd_experiment(exp_c, exp_id, exp_save);
    if (*sweep) return cmd_sweep(sweep_c, sweep_axis, sweep_grid, sweep_repeats);
  } catch (const DivergedError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  } catch (const Error& e) {
    std::cerr << "error (" << to_string(e.code()) << "): " << e.what() << '\n';
    return e.code() == ErrorCode::NonFinite ? 1 : 2;
  } catch (const nlohmann::json::exception& e) {
    std::cerr << "error (schema): " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
  return 2;
}
