#include "ckan/checkpoint.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <sstream>

namespace ckan {

namespace fs = std::filesystem;

namespace {

constexpr const char* kModelFormat = "ckan-model";
constexpr const char* kManifestFormat = "ckan-ensemble";

[[noreturn]] void schema_error(const std::string& what) { throw Error(ErrorCode::Schema, "checkpoint: " + what); }

const Json& field(const Json& j, const char* key) {
  if (!j.is_object() || !j.contains(key)) schema_error(std::string("missing field '") + key + "'");
  return j.at(key);
}

template <class T>
T get(const Json& j, const char* key) {
  try {
    return field(j, key).get<T>();
  } catch (const nlohmann::json::exception&) {
    schema_error(std::string("field '") + key + "' has the wrong type");
  }
}

double get_double(const Json& j, const char* key) {
  const Json& v = field(j, key);
  if (!v.is_number()) schema_error(std::string("field '") + key + "' must be a number");
  return v.get<double>();
}

std::vector<double> get_doubles(const Json& j, const char* key) {
  const Json& v = field(j, key);
  if (!v.is_array()) schema_error(std::string("field '") + key + "' must be an array");
  std::vector<double> out;
  out.reserve(v.size());
  for (const auto& e : v) {
    if (!e.is_number()) schema_error(std::string("field '") + key + "' must hold numbers");
    out.push_back(e.get<double>());
  }
  return out;
}

void check_header(const Json& j, const char* format) {
  if (get<std::string>(j, "format") != format) schema_error(std::string("expected format '") + format + "'");
  const int version = get<int>(j, "version");
  if (version != kCheckpointVersion) schema_error("unsupported version " + std::to_string(version));
}

// Infinite values are not representable in JSON numbers.
Json encode_real(double v) {
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  return v;
}

double decode_real(const Json& v, const char* key) {
  if (v.is_number()) return v.get<double>();
  if (v.is_string()) {
    const auto s = v.get<std::string>();
    if (s == "inf") return std::numeric_limits<double>::infinity();
    if (s == "-inf") return -std::numeric_limits<double>::infinity();
  }
  schema_error(std::string("field '") + key + "' must be a number or \"inf\"");
}

}  // namespace

Json to_json(const KnotGrid& grid) {
  return Json{{"lo", grid.domain_lo()},
              {"hi", grid.domain_hi()},
              {"intervals", grid.intervals()},
              {"degree", grid.degree()},
              {"knots", grid.knots()}};
}

KnotGrid grid_from_json(const Json& j) {
  KnotGrid g = [&] {
    try {
      return build_grid(get_double(j, "lo"), get_double(j, "hi"), get<int>(j, "intervals"), get<int>(j, "degree"));
    } catch (const Error& e) {
      if (e.code() == ErrorCode::Schema) throw;
      schema_error(std::string("invalid grid: ") + e.what());
    }
  }();
  if (j.contains("knots") && get_doubles(j, "knots") != g.knots()) schema_error("grid knots do not match the grid spec");
  return g;
}

Json to_json(const KanNetwork& net) {
  Json layers = Json::array();
  for (const auto& layer : net.layers) {
    Json edges = Json::array();
    for (const auto& e : layer.edges) edges.push_back(Json{{"w_b", e.w_b}, {"w_s", e.w_s}, {"coeffs", e.coeffs}});
    layers.push_back(Json{{"in", layer.in_width}, {"out", layer.out_width}, {"grid", to_json(layer.grid)},
                          {"edges", std::move(edges)}});
  }
  return Json{{"widths", net.widths}, {"seed", net.seed}, {"silu_branch", net.silu_branch}, {"layers", layers}};
}

KanNetwork network_from_json(const Json& j) {
  KanNetwork net;
  net.widths = get<std::vector<int>>(j, "widths");
  net.seed = get<std::uint64_t>(j, "seed");
  net.silu_branch = get<bool>(j, "silu_branch");
  const Json& layers = field(j, "layers");
  if (!layers.is_array() || net.widths.size() < 2 || layers.size() != net.widths.size() - 1) {
    schema_error("layer count does not match widths");
  }
  for (std::size_t l = 0; l < layers.size(); ++l) {
    const Json& lj = layers[l];
    const int in = get<int>(lj, "in");
    const int out = get<int>(lj, "out");
    if (in != net.widths[l] || out != net.widths[l + 1] || in < 1 || out < 1) schema_error("layer widths mismatch");
    KanLayer layer(in, out, grid_from_json(field(lj, "grid")));
    const Json& edges = field(lj, "edges");
    if (!edges.is_array() || edges.size() != layer.edges.size()) schema_error("edge count mismatch");
    for (std::size_t e = 0; e < edges.size(); ++e) {
      EdgeFunction& edge = layer.edges[e];
      edge.w_b = get_double(edges[e], "w_b");
      edge.w_s = get_double(edges[e], "w_s");
      edge.coeffs = get_doubles(edges[e], "coeffs");
      if (edge.coeffs.size() != static_cast<std::size_t>(layer.grid.basis_count())) {
        schema_error("coefficient count does not match the grid");
      }
    }
    net.layers.push_back(std::move(layer));
  }
  return net;
}

Json to_json(const Box& box) { return Json{{"lo", box.lo}, {"hi", box.hi}}; }

Box box_from_json(const Json& j) {
  try {
    return Box(get_doubles(j, "lo"), get_doubles(j, "hi"));
  } catch (const Error& e) {
    if (e.code() == ErrorCode::Schema) throw;
    schema_error(std::string("invalid box: ") + e.what());
  }
}

Json to_json(const Decomposition& d) {
  Json subs = Json::array();
  for (const auto& s : d.subdomains) subs.push_back(Json{{"center", s.center}, {"half_width", s.half_width}});
  return Json{{"domain", to_json(d.domain)},
              {"counts", d.counts},
              {"overlap_fraction", d.overlap_fraction},
              {"subdomains", subs}};
}

Decomposition decomposition_from_json(const Json& j) {
  Decomposition d = [&] {
    try {
      return uniform_decomposition(box_from_json(field(j, "domain")), get<std::vector<int>>(j, "counts"),
                                   get_double(j, "overlap_fraction"));
    } catch (const Error& e) {
      if (e.code() == ErrorCode::Schema) throw;
      schema_error(std::string("invalid decomposition: ") + e.what());
    }
  }();
  const Json& subs = field(j, "subdomains");
  if (!subs.is_array() || subs.size() != d.size()) schema_error("subdomain count mismatch");
  for (std::size_t i = 0; i < d.size(); ++i) {
    if (get_doubles(subs[i], "center") != d.subdomains[i].center ||
        get_doubles(subs[i], "half_width") != d.subdomains[i].half_width) {
      schema_error("subdomain geometry does not match counts/overlap");
    }
  }
  return d;
}

Json to_json(const AnyModel& model) {
  Json j{{"format", kModelFormat}, {"version", kCheckpointVersion}};
  if (const auto* k = std::get_if<KanModel>(&model)) {
    j["kind"] = "kan";
    j["domain"] = to_json(k->domain);
    j["network"] = to_json(k->net);
  } else if (const auto* f = std::get_if<FbkanModel>(&model)) {
    j["kind"] = "fbkan";
    j["decomposition"] = to_json(f->decomposition);
    Json members = Json::array();
    for (const auto& net : f->kans) members.push_back(to_json(net));
    j["members"] = std::move(members);
  } else {
    const auto& m = std::get<MfkanModel>(model);
    j["kind"] = "mfkan";
    j["domain"] = to_json(m.domain);
    j["low_fidelity"] = to_json(m.kan_low);
    j["linear"] = to_json(m.kan_linear);
    j["nonlinear"] = to_json(m.kan_nonlinear);
    j["mixing_alpha"] = m.mixing_alpha;
    j["low_frozen"] = m.low_frozen;
  }
  return j;
}

AnyModel model_from_json(const Json& j) {
  check_header(j, kModelFormat);
  const auto kind = get<std::string>(j, "kind");
  if (kind == "kan") {
    KanModel m{box_from_json(field(j, "domain")), network_from_json(field(j, "network"))};
    if (static_cast<std::size_t>(m.net.input_width()) != m.domain.dims()) schema_error("KAN input width vs domain");
    return m;
  }
  if (kind == "fbkan") {
    FbkanModel m;
    m.decomposition = decomposition_from_json(field(j, "decomposition"));
    const Json& members = field(j, "members");
    if (!members.is_array() || members.size() != m.decomposition.size()) schema_error("FBKAN member count");
    for (const auto& mj : members) m.kans.push_back(network_from_json(mj));
    return m;
  }
  if (kind == "mfkan") {
    MfkanModel m;
    m.domain = box_from_json(field(j, "domain"));
    m.kan_low = network_from_json(field(j, "low_fidelity"));
    m.kan_linear = network_from_json(field(j, "linear"));
    m.kan_nonlinear = network_from_json(field(j, "nonlinear"));
    m.mixing_alpha = get_double(j, "mixing_alpha");
    m.low_frozen = get<bool>(j, "low_frozen");
    const int z = m.kan_low.input_width() + m.kan_low.output_width();
    if (m.kan_linear.input_width() != z || m.kan_nonlinear.input_width() != z) schema_error("MFKAN head widths");
    return m;
  }
  schema_error("unknown model kind '" + kind + "'");
}

namespace {

Json kinds_to_json(const std::vector<ModelKind>& kinds) {
  Json a = Json::array();
  for (ModelKind k : kinds) a.push_back(model_name(k));
  return a;
}

}  // namespace

Json to_json(const ExperimentSpec& s) {
  return Json{{"id", s.id},
              {"models", kinds_to_json(s.models)},
              {"domain", to_json(s.domain)},
              {"ensemble_size", s.ensemble_size},
              {"subdomains", s.subdomains},
              {"overlap", s.overlap},
              {"kan_widths", s.kan_widths},
              {"fbkan_widths", s.fbkan_widths},
              {"intervals", s.intervals},
              {"degree", s.degree},
              {"n_train", s.n_train},
              {"n_cal", s.n_cal},
              {"n_test", s.n_test},
              {"alpha", s.alpha},
              {"learning_rate", s.train.learning_rate},
              {"epochs", s.train.epochs},
              {"train_seed", s.train.seed},
              {"full_batch", s.train.full_batch},
              {"data_seed", s.data_seed},
              {"model_seed", s.model_seed},
              {"threads", s.threads},
              {"n_lf", s.n_lf},
              {"lf_widths", s.lf_widths},
              {"nonlinear_widths", s.nonlinear_widths},
              {"lambda_alpha", s.lambda_alpha},
              {"exponent_n", s.exponent_n},
              {"linear_weight_w", s.linear_weight_w},
              {"shared_low_fidelity", s.shared_low_fidelity},
              {"n_collocation", s.n_collocation},
              {"n_ic", s.n_ic},
              {"n_bc", s.n_bc},
              {"lambda_res", s.lambda_res},
              {"wave_speed", s.wave_speed}};
}

ExperimentSpec spec_from_json(const Json& j, const ExperimentSpec& base) {
  if (!j.is_object()) schema_error("config must be an object");
  ExperimentSpec s = base;
  auto opt = [&j](const char* key, auto& dst) {
    if (j.contains(key)) dst = get<std::decay_t<decltype(dst)>>(j, key);
  };
  auto opt_real = [&j](const char* key, double& dst) {
    if (j.contains(key)) dst = get_double(j, key);
  };
  opt("id", s.id);
  if (j.contains("models")) {
    s.models.clear();
    for (const auto& name : get<std::vector<std::string>>(j, "models")) {
      try {
        s.models.push_back(parse_model_kind(name));
      } catch (const Error& e) {
        schema_error(e.what());
      }
    }
  }
  if (j.contains("domain")) s.domain = box_from_json(j.at("domain"));
  opt("ensemble_size", s.ensemble_size);
  opt("subdomains", s.subdomains);
  opt_real("overlap", s.overlap);
  opt("kan_widths", s.kan_widths);
  opt("fbkan_widths", s.fbkan_widths);
  opt("intervals", s.intervals);
  opt("degree", s.degree);
  opt("n_train", s.n_train);
  opt("n_cal", s.n_cal);
  opt("n_test", s.n_test);
  opt_real("alpha", s.alpha);
  opt_real("learning_rate", s.train.learning_rate);
  opt("epochs", s.train.epochs);
  opt("train_seed", s.train.seed);
  opt("full_batch", s.train.full_batch);
  opt("data_seed", s.data_seed);
  opt("model_seed", s.model_seed);
  opt("threads", s.threads);
  opt("n_lf", s.n_lf);
  opt("lf_widths", s.lf_widths);
  opt("nonlinear_widths", s.nonlinear_widths);
  opt_real("lambda_alpha", s.lambda_alpha);
  opt("exponent_n", s.exponent_n);
  opt_real("linear_weight_w", s.linear_weight_w);
  opt("shared_low_fidelity", s.shared_low_fidelity);
  opt("n_collocation", s.n_collocation);
  opt("n_ic", s.n_ic);
  opt("n_bc", s.n_bc);
  opt_real("lambda_res", s.lambda_res);
  opt_real("wave_speed", s.wave_speed);
  return s;
}

ExperimentSpec spec_from_json(const Json& j) {
  const auto id = get<std::string>(j, "id");
  return spec_from_json(j, default_spec(id));
}

Json to_json(const ConformalCalibration& cal) {
  // Ten equal-width bins over the finite score range.
  Json hist{{"edges", Json::array()}, {"counts", Json::array()}};
  if (!cal.sorted_scores.empty()) {
    const double lo = cal.sorted_scores.front();
    const double hi = cal.sorted_scores.back();
    constexpr int bins = 10;
    std::vector<std::size_t> counts(bins, 0);
    const double width = (hi - lo) / bins;
    for (double s : cal.sorted_scores) {
      int b = width > 0.0 ? static_cast<int>((s - lo) / width) : 0;
      counts[static_cast<std::size_t>(std::clamp(b, 0, bins - 1))]++;
    }
    for (int b = 0; b <= bins; ++b) hist["edges"].push_back(b == bins ? hi : lo + width * b);
    hist["counts"] = counts;
  }
  return Json{{"alpha", cal.miscoverage_alpha},
              {"n_cal", cal.n_cal},
              {"q_hat", encode_real(cal.q_hat)},
              {"warnings", cal.warnings},
              {"sorted_scores", cal.sorted_scores},
              {"score_histogram", hist}};
}

ConformalCalibration calibration_from_json(const Json& j) {
  ConformalCalibration cal;
  cal.miscoverage_alpha = get_double(j, "alpha");
  cal.n_cal = get<std::size_t>(j, "n_cal");
  cal.q_hat = decode_real(field(j, "q_hat"), "q_hat");
  if (j.contains("warnings")) cal.warnings = get<std::vector<std::string>>(j, "warnings");
  if (j.contains("sorted_scores")) cal.sorted_scores = get_doubles(j, "sorted_scores");
  if (!(cal.miscoverage_alpha > 0.0 && cal.miscoverage_alpha < 1.0)) schema_error("calibration alpha out of range");
  if (!(cal.q_hat >= 0.0)) schema_error("calibration q_hat must be >= 0");
  return cal;
}

Json read_json(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::Io, "cannot open '" + path.string() + "'");
  try {
    return Json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw Error(ErrorCode::Schema, "'" + path.string() + "' is not valid JSON: " + e.what());
  }
}

void write_json(const fs::path& path, const Json& j) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorCode::Io, "cannot write '" + path.string() + "'");
  out << j.dump(1) << '\n';
  if (!out) throw Error(ErrorCode::Io, "write failed for '" + path.string() + "'");
}

void save_model(const fs::path& path, const AnyModel& model) { write_json(path, to_json(model)); }

AnyModel load_model(const fs::path& path) { return model_from_json(read_json(path)); }

Json to_json(const EnsembleManifest& m) {
  Json members = Json::array();
  for (const auto& e : m.members) members.push_back(Json{{"file", e.file}, {"seed", e.seed}});
  return Json{{"format", kManifestFormat},
              {"version", kCheckpointVersion},
              {"experiment", m.experiment},
              {"model", m.model},
              {"M", m.members.size()},
              {"base_seed", m.base_seed},
              {"members", members}};
}

EnsembleManifest manifest_from_json(const Json& j) {
  check_header(j, kManifestFormat);
  EnsembleManifest m;
  m.experiment = get<std::string>(j, "experiment");
  m.model = get<std::string>(j, "model");
  m.base_seed = get<std::uint64_t>(j, "base_seed");
  const Json& members = field(j, "members");
  if (!members.is_array()) schema_error("manifest members must be an array");
  for (const auto& e : members) m.members.push_back({get<std::string>(e, "file"), get<std::uint64_t>(e, "seed")});
  if (get<std::size_t>(j, "M") != m.members.size()) schema_error("manifest M does not match its member list");
  return m;
}

fs::path save_ensemble(const fs::path& dir, const std::string& experiment, const std::string& model,
                       const std::vector<AnyModel>& members, const std::vector<std::uint64_t>& seeds) {
  require(members.size() == seeds.size(), ErrorCode::LengthMismatch, "save_ensemble: seeds per member");
  for (const auto& m : members) {
    require(m.index() == members.front().index(), ErrorCode::InvalidArgument,
            "save_ensemble: members differ in model kind");
  }
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw Error(ErrorCode::Io, "cannot create '" + dir.string() + "': " + ec.message());
  EnsembleManifest m;
  m.experiment = experiment;
  m.model = model;
  m.base_seed = seeds.empty() ? 0 : seeds.front();
  for (std::size_t j = 0; j < members.size(); ++j) {
    const std::string file = model + "_member_" + std::to_string(j) + ".json";
    save_model(dir / file, members[j]);
    m.members.push_back({file, seeds[j]});
  }
  const fs::path path = dir / (model + "_manifest.json");
  write_json(path, to_json(m));
  return path;
}

std::vector<AnyModel> load_ensemble(const fs::path& manifest_path, EnsembleManifest* manifest) {
  const EnsembleManifest m = manifest_from_json(read_json(manifest_path));
  if (m.members.empty()) schema_error("manifest lists no members");
  std::vector<AnyModel> out;
  for (const auto& e : m.members) {
    out.push_back(load_model(manifest_path.parent_path() / e.file));
    if (out.back().index() != out.front().index()) schema_error("ensemble members differ in model kind");
  }
  if (manifest != nullptr) *manifest = m;
  return out;
}

std::vector<EnsembleStats> ensemble_stats(const std::vector<AnyModel>& members, const Dataset& data) {
  require(!members.empty(), ErrorCode::InvalidArgument, "ensemble_stats: no members");
  std::vector<EnsembleStats> out(data.size());
  std::vector<double> y(members.size());
  for (std::size_t i = 0; i < data.size(); ++i) {
    for (std::size_t j = 0; j < members.size(); ++j) {
      y[j] = std::visit([&](const auto& m) { return predict(m, data.input(i)); }, members[j]);
    }
    out[i] = ensemble_stats(y);
  }
  return out;
}

namespace {

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::ofstream open_csv(const fs::path& path) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorCode::Io, "cannot write '" + path.string() + "'");
  return out;
}

void finish_csv(std::ofstream& out, const fs::path& path) {
  out.flush();
  if (!out) throw Error(ErrorCode::Io, "write failed for '" + path.string() + "'");
}

void write_row(std::ostream& out, const ResultRow& r) {
  out << r.model << ',' << r.intervals_kind << ',' << num(r.coverage) << ',' << num(r.avg_piw) << ','
      << num(r.std_piw) << ',' << num(r.alpha) << ',' << r.n_cal << ',' << r.M << ',' << r.L << ',' << r.seed;
}

constexpr const char* kResultsHeader = "model,intervals_kind,coverage,avg_piw,std_piw,alpha,n_cal,M,L,seed";

}  // namespace

void write_results_csv(const fs::path& path, const std::vector<ResultRow>& rows) {
  auto out = open_csv(path);
  out << kResultsHeader << '\n';
  for (const auto& r : rows) {
    write_row(out, r);
    out << '\n';
  }
  finish_csv(out, path);
}

void write_points_csv(const fs::path& path, const PointDump& d) {
  auto out = open_csv(path);
  for (std::size_t k = 0; k < d.dim; ++k) out << (d.dim == 1 ? std::string("x") : "x" + std::to_string(k)) << ',';
  out << "y_true,mean,std,lower,upper,covered\n";
  for (std::size_t i = 0; i < d.y_true.size(); ++i) {
    for (std::size_t k = 0; k < d.dim; ++k) out << num(d.inputs[i * d.dim + k]) << ',';
    out << num(d.y_true[i]) << ',' << num(d.mean[i]) << ',' << num(d.std[i]) << ',' << num(d.lower[i]) << ','
        << num(d.upper[i]) << ',' << (d.covered[i] ? 1 : 0) << '\n';
  }
  finish_csv(out, path);
}

void write_history_csv(const fs::path& path, const LossHistory& h) {
  auto out = open_csv(path);
  out << "epoch,total";
  for (const auto& n : h.component_names) out << ',' << n;
  out << '\n';
  for (std::size_t e = 0; e < h.totals.size(); ++e) {
    out << e << ',' << num(h.totals[e]);
    for (double c : h.components[e]) out << ',' << num(c);
    out << '\n';
  }
  finish_csv(out, path);
}

void write_sweep_csv(const fs::path& path, const SweepResult& sweep) {
  auto out = open_csv(path);
  out << "axis,value,repeat," << kResultsHeader << ",infinite_width\n";
  for (const auto& p : sweep.points) {
    for (const auto& r : p.record.rows) {
      out << axis_name(sweep.axis) << ',' << num(p.value) << ',' << p.repeat << ',';
      write_row(out, r);
      out << ',' << (r.infinite_width ? 1 : 0) << '\n';
    }
  }
  finish_csv(out, path);
}

void write_dataset_csv(const fs::path& path, const Dataset& data) {
  auto out = open_csv(path);
  for (std::size_t k = 0; k < data.dim; ++k) out << 'x' << k << ',';
  out << "y\n";
  for (std::size_t i = 0; i < data.size(); ++i) {
    for (double v : data.input(i)) out << num(v) << ',';
    out << num(data.targets[i]) << '\n';
  }
  finish_csv(out, path);
}

Dataset read_dataset_csv(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::Io, "cannot open '" + path.string() + "'");
  std::string line;
  if (!std::getline(in, line)) throw Error(ErrorCode::Schema, "'" + path.string() + "' is empty");
  const std::size_t cols = static_cast<std::size_t>(std::count(line.begin(), line.end(), ',')) + 1;
  if (cols < 2) throw Error(ErrorCode::Schema, "'" + path.string() + "' needs input and target columns");
  Dataset data(cols - 1);
  std::vector<double> row(cols);
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string cell;
    std::size_t c = 0;
    while (std::getline(ss, cell, ',')) {
      if (c >= cols) throw Error(ErrorCode::Schema, "'" + path.string() + "': too many columns");
      try {
        std::size_t used = 0;
        row[c] = std::stod(cell, &used);
        if (used != cell.size()) throw std::invalid_argument(cell);
      } catch (const std::exception&) {
        throw Error(ErrorCode::Schema, "'" + path.string() + "': bad number '" + cell + "'");
      }
      ++c;
    }
    if (c != cols) throw Error(ErrorCode::Schema, "'" + path.string() + "': too few columns");
    data.add(std::span<const double>(row).first(cols - 1), row.back());
  }
  return data;
}

}  // namespace ckan
