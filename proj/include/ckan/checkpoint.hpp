#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <variant>
#include <vector>

#include <json.hpp>

#include "ckan/conformal.hpp"
#include "ckan/experiments.hpp"
#include "ckan/fbkan.hpp"
#include "ckan/kan_network.hpp"
#include "ckan/mfkan.hpp"

namespace ckan {

inline constexpr int kCheckpointVersion = 1;

using Json = nlohmann::json;
using AnyModel = std::variant<KanModel, FbkanModel, MfkanModel>;

// JSON encoding. Doubles are written in shortest round-trip form, so a
// save/load cycle reproduces every parameter bit for bit. Decoding validates
// the structure and throws Error(Schema) on any mismatch.
Json to_json(const KnotGrid& grid);
Json to_json(const KanNetwork& net);
Json to_json(const Box& box);
Json to_json(const Decomposition& decomp);
Json to_json(const AnyModel& model);
Json to_json(const ExperimentSpec& spec);
Json to_json(const ConformalCalibration& cal);

KnotGrid grid_from_json(const Json& j);
KanNetwork network_from_json(const Json& j);
Box box_from_json(const Json& j);
Decomposition decomposition_from_json(const Json& j);
AnyModel model_from_json(const Json& j);
/// Fields absent from `j` keep the values of `base`.
ExperimentSpec spec_from_json(const Json& j, const ExperimentSpec& base);
ExperimentSpec spec_from_json(const Json& j);
ConformalCalibration calibration_from_json(const Json& j);

Json read_json(const std::filesystem::path& path);
void write_json(const std::filesystem::path& path, const Json& j);

void save_model(const std::filesystem::path& path, const AnyModel& model);
AnyModel load_model(const std::filesystem::path& path);

struct ManifestEntry {
  std::string file;  // relative to the manifest directory
  std::uint64_t seed = 0;
};

struct EnsembleManifest {
  std::string experiment;
  std::string model;
  std::uint64_t base_seed = 0;
  std::vector<ManifestEntry> members;
};

Json to_json(const EnsembleManifest& m);
EnsembleManifest manifest_from_json(const Json& j);

/// Writes member checkpoints <model>_member_<j>.json and <model>_manifest.json
/// into `dir`; returns the manifest path.
std::filesystem::path save_ensemble(const std::filesystem::path& dir, const std::string& experiment,
                                    const std::string& model, const std::vector<AnyModel>& members,
                                    const std::vector<std::uint64_t>& seeds);

template <class Model>
std::filesystem::path save_ensemble(const std::filesystem::path& dir, const std::string& experiment,
                                    const std::string& model, const Ensemble<Model>& ens) {
  std::vector<AnyModel> members(ens.members.begin(), ens.members.end());
  return save_ensemble(dir, experiment, model, members, ens.member_seeds);
}

/// Loads the members listed in a manifest; all must share the model kind.
std::vector<AnyModel> load_ensemble(const std::filesystem::path& manifest_path, EnsembleManifest* manifest = nullptr);

/// Ensemble statistics of heterogeneous-typed members loaded from disk.
std::vector<EnsembleStats> ensemble_stats(const std::vector<AnyModel>& members, const Dataset& data);

// CSV output.
void write_results_csv(const std::filesystem::path& path, const std::vector<ResultRow>& rows);
void write_points_csv(const std::filesystem::path& path, const PointDump& dump);
void write_history_csv(const std::filesystem::path& path, const LossHistory& history);
void write_sweep_csv(const std::filesystem::path& path, const SweepResult& sweep);
void write_dataset_csv(const std::filesystem::path& path, const Dataset& data);
Dataset read_dataset_csv(const std::filesystem::path& path);

}  // namespace ckan
