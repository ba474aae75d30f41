#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <limits>
#include <random>
#include <vector>

#include "ckan/checkpoint.hpp"
#include "helpers.hpp"

using namespace ckan;
namespace fs = std::filesystem;

namespace {

fs::path scratch_dir(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("ckan_test_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

template <class Model>
Model perturbed(Model m, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  auto p = flatten_params(m);
  for (auto& v : p) v += testing::uniform(rng, 1, -0.5, 0.5)[0] * 1.0 / 3.0;
  unflatten_params(m, p);
  return m;
}

std::vector<AnyModel> sample_models() {
  const KanModel kan = perturbed(init_kan_model(Box({-1.0, 0.5}, {2.0, 3.0}), {2, 3, 1}, 6, 3, 1), 11);
  const FbkanModel fb = perturbed(init_fbkan(uniform_decomposition(Box::cube(2, 0.0, 1.0), {2, 3}, 0.25),
                                             {2, 3, 1}, 5, 2, 2),
                                  12);
  MfkanModel mf = init_mfkan(Box({0.0}, {1.0}), init_network({1, 4, 1}, 5, 3, 3), {2, 3, 1}, 4, 3, 4);
  mf = perturbed(mf, 13);
  mf.mixing_alpha = 0.1 + 1.0 / 3.0;
  return {kan, fb, mf};
}

}  // namespace

TEST_CASE("checkpoint: model round trip is bit exact") {
  const fs::path dir = scratch_dir("models");
  std::mt19937_64 rng(20);
  int k = 0;
  for (const AnyModel& m : sample_models()) {
    const fs::path path = dir / ("m" + std::to_string(k++) + ".json");
    save_model(path, m);
    const AnyModel back = load_model(path);
    REQUIRE(back.index() == m.index());
    CHECK(back == m);
    const std::size_t dims = std::visit([](const auto& x) {
      using T = std::decay_t<decltype(x)>;
      if constexpr (std::is_same_v<T, FbkanModel>) return x.decomposition.domain.dims();
      else return x.domain.dims();
    }, m);
    for (int i = 0; i < 100; ++i) {
      const auto x = testing::uniform(rng, dims, 0.0, 1.0);
      const double a = std::visit([&](const auto& mm) { return predict(mm, x); }, m);
      const double b = std::visit([&](const auto& mm) { return predict(mm, x); }, back);
      CHECK(a == b);
    }
  }
  fs::remove_all(dir);
}

TEST_CASE("checkpoint: malformed files") {
  const fs::path dir = scratch_dir("bad");
  auto code_of = [](const fs::path& p) {
    try {
      load_model(p);
    } catch (const Error& e) {
      return e.code();
    }
    return ErrorCode::Internal;
  };
  CHECK(code_of(dir / "missing.json") == ErrorCode::Io);

  std::ofstream(dir / "garbage.json") << "{ not json";
  CHECK(code_of(dir / "garbage.json") == ErrorCode::Schema);

  const AnyModel m = sample_models()[0];
  Json j = to_json(m);
  Json wrong_version = j;
  wrong_version["version"] = kCheckpointVersion + 1;
  write_json(dir / "version.json", wrong_version);
  CHECK(code_of(dir / "version.json") == ErrorCode::Schema);

  Json wrong_kind = j;
  wrong_kind["kind"] = "tree";
  write_json(dir / "kind.json", wrong_kind);
  CHECK(code_of(dir / "kind.json") == ErrorCode::Schema);

  Json truncated = j;
  truncated["network"]["layers"][0]["edges"][0]["coeffs"].erase(0);
  write_json(dir / "truncated.json", truncated);
  CHECK(code_of(dir / "truncated.json") == ErrorCode::Schema);

  Json missing = j;
  missing.erase("domain");
  write_json(dir / "missing_field.json", missing);
  CHECK(code_of(dir / "missing_field.json") == ErrorCode::Schema);
  fs::remove_all(dir);
}

TEST_CASE("checkpoint: calibration and spec records") {
  ConformalCalibration cal;
  cal.miscoverage_alpha = 0.05;
  cal.n_cal = 3;
  cal.sorted_scores = {0.1, 1.0 / 3.0, 7.25};
  cal.q_hat = std::numeric_limits<double>::infinity();
  cal.warnings = {"calibration set too small"};
  const ConformalCalibration back = calibration_from_json(Json::parse(to_json(cal).dump()));
  CHECK(back.q_hat == cal.q_hat);
  CHECK(back.sorted_scores == cal.sorted_scores);
  CHECK(back.warnings == cal.warnings);
  CHECK(back.n_cal == 3);

  for (const char* id : {"exp1", "exp2", "exp3", "exp4"}) {
    ExperimentSpec s = default_spec(id);
    s.model_seed = 123456789012345ull;
    s.alpha = 0.1;
    s.train.learning_rate = 1.0 / 3.0;
    const ExperimentSpec r = spec_from_json(Json::parse(to_json(s).dump()));
    CHECK(r.id == s.id);
    CHECK(r.models == s.models);
    CHECK(r.domain == s.domain);
    CHECK(r.subdomains == s.subdomains);
    CHECK(r.kan_widths == s.kan_widths);
    CHECK(r.fbkan_widths == s.fbkan_widths);
    CHECK(r.train == s.train);
    CHECK(r.model_seed == s.model_seed);
    CHECK(r.alpha == s.alpha);
    CHECK(r.n_cal == s.n_cal);
    CHECK(r.lambda_alpha == s.lambda_alpha);
    CHECK(r.n_bc == s.n_bc);
  }
  // Partial configs override only the listed fields.
  const ExperimentSpec partial = spec_from_json(Json::parse(R"({"id": "exp1", "alpha": 0.2})"), default_spec("exp1"));
  CHECK(partial.alpha == 0.2);
  CHECK(partial.n_train == default_spec("exp1").n_train);
}

TEST_CASE("checkpoint: ensemble manifest") {
  const fs::path dir = scratch_dir("ensemble");
  const auto models = sample_models();
  const std::vector<AnyModel> members{models[0], perturbed(std::get<KanModel>(models[0]), 99)};
  const fs::path manifest_path = save_ensemble(dir, "exp2", "kan", members, {5, 6});
  CHECK(manifest_path.filename() == "kan_manifest.json");
  EnsembleManifest mf;
  const auto loaded = load_ensemble(manifest_path, &mf);
  CHECK(mf.experiment == "exp2");
  CHECK(mf.model == "kan");
  REQUIRE(mf.members.size() == 2);
  CHECK(mf.members[1].seed == 6);
  CHECK(loaded == members);

  Dataset d(2);
  d.add(std::vector<double>{0.2, 0.7}, 0.0);
  d.add(std::vector<double>{1.5, 2.5}, 0.0);
  const auto st = ensemble_stats(loaded, d);
  for (std::size_t i = 0; i < d.size(); ++i) {
    const std::vector<double> out{predict(std::get<KanModel>(members[0]), d.input(i)),
                                  predict(std::get<KanModel>(members[1]), d.input(i))};
    CHECK(st[i].mean == ensemble_stats(out).mean);
    CHECK(st[i].std == ensemble_stats(out).std);
  }

  const std::vector<AnyModel> mixed{models[0], models[1]};
  CHECK_THROWS_AS(save_ensemble(dir / "mixed", "exp2", "kan", mixed, {1, 2}), Error);
  fs::remove(dir / "kan_member_1.json");
  CHECK_THROWS_AS(load_ensemble(manifest_path), Error);
  fs::remove_all(dir);
}

TEST_CASE("checkpoint: dataset CSV round trip") {
  const fs::path dir = scratch_dir("csv");
  std::mt19937_64 rng(30);
  Dataset d(2);
  for (int i = 0; i < 50; ++i) d.add(testing::uniform(rng, 2, -1e3, 1e-3), testing::uniform(rng, 1, -1, 1)[0] / 3.0);
  write_dataset_csv(dir / "d.csv", d);
  CHECK(read_dataset_csv(dir / "d.csv") == d);
  std::ofstream(dir / "bad.csv") << "x0,y\n1.0\n";
  CHECK_THROWS_AS(read_dataset_csv(dir / "bad.csv"), Error);
  CHECK_THROWS_AS(read_dataset_csv(dir / "none.csv"), Error);
  fs::remove_all(dir);
}
