#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <vector>

#include "ckan/dataset.hpp"
#include "ckan/error.hpp"
#include "ckan/fbkan.hpp"
#include "ckan/kan_network.hpp"
#include "ckan/mfkan.hpp"
#include "ckan/parallel.hpp"
#include "ckan/training.hpp"

namespace ckan {

/// Scalar prediction of a trained model at an experiment-space input.
double predict(const KanModel& model, std::span<const double> x);
double predict(const FbkanModel& model, std::span<const double> x);
double predict(const MfkanModel& model, std::span<const double> x);

template <class Model>
struct Ensemble {
  std::vector<Model> members;
  std::vector<std::uint64_t> member_seeds;
  std::vector<LossHistory> histories;

  std::size_t size() const noexcept { return members.size(); }
};

/// Trains M members; member j is built by factory(base_seed + j) and trained
/// on the same loss. Members are trained on up to `threads` workers and the
/// result is identical for any thread count. A diverging member raises
/// DivergedError carrying its index.
template <class Model>
Ensemble<Model> train_ensemble(const std::function<Model(std::uint64_t)>& factory, const LossSpec& spec,
                               const TrainConfig& config, std::size_t M, std::uint64_t base_seed,
                               std::size_t threads = 1) {
  require(M >= 2, ErrorCode::InvalidArgument, "train_ensemble: M must be >= 2");
  validate(config);
  Ensemble<Model> ens;
  ens.member_seeds.resize(M);
  for (std::size_t j = 0; j < M; ++j) ens.member_seeds[j] = base_seed + j;
  std::vector<std::optional<Model>> slots(M);
  ens.histories.resize(M);
  parallel_for_index(M, threads, [&](std::size_t j) {
    Model m = factory(ens.member_seeds[j]);
    try {
      ens.histories[j] = train(m, spec, config);
    } catch (const DivergedError& e) {
      throw DivergedError(e.epoch(), "ensemble member " + std::to_string(j) + ": " + e.what(),
                          static_cast<long>(j));
    }
    slots[j] = std::move(m);
  });
  ens.members.reserve(M);
  for (auto& s : slots) ens.members.push_back(std::move(*s));
  return ens;
}

struct EnsembleStats {
  double mean = 0.0;
  double std = 0.0;
};

struct PredictionInterval {
  double lower = 0.0;
  double upper = 0.0;
};

/// Mean and population (divisor M) standard deviation of member outputs.
EnsembleStats ensemble_stats(std::span<const double> member_outputs);

template <class Model>
EnsembleStats ensemble_stats(const Ensemble<Model>& ens, std::span<const double> x) {
  require(ens.size() >= 1, ErrorCode::InvalidArgument, "ensemble_stats: empty ensemble");
  std::vector<double> out(ens.size());
  for (std::size_t j = 0; j < ens.size(); ++j) out[j] = predict(ens.members[j], x);
  return ensemble_stats(out);
}

/// Stats at every input of a dataset.
template <class Model>
std::vector<EnsembleStats> ensemble_stats(const Ensemble<Model>& ens, const Dataset& data) {
  std::vector<EnsembleStats> out(data.size());
  for (std::size_t i = 0; i < data.size(); ++i) out[i] = ensemble_stats(ens, data.input(i));
  return out;
}

/// [mean - kappa * std, mean + kappa * std].
PredictionInterval sigma_interval(const EnsembleStats& stats, double kappa = 1.96);

}  // namespace ckan
