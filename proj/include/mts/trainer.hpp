#pragma once

// Alternating optimisation of the separation network (f1, y1, c) and the
// matching network (f2, y2, d, ds), coupled through the shared one-vs-rest
// heads c and the mutual-learning term.
//
// Per mini-batch:
//   1. ssn_step:  momentum-SGD on L_theta1 + beta * L_mutual over {f1, y1, c};
//                 the f2 branch of the mutual term is a constant.
//   2. dmn_step:  w_j recomputed, one triplet drawn, then
//                 (a) L_theta2a + beta * L_mutual over {y2, d, ds}
//                 (b) L_theta2b + beta * L_mutual over {f2, ds}
//                 with the f1 branch of the mutual term constant.

#include <array>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <random>
#include <vector>

#include "mts/data.hpp"
#include "mts/errors.hpp"
#include "mts/eval.hpp"
#include "mts/hyperparams.hpp"
#include "mts/losses.hpp"
#include "mts/nn.hpp"

namespace mts::trainer {

inline constexpr std::array kSsnGroups = {nn::GroupId::f1, nn::GroupId::y1, nn::GroupId::c};
inline constexpr std::array kDmnHeadGroups = {nn::GroupId::y2, nn::GroupId::d, nn::GroupId::ds};
inline constexpr std::array kDmnFeatureGroups = {nn::GroupId::f2, nn::GroupId::ds};
inline constexpr std::array kBaselineGroups = {nn::GroupId::f2, nn::GroupId::y2};

struct EpochRecord {
  std::size_t epoch = 0;
  double loss_theta1 = 0.0;
  double loss_theta2a = 0.0;
  double loss_theta2b = 0.0;
  double loss_mse = 0.0;
  double os = 0.0;
  double os_star = 0.0;
  double unk = 0.0;

  friend bool operator==(const EpochRecord&, const EpochRecord&) = default;
};

using TrainHistory = std::vector<EpochRecord>;

void write_history_csv(std::ostream& out, const TrainHistory& history);

/// Thrown when a step produces a non-finite objective; carries the epochs
/// completed before the failure.
class TrainingAborted : public NumericalAbort {
 public:
  TrainingAborted(const std::string& what, TrainHistory history)
      : NumericalAbort(what), history_(std::move(history)) {}
  const TrainHistory& history() const noexcept { return history_; }

 private:
  TrainHistory history_;
};

/// pi_1 uniform over the source batch, pi_2 = argmax w_j, pi_3 = argmin w_j
/// (lowest index on ties). Needs at least two target samples.
losses::Triplet select_triplet(const data::SourceBatch& source, const data::TargetBatch& target,
                               const losses::BatchWeights& weights, std::mt19937_64& rng);

/// Objective values at the pre-update parameters.
struct SsnStepResult {
  double loss_theta1 = 0.0;
  double loss_mutual = 0.0;
  double objective = 0.0;
};

struct DmnStepResult {
  double loss_theta2a = 0.0;  // before sub-step (a)
  double loss_theta2b = 0.0;  // before sub-step (b), after (a)
  double loss_mutual = 0.0;
  double objective_a = 0.0;
  double objective_b = 0.0;
  losses::Triplet triplet;
};

/// Derives an independent 64-bit seed for a named stream of one run.
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) noexcept;

class Trainer {
 public:
  /// `hp` is used with its variant applied (Hyperparams::effective).
  Trainer(nn::NetworkBundle& net, const Hyperparams& hp);

  SsnStepResult ssn_step(const data::MiniBatch& batch);
  DmnStepResult dmn_step(const data::MiniBatch& batch);
  /// One SGD step of the classification-only baseline over {f2, y2}.
  double baseline_step(const data::MiniBatch& batch);

  /// Selects the learning rate of the given epoch.
  void set_epoch(std::size_t epoch) { epoch_ = epoch; }
  const Hyperparams& hyperparams() const noexcept { return hp_; }
  nn::NetworkBundle& network() noexcept { return *net_; }
  /// Weights the DMN step will use on this target batch.
  losses::BatchWeights weights_for(const data::TargetBatch& target) const;

 private:
  nn::NetworkBundle* net_;
  Hyperparams hp_;
  std::size_t epoch_ = 0;
  std::mt19937_64 triplet_rng_;
};

struct TrainResult {
  nn::NetworkBundle network;
  TrainHistory history;
  eval::InferenceRule inference;
};

using EpochCallback = std::function<void(const EpochRecord&)>;

/// Full method (or an ablation, per hp.variant) for hp.epochs epochs. Each
/// epoch ends with an evaluation on `target`. Deterministic per hp.seed.
TrainResult train(const data::Dataset& source, const data::Dataset& target, const Hyperparams& hp,
                  const EpochCallback& on_epoch = {});

/// Classification-only baseline on the extended (K+1)-way head; unknown is
/// declared when the top known-class probability does not exceed
/// hp.unknown_threshold.
TrainResult train_source_only(const data::Dataset& source, const data::Dataset& target,
                              const Hyperparams& hp, const EpochCallback& on_epoch = {});

/// Dispatches on hp.variant.
TrainResult train_variant(const data::Dataset& source, const data::Dataset& target,
                          const Hyperparams& hp, const EpochCallback& on_epoch = {});

}  // namespace mts::trainer
