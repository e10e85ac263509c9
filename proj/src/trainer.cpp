#include "mts/trainer.hpp"

#include <charconv>
#include <cmath>
#include <ostream>
#include <string>

namespace mts::trainer {

namespace {

void write_double(std::ostream& out, double v) {
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  out.write(buf, res.ptr - buf);
}

void require_finite(double v, const char* what) {
  if (!std::isfinite(v)) throw NumericalAbort(std::string(what) + " is not finite");
}

// Stream ids for derive_seed.
constexpr std::uint64_t kInitStream = 1;
constexpr std::uint64_t kBatchStream = 2;
constexpr std::uint64_t kTripletStream = 3;

}  // namespace

void write_history_csv(std::ostream& out, const TrainHistory& history) {
  out << "epoch,loss_theta1,loss_theta2a,loss_theta2b,loss_mse,os,os_star,unk\n";
  for (const EpochRecord& r : history) {
    out << r.epoch;
    for (double v : {r.loss_theta1, r.loss_theta2a, r.loss_theta2b, r.loss_mse, r.os, r.os_star, r.unk}) {
      out << ',';
      write_double(out, v);
    }
    out << '\n';
  }
}

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) noexcept {
  // splitmix64 finaliser over the combined input.
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

losses::Triplet select_triplet(const data::SourceBatch& source, const data::TargetBatch& target,
                               const losses::BatchWeights& weights, std::mt19937_64& rng) {
  if (target.x.rows() < 2) throw ContractError("select_triplet: target batch needs >= 2 samples");
  if (source.x.rows() == 0) throw ContractError("select_triplet: empty source batch");
  if (weights.w.size() != target.x.rows()) {
    throw DimensionError("select_triplet: weight count differs from target batch");
  }
  std::uniform_int_distribution<std::size_t> pick(0, source.x.rows() - 1);
  losses::Triplet t;
  t.source_index = pick(rng);
  t.known_index = losses::argmax_first(weights.w);
  t.unknown_index = losses::argmin_first(weights.w);
  t.degenerate = t.known_index == t.unknown_index;
  return t;
}

Trainer::Trainer(nn::NetworkBundle& net, const Hyperparams& hp)
    : net_(&net), hp_(hp.effective()), triplet_rng_(derive_seed(hp.seed, kTripletStream)) {
  hp_.validate();
}

losses::BatchWeights Trainer::weights_for(const data::TargetBatch& target) const {
  if (!hp_.use_similarity_weights()) {
    return losses::unit_weights(target.x.rows(), net_->architecture().classes);
  }
  return losses::similarity_weights(*net_, target.x);
}

SsnStepResult Trainer::ssn_step(const data::MiniBatch& batch) {
  ag::Graph g;
  losses::BatchForward fw(g, *net_, batch.source, batch.target);
  const ag::Var theta1 = losses::loss_theta1(fw);
  const ag::Var mutual = losses::loss_mutual(fw, hp_.mutual_kind(), losses::Detach::dmn_branch);
  const ag::Var objective = hp_.beta > 0.0 ? g.add(theta1, g.scalar_mul(mutual, hp_.beta)) : theta1;

  SsnStepResult r{theta1.scalar(), mutual.scalar(), objective.scalar()};
  require_finite(r.objective, "SSN objective");

  const auto wrt = net_->tensors(kSsnGroups);
  g.backward(objective, wrt);
  nn::sgd_momentum_step(*net_, kSsnGroups, hp_.sgd(epoch_));
  return r;
}

DmnStepResult Trainer::dmn_step(const data::MiniBatch& batch) {
  const losses::BatchWeights weights = weights_for(batch.target);
  DmnStepResult r;
  r.triplet = select_triplet(batch.source, batch.target, weights, triplet_rng_);

  auto sub_step = [&](bool head_phase) {
    ag::Graph g;
    losses::BatchForward fw(g, *net_, batch.source, batch.target);
    const ag::Var loss =
        head_phase ? losses::loss_theta2a(fw, weights, r.triplet, hp_.alpha, hp_.unknown_weight_mode)
                   : losses::loss_theta2b(fw, weights, r.triplet, hp_.alpha, hp_.unknown_weight_mode);
    const ag::Var mutual = losses::loss_mutual(fw, hp_.mutual_kind(), losses::Detach::ssn_branch);
    const ag::Var objective = hp_.beta > 0.0 ? g.add(loss, g.scalar_mul(mutual, hp_.beta)) : loss;
    require_finite(objective.scalar(), head_phase ? "DMN objective (a)" : "DMN objective (b)");

    if (head_phase) {
      r.loss_theta2a = loss.scalar();
      r.objective_a = objective.scalar();
      r.loss_mutual = mutual.scalar();
    } else {
      r.loss_theta2b = loss.scalar();
      r.objective_b = objective.scalar();
    }
    const auto& groups = head_phase ? std::span<const nn::GroupId>(kDmnHeadGroups)
                                    : std::span<const nn::GroupId>(kDmnFeatureGroups);
    g.backward(objective, net_->tensors(groups));
    nn::sgd_momentum_step(*net_, groups, hp_.sgd(epoch_));
  };
  sub_step(true);
  sub_step(false);
  return r;
}

double Trainer::baseline_step(const data::MiniBatch& batch) {
  ag::Graph g;
  losses::BatchForward fw(g, *net_, batch.source, batch.target);
  const ag::Var loss = losses::loss_c1(fw.logits(nn::Extractor::f2, data::Domain::source, nn::Head::y2),
                                       batch.source.labels);
  require_finite(loss.scalar(), "baseline objective");
  g.backward(loss, net_->tensors(kBaselineGroups));
  nn::sgd_momentum_step(*net_, kBaselineGroups, hp_.sgd(epoch_));
  return loss.scalar();
}

namespace {

template <typename StepFn>
TrainResult run(const data::Dataset& source, const data::Dataset& target, const Hyperparams& hp,
                eval::InferenceRule inference, const EpochCallback& on_epoch, StepFn step) {
  hp.validate();
  if (source.classes != target.classes || source.dim() != target.dim()) {
    throw DataError("train: source and target disagree on K or feature dimension");
  }
  TrainResult result;
  result.inference = inference;
  result.network = nn::NetworkBundle::initialized(hp.architecture(source.dim(), source.classes),
                                                  derive_seed(hp.seed, kInitStream));
  if (hp.epochs == 0) return result;

  Trainer trainer(result.network, hp);
  data::MinibatchSampler sampler(source, target, hp.batch_size, derive_seed(hp.seed, kBatchStream));

  for (std::size_t epoch = 0; epoch < hp.epochs; ++epoch) {
    trainer.set_epoch(epoch);
    EpochRecord rec;
    rec.epoch = epoch + 1;
    const auto batches = sampler.epoch();
    try {
      for (const data::MiniBatch& mb : batches) step(trainer, mb, rec);
    } catch (const NumericalAbort& e) {
      throw TrainingAborted("epoch " + std::to_string(epoch + 1) + ": " + e.what(), result.history);
    }
    const double n = static_cast<double>(batches.size());
    rec.loss_theta1 /= n;
    rec.loss_theta2a /= n;
    rec.loss_theta2b /= n;
    rec.loss_mse /= n;
    const eval::EvalReport report = eval::evaluate(result.network, target, inference);
    rec.os = report.os;
    rec.os_star = report.os_star;
    rec.unk = report.unk;
    result.history.push_back(rec);
    if (on_epoch) on_epoch(rec);
  }
  return result;
}

}  // namespace

TrainResult train(const data::Dataset& source, const data::Dataset& target, const Hyperparams& hp,
                  const EpochCallback& on_epoch) {
  return run(source, target, hp, eval::InferenceRule{}, on_epoch,
             [](Trainer& t, const data::MiniBatch& mb, EpochRecord& rec) {
               const SsnStepResult s = t.ssn_step(mb);
               const DmnStepResult d = t.dmn_step(mb);
               rec.loss_theta1 += s.loss_theta1;
               rec.loss_mse += s.loss_mutual;
               rec.loss_theta2a += d.loss_theta2a;
               rec.loss_theta2b += d.loss_theta2b;
             });
}

TrainResult train_source_only(const data::Dataset& source, const data::Dataset& target,
                              const Hyperparams& hp, const EpochCallback& on_epoch) {
  eval::InferenceRule rule{eval::InferenceRule::Kind::max_prob_threshold, hp.unknown_threshold};
  return run(source, target, hp, rule, on_epoch,
             [](Trainer& t, const data::MiniBatch& mb, EpochRecord& rec) {
               rec.loss_theta1 += t.baseline_step(mb);
             });
}

TrainResult train_variant(const data::Dataset& source, const data::Dataset& target,
                          const Hyperparams& hp, const EpochCallback& on_epoch) {
  if (hp.variant == Variant::source_only) return train_source_only(source, target, hp, on_epoch);
  return train(source, target, hp, on_epoch);
}

}  // namespace mts::trainer
