#include "mts/losses.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "mts/errors.hpp"

namespace mts::losses {

using ag::Var;

double indicator(IndicatorMode mode, int i, int ds) {
  if (i < 1 || i > 3 || ds < 1 || ds > 3) throw ContractError("indicator: indices must lie in 1..3");
  if (mode == IndicatorMode::standard) return i == ds ? 1.0 : 0.0;
  return ((i != 3 && ds != 3) || (i == 3 && ds == 3)) ? 1.0 : 0.0;
}

Matrix indicator_matrix(IndicatorMode mode) {
  Matrix m(3, 3);
  for (int i = 1; i <= 3; ++i) {
    for (int ds = 1; ds <= 3; ++ds) m(i - 1, ds - 1) = indicator(mode, i, ds);
  }
  return m;
}

BatchWeights weights_from_probabilities(Matrix p) {
  BatchWeights bw;
  bw.w.reserve(p.rows());
  for (std::size_t i = 0; i < p.rows(); ++i) {
    const auto r = p.row(i);
    bw.w.push_back(*std::max_element(r.begin(), r.end()));
  }
  bw.p = std::move(p);
  return bw;
}

BatchWeights similarity_weights(const nn::NetworkBundle& net, const Matrix& target_x) {
  if (target_x.rows() == 0) throw DataError("similarity_weights: empty target batch");
  return weights_from_probabilities(
      net.head_forward(nn::Head::c, net.forward_features(nn::Extractor::f2, target_x)));
}

BatchWeights unit_weights(std::size_t n, std::size_t classes) {
  return {Matrix(n, classes, 1.0), std::vector<double>(n, 1.0)};
}

std::size_t argmax_first(std::span<const double> v) {
  if (v.empty()) throw ContractError("argmax of an empty sequence");
  return static_cast<std::size_t>(std::max_element(v.begin(), v.end()) - v.begin());
}

std::size_t argmin_first(std::span<const double> v) {
  if (v.empty()) throw ContractError("argmin of an empty sequence");
  return static_cast<std::size_t>(std::min_element(v.begin(), v.end()) - v.begin());
}

double clamp_probability(double p) noexcept {
  return std::clamp(p, kProbabilityClamp, 1.0 - kProbabilityClamp);
}

double bce(double p, double target) noexcept {
  const double q = clamp_probability(p);
  return -(target * std::log(q) + (1.0 - target) * std::log(1.0 - q));
}

Matrix sigmoid_logits_from_probabilities(const Matrix& p) {
  Matrix z(p.rows(), p.cols());
  for (std::size_t i = 0; i < p.size(); ++i) {
    const double q = clamp_probability(p.values()[i]);
    z.values()[i] = std::log(q) - std::log1p(-q);
  }
  return z;
}

Matrix softmax_logits_from_probabilities(const Matrix& p) {
  Matrix z(p.rows(), p.cols());
  for (std::size_t i = 0; i < p.size(); ++i) z.values()[i] = std::log(clamp_probability(p.values()[i]));
  return z;
}

Var weighted_cross_entropy(Var logits, std::span<const int> labels, std::span<const double> row_weights) {
  const Matrix& z = logits.value();
  if (labels.size() != z.rows() || row_weights.size() != z.rows()) {
    throw DimensionError("cross_entropy: " + std::to_string(labels.size()) + " labels for " +
                         z.shape_string() + " logits");
  }
  Matrix w(z.rows(), z.cols());
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] < 1 || static_cast<std::size_t>(labels[i]) > z.cols()) {
      throw ContractError("cross_entropy: label " + std::to_string(labels[i]) + " outside 1.." +
                          std::to_string(z.cols()));
    }
    w(i, static_cast<std::size_t>(labels[i] - 1)) = -row_weights[i];
  }
  ag::Graph& g = logits.graph();
  return g.weighted_sum(g.log_softmax_rows(logits), std::move(w));
}

Var weighted_binary_cross_entropy(Var logits, const Matrix& targets, const Matrix& weights) {
  require_same_shape(logits.value(), targets, "binary_cross_entropy targets");
  require_same_shape(logits.value(), weights, "binary_cross_entropy weights");
  Matrix pos(targets.rows(), targets.cols());
  Matrix neg(targets.rows(), targets.cols());
  for (std::size_t i = 0; i < targets.size(); ++i) {
    const double t = targets.values()[i];
    const double w = weights.values()[i];
    pos.values()[i] = -w * t;
    neg.values()[i] = -w * (1.0 - t);
  }
  ag::Graph& g = logits.graph();
  const Var log_p = g.log_sigmoid(logits);
  const Var log_not_p = g.log_sigmoid(g.scalar_mul(logits, -1.0));
  const Var on = g.weighted_sum(log_p, std::move(pos));
  const Var off = g.weighted_sum(log_not_p, std::move(neg));
  return g.add(on, off);
}

namespace {

void require_rows(Var v, const char* what) {
  if (v.value().rows() == 0) throw DataError(std::string(what) + ": empty batch");
}

}  // namespace

Var loss_c1(Var y1_logits, std::span<const int> labels) {
  require_rows(y1_logits, "loss_c1");
  const std::size_t n = y1_logits.value().rows();
  const std::vector<double> w(n, 1.0 / static_cast<double>(n));
  return weighted_cross_entropy(y1_logits, labels, w);
}

Var loss_s(Var c_logits, std::span<const int> labels) {
  require_rows(c_logits, "loss_s");
  const Matrix& z = c_logits.value();
  if (labels.size() != z.rows()) throw DimensionError("loss_s: label count differs from batch");
  const std::size_t n = z.rows();
  const std::size_t k = z.cols();
  Matrix targets(n, k);
  for (std::size_t i = 0; i < n; ++i) {
    if (labels[i] < 1 || static_cast<std::size_t>(labels[i]) > k) {
      throw ContractError("loss_s: label " + std::to_string(labels[i]) + " outside 1.." + std::to_string(k));
    }
    targets(i, static_cast<std::size_t>(labels[i] - 1)) = 1.0;
  }
  return weighted_binary_cross_entropy(c_logits, targets,
                                       Matrix(n, k, 1.0 / static_cast<double>(n * k)));
}

Var loss_c2(Var y2_source_logits, std::span<const int> labels, Var y2_target_logits,
            const BatchWeights& weights, UnknownWeightMode mode) {
  require_rows(y2_source_logits, "loss_c2 source");
  if (y2_target_logits.value().rows() == 0) throw DataError("loss_c2: empty target batch");
  if (weights.w.size() != y2_target_logits.value().rows()) {
    throw DimensionError("loss_c2: weight count differs from target batch");
  }
  const std::size_t width = y2_source_logits.value().cols();
  for (int y : labels) {
    if (y < 1 || static_cast<std::size_t>(y) >= width) {
      throw ContractError("loss_c2: source label " + std::to_string(y) + " is not a known class");
    }
  }
  ag::Graph& g = y2_source_logits.graph();
  const Var known = loss_c1(y2_source_logits, labels);

  const std::size_t j = argmin_first(weights.w);
  const double u = mode == UnknownWeightMode::literal_w ? weights.w[j] : 1.0 - weights.w[j];
  const int unknown_label = static_cast<int>(width);
  const Var row = g.select_rows(y2_target_logits, {j});
  const Var unknown = weighted_cross_entropy(row, std::span(&unknown_label, 1), std::span(&u, 1));
  return g.add(known, unknown);
}

Var loss_d(Var d_source_logits, Var d_target_logits, const BatchWeights& weights) {
  require_rows(d_source_logits, "loss_d source");
  require_rows(d_target_logits, "loss_d target");
  const std::size_t ns = d_source_logits.value().rows();
  const std::size_t nt = d_target_logits.value().rows();
  if (weights.w.size() != nt) throw DimensionError("loss_d: weight count differs from target batch");
  double total = 0.0;
  for (double w : weights.w) total += w;
  if (!(total > 0.0)) throw DomainError("loss_d: similarity weights sum to zero");

  Matrix tw(nt, 1);
  for (std::size_t j = 0; j < nt; ++j) tw(j, 0) = weights.w[j] / total;
  ag::Graph& g = d_source_logits.graph();
  const Var src = weighted_binary_cross_entropy(d_source_logits, Matrix(ns, 1, 1.0),
                                                Matrix(ns, 1, 1.0 / static_cast<double>(ns)));
  const Var tgt = weighted_binary_cross_entropy(d_target_logits, Matrix(nt, 1, 0.0), tw);
  return g.add(src, tgt);
}

Var loss_ds(Var ds_logits, IndicatorMode mode) {
  const Matrix& z = ds_logits.value();
  if (z.rows() != 3 || z.cols() != 3) throw DimensionError("loss_ds: expected 3x3 logits, got " + z.shape_string());
  return weighted_binary_cross_entropy(ds_logits, indicator_matrix(mode), Matrix(3, 3, 1.0 / 9.0));
}

namespace {

template <typename Divergence>
Var mutual(Var source_a, Var source_b, Var target_a, Var target_b, Divergence div) {
  require_same_shape(source_a.value(), source_b.value(), "mutual source");
  require_same_shape(target_a.value(), target_b.value(), "mutual target");
  require_rows(source_a, "mutual source");
  require_rows(target_a, "mutual target");
  ag::Graph& g = source_a.graph();
  // Node storage may move while the graph grows: size the weights first.
  const std::size_t sr = source_a.value().rows(), sc = source_a.value().cols();
  const std::size_t tr = target_a.value().rows(), tc = target_a.value().cols();
  Matrix sw(sr, sc, 0.5 / static_cast<double>(sr));
  Matrix tw(tr, tc, 0.5 / static_cast<double>(tr));
  const Var src = g.weighted_sum(div(source_a, source_b), std::move(sw));
  const Var tgt = g.weighted_sum(div(target_a, target_b), std::move(tw));
  return g.add(src, tgt);
}

}  // namespace

Var loss_mse_mutual(Var source_a, Var source_b, Var target_a, Var target_b) {
  return mutual(source_a, source_b, target_a, target_b, [](Var a, Var b) {
    ag::Graph& g = a.graph();
    return g.square(g.sub(a, b));
  });
}

Var loss_symmetric_kl_mutual(Var source_a, Var source_b, Var target_a, Var target_b) {
  return mutual(source_a, source_b, target_a, target_b, [](Var a, Var b) {
    ag::Graph& g = a.graph();
    const Var pa = g.sigmoid(a);
    const Var pb = g.sigmoid(b);
    const Var dp = g.sub(pa, pb);
    return g.mul(dp, g.sub(a, b));
  });
}

// ------------------------------------------------------------ BatchForward

BatchForward::BatchForward(ag::Graph& graph, nn::NetworkBundle& net, const data::SourceBatch& source,
                           const data::TargetBatch& target)
    : graph_(&graph), net_(&net), source_(&source), target_(&target) {
  if (source.x.rows() != source.labels.size()) {
    throw DimensionError("BatchForward: source labels do not match batch rows");
  }
}

Var BatchForward::features(nn::Extractor e, data::Domain d) {
  const auto key = std::tuple{static_cast<int>(e), static_cast<int>(d)};
  if (auto it = features_.find(key); it != features_.end()) return it->second;
  const Matrix& x = d == data::Domain::source ? source_->x : target_->x;
  const Var f = net_->features(*graph_, e, graph_->constant(x));
  features_.emplace(key, f);
  return f;
}

Var BatchForward::logits(nn::Extractor e, data::Domain d, nn::Head h) {
  const auto key = std::tuple{static_cast<int>(e), static_cast<int>(d), static_cast<int>(h)};
  if (auto it = logits_.find(key); it != logits_.end()) return it->second;
  const Var z = net_->logits(*graph_, h, features(e, d));
  logits_.emplace(key, z);
  return z;
}

using data::Domain;
using nn::Extractor;
using nn::Head;

Var loss_c1(BatchForward& fw) {
  return loss_c1(fw.logits(Extractor::f1, Domain::source, Head::y1), fw.source().labels);
}

Var loss_s(BatchForward& fw) {
  return loss_s(fw.logits(Extractor::f1, Domain::source, Head::c), fw.source().labels);
}

Var loss_theta1(BatchForward& fw) {
  const Var c1 = loss_c1(fw);
  return fw.graph().add(c1, loss_s(fw));
}

Var loss_c2(BatchForward& fw, const BatchWeights& weights, UnknownWeightMode mode) {
  const Var src = fw.logits(Extractor::f2, Domain::source, Head::y2);
  const Var tgt = fw.logits(Extractor::f2, Domain::target, Head::y2);
  return loss_c2(src, fw.source().labels, tgt, weights, mode);
}

Var loss_d(BatchForward& fw, const BatchWeights& weights) {
  const Var src = fw.logits(Extractor::f2, Domain::source, Head::d);
  const Var tgt = fw.logits(Extractor::f2, Domain::target, Head::d);
  return loss_d(src, tgt, weights);
}

Var loss_ds(BatchForward& fw, const Triplet& triplet, IndicatorMode mode) {
  ag::Graph& g = fw.graph();
  const Var src = fw.features(Extractor::f2, Domain::source);
  const Var tgt = fw.features(Extractor::f2, Domain::target);
  const Var pi1 = g.select_rows(src, {triplet.source_index});
  const Var pi23 = g.select_rows(tgt, {triplet.known_index, triplet.unknown_index});
  const Var pi = g.concat_rows(pi1, pi23);
  return loss_ds(fw.net().logits(g, Head::ds, pi), mode);
}

Var loss_theta2a(BatchForward& fw, const BatchWeights& weights, const Triplet& triplet, double alpha,
                 UnknownWeightMode mode) {
  ag::Graph& g = fw.graph();
  // Sequenced so that the node order, and with it every gradient sum, is fixed.
  const Var c2 = loss_c2(fw, weights, mode);
  const Var d = loss_d(fw, weights);
  const Var head = g.add(c2, d);
  return g.add(head, g.scalar_mul(loss_ds(fw, triplet, IndicatorMode::standard), alpha));
}

Var loss_theta2b(BatchForward& fw, const BatchWeights& weights, const Triplet& triplet, double alpha,
                 UnknownWeightMode mode) {
  ag::Graph& g = fw.graph();
  const Var c2 = loss_c2(fw, weights, mode);
  const Var d = loss_d(fw, weights);
  const Var head = g.sub(c2, d);
  return g.add(head, g.scalar_mul(loss_ds(fw, triplet, IndicatorMode::revised), alpha));
}

namespace {

struct MutualInputs {
  Var source_ssn, source_dmn, target_ssn, target_dmn;
};

MutualInputs mutual_inputs(BatchForward& fw, Detach detach, bool probabilities) {
  ag::Graph& g = fw.graph();
  auto branch = [&](Extractor e, Domain d) {
    Var z = fw.logits(e, d, Head::c);
    if (probabilities) z = g.sigmoid(z);
    const bool cut = (e == Extractor::f1 && detach == Detach::ssn_branch) ||
                     (e == Extractor::f2 && detach == Detach::dmn_branch);
    return cut ? g.detach(z) : z;
  };
  return {branch(Extractor::f1, Domain::source), branch(Extractor::f2, Domain::source),
          branch(Extractor::f1, Domain::target), branch(Extractor::f2, Domain::target)};
}

}  // namespace

Var loss_mse_mutual(BatchForward& fw, Detach detach) {
  const MutualInputs in = mutual_inputs(fw, detach, true);
  // The updated network's output comes first; (a-b)^2 == (b-a)^2 bitwise.
  if (detach == Detach::ssn_branch) {
    return loss_mse_mutual(in.source_dmn, in.source_ssn, in.target_dmn, in.target_ssn);
  }
  return loss_mse_mutual(in.source_ssn, in.source_dmn, in.target_ssn, in.target_dmn);
}

Var loss_symmetric_kl_mutual(BatchForward& fw, Detach detach) {
  const MutualInputs in = mutual_inputs(fw, detach, false);
  return loss_symmetric_kl_mutual(in.source_ssn, in.source_dmn, in.target_ssn, in.target_dmn);
}

Var loss_mutual(BatchForward& fw, MutualKind kind, Detach detach) {
  return kind == MutualKind::mse ? loss_mse_mutual(fw, detach) : loss_symmetric_kl_mutual(fw, detach);
}

}  // namespace mts::losses
