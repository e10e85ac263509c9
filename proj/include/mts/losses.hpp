#pragma once

// Loss quantities of the two coupled networks, as differentiable scalars.
//
// Each loss comes in two layers:
//  * a formula-level overload taking head logits (graph nodes), used by the
//    hand-value tests and by the network-level overload;
//  * a network-level overload taking a BatchForward, which runs the required
//    extractor/head passes (cached per batch) and applies the formula.
//
// Cross-entropies are computed from logits with log-sum-exp / log-sigmoid.
// Labels are 1-based throughout the public API (K+1 is unknown).

#include <array>
#include <cstddef>
#include <map>
#include <span>
#include <tuple>
#include <vector>

#include "mts/autograd.hpp"
#include "mts/data.hpp"
#include "mts/hyperparams.hpp"
#include "mts/nn.hpp"

namespace mts::losses {

// ---------------------------------------------------------------- indicators

enum class IndicatorMode {
  standard,  // I(i, ds) = 1 iff i == ds
  revised,   // I(i, ds) = 1 iff (i != 3 and ds != 3) or (i == 3 and ds == 3)
};

/// 1-based i, ds in {1, 2, 3}.
double indicator(IndicatorMode mode, int i, int ds);
/// 3x3 target matrix: entry (i-1, ds-1) = I(i, ds).
Matrix indicator_matrix(IndicatorMode mode);

// ------------------------------------------------------- similarity weights

/// Per-target-sample one-vs-rest probabilities and their row maxima. Plain
/// values: never part of a graph.
struct BatchWeights {
  Matrix p;              // n_t x K
  std::vector<double> w; // w_j = max_c p(j, c)
};

/// w_j from G_c(G_f2(x_t)) evaluated on the current parameters.
BatchWeights similarity_weights(const nn::NetworkBundle& net, const Matrix& target_x);
/// Weights computed from a given probability matrix.
BatchWeights weights_from_probabilities(Matrix p);
/// Every w_j = 1 (ablation without similarity weighting).
BatchWeights unit_weights(std::size_t n, std::size_t classes);

/// Index of the first maximum / minimum.
std::size_t argmax_first(std::span<const double> v);
std::size_t argmin_first(std::span<const double> v);

/// Exemplars for the domain-separation heads, as batch row indices.
struct Triplet {
  std::size_t source_index = 0;  // pi_1: random source sample
  std::size_t known_index = 0;   // pi_2: target sample with the largest w_j
  std::size_t unknown_index = 0; // pi_3: target sample with the smallest w_j
  bool degenerate = false;       // pi_2 == pi_3
};

// ----------------------------------------------------- probability helpers

inline constexpr double kProbabilityClamp = 1e-12;

double clamp_probability(double p) noexcept;
/// Binary cross-entropy of a probability, clamped to [1e-12, 1 - 1e-12].
double bce(double p, double target) noexcept;
/// Logits reproducing the given (clamped) probabilities under sigmoid.
Matrix sigmoid_logits_from_probabilities(const Matrix& p);
/// Logits reproducing each (clamped, renormalised) probability row under softmax.
Matrix softmax_logits_from_probabilities(const Matrix& p);

// ------------------------------------------------------------- primitives

/// sum_i row_weight[i] * CE(softmax(logits_i), label_i); labels 1-based.
ag::Var weighted_cross_entropy(ag::Var logits, std::span<const int> labels,
                               std::span<const double> row_weights);
/// sum_ij weight_ij * BCE(sigmoid(logits_ij), target_ij).
ag::Var weighted_binary_cross_entropy(ag::Var logits, const Matrix& targets, const Matrix& weights);

// --------------------------------------------------- formula-level losses

/// Mean CE of the K-way source classifier.
ag::Var loss_c1(ag::Var y1_logits, std::span<const int> labels);
/// (1/K) sum_c mean_i BCE(head c, 1[y_i == c]).
ag::Var loss_s(ag::Var c_logits, std::span<const int> labels);
/// Mean extended-head CE on source labels plus u * CE(unknown) on the target
/// row with the smallest w_j, u = w_j or 1 - w_j.
ag::Var loss_c2(ag::Var y2_source_logits, std::span<const int> labels, ag::Var y2_target_logits,
                const BatchWeights& weights, UnknownWeightMode mode);
/// Mean BCE(D(x_s), 1) + sum_j w_j BCE(D(x_t), 0) / sum_j w_j.
ag::Var loss_d(ag::Var d_source_logits, ag::Var d_target_logits, const BatchWeights& weights);
/// (1/9) sum_ds sum_i BCE(T_ds(pi_i), I(i, ds)); rows of ds_logits are pi_1..pi_3.
ag::Var loss_ds(ag::Var ds_logits, IndicatorMode mode);
/// 1/2 (mean_s sum_c (a - b)^2 + mean_t sum_c (a - b)^2) on probabilities.
ag::Var loss_mse_mutual(ag::Var source_a, ag::Var source_b, ag::Var target_a, ag::Var target_b);
/// Same layout as the MSE coupling with the squared difference replaced by
/// the symmetric Bernoulli KL (p - q)(logit p - logit q), from logits.
ag::Var loss_symmetric_kl_mutual(ag::Var source_a, ag::Var source_b, ag::Var target_a,
                                 ag::Var target_b);

// ------------------------------------------------------ network-level form

/// Lazily built forward passes of one mini-batch inside one graph.
class BatchForward {
 public:
  BatchForward(ag::Graph& graph, nn::NetworkBundle& net, const data::SourceBatch& source,
               const data::TargetBatch& target);

  ag::Graph& graph() noexcept { return *graph_; }
  nn::NetworkBundle& net() noexcept { return *net_; }
  const data::SourceBatch& source() const noexcept { return *source_; }
  const data::TargetBatch& target() const noexcept { return *target_; }

  ag::Var features(nn::Extractor e, data::Domain d);
  ag::Var logits(nn::Extractor e, data::Domain d, nn::Head h);

 private:
  ag::Graph* graph_;
  nn::NetworkBundle* net_;
  const data::SourceBatch* source_;
  const data::TargetBatch* target_;
  std::map<std::tuple<int, int>, ag::Var> features_;
  std::map<std::tuple<int, int, int>, ag::Var> logits_;
};

/// Which branch of the mutual coupling is a constant teacher.
enum class Detach { none, ssn_branch, dmn_branch };

ag::Var loss_c1(BatchForward& fw);
ag::Var loss_s(BatchForward& fw);
ag::Var loss_theta1(BatchForward& fw);
ag::Var loss_c2(BatchForward& fw, const BatchWeights& weights, UnknownWeightMode mode);
ag::Var loss_d(BatchForward& fw, const BatchWeights& weights);
ag::Var loss_ds(BatchForward& fw, const Triplet& triplet, IndicatorMode mode);
/// loss_c2 + loss_d + alpha * loss_ds(standard)
ag::Var loss_theta2a(BatchForward& fw, const BatchWeights& weights, const Triplet& triplet,
                     double alpha, UnknownWeightMode mode);
/// loss_c2 - loss_d + alpha * loss_ds(revised)
ag::Var loss_theta2b(BatchForward& fw, const BatchWeights& weights, const Triplet& triplet,
                     double alpha, UnknownWeightMode mode);
/// Mutual coupling between G_c(G_f1(.)) and G_c(G_f2(.)) on both batches.
ag::Var loss_mse_mutual(BatchForward& fw, Detach detach);
ag::Var loss_symmetric_kl_mutual(BatchForward& fw, Detach detach);
ag::Var loss_mutual(BatchForward& fw, MutualKind kind, Detach detach);

}  // namespace mts::losses
