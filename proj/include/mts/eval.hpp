#pragma once

#include <cstddef>
#include <iosfwd>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "mts/data.hpp"
#include "mts/matrix.hpp"
#include "mts/nn.hpp"

namespace mts::eval {

/// How a trained bundle turns a sample into a label in 1..K+1.
struct InferenceRule {
  enum class Kind {
    extended_argmax,      // argmax over the K+1 outputs of C_y2(G_f2(x))
    max_prob_threshold,   // argmax over the K known outputs, unknown unless the top probability > threshold
    similarity_threshold, // argmax over known outputs, unknown unless w_j > threshold
  };
  Kind kind = Kind::extended_argmax;
  double threshold = 0.5;

  std::string to_string() const;
  /// Inverse of to_string(); throws ContractError.
  static InferenceRule parse(std::string_view text);
};

/// 1-based label of the first maximal entry.
int argmax_label(std::span<const double> probabilities);

/// Labels for every row of `x`.
std::vector<int> predict(const nn::NetworkBundle& net, const Matrix& x, const InferenceRule& rule = {});
int predict(const nn::NetworkBundle& net, std::span<const double> x, const InferenceRule& rule = {});

struct EvalReport {
  std::size_t classes = 0;           // K
  std::vector<double> per_class_acc; // alpha_k for k = 1..K+1
  double os = 0.0;
  double os_star = 0.0;
  double unk = 0.0;
  Matrix confusion;                  // (K+1) x (K+1) counts; row = truth, col = prediction
  std::size_t n_evaluated = 0;
};

/// Per-class recall and the OS / OS* / Unk aggregates. Every class 1..K+1
/// must occur in `truth` (DataError naming the missing class otherwise).
EvalReport metrics(std::span<const int> predictions, std::span<const int> truth, std::size_t classes);

/// Accuracy of G_d(G_f2(.)) > 0.5 as "source" on the given known-class samples.
double discriminator_confusion(const nn::NetworkBundle& net, const Matrix& source_known,
                               const Matrix& target_known);

/// Predict + metrics on a labeled target dataset.
EvalReport evaluate(const nn::NetworkBundle& net, const data::Dataset& target, const InferenceRule& rule);

/// `metric,value` rows.
void write_report_csv(std::ostream& out, const EvalReport& report);
/// Aligned text table.
void write_report_table(std::ostream& out, const EvalReport& report);

}  // namespace mts::eval
