#pragma once

#include <cstddef>
#include <cstdint>
#include <string_view>

#include "mts/nn.hpp"

namespace mts {

/// How the unknown-class cross-entropy on the least similar target sample is
/// scaled: by w_j as written, or by 1 - w_j.
enum class UnknownWeightMode { literal_w, one_minus_w };

/// Training variants. `full` is the complete method; the no_* variants remove
/// one ingredient; source_only is the classification-only baseline.
enum class Variant { full, no_w, no_mutual, no_ds, no_mse, no_s, source_only };

/// Divergence used for the mutual-learning coupling between the two networks.
enum class MutualKind { mse, symmetric_kl };

std::string_view to_string(UnknownWeightMode m) noexcept;
std::string_view to_string(Variant v) noexcept;
UnknownWeightMode parse_unknown_weight_mode(std::string_view s);
Variant parse_variant(std::string_view s);

struct Hyperparams {
  double alpha = 0.8;  // weight on the domain-separation loss
  double beta = 0.5;   // weight on the mutual-learning loss
  double lr = 1e-4;
  double momentum = 0.9;
  double weight_decay = 5e-4;
  std::size_t batch_size = 32;
  std::size_t epochs = 300;
  std::size_t hidden_dim = 32;
  std::size_t feature_dim = 16;
  std::size_t disc_hidden = 16;
  std::uint64_t seed = 47;
  UnknownWeightMode unknown_weight_mode = UnknownWeightMode::one_minus_w;
  /// Multiply lr by 0.1 at 50% and 75% of the epoch budget.
  bool lr_decay = false;
  /// Source-only baseline: a sample is unknown unless its top known-class
  /// probability exceeds this.
  double unknown_threshold = 0.5;
  Variant variant = Variant::full;

  /// Throws ContractError naming the first invalid field.
  void validate() const;

  /// Copy with the variant's ablation applied (no_mutual: beta = 0, no_ds: alpha = 0).
  Hyperparams effective() const;
  bool use_similarity_weights() const noexcept { return variant != Variant::no_w; }
  MutualKind mutual_kind() const noexcept {
    return variant == Variant::no_mse ? MutualKind::symmetric_kl : MutualKind::mse;
  }

  nn::Architecture architecture(std::size_t input_dim, std::size_t classes) const;
  nn::SgdConfig sgd(std::size_t epoch) const;
};

}  // namespace mts
