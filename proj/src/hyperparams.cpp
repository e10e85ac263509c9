#include "mts/hyperparams.hpp"

#include <string>

#include "mts/errors.hpp"

namespace mts {

std::string_view to_string(UnknownWeightMode m) noexcept {
  return m == UnknownWeightMode::literal_w ? "literal_w" : "one_minus_w";
}

std::string_view to_string(Variant v) noexcept {
  switch (v) {
    case Variant::full: return "full";
    case Variant::no_w: return "no_w";
    case Variant::no_mutual: return "no_mutual";
    case Variant::no_ds: return "no_ds";
    case Variant::no_mse: return "no_mse";
    case Variant::no_s: return "no_s";
    case Variant::source_only: return "source_only";
  }
  return "?";
}

UnknownWeightMode parse_unknown_weight_mode(std::string_view s) {
  if (s == "literal_w") return UnknownWeightMode::literal_w;
  if (s == "one_minus_w") return UnknownWeightMode::one_minus_w;
  throw ContractError("unknown_weight_mode must be literal_w or one_minus_w, got '" + std::string(s) + "'");
}

Variant parse_variant(std::string_view s) {
  for (Variant v : {Variant::full, Variant::no_w, Variant::no_mutual, Variant::no_ds, Variant::no_mse,
                    Variant::no_s, Variant::source_only}) {
    if (to_string(v) == s) return v;
  }
  throw ContractError("unknown variant '" + std::string(s) + "'");
}

void Hyperparams::validate() const {
  auto fail = [](const char* what) { throw ContractError(std::string("Hyperparams: ") + what); };
  if (!(alpha >= 0.0)) fail("alpha must be >= 0");
  if (!(beta >= 0.0)) fail("beta must be >= 0");
  if (!(lr >= 0.0)) fail("lr must be >= 0");
  if (!(momentum >= 0.0 && momentum < 1.0)) fail("momentum must lie in [0, 1)");
  if (!(weight_decay >= 0.0)) fail("weight_decay must be >= 0");
  if (batch_size < 2) fail("batch_size must be >= 2");
  if (hidden_dim == 0 || feature_dim == 0 || disc_hidden == 0) fail("layer widths must be positive");
  if (!(unknown_threshold >= 0.0 && unknown_threshold <= 1.0)) fail("unknown_threshold must lie in [0, 1]");
}

Hyperparams Hyperparams::effective() const {
  Hyperparams h = *this;
  if (variant == Variant::no_mutual) h.beta = 0.0;
  if (variant == Variant::no_ds) h.alpha = 0.0;
  return h;
}

nn::Architecture Hyperparams::architecture(std::size_t input_dim, std::size_t classes) const {
  nn::Architecture a;
  a.input_dim = input_dim;
  a.hidden_dim = hidden_dim;
  a.feature_dim = feature_dim;
  a.classes = classes;
  a.disc_hidden = disc_hidden;
  a.shared_extractor = variant == Variant::no_s;
  return a;
}

nn::SgdConfig Hyperparams::sgd(std::size_t epoch) const {
  double rate = lr;
  if (lr_decay) {
    if (2 * epoch >= epochs) rate *= 0.1;
    if (4 * epoch >= 3 * epochs) rate *= 0.1;
  }
  return {rate, momentum, weight_decay};
}

}  // namespace mts
