#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "mts/autograd.hpp"
#include "mts/matrix.hpp"

namespace mts::nn {

/// Trainable parameter groups. f1/y1/c form the separation network, f2/y2/d/ds
/// the matching network; c is shared by both.
enum class GroupId : int { f1, y1, c, f2, y2, d, ds };

inline constexpr std::array<GroupId, 7> kAllGroups = {GroupId::f1, GroupId::y1, GroupId::c,
                                                      GroupId::f2, GroupId::y2, GroupId::d,
                                                      GroupId::ds};

std::string_view to_string(GroupId id) noexcept;
GroupId parse_group(std::string_view name);

enum class Extractor { f1, f2 };

/// Output heads. y1: K-way softmax, y2: (K+1)-way softmax, c: K sigmoid
/// one-vs-rest heads, d: domain discriminator, ds: 3 domain-separation heads.
enum class Head { y1, y2, c, d, ds };

std::string_view to_string(Head head) noexcept;
/// Throws ContractError on an unknown head id.
Head parse_head(std::string_view name);

struct Layer {
  ag::Tensor weight;  // fan_in x fan_out
  ag::Tensor bias;    // 1 x fan_out
  Matrix weight_velocity;
  Matrix bias_velocity;

  Layer() = default;
  Layer(std::size_t fan_in, std::size_t fan_out);
};

struct ParamGroup {
  GroupId id = GroupId::f1;
  std::vector<Layer> layers;

  std::vector<ag::Tensor*> tensors();
  std::size_t parameter_count() const;
  /// Hash over every weight and bias value (velocities excluded).
  std::uint64_t hash() const;
};

struct Architecture {
  std::size_t input_dim = 2;
  std::size_t hidden_dim = 32;
  std::size_t feature_dim = 16;
  std::size_t classes = 3;  // K known classes
  std::size_t disc_hidden = 16;
  /// f1 and f2 are one physical group (ablation without separate extractors).
  bool shared_extractor = false;

  friend bool operator==(const Architecture&, const Architecture&) = default;
};

/// All seven parameter groups. Copies are deep snapshots.
class NetworkBundle {
 public:
  NetworkBundle() = default;
  /// Every weight and bias zero.
  explicit NetworkBundle(const Architecture& arch);
  /// Uniform fan-balanced weights in +-sqrt(6/(fan_in+fan_out)), zero biases.
  static NetworkBundle initialized(const Architecture& arch, std::uint64_t seed);

  const Architecture& architecture() const noexcept { return arch_; }

  /// f2 resolves to the f1 storage when the extractor is shared.
  ParamGroup& group(GroupId id);
  const ParamGroup& group(GroupId id) const;
  /// Groups with distinct storage, in GroupId order.
  std::vector<GroupId> distinct_groups() const;
  std::vector<ag::Tensor*> tensors(std::span<const GroupId> ids);

  struct SsnView {
    ParamGroup& f1;
    ParamGroup& y1;
    ParamGroup& c;
  };
  struct DmnView {
    ParamGroup& f2;
    ParamGroup& y2;
    ParamGroup& c;
    ParamGroup& d;
    ParamGroup& ds;
  };
  SsnView ssn();
  DmnView dmn();

  // Graph-building forward passes.
  ag::Var features(ag::Graph& g, Extractor e, ag::Var x);
  ag::Var logits(ag::Graph& g, Head h, ag::Var features);

  // Value-only forward passes.
  Matrix forward_features(Extractor e, const Matrix& batch) const;
  Matrix head_logits(Head h, const Matrix& features) const;
  /// Probabilities: row-softmax for y1/y2, elementwise sigmoid for c/d/ds.
  Matrix head_forward(Head h, const Matrix& features) const;

  std::size_t head_width(Head h) const;

 private:
  std::size_t slot(GroupId id) const;

  Architecture arch_;
  std::array<ParamGroup, 7> groups_;
};

// Value-level helpers shared with eval.
Matrix softmax_rows(const Matrix& logits);
Matrix sigmoid(const Matrix& logits);

struct SgdConfig {
  double lr = 1e-4;
  double momentum = 0.9;
  double weight_decay = 5e-4;
};

/// v <- momentum*v + grad + weight_decay*param; param <- param - lr*v, for the
/// listed groups only. Each listed tensor must carry a grad of its own shape;
/// grads are consumed (reset) by the step.
void sgd_momentum_step(NetworkBundle& net, std::span<const GroupId> groups, const SgdConfig& cfg);

/// Flat text checkpoint: header, architecture, then one record per tensor
/// (group, layer, name, shape, row-major values in round-trip precision).
void write_checkpoint(std::ostream& out, const NetworkBundle& net, std::string_view inference);
struct Checkpoint {
  NetworkBundle network;
  std::string inference;
};
Checkpoint read_checkpoint(std::istream& in);

}  // namespace mts::nn
