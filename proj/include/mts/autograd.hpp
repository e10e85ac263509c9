#pragma once

// Minimal reverse-mode automatic differentiation over dense double matrices.
//
// A Graph is built fresh for every training step: each primitive appends a
// node holding its forward value, and backward() walks the nodes in reverse.
// Trainable state lives in Tensor objects owned outside the graph; the graph
// only references them. backward() writes gradients into exactly the tensors
// named in its `wrt` set and leaves every other tensor untouched.

#include <cstddef>
#include <deque>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "mts/matrix.hpp"

namespace mts::ag {

/// Trainable (or frozen) leaf value with an optional gradient buffer.
struct Tensor {
  Matrix value;
  bool requires_grad = true;
  std::optional<Matrix> grad;

  Tensor() = default;
  explicit Tensor(Matrix v, bool trainable = true) : value(std::move(v)), requires_grad(trainable) {}
};

class Graph;

/// Handle to a node of a Graph. Cheap to copy; valid while its Graph lives.
class Var {
 public:
  Var() = default;
  Var(Graph* graph, std::size_t id) : graph_(graph), id_(id) {}

  Graph& graph() const { return *graph_; }
  std::size_t id() const noexcept { return id_; }
  const Matrix& value() const;
  /// The single element of a 1x1 node.
  double scalar() const;

 private:
  Graph* graph_ = nullptr;
  std::size_t id_ = 0;
};

enum class Op {
  parameter,
  constant,
  matmul,
  add,
  add_row_broadcast,
  scalar_mul,
  relu,
  sigmoid,
  softmax_rows,
  log,
  mean_all,
  mean_rows,
  square,
  sub,
  mul,
  concat_rows,
  select_rows,
  log_sigmoid,
  log_softmax_rows,
  weighted_sum,
};

const char* op_name(Op op) noexcept;

class Graph {
 public:
  Graph() = default;
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  /// References `t`; gradients reach it only if it is listed in backward's wrt.
  Var parameter(Tensor& t);
  /// Copies `m` into a node that never receives gradient.
  Var constant(Matrix m);
  /// Constant copy of v's current value: cuts the gradient path.
  Var detach(Var v);

  Var matmul(Var a, Var b);
  Var add(Var a, Var b);
  /// a (n x m) + b (1 x m) broadcast over rows.
  Var add_row_broadcast(Var a, Var b);
  Var scalar_mul(Var a, double s);
  Var relu(Var a);
  Var sigmoid(Var a);
  Var softmax_rows(Var a);
  /// Elementwise natural log; throws DomainError on any entry <= 0.
  Var log(Var a);
  /// 1x1 mean of all entries.
  Var mean_all(Var a);
  /// n x 1 mean of each row.
  Var mean_rows(Var a);
  Var square(Var a);
  Var sub(Var a, Var b);
  /// Elementwise (Hadamard) product.
  Var mul(Var a, Var b);
  Var concat_rows(Var a, Var b);
  Var select_rows(Var a, std::vector<std::size_t> rows);
  /// log(sigmoid(a)) evaluated without overflow.
  Var log_sigmoid(Var a);
  /// Row-wise log(softmax(a)) via log-sum-exp.
  Var log_softmax_rows(Var a);
  /// 1x1 sum of weights .* a with constant weights of a's shape.
  Var weighted_sum(Var a, Matrix weights);

  /// Reverse sweep from a 1x1 root. For every tensor in `wrt`, sets grad to
  /// d(root)/d(tensor) (zeros if unreachable). Other tensors are not touched.
  void backward(Var root, std::span<Tensor* const> wrt);

  const Matrix& value(Var v) const { return nodes_.at(v.id()).value; }
  std::size_t size() const noexcept { return nodes_.size(); }
  Op op(Var v) const { return nodes_.at(v.id()).op; }

 private:
  static constexpr std::size_t kNone = static_cast<std::size_t>(-1);

  struct Node {
    explicit Node(Op o, std::size_t a = kNone, std::size_t b = kNone) : op(o), in0(a), in1(b) {}

    Op op;
    std::size_t in0 = kNone;
    std::size_t in1 = kNone;
    Matrix value;
    Tensor* tensor = nullptr;          // parameter leaves
    double scalar = 0.0;               // scalar_mul factor
    std::vector<std::size_t> indices;  // select_rows
    Matrix aux;                        // weighted_sum weights
  };
  Var push(Node node);
  const Node& node(Var v) const;
  void accumulate(std::vector<std::optional<Matrix>>& adj, std::size_t id, Matrix g) const;

  // deque: values handed out by Var::value() stay valid as the graph grows.
  std::deque<Node> nodes_;
};

/// Builds a scalar loss into the provided graph from the current tensor values.
using LossBuilder = std::function<Var(Graph&)>;

struct GradCheckResult {
  double max_relative_error = 0.0;
  std::size_t worst_tensor = 0;
  std::size_t worst_index = 0;
  double analytic = 0.0;
  double numeric = 0.0;
};

/// Central-difference check of backward() for every coordinate of `params`.
/// Error per coordinate is |analytic - numeric| / max(1, |analytic|).
/// Throws ContractError for epsilon outside (0, 1e-3] and DomainError, naming
/// the coordinate, when the loss is not finite at a perturbed point.
GradCheckResult grad_check(const LossBuilder& loss, std::span<Tensor* const> params,
                           double epsilon = 1e-5);

}  // namespace mts::ag
