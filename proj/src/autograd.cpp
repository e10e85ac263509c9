#include "mts/autograd.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "mts/errors.hpp"
#include "mts/kernels.hpp"

namespace mts::ag {

namespace {

double stable_sigmoid(double z) {
  if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

double stable_log_sigmoid(double z) { return std::min(z, 0.0) - std::log1p(std::exp(-std::abs(z))); }

template <typename F>
Matrix map(const Matrix& a, F f) {
  Matrix out(a.rows(), a.cols());
  auto src = a.values();
  auto dst = out.values();
  for (std::size_t i = 0; i < src.size(); ++i) dst[i] = f(src[i]);
  return out;
}

template <typename F>
Matrix zip(const Matrix& a, const Matrix& b, F f) {
  Matrix out(a.rows(), a.cols());
  auto x = a.values();
  auto y = b.values();
  auto dst = out.values();
  for (std::size_t i = 0; i < x.size(); ++i) dst[i] = f(x[i], y[i]);
  return out;
}

void add_into(Matrix& dst, const Matrix& src) {
  auto d = dst.values();
  auto s = src.values();
  for (std::size_t i = 0; i < d.size(); ++i) d[i] += s[i];
}

}  // namespace

const char* op_name(Op op) noexcept {
  switch (op) {
    case Op::parameter: return "parameter";
    case Op::constant: return "constant";
    case Op::matmul: return "matmul";
    case Op::add: return "add";
    case Op::add_row_broadcast: return "add_row_broadcast";
    case Op::scalar_mul: return "scalar_mul";
    case Op::relu: return "relu";
    case Op::sigmoid: return "sigmoid";
    case Op::softmax_rows: return "softmax_rows";
    case Op::log: return "log";
    case Op::mean_all: return "mean_all";
    case Op::mean_rows: return "mean_rows";
    case Op::square: return "square";
    case Op::sub: return "sub";
    case Op::mul: return "mul";
    case Op::concat_rows: return "concat_rows";
    case Op::select_rows: return "select_rows";
    case Op::log_sigmoid: return "log_sigmoid";
    case Op::log_softmax_rows: return "log_softmax_rows";
    case Op::weighted_sum: return "weighted_sum";
  }
  return "?";
}

const Matrix& Var::value() const { return graph_->value(*this); }

double Var::scalar() const {
  const Matrix& v = value();
  if (v.rows() != 1 || v.cols() != 1) {
    throw ContractError("Var::scalar on a " + v.shape_string() + " node");
  }
  return v(0, 0);
}

Var Graph::push(Node node) {
  nodes_.push_back(std::move(node));
  return Var(this, nodes_.size() - 1);
}

const Graph::Node& Graph::node(Var v) const {
  if (&v.graph() != this || v.id() >= nodes_.size()) {
    throw ContractError("Var does not belong to this graph");
  }
  return nodes_[v.id()];
}

Var Graph::parameter(Tensor& t) {
  Node n{Op::parameter};
  n.value = t.value;
  n.tensor = &t;
  return push(std::move(n));
}

Var Graph::constant(Matrix m) {
  Node n{Op::constant};
  n.value = std::move(m);
  return push(std::move(n));
}

Var Graph::detach(Var v) { return constant(node(v).value); }

Var Graph::matmul(Var a, Var b) {
  Node n{Op::matmul, a.id(), b.id()};
  n.value = kernels::gemm(node(a).value, kernels::Transpose::no, node(b).value,
                          kernels::Transpose::no);
  return push(std::move(n));
}

Var Graph::add(Var a, Var b) {
  require_same_shape(node(a).value, node(b).value, "add");
  Node n{Op::add, a.id(), b.id()};
  n.value = zip(node(a).value, node(b).value, [](double x, double y) { return x + y; });
  return push(std::move(n));
}

Var Graph::add_row_broadcast(Var a, Var b) {
  Node n{Op::add_row_broadcast, a.id(), b.id()};
  n.value = kernels::add_row_broadcast(node(a).value, node(b).value);
  return push(std::move(n));
}

Var Graph::scalar_mul(Var a, double s) {
  Node n{Op::scalar_mul, a.id()};
  n.scalar = s;
  n.value = map(node(a).value, [s](double x) { return s * x; });
  return push(std::move(n));
}

Var Graph::relu(Var a) {
  Node n{Op::relu, a.id()};
  n.value = map(node(a).value, [](double x) { return x > 0.0 || std::isnan(x) ? x : 0.0; });
  return push(std::move(n));
}

Var Graph::sigmoid(Var a) {
  Node n{Op::sigmoid, a.id()};
  n.value = map(node(a).value, stable_sigmoid);
  return push(std::move(n));
}

Var Graph::softmax_rows(Var a) {
  const Matrix& x = node(a).value;
  Node n{Op::softmax_rows, a.id()};
  n.value = Matrix(x.rows(), x.cols());
  for (std::size_t i = 0; i < x.rows(); ++i) {
    const auto in = x.row(i);
    auto out = n.value.row(i);
    const double mx = *std::max_element(in.begin(), in.end());
    double total = 0.0;
    for (std::size_t j = 0; j < in.size(); ++j) total += (out[j] = std::exp(in[j] - mx));
    for (double& v : out) v /= total;
  }
  return push(std::move(n));
}

Var Graph::log(Var a) {
  const Matrix& x = node(a).value;
  for (double v : x.values()) {
    if (!(v > 0.0)) throw DomainError("log: non-positive input " + std::to_string(v));
  }
  Node n{Op::log, a.id()};
  n.value = map(x, [](double v) { return std::log(v); });
  return push(std::move(n));
}

Var Graph::mean_all(Var a) {
  const Matrix& x = node(a).value;
  if (x.empty()) throw DimensionError("mean_all: empty input");
  double total = 0.0;
  for (double v : x.values()) total += v;
  Node n{Op::mean_all, a.id()};
  n.value = Matrix(1, 1, total / static_cast<double>(x.size()));
  return push(std::move(n));
}

Var Graph::mean_rows(Var a) {
  const Matrix& x = node(a).value;
  if (x.cols() == 0) throw DimensionError("mean_rows: zero columns");
  Node n{Op::mean_rows, a.id()};
  n.value = Matrix(x.rows(), 1);
  for (std::size_t i = 0; i < x.rows(); ++i) {
    double total = 0.0;
    for (double v : x.row(i)) total += v;
    n.value(i, 0) = total / static_cast<double>(x.cols());
  }
  return push(std::move(n));
}

Var Graph::square(Var a) {
  Node n{Op::square, a.id()};
  n.value = map(node(a).value, [](double x) { return x * x; });
  return push(std::move(n));
}

Var Graph::sub(Var a, Var b) {
  require_same_shape(node(a).value, node(b).value, "sub");
  Node n{Op::sub, a.id(), b.id()};
  n.value = zip(node(a).value, node(b).value, [](double x, double y) { return x - y; });
  return push(std::move(n));
}

Var Graph::mul(Var a, Var b) {
  require_same_shape(node(a).value, node(b).value, "mul");
  Node n{Op::mul, a.id(), b.id()};
  n.value = zip(node(a).value, node(b).value, [](double x, double y) { return x * y; });
  return push(std::move(n));
}

Var Graph::concat_rows(Var a, Var b) {
  const Matrix& x = node(a).value;
  const Matrix& y = node(b).value;
  if (x.cols() != y.cols()) {
    throw DimensionError("concat_rows: " + x.shape_string() + " and " + y.shape_string());
  }
  Node n{Op::concat_rows, a.id(), b.id()};
  n.value = Matrix(x.rows() + y.rows(), x.cols());
  std::copy(x.values().begin(), x.values().end(), n.value.values().begin());
  std::copy(y.values().begin(), y.values().end(), n.value.values().begin() + static_cast<std::ptrdiff_t>(x.size()));
  return push(std::move(n));
}

Var Graph::select_rows(Var a, std::vector<std::size_t> rows) {
  Node n{Op::select_rows, a.id()};
  n.value = gather_rows(node(a).value, rows);
  n.indices = std::move(rows);
  return push(std::move(n));
}

Var Graph::log_sigmoid(Var a) {
  Node n{Op::log_sigmoid, a.id()};
  n.value = map(node(a).value, stable_log_sigmoid);
  return push(std::move(n));
}

Var Graph::log_softmax_rows(Var a) {
  const Matrix& x = node(a).value;
  if (x.cols() == 0) throw DimensionError("log_softmax_rows: zero columns");
  Node n{Op::log_softmax_rows, a.id()};
  n.value = Matrix(x.rows(), x.cols());
  for (std::size_t i = 0; i < x.rows(); ++i) {
    const auto in = x.row(i);
    const double mx = *std::max_element(in.begin(), in.end());
    double total = 0.0;
    for (double v : in) total += std::exp(v - mx);
    const double lse = mx + std::log(total);
    auto out = n.value.row(i);
    for (std::size_t j = 0; j < in.size(); ++j) out[j] = in[j] - lse;
  }
  return push(std::move(n));
}

Var Graph::weighted_sum(Var a, Matrix weights) {
  const Matrix& x = node(a).value;
  require_same_shape(x, weights, "weighted_sum");
  double total = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) total += weights.values()[i] * x.values()[i];
  Node n{Op::weighted_sum, a.id()};
  n.value = Matrix(1, 1, total);
  n.aux = std::move(weights);
  return push(std::move(n));
}

void Graph::accumulate(std::vector<std::optional<Matrix>>& adj, std::size_t id, Matrix g) const {
  if (adj[id]) {
    add_into(*adj[id], g);
  } else {
    adj[id] = std::move(g);
  }
}

void Graph::backward(Var root, std::span<Tensor* const> wrt) {
  const Node& r = node(root);
  if (r.value.rows() != 1 || r.value.cols() != 1) {
    throw ContractError("backward: root must be 1x1, got " + r.value.shape_string());
  }

  const std::size_t count = root.id() + 1;
  std::vector<char> reach(count, 0);
  for (std::size_t i = 0; i < count; ++i) {
    const Node& n = nodes_[i];
    if (n.op == Op::parameter) {
      reach[i] = std::find(wrt.begin(), wrt.end(), n.tensor) != wrt.end();
    } else if (n.op != Op::constant) {
      reach[i] = (n.in0 != kNone && reach[n.in0]) || (n.in1 != kNone && reach[n.in1]);
    }
  }

  std::vector<std::optional<Matrix>> adj(count);
  adj[root.id()] = Matrix(1, 1, 1.0);

  for (std::size_t idx = count; idx-- > 0;) {
    if (!reach[idx] || !adj[idx]) continue;
    const Node& n = nodes_[idx];
    const Matrix& g = *adj[idx];
    const bool want0 = n.in0 != kNone && reach[n.in0];
    const bool want1 = n.in1 != kNone && reach[n.in1];

    switch (n.op) {
      case Op::parameter:
      case Op::constant:
        break;
      case Op::matmul: {
        const Matrix& a = nodes_[n.in0].value;
        const Matrix& b = nodes_[n.in1].value;
        if (want0) accumulate(adj, n.in0, kernels::gemm(g, kernels::Transpose::no, b, kernels::Transpose::yes));
        if (want1) accumulate(adj, n.in1, kernels::gemm(a, kernels::Transpose::yes, g, kernels::Transpose::no));
        break;
      }
      case Op::add:
        if (want0) accumulate(adj, n.in0, g);
        if (want1) accumulate(adj, n.in1, g);
        break;
      case Op::add_row_broadcast:
        if (want0) accumulate(adj, n.in0, g);
        if (want1) accumulate(adj, n.in1, kernels::column_sums(g));
        break;
      case Op::scalar_mul: {
        const double s = n.scalar;
        accumulate(adj, n.in0, map(g, [s](double v) { return s * v; }));
        break;
      }
      case Op::relu:
        accumulate(adj, n.in0, zip(g, nodes_[n.in0].value,
                                   [](double gv, double x) { return x > 0.0 ? gv : 0.0; }));
        break;
      case Op::sigmoid:
        accumulate(adj, n.in0, zip(g, n.value, [](double gv, double y) { return gv * y * (1.0 - y); }));
        break;
      case Op::softmax_rows: {
        Matrix d(g.rows(), g.cols());
        for (std::size_t i = 0; i < g.rows(); ++i) {
          const auto y = n.value.row(i);
          const auto gi = g.row(i);
          double dot = 0.0;
          for (std::size_t j = 0; j < y.size(); ++j) dot += gi[j] * y[j];
          auto di = d.row(i);
          for (std::size_t j = 0; j < y.size(); ++j) di[j] = y[j] * (gi[j] - dot);
        }
        accumulate(adj, n.in0, std::move(d));
        break;
      }
      case Op::log:
        accumulate(adj, n.in0, zip(g, nodes_[n.in0].value, [](double gv, double x) { return gv / x; }));
        break;
      case Op::mean_all: {
        const Matrix& x = nodes_[n.in0].value;
        accumulate(adj, n.in0, Matrix(x.rows(), x.cols(), g(0, 0) / static_cast<double>(x.size())));
        break;
      }
      case Op::mean_rows: {
        const Matrix& x = nodes_[n.in0].value;
        Matrix d(x.rows(), x.cols());
        for (std::size_t i = 0; i < x.rows(); ++i) {
          const double v = g(i, 0) / static_cast<double>(x.cols());
          for (double& e : d.row(i)) e = v;
        }
        accumulate(adj, n.in0, std::move(d));
        break;
      }
      case Op::square:
        accumulate(adj, n.in0, zip(g, nodes_[n.in0].value, [](double gv, double x) { return 2.0 * x * gv; }));
        break;
      case Op::sub:
        if (want0) accumulate(adj, n.in0, g);
        if (want1) accumulate(adj, n.in1, map(g, [](double v) { return -v; }));
        break;
      case Op::mul:
        if (want0) accumulate(adj, n.in0, zip(g, nodes_[n.in1].value, [](double gv, double y) { return gv * y; }));
        if (want1) accumulate(adj, n.in1, zip(g, nodes_[n.in0].value, [](double gv, double x) { return gv * x; }));
        break;
      case Op::concat_rows: {
        const Matrix& a = nodes_[n.in0].value;
        const Matrix& b = nodes_[n.in1].value;
        const auto split = g.values().begin() + static_cast<std::ptrdiff_t>(a.size());
        if (want0) accumulate(adj, n.in0, Matrix(a.rows(), a.cols(), std::vector<double>(g.values().begin(), split)));
        if (want1) accumulate(adj, n.in1, Matrix(b.rows(), b.cols(), std::vector<double>(split, g.values().end())));
        break;
      }
      case Op::select_rows: {
        const Matrix& x = nodes_[n.in0].value;
        Matrix d(x.rows(), x.cols());
        for (std::size_t i = 0; i < n.indices.size(); ++i) {
          auto dst = d.row(n.indices[i]);
          const auto src = g.row(i);
          for (std::size_t j = 0; j < x.cols(); ++j) dst[j] += src[j];
        }
        accumulate(adj, n.in0, std::move(d));
        break;
      }
      case Op::log_sigmoid:
        accumulate(adj, n.in0, zip(g, nodes_[n.in0].value,
                                   [](double gv, double z) { return gv * stable_sigmoid(-z); }));
        break;
      case Op::log_softmax_rows: {
        Matrix d(g.rows(), g.cols());
        for (std::size_t i = 0; i < g.rows(); ++i) {
          const auto y = n.value.row(i);
          const auto gi = g.row(i);
          double total = 0.0;
          for (double v : gi) total += v;
          auto di = d.row(i);
          for (std::size_t j = 0; j < y.size(); ++j) di[j] = gi[j] - std::exp(y[j]) * total;
        }
        accumulate(adj, n.in0, std::move(d));
        break;
      }
      case Op::weighted_sum: {
        const double s = g(0, 0);
        accumulate(adj, n.in0, map(n.aux, [s](double w) { return s * w; }));
        break;
      }
    }
  }

  for (Tensor* t : wrt) {
    Matrix total(t->value.rows(), t->value.cols());
    for (std::size_t i = 0; i < count; ++i) {
      if (nodes_[i].op == Op::parameter && nodes_[i].tensor == t && adj[i]) add_into(total, *adj[i]);
    }
    t->grad = std::move(total);
  }
}

GradCheckResult grad_check(const LossBuilder& loss, std::span<Tensor* const> params, double epsilon) {
  if (!(epsilon > 0.0 && epsilon <= 1e-3)) {
    throw ContractError("grad_check: epsilon must lie in (0, 1e-3]");
  }

  std::vector<Matrix> analytic;
  {
    Graph g;
    Var root = loss(g);
    g.backward(root, params);
    for (Tensor* t : params) analytic.push_back(*t->grad);
  }

  // A perturbed point outside an op's domain counts as a non-finite loss.
  auto evaluate = [&loss]() {
    try {
      Graph g;
      return loss(g).scalar();
    } catch (const DomainError&) {
      return std::numeric_limits<double>::quiet_NaN();
    }
  };

  GradCheckResult result;
  for (std::size_t p = 0; p < params.size(); ++p) {
    auto values = params[p]->value.values();
    for (std::size_t i = 0; i < values.size(); ++i) {
      const double saved = values[i];
      values[i] = saved + epsilon;
      const double up = evaluate();
      values[i] = saved - epsilon;
      const double down = evaluate();
      values[i] = saved;
      if (!std::isfinite(up) || !std::isfinite(down)) {
        throw DomainError("grad_check: non-finite loss at tensor " + std::to_string(p) +
                          ", coordinate " + std::to_string(i));
      }
      const double numeric = (up - down) / (2.0 * epsilon);
      const double a = analytic[p].values()[i];
      const double err = std::abs(a - numeric) / std::max(1.0, std::abs(a));
      if (err > result.max_relative_error) {
        result = {err, p, i, a, numeric};
      }
    }
  }
  return result;
}

}  // namespace mts::ag
