#include "mts/nn.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <istream>
#include <ostream>
#include <random>
#include <sstream>

#include "mts/errors.hpp"
#include "mts/kernels.hpp"

namespace mts::nn {

namespace {

constexpr std::string_view kCheckpointMagic = "mts-checkpoint";
constexpr int kCheckpointVersion = 1;


GroupId head_group(Head h) {
  switch (h) {
    case Head::y1: return GroupId::y1;
    case Head::y2: return GroupId::y2;
    case Head::c: return GroupId::c;
    case Head::d: return GroupId::d;
    case Head::ds: return GroupId::ds;
  }
  throw ContractError("unknown head id");
}

std::vector<std::size_t> layer_widths(const Architecture& a, GroupId id) {
  const std::size_t m = a.feature_dim;
  switch (id) {
    case GroupId::f1:
    case GroupId::f2: return {a.input_dim, a.hidden_dim, m};
    case GroupId::y1: return {m, a.classes};
    case GroupId::c: return {m, a.classes};
    case GroupId::y2: return {m, a.classes + 1};
    case GroupId::d: return {m, a.disc_hidden, 1};
    case GroupId::ds: return {m, 3};
  }
  return {};
}

ParamGroup make_group(const Architecture& a, GroupId id) {
  ParamGroup g;
  g.id = id;
  const auto widths = layer_widths(a, id);
  for (std::size_t i = 0; i + 1 < widths.size(); ++i) g.layers.emplace_back(widths[i], widths[i + 1]);
  return g;
}

Matrix relu(Matrix m) {
  for (double& v : m.values()) if (!(v > 0.0) && !std::isnan(v)) v = 0.0;
  return m;
}

void write_double(std::ostream& out, double v) {
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  out.write(buf, res.ptr - buf);
}

double parse_double(std::string_view tok, std::size_t line) {
  double v = 0.0;
  const auto res = std::from_chars(tok.data(), tok.data() + tok.size(), v);
  if (res.ec != std::errc() || res.ptr != tok.data() + tok.size()) {
    throw ParseError(line, "bad number '" + std::string(tok) + "'");
  }
  return v;
}

}  // namespace

std::string_view to_string(GroupId id) noexcept {
  switch (id) {
    case GroupId::f1: return "f1";
    case GroupId::y1: return "y1";
    case GroupId::c: return "c";
    case GroupId::f2: return "f2";
    case GroupId::y2: return "y2";
    case GroupId::d: return "d";
    case GroupId::ds: return "ds";
  }
  return "?";
}

GroupId parse_group(std::string_view name) {
  for (GroupId id : kAllGroups) {
    if (to_string(id) == name) return id;
  }
  throw ContractError("unknown parameter group '" + std::string(name) + "'");
}

std::string_view to_string(Head head) noexcept {
  switch (head) {
    case Head::y1: return "y1";
    case Head::y2: return "y2";
    case Head::c: return "c";
    case Head::d: return "d";
    case Head::ds: return "ds";
  }
  return "?";
}

Head parse_head(std::string_view name) {
  for (Head h : {Head::y1, Head::y2, Head::c, Head::d, Head::ds}) {
    if (to_string(h) == name) return h;
  }
  throw ContractError("unknown head id '" + std::string(name) + "'");
}

Layer::Layer(std::size_t fan_in, std::size_t fan_out)
    : weight(Matrix(fan_in, fan_out)),
      bias(Matrix(1, fan_out)),
      weight_velocity(fan_in, fan_out),
      bias_velocity(1, fan_out) {}

std::vector<ag::Tensor*> ParamGroup::tensors() {
  std::vector<ag::Tensor*> out;
  for (Layer& l : layers) {
    out.push_back(&l.weight);
    out.push_back(&l.bias);
  }
  return out;
}

std::size_t ParamGroup::parameter_count() const {
  std::size_t n = 0;
  for (const Layer& l : layers) n += l.weight.value.size() + l.bias.value.size();
  return n;
}

std::uint64_t ParamGroup::hash() const {
  std::uint64_t h = 14695981039346656037ULL;
  for (const Layer& l : layers) {
    h = hash_matrix(l.weight.value, h);
    h = hash_matrix(l.bias.value, h);
  }
  return h;
}

NetworkBundle::NetworkBundle(const Architecture& arch) : arch_(arch) {
  if (arch.input_dim == 0 || arch.hidden_dim == 0 || arch.feature_dim == 0 || arch.classes < 2 ||
      arch.disc_hidden == 0) {
    throw ContractError("Architecture: dimensions must be positive and classes >= 2");
  }
  for (GroupId id : kAllGroups) {
    if (id == GroupId::f2 && arch.shared_extractor) continue;
    groups_[static_cast<std::size_t>(id)] = make_group(arch, id);
  }
}

NetworkBundle NetworkBundle::initialized(const Architecture& arch, std::uint64_t seed) {
  NetworkBundle net(arch);
  std::mt19937_64 rng(seed);
  for (GroupId id : net.distinct_groups()) {
    for (Layer& l : net.group(id).layers) {
      const auto& w = l.weight.value;
      const double limit = std::sqrt(6.0 / static_cast<double>(w.rows() + w.cols()));
      std::uniform_real_distribution<double> dist(-limit, limit);
      for (double& v : l.weight.value.values()) v = dist(rng);
    }
  }
  return net;
}

std::size_t NetworkBundle::slot(GroupId id) const {
  if (id == GroupId::f2 && arch_.shared_extractor) return static_cast<std::size_t>(GroupId::f1);
  return static_cast<std::size_t>(id);
}

ParamGroup& NetworkBundle::group(GroupId id) { return groups_[slot(id)]; }
const ParamGroup& NetworkBundle::group(GroupId id) const { return groups_[slot(id)]; }

std::vector<GroupId> NetworkBundle::distinct_groups() const {
  std::vector<GroupId> out;
  for (GroupId id : kAllGroups) {
    if (slot(id) == static_cast<std::size_t>(id)) out.push_back(id);
  }
  return out;
}

std::vector<ag::Tensor*> NetworkBundle::tensors(std::span<const GroupId> ids) {
  std::vector<std::size_t> seen;
  std::vector<ag::Tensor*> out;
  for (GroupId id : ids) {
    const std::size_t s = slot(id);
    if (std::find(seen.begin(), seen.end(), s) != seen.end()) continue;
    seen.push_back(s);
    for (ag::Tensor* t : groups_[s].tensors()) out.push_back(t);
  }
  return out;
}

NetworkBundle::SsnView NetworkBundle::ssn() {
  return {group(GroupId::f1), group(GroupId::y1), group(GroupId::c)};
}

NetworkBundle::DmnView NetworkBundle::dmn() {
  return {group(GroupId::f2), group(GroupId::y2), group(GroupId::c), group(GroupId::d),
          group(GroupId::ds)};
}

ag::Var NetworkBundle::features(ag::Graph& g, Extractor e, ag::Var x) {
  if (x.value().cols() != arch_.input_dim) {
    throw DimensionError("features: batch has " + std::to_string(x.value().cols()) +
                         " columns, expected " + std::to_string(arch_.input_dim));
  }
  ParamGroup& grp = group(e == Extractor::f1 ? GroupId::f1 : GroupId::f2);
  ag::Var h = x;
  for (Layer& l : grp.layers) {
    const ag::Var z = g.matmul(h, g.parameter(l.weight));
    h = g.relu(g.add_row_broadcast(z, g.parameter(l.bias)));
  }
  return h;
}

ag::Var NetworkBundle::logits(ag::Graph& g, Head head, ag::Var features) {
  if (features.value().cols() != arch_.feature_dim) {
    throw DimensionError("logits: features have " + std::to_string(features.value().cols()) +
                         " columns, expected " + std::to_string(arch_.feature_dim));
  }
  ParamGroup& grp = group(head_group(head));
  ag::Var h = features;
  for (std::size_t i = 0; i < grp.layers.size(); ++i) {
    Layer& l = grp.layers[i];
    const ag::Var z = g.matmul(h, g.parameter(l.weight));
    h = g.add_row_broadcast(z, g.parameter(l.bias));
    if (i + 1 < grp.layers.size()) h = g.relu(h);
  }
  return h;
}

Matrix NetworkBundle::forward_features(Extractor e, const Matrix& batch) const {
  if (batch.cols() != arch_.input_dim) {
    throw DimensionError("forward_features: batch has " + std::to_string(batch.cols()) +
                         " columns, expected " + std::to_string(arch_.input_dim));
  }
  const ParamGroup& grp = group(e == Extractor::f1 ? GroupId::f1 : GroupId::f2);
  Matrix h = batch;
  for (const Layer& l : grp.layers) {
    h = relu(kernels::add_row_broadcast(
        kernels::gemm(h, kernels::Transpose::no, l.weight.value, kernels::Transpose::no),
        l.bias.value));
  }
  return h;
}

Matrix NetworkBundle::head_logits(Head head, const Matrix& features) const {
  if (features.cols() != arch_.feature_dim) {
    throw DimensionError("head_forward: features have " + std::to_string(features.cols()) +
                         " columns, expected " + std::to_string(arch_.feature_dim));
  }
  const ParamGroup& grp = group(head_group(head));
  Matrix h = features;
  for (std::size_t i = 0; i < grp.layers.size(); ++i) {
    const Layer& l = grp.layers[i];
    h = kernels::add_row_broadcast(
        kernels::gemm(h, kernels::Transpose::no, l.weight.value, kernels::Transpose::no),
        l.bias.value);
    if (i + 1 < grp.layers.size()) h = relu(std::move(h));
  }
  return h;
}

Matrix NetworkBundle::head_forward(Head head, const Matrix& features) const {
  Matrix z = head_logits(head, features);
  return head == Head::y1 || head == Head::y2 ? softmax_rows(z) : sigmoid(z);
}

std::size_t NetworkBundle::head_width(Head h) const {
  switch (h) {
    case Head::y1:
    case Head::c: return arch_.classes;
    case Head::y2: return arch_.classes + 1;
    case Head::d: return 1;
    case Head::ds: return 3;
  }
  throw ContractError("unknown head id");
}

Matrix softmax_rows(const Matrix& logits) {
  Matrix out(logits.rows(), logits.cols());
  for (std::size_t i = 0; i < logits.rows(); ++i) {
    const auto in = logits.row(i);
    auto o = out.row(i);
    const double mx = *std::max_element(in.begin(), in.end());
    double total = 0.0;
    for (std::size_t j = 0; j < in.size(); ++j) total += (o[j] = std::exp(in[j] - mx));
    for (double& v : o) v /= total;
  }
  return out;
}

Matrix sigmoid(const Matrix& logits) {
  Matrix out(logits.rows(), logits.cols());
  auto src = logits.values();
  auto dst = out.values();
  for (std::size_t i = 0; i < src.size(); ++i) {
    const double z = src[i];
    if (z >= 0.0) {
      dst[i] = 1.0 / (1.0 + std::exp(-z));
    } else {
      const double e = std::exp(z);
      dst[i] = e / (1.0 + e);
    }
  }
  return out;
}

void sgd_momentum_step(NetworkBundle& net, std::span<const GroupId> groups, const SgdConfig& cfg) {
  // Validate everything before mutating anything.
  auto tensors = net.tensors(groups);
  for (ag::Tensor* t : tensors) {
    if (!t->grad) throw ContractError("sgd_momentum_step: missing gradient");
    require_same_shape(t->value, *t->grad, "sgd_momentum_step");
  }

  std::vector<std::size_t> seen;
  for (GroupId id : groups) {
    ParamGroup& grp = net.group(id);
    const auto key = static_cast<std::size_t>(grp.id);
    if (std::find(seen.begin(), seen.end(), key) != seen.end()) continue;
    seen.push_back(key);
    for (Layer& l : grp.layers) {
      auto update = [&cfg](ag::Tensor& t, Matrix& vel) {
        auto p = t.value.values();
        auto g = t.grad->values();
        auto v = vel.values();
        for (std::size_t i = 0; i < p.size(); ++i) {
          v[i] = cfg.momentum * v[i] + g[i] + cfg.weight_decay * p[i];
          p[i] -= cfg.lr * v[i];
        }
        t.grad.reset();
      };
      update(l.weight, l.weight_velocity);
      update(l.bias, l.bias_velocity);
    }
  }
}

void write_checkpoint(std::ostream& out, const NetworkBundle& net, std::string_view inference) {
  const Architecture& a = net.architecture();
  out << kCheckpointMagic << ' ' << kCheckpointVersion << '\n';
  out << "inference " << inference << '\n';
  out << "architecture " << a.input_dim << ' ' << a.hidden_dim << ' ' << a.feature_dim << ' '
      << a.classes << ' ' << a.disc_hidden << ' ' << (a.shared_extractor ? 1 : 0) << '\n';
  for (GroupId id : net.distinct_groups()) {
    const ParamGroup& grp = net.group(id);
    for (std::size_t li = 0; li < grp.layers.size(); ++li) {
      const Layer& l = grp.layers[li];
      for (auto [name, m] : {std::pair{"weight", &l.weight.value}, std::pair{"bias", &l.bias.value}}) {
        out << "tensor " << to_string(id) << ' ' << li << ' ' << name << ' ' << m->rows() << ' '
            << m->cols() << '\n';
        for (std::size_t i = 0; i < m->size(); ++i) {
          if (i) out << ' ';
          write_double(out, m->values()[i]);
        }
        out << '\n';
      }
    }
  }
  out << "end\n";
}

Checkpoint read_checkpoint(std::istream& in) {
  std::string line;
  std::size_t lineno = 0;
  auto next = [&]() -> std::string& {
    if (!std::getline(in, line)) throw ParseError(lineno + 1, "unexpected end of checkpoint");
    ++lineno;
    return line;
  };

  {
    std::istringstream hdr(next());
    std::string magic;
    int version = 0;
    if (!(hdr >> magic >> version) || magic != kCheckpointMagic || version != kCheckpointVersion) {
      throw ParseError(lineno, "not an mts checkpoint (version " + std::to_string(kCheckpointVersion) + ")");
    }
  }

  Checkpoint ck;
  {
    const std::string& l = next();
    constexpr std::string_view key = "inference ";
    if (l.rfind(key, 0) != 0) throw ParseError(lineno, "expected 'inference'");
    ck.inference = l.substr(key.size());
  }

  Architecture a;
  {
    std::istringstream s(next());
    std::string key;
    int shared = 0;
    if (!(s >> key >> a.input_dim >> a.hidden_dim >> a.feature_dim >> a.classes >> a.disc_hidden >> shared) ||
        key != "architecture") {
      throw ParseError(lineno, "malformed architecture line");
    }
    a.shared_extractor = shared != 0;
  }
  try {
    ck.network = NetworkBundle(a);
  } catch (const ContractError& e) {
    throw ParseError(lineno, e.what());
  }

  std::size_t expected = 0;
  for (GroupId id : ck.network.distinct_groups()) expected += 2 * ck.network.group(id).layers.size();

  std::size_t seen = 0;
  while (true) {
    std::istringstream s(next());
    std::string key;
    s >> key;
    if (key == "end") break;
    std::string group, name;
    std::size_t layer = 0, rows = 0, cols = 0;
    if (key != "tensor" || !(s >> group >> layer >> name >> rows >> cols)) {
      throw ParseError(lineno, "malformed tensor record");
    }
    GroupId id;
    try {
      id = parse_group(group);
    } catch (const ContractError& e) {
      throw ParseError(lineno, e.what());
    }
    ParamGroup& grp = ck.network.group(id);
    if (layer >= grp.layers.size() || (name != "weight" && name != "bias")) {
      throw ParseError(lineno, "unknown tensor " + group + "/" + std::to_string(layer) + "/" + name);
    }
    Matrix& target = name == "weight" ? grp.layers[layer].weight.value : grp.layers[layer].bias.value;
    if (target.rows() != rows || target.cols() != cols) {
      throw ParseError(lineno, "shape mismatch for " + group + "/" + std::to_string(layer) + "/" + name);
    }
    const std::string& values = next();
    std::size_t pos = 0, k = 0;
    while (pos < values.size()) {
      const std::size_t end = std::min(values.find(' ', pos), values.size());
      if (k >= target.size()) throw ParseError(lineno, "too many values");
      target.values()[k++] = parse_double(std::string_view(values).substr(pos, end - pos), lineno);
      pos = end + 1;
    }
    if (k != target.size()) throw ParseError(lineno, "expected " + std::to_string(target.size()) + " values");
    ++seen;
  }
  if (seen != expected) throw ParseError(lineno, "checkpoint is missing tensors");
  return ck;
}

}  // namespace mts::nn
