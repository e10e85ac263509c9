#include "mts/config.hpp"

#include <charconv>
#include <fstream>
#include <functional>
#include <ostream>
#include <string_view>

#include "mts/errors.hpp"

namespace mts::config {

namespace {

std::string trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t");
  return std::string(s.substr(first, last - first + 1));
}

double to_double(const std::string& key, const std::string& v) {
  double out = 0.0;
  const auto res = std::from_chars(v.data(), v.data() + v.size(), out);
  if (res.ec != std::errc() || res.ptr != v.data() + v.size()) {
    throw ContractError(key + ": expected a number, got '" + v + "'");
  }
  return out;
}

std::uint64_t to_uint(const std::string& key, const std::string& v) {
  std::uint64_t out = 0;
  const auto res = std::from_chars(v.data(), v.data() + v.size(), out);
  if (res.ec != std::errc() || res.ptr != v.data() + v.size()) {
    throw ContractError(key + ": expected a non-negative integer, got '" + v + "'");
  }
  return out;
}

bool to_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw ContractError(key + ": expected true or false, got '" + v + "'");
}

std::vector<double> to_list(const std::string& key, const std::string& v) {
  std::vector<double> out;
  if (v.empty()) return out;
  std::size_t start = 0;
  while (true) {
    const auto comma = v.find(',', start);
    out.push_back(to_double(key, trim(std::string_view(v).substr(start, comma - start))));
    if (comma == std::string::npos) break;
    start = comma + 1;
  }
  return out;
}

std::string format(double v) {
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

struct Field {
  const char* key;
  std::function<void(RunConfig&, const std::string&)> set;
  std::function<std::string(const RunConfig&)> get;
};

#define MTS_DOUBLE(name, member)                                                       \
  Field {                                                                              \
    name, [](RunConfig& c, const std::string& v) { c.member = to_double(name, v); },   \
        [](const RunConfig& c) { return format(c.member); }                            \
  }
#define MTS_UINT(name, member)                                                                  \
  Field {                                                                                       \
    name, [](RunConfig& c, const std::string& v) { c.member = to_uint(name, v); },              \
        [](const RunConfig& c) { return std::to_string(c.member); }                             \
  }

const std::vector<Field>& fields() {
  static const std::vector<Field> table = {
      MTS_UINT("dim", shift.dim),
      MTS_UINT("known_classes", shift.known_classes),
      MTS_UINT("unknown_classes", shift.unknown_classes),
      MTS_DOUBLE("rotation_deg", shift.rotation_deg),
      Field{"translation",
            [](RunConfig& c, const std::string& v) { c.shift.translation = to_list("translation", v); },
            [](const RunConfig& c) {
              std::string s;
              for (std::size_t i = 0; i < c.shift.translation.size(); ++i) {
                if (i) s += ',';
                s += format(c.shift.translation[i]);
              }
              return s;
            }},
      MTS_DOUBLE("noise_sigma", shift.noise_sigma),
      MTS_UINT("n_source", shift.n_source),
      MTS_UINT("n_target", shift.n_target),
      MTS_UINT("data_seed", shift.seed),
      MTS_DOUBLE("alpha", hp.alpha),
      MTS_DOUBLE("beta", hp.beta),
      MTS_DOUBLE("lr", hp.lr),
      MTS_DOUBLE("momentum", hp.momentum),
      MTS_DOUBLE("weight_decay", hp.weight_decay),
      MTS_UINT("batch_size", hp.batch_size),
      MTS_UINT("epochs", hp.epochs),
      MTS_UINT("hidden_dim", hp.hidden_dim),
      MTS_UINT("feature_dim", hp.feature_dim),
      MTS_UINT("disc_hidden", hp.disc_hidden),
      MTS_UINT("seed", hp.seed),
      Field{"unknown_weight_mode",
            [](RunConfig& c, const std::string& v) { c.hp.unknown_weight_mode = parse_unknown_weight_mode(v); },
            [](const RunConfig& c) { return std::string(to_string(c.hp.unknown_weight_mode)); }},
      Field{"lr_decay", [](RunConfig& c, const std::string& v) { c.hp.lr_decay = to_bool("lr_decay", v); },
            [](const RunConfig& c) { return std::string(c.hp.lr_decay ? "true" : "false"); }},
      MTS_DOUBLE("unknown_threshold", hp.unknown_threshold),
      Field{"variant", [](RunConfig& c, const std::string& v) { c.hp.variant = parse_variant(v); },
            [](const RunConfig& c) { return std::string(to_string(c.hp.variant)); }},
      Field{"out_dir", [](RunConfig& c, const std::string& v) { c.out_dir = v; },
            [](const RunConfig& c) { return c.out_dir; }},
  };
  return table;
}

#undef MTS_DOUBLE
#undef MTS_UINT

}  // namespace

bool assign(RunConfig& cfg, const std::string& key, const std::string& value) {
  for (const Field& f : fields()) {
    if (key == f.key) {
      f.set(cfg, value);
      return true;
    }
  }
  return false;
}

RunConfig parse_run_config(std::istream& in) {
  RunConfig cfg;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const std::string body = trim(line);
    if (body.empty() || body.front() == '#') continue;
    const auto eq = body.find('=');
    if (eq == std::string::npos) throw ParseError(lineno, "expected key = value");
    const std::string key = trim(std::string_view(body).substr(0, eq));
    const std::string value = trim(std::string_view(body).substr(eq + 1));
    try {
      if (!assign(cfg, key, value)) throw ParseError(lineno, "unknown key '" + key + "'");
    } catch (const ContractError& e) {
      throw ParseError(lineno, e.what());
    }
  }
  try {
    cfg.shift.validate();
    cfg.hp.validate();
  } catch (const ContractError& e) {
    throw DataError(e.what());
  }
  return cfg;
}

RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open config " + path.string());
  return parse_run_config(in);
}

void write_run_config(std::ostream& out, const RunConfig& cfg) {
  for (const Field& f : fields()) out << f.key << " = " << f.get(cfg) << '\n';
}

}  // namespace mts::config
