#include "mts/data.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <istream>
#include <numbers>
#include <numeric>
#include <ostream>
#include <string>

#include "mts/errors.hpp"

namespace mts::data {

std::string_view to_string(Domain d) noexcept { return d == Domain::source ? "source" : "target"; }

Sample Dataset::sample(std::size_t i) const {
  const auto r = features.row(i);
  return {std::vector<double>(r.begin(), r.end()), labels.at(i), domain};
}

Dataset Dataset::known_only() const {
  std::vector<std::size_t> keep;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] <= static_cast<int>(classes)) keep.push_back(i);
  }
  Dataset out{domain, classes, gather_rows(features, keep), {}};
  for (std::size_t i : keep) out.labels.push_back(labels[i]);
  return out;
}

bool operator==(const Dataset& a, const Dataset& b) noexcept {
  return a.domain == b.domain && a.classes == b.classes && a.labels == b.labels &&
         a.features == b.features;
}

void ShiftConfig::validate() const {
  if (dim < 2) throw DataError("ShiftConfig: dim must be >= 2");
  if (known_classes < 2) throw DataError("ShiftConfig: need K >= 2 known classes");
  if (unknown_classes < 1) throw DataError("ShiftConfig: need U >= 1 unknown classes");
  if (!translation.empty() && translation.size() != dim) {
    throw DataError("ShiftConfig: translation has " + std::to_string(translation.size()) +
                    " entries, expected " + std::to_string(dim));
  }
  if (!(noise_sigma >= 0.0)) throw DataError("ShiftConfig: noise_sigma must be >= 0");
  if (n_source < known_classes) {
    throw DataError("ShiftConfig: n_source < K leaves a known class unrepresented");
  }
  if (n_target < known_classes + unknown_classes) {
    throw DataError("ShiftConfig: n_target < K+U leaves a class unrepresented");
  }
}

std::vector<double> class_centroid(const ShiftConfig& cfg, int label) {
  const std::size_t total = cfg.known_classes + cfg.unknown_classes;
  if (label < 1 || static_cast<std::size_t>(label) > total) {
    throw DataError("class_centroid: label " + std::to_string(label) + " out of range");
  }
  const double angle = 2.0 * std::numbers::pi * static_cast<double>(label - 1) / static_cast<double>(total);
  std::vector<double> c(cfg.dim, 0.0);
  c[0] = kCentroidRadius * std::cos(angle);
  c[1] = kCentroidRadius * std::sin(angle);
  return c;
}

namespace {

Dataset draw(const ShiftConfig& cfg, Domain domain, std::size_t n, std::size_t class_count,
             std::uint64_t stream) {
  std::seed_seq seq{static_cast<std::uint32_t>(cfg.seed), static_cast<std::uint32_t>(cfg.seed >> 32),
                    static_cast<std::uint32_t>(stream)};
  std::mt19937_64 rng(seq);
  std::normal_distribution<double> noise(0.0, cfg.noise_sigma);

  Dataset ds{domain, cfg.known_classes, Matrix(n, cfg.dim), std::vector<int>(n)};
  for (std::size_t i = 0; i < n; ++i) {
    const int cls = static_cast<int>(i % class_count) + 1;
    const auto centroid = class_centroid(cfg, cls);
    auto row = ds.features.row(i);
    for (std::size_t j = 0; j < cfg.dim; ++j) {
      row[j] = centroid[j] + (cfg.noise_sigma > 0.0 ? noise(rng) : 0.0);
    }
    ds.labels[i] = std::min(cls, ds.unknown_label());
  }
  return ds;
}

}  // namespace

DomainPair generate(const ShiftConfig& cfg) {
  cfg.validate();
  DomainPair out;
  out.source = draw(cfg, Domain::source, cfg.n_source, cfg.known_classes, 0);
  out.target = draw(cfg, Domain::target, cfg.n_target, cfg.known_classes + cfg.unknown_classes, 1);

  const double rad = cfg.rotation_deg * std::numbers::pi / 180.0;
  const double cs = std::cos(rad);
  const double sn = std::sin(rad);
  for (std::size_t i = 0; i < out.target.size(); ++i) {
    auto row = out.target.features.row(i);
    const double x = row[0];
    const double y = row[1];
    row[0] = cs * x - sn * y;
    row[1] = sn * x + cs * y;
    for (std::size_t j = 0; j < cfg.translation.size(); ++j) row[j] += cfg.translation[j];
  }
  return out;
}

void write_csv(std::ostream& out, const Dataset& ds) {
  for (std::size_t j = 0; j < ds.dim(); ++j) out << 'f' << j << ',';
  out << "label,domain\n";
  char buf[32];
  for (std::size_t i = 0; i < ds.size(); ++i) {
    for (double v : ds.features.row(i)) {
      const auto res = std::to_chars(buf, buf + sizeof(buf), v);
      out.write(buf, res.ptr - buf);
      out << ',';
    }
    out << ds.labels[i] << ',' << to_string(ds.domain) << '\n';
  }
}

namespace {

std::vector<std::string_view> split_commas(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t pos = 0;
  while (true) {
    const std::size_t comma = line.find(',', pos);
    out.push_back(line.substr(pos, comma == std::string_view::npos ? std::string_view::npos : comma - pos));
    if (comma == std::string_view::npos) break;
    pos = comma + 1;
  }
  return out;
}

}  // namespace

Dataset read_csv(std::istream& in, std::size_t classes, Domain expected) {
  std::string line;
  if (!std::getline(in, line)) throw ParseError(1, "missing header");
  if (!line.empty() && line.back() == '\r') throw ParseError(1, "CRLF line endings are not accepted");
  const auto header = split_commas(line);
  if (header.size() < 3 || header[header.size() - 2] != "label" || header.back() != "domain") {
    throw ParseError(1, "header must be f0,...,f{d-1},label,domain");
  }
  const std::size_t dim = header.size() - 2;
  for (std::size_t j = 0; j < dim; ++j) {
    if (header[j] != "f" + std::to_string(j)) throw ParseError(1, "expected column f" + std::to_string(j));
  }

  Dataset ds{expected, classes, {}, {}};
  std::vector<double> values;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    const auto cells = split_commas(line);
    if (cells.size() != dim + 2) {
      throw ParseError(lineno, "expected " + std::to_string(dim + 2) + " fields, got " + std::to_string(cells.size()));
    }
    for (std::size_t j = 0; j < dim; ++j) {
      double v = 0.0;
      const auto res = std::from_chars(cells[j].data(), cells[j].data() + cells[j].size(), v);
      if (res.ec != std::errc() || res.ptr != cells[j].data() + cells[j].size()) {
        throw ParseError(lineno, "bad number '" + std::string(cells[j]) + "'");
      }
      values.push_back(v);
    }
    int label = 0;
    const auto lc = cells[dim];
    const auto res = std::from_chars(lc.data(), lc.data() + lc.size(), label);
    if (res.ec != std::errc() || res.ptr != lc.data() + lc.size()) {
      throw ParseError(lineno, "bad label '" + std::string(lc) + "'");
    }
    if (label < 1 || label > static_cast<int>(classes) + 1) {
      throw ParseError(lineno, "label " + std::to_string(label) + " outside 1.." + std::to_string(classes + 1));
    }
    const auto dc = cells[dim + 1];
    Domain d;
    if (dc == "source") {
      d = Domain::source;
    } else if (dc == "target") {
      d = Domain::target;
    } else {
      throw ParseError(lineno, "unknown domain '" + std::string(dc) + "'");
    }
    if (d != expected) throw ParseError(lineno, "expected domain " + std::string(to_string(expected)));
    if (d == Domain::source && label == static_cast<int>(classes) + 1) {
      throw ParseError(lineno, "source samples cannot carry the unknown label");
    }
    ds.labels.push_back(label);
  }
  ds.features = Matrix(ds.labels.size(), dim, std::move(values));
  return ds;
}

void save_csv(const Dataset& ds, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  write_csv(out, ds);
  if (!out) throw DataError("write failed for " + path.string());
}

Dataset load_csv(const std::filesystem::path& path, std::size_t classes, Domain expected) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot read " + path.string());
  return read_csv(in, classes, expected);
}

MinibatchSampler::MinibatchSampler(const Dataset& source, const Dataset& target,
                                   std::size_t batch_size, std::uint64_t seed)
    : source_(&source), target_(&target), batch_size_(batch_size), rng_(seed) {
  if (batch_size < 2) throw ContractError("batch_size must be >= 2");
  if (source.size() == 0 || target.size() == 0) throw DataError("empty dataset");
  if (batch_size > source.size() || batch_size > target.size()) {
    throw DataError("batch_size " + std::to_string(batch_size) + " exceeds dataset size");
  }
  batches_ = std::min(source.size(), target.size()) / batch_size;
  source_order_.resize(source.size());
  target_order_.resize(target.size());
}

std::vector<MiniBatch> MinibatchSampler::epoch() {
  std::iota(source_order_.begin(), source_order_.end(), std::size_t{0});
  std::iota(target_order_.begin(), target_order_.end(), std::size_t{0});
  std::shuffle(source_order_.begin(), source_order_.end(), rng_);
  std::shuffle(target_order_.begin(), target_order_.end(), rng_);

  std::vector<MiniBatch> out;
  out.reserve(batches_);
  for (std::size_t b = 0; b < batches_; ++b) {
    const std::span<const std::size_t> s(source_order_.data() + b * batch_size_, batch_size_);
    const std::span<const std::size_t> t(target_order_.data() + b * batch_size_, batch_size_);
    MiniBatch mb;
    mb.source.x = gather_rows(source_->features, s);
    for (std::size_t i : s) mb.source.labels.push_back(source_->labels[i]);
    mb.target.x = gather_rows(target_->features, t);
    out.push_back(std::move(mb));
  }
  return out;
}

MiniBatch sample_minibatch(const Dataset& source, const Dataset& target, std::size_t batch_size,
                           std::mt19937_64& rng) {
  if (batch_size < 2) throw ContractError("batch_size must be >= 2");
  if (source.size() == 0 || target.size() == 0) throw DataError("empty dataset");
  if (batch_size > source.size() || batch_size > target.size()) {
    throw DataError("batch_size " + std::to_string(batch_size) + " exceeds dataset size");
  }
  auto draw = [&](std::size_t n) {
    std::vector<std::size_t> idx(n);
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    std::shuffle(idx.begin(), idx.end(), rng);
    idx.resize(batch_size);
    return idx;
  };
  const auto s = draw(source.size());
  const auto t = draw(target.size());
  MiniBatch mb;
  mb.source.x = gather_rows(source.features, s);
  for (std::size_t i : s) mb.source.labels.push_back(source.labels[i]);
  mb.target.x = gather_rows(target.features, t);
  return mb;
}

}  // namespace mts::data
