#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <random>
#include <span>
#include <string_view>
#include <vector>

#include "mts/matrix.hpp"

namespace mts::data {

enum class Domain { source, target };

std::string_view to_string(Domain d) noexcept;

/// One labeled feature vector. Labels are 1-based: 1..K known, K+1 unknown.
struct Sample {
  std::vector<double> x;
  int label = 1;
  Domain domain = Domain::source;
};

/// Samples of one domain stored as an n x d feature matrix plus labels.
struct Dataset {
  Domain domain = Domain::source;
  std::size_t classes = 0;  // K
  Matrix features;
  std::vector<int> labels;

  std::size_t size() const noexcept { return labels.size(); }
  std::size_t dim() const noexcept { return features.cols(); }
  int unknown_label() const noexcept { return static_cast<int>(classes) + 1; }
  Sample sample(std::size_t i) const;

  /// Rows whose label is a known class.
  Dataset known_only() const;

  friend bool operator==(const Dataset& a, const Dataset& b) noexcept;
};

struct ShiftConfig {
  std::size_t dim = 2;
  std::size_t known_classes = 3;    // K
  std::size_t unknown_classes = 2;  // U
  double rotation_deg = 0.0;
  std::vector<double> translation;  // empty means zero; otherwise length dim
  double noise_sigma = 0.5;
  std::size_t n_source = 300;
  std::size_t n_target = 300;
  std::uint64_t seed = 47;

  /// Throws DataError on an invalid configuration.
  void validate() const;
};

inline constexpr double kCentroidRadius = 4.0;

/// Centroid of 1-based class `label` before any target shift: K+U points
/// evenly spaced on a radius-4 circle in the first two dims.
std::vector<double> class_centroid(const ShiftConfig& cfg, int label);

struct DomainPair {
  Dataset source;
  Dataset target;
};

/// Source draws only classes 1..K; the target draws all K+U classes, then is
/// rotated about the origin in the first two dims and translated. Unknown
/// target classes collapse to label K+1. Class membership is round-robin so
/// every class is represented.
DomainPair generate(const ShiftConfig& cfg);

// CSV: header f0,...,f{d-1},label,domain; one sample per line.
void write_csv(std::ostream& out, const Dataset& ds);
/// `classes` is K; labels must lie in 1..K+1 and the domain column must agree
/// with `expected`. Errors name the offending line.
Dataset read_csv(std::istream& in, std::size_t classes, Domain expected);
void save_csv(const Dataset& ds, const std::filesystem::path& path);
Dataset load_csv(const std::filesystem::path& path, std::size_t classes, Domain expected);

/// What the trainer sees of a source mini-batch.
struct SourceBatch {
  Matrix x;
  std::vector<int> labels;  // 1..K
};

/// Target mini-batch: labels are withheld by construction.
struct TargetBatch {
  Matrix x;
};

struct MiniBatch {
  SourceBatch source;
  TargetBatch target;
};

/// Per-epoch shuffled, without-replacement mini-batch sampler over a domain
/// pair. Each epoch reshuffles both index sets; an epoch holds
/// floor(min(n_s, n_t) / batch_size) batches.
class MinibatchSampler {
 public:
  MinibatchSampler(const Dataset& source, const Dataset& target, std::size_t batch_size,
                   std::uint64_t seed);

  std::size_t batches_per_epoch() const noexcept { return batches_; }
  /// Reshuffles and returns the epoch's batches in order.
  std::vector<MiniBatch> epoch();
  /// Index lists of the last epoch, for inspection.
  const std::vector<std::size_t>& source_order() const noexcept { return source_order_; }
  const std::vector<std::size_t>& target_order() const noexcept { return target_order_; }

 private:
  const Dataset* source_;
  const Dataset* target_;
  std::size_t batch_size_;
  std::size_t batches_;
  std::mt19937_64 rng_;
  std::vector<std::size_t> source_order_;
  std::vector<std::size_t> target_order_;
};

/// Single draw of one mini-batch of `batch_size` from each domain.
MiniBatch sample_minibatch(const Dataset& source, const Dataset& target, std::size_t batch_size,
                           std::mt19937_64& rng);

}  // namespace mts::data
