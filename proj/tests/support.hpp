#pragma once

#include <cmath>
#include <random>
#include <vector>

#include "mts/data.hpp"
#include "mts/nn.hpp"

namespace mts::testing {

/// Small architecture that keeps finite-difference checks fast.
inline nn::Architecture small_arch(std::size_t classes = 3) {
  nn::Architecture a;
  a.input_dim = 2;
  a.hidden_dim = 6;
  a.feature_dim = 4;
  a.classes = classes;
  a.disc_hidden = 4;
  return a;
}

/// Initialized bundle with every bias also randomised, so that no parameter
/// sits at a special value.
inline nn::NetworkBundle random_bundle(const nn::Architecture& arch, std::uint64_t seed) {
  nn::NetworkBundle net = nn::NetworkBundle::initialized(arch, seed);
  std::mt19937_64 rng(seed ^ 0x5eedULL);
  std::uniform_real_distribution<double> u(-0.3, 0.3);
  for (nn::GroupId id : net.distinct_groups()) {
    for (nn::Layer& layer : net.group(id).layers) {
      for (double& v : layer.bias.value.values()) v = u(rng);
    }
  }
  return net;
}

inline Matrix random_matrix(std::size_t rows, std::size_t cols, std::mt19937_64& rng, double scale = 2.0) {
  std::normal_distribution<double> n(0.0, scale);
  Matrix m(rows, cols);
  for (double& v : m.values()) v = n(rng);
  return m;
}

inline data::MiniBatch random_batch(std::size_t n, std::size_t classes, std::mt19937_64& rng) {
  data::MiniBatch b;
  b.source.x = random_matrix(n, 2, rng);
  b.target.x = random_matrix(n, 2, rng);
  for (std::size_t i = 0; i < n; ++i) b.source.labels.push_back(static_cast<int>(i % classes) + 1);
  return b;
}

/// Hash of every group, in GroupId order.
inline std::vector<std::uint64_t> group_hashes(const nn::NetworkBundle& net) {
  std::vector<std::uint64_t> out;
  for (nn::GroupId id : nn::kAllGroups) out.push_back(net.group(id).hash());
  return out;
}

}  // namespace mts::testing
