#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <numbers>
#include <set>
#include <sstream>

#include "mts/data.hpp"
#include "mts/errors.hpp"

namespace mts::data {
namespace {

std::vector<double> class_mean(const Dataset& ds, int label) {
  std::vector<double> m(ds.dim(), 0.0);
  std::size_t n = 0;
  for (std::size_t i = 0; i < ds.size(); ++i) {
    if (ds.labels[i] != label) continue;
    for (std::size_t j = 0; j < ds.dim(); ++j) m[j] += ds.features(i, j);
    ++n;
  }
  for (double& v : m) v /= static_cast<double>(n);
  return m;
}

TEST(Generate, CentroidsEvenlySpacedOnRadiusFour) {
  ShiftConfig cfg;
  for (int k = 1; k <= 5; ++k) {
    const auto c = class_centroid(cfg, k);
    const double angle = 2.0 * std::numbers::pi * (k - 1) / 5.0;
    EXPECT_NEAR(c[0], 4.0 * std::cos(angle), 1e-12);
    EXPECT_NEAR(c[1], 4.0 * std::sin(angle), 1e-12);
  }
  EXPECT_THROW(class_centroid(cfg, 6), DataError);
}

TEST(Generate, UnshiftedKnownMeansAgreeAcrossDomains) {
  ShiftConfig cfg;
  cfg.n_source = 3000;
  cfg.n_target = 5000;
  const DomainPair p = generate(cfg);
  // Each known class has n/K source and n/(K+U) target samples.
  const double ns = 1000.0, nt = 1000.0;
  const double tol = 3.0 * cfg.noise_sigma * std::sqrt(1.0 / ns + 1.0 / nt);
  for (int k = 1; k <= 3; ++k) {
    const auto ms = class_mean(p.source, k), mt = class_mean(p.target, k);
    for (std::size_t j = 0; j < 2; ++j) EXPECT_NEAR(ms[j], mt[j], tol) << "class " << k;
  }
}

TEST(Generate, HalfTurnMapsFirstCentroidToItsOpposite) {
  ShiftConfig cfg;
  cfg.rotation_deg = 180.0;
  cfg.n_target = 5000;
  const DomainPair p = generate(cfg);
  const auto m = class_mean(p.target, 1);
  const double tol = 3.0 * cfg.noise_sigma / std::sqrt(1000.0);
  EXPECT_NEAR(m[0], -4.0, tol);
  EXPECT_NEAR(m[1], 0.0, tol);
}

TEST(Generate, TranslationShiftsTarget) {
  ShiftConfig a;
  a.noise_sigma = 0.0;
  ShiftConfig b = a;
  b.translation = {1.5, -2.0};
  const DomainPair pa = generate(a), pb = generate(b);
  for (std::size_t i = 0; i < pa.target.size(); ++i) {
    EXPECT_DOUBLE_EQ(pb.target.features(i, 0), pa.target.features(i, 0) + 1.5);
    EXPECT_DOUBLE_EQ(pb.target.features(i, 1), pa.target.features(i, 1) - 2.0);
  }
  EXPECT_EQ(pa.source, pb.source);
}

TEST(Generate, LabelSetsAndDeterminism) {
  ShiftConfig cfg;
  cfg.rotation_deg = 45.0;
  const DomainPair p = generate(cfg);
  EXPECT_EQ(std::set<int>(p.source.labels.begin(), p.source.labels.end()), (std::set<int>{1, 2, 3}));
  EXPECT_EQ(std::set<int>(p.target.labels.begin(), p.target.labels.end()), (std::set<int>{1, 2, 3, 4}));
  EXPECT_EQ(p.source.domain, Domain::source);
  EXPECT_EQ(p.target.domain, Domain::target);
  const DomainPair q = generate(cfg);
  EXPECT_EQ(p.source, q.source);
  EXPECT_EQ(p.target, q.target);
  cfg.seed += 1;
  EXPECT_FALSE(generate(cfg).source == p.source);
}

TEST(Generate, SmallestValidCountsCoverEveryClass) {
  ShiftConfig cfg;
  cfg.n_source = 3;
  cfg.n_target = 5;
  const DomainPair p = generate(cfg);
  EXPECT_EQ(p.source.labels, (std::vector<int>{1, 2, 3}));
  EXPECT_EQ(p.target.labels, (std::vector<int>{1, 2, 3, 4, 4}));
  cfg.n_source = 2;
  EXPECT_THROW(generate(cfg), DataError);
  cfg.n_source = 3;
  cfg.n_target = 4;
  EXPECT_THROW(generate(cfg), DataError);
}

TEST(Generate, InvalidConfigs) {
  ShiftConfig cfg;
  cfg.known_classes = 1;
  EXPECT_THROW(generate(cfg), DataError);
  cfg = {};
  cfg.unknown_classes = 0;
  EXPECT_THROW(generate(cfg), DataError);
  cfg = {};
  cfg.translation = {1.0};
  EXPECT_THROW(generate(cfg), DataError);
}

TEST(Generate, KnownOnlyDropsUnknownRows) {
  const DomainPair p = generate(ShiftConfig{});
  const Dataset k = p.target.known_only();
  EXPECT_EQ(k.size(), 180u);
  for (int l : k.labels) EXPECT_LE(l, 3);
}

TEST(Csv, RoundTripIsExact) {
  ShiftConfig cfg;
  cfg.rotation_deg = 33.3;
  const DomainPair p = generate(cfg);
  for (const Dataset* ds : {&p.source, &p.target}) {
    std::stringstream s;
    write_csv(s, *ds);
    EXPECT_EQ(read_csv(s, 3, ds->domain), *ds);
  }
}

TEST(Csv, SingleSampleAndEmptyDatasets) {
  Dataset one{Domain::target, 2, Matrix::from_rows({{0.1, -1e-300}}), {3}};
  std::stringstream s;
  write_csv(s, one);
  EXPECT_EQ(read_csv(s, 2, Domain::target), one);

  Dataset empty{Domain::source, 2, Matrix(0, 2), {}};
  std::stringstream e;
  write_csv(e, empty);
  EXPECT_EQ(e.str(), "f0,f1,label,domain\n");
  EXPECT_EQ(read_csv(e, 2, Domain::source), empty);
}

TEST(Csv, FileRoundTrip) {
  const DomainPair p = generate(ShiftConfig{});
  const auto path = std::filesystem::temp_directory_path() / "mts_csv_roundtrip.csv";
  save_csv(p.target, path);
  EXPECT_EQ(load_csv(path, 3, Domain::target), p.target);
  std::filesystem::remove(path);
  EXPECT_THROW(load_csv(path, 3, Domain::target), DataError);
}

std::size_t parse_error_line(const std::string& text, std::size_t classes, Domain d) {
  std::stringstream s(text);
  try {
    read_csv(s, classes, d);
  } catch (const ParseError& e) {
    return e.line();
  }
  return 0;
}

TEST(Csv, ErrorsNameTheLine) {
  const std::string header = "f0,f1,label,domain\n";
  EXPECT_EQ(parse_error_line(header + "0,0,1,target\n0,0,4,target\n", 2, Domain::target), 3u);
  EXPECT_EQ(parse_error_line(header + "0,0,0,target\n", 2, Domain::target), 2u);
  EXPECT_EQ(parse_error_line(header + "0,x,1,target\n", 2, Domain::target), 2u);
  EXPECT_EQ(parse_error_line(header + "0,0,1,elsewhere\n", 2, Domain::target), 2u);
  EXPECT_EQ(parse_error_line(header + "0,0,1,source\n", 2, Domain::target), 2u);
  EXPECT_EQ(parse_error_line(header + "0,0,3,source\n", 2, Domain::source), 2u);
  EXPECT_EQ(parse_error_line(header + "0,0,1\n", 2, Domain::target), 2u);
  EXPECT_EQ(parse_error_line("f0,f1,label,domain\r\n", 2, Domain::target), 1u);
  EXPECT_EQ(parse_error_line("x,y,label,domain\n", 2, Domain::target), 1u);
  EXPECT_EQ(parse_error_line("", 2, Domain::target), 1u);
}

TEST(Sampler, EveryIndexOncePerEpoch) {
  ShiftConfig cfg;
  cfg.n_source = 96;
  cfg.n_target = 100;
  const DomainPair p = generate(cfg);
  MinibatchSampler sampler(p.source, p.target, 32, 5);
  EXPECT_EQ(sampler.batches_per_epoch(), 3u);
  for (int epoch = 0; epoch < 3; ++epoch) {
    const auto batches = sampler.epoch();
    ASSERT_EQ(batches.size(), 3u);
    std::vector<std::size_t> s = sampler.source_order();
    std::sort(s.begin(), s.end());
    for (std::size_t i = 0; i < s.size(); ++i) EXPECT_EQ(s[i], i);
    for (const MiniBatch& mb : batches) {
      EXPECT_EQ(mb.source.x.rows(), 32u);
      EXPECT_EQ(mb.target.x.rows(), 32u);
      EXPECT_EQ(mb.source.labels.size(), 32u);
    }
  }
}

TEST(Sampler, FullBatchIsAPermutation) {
  ShiftConfig cfg;
  cfg.n_source = 30;
  cfg.n_target = 30;
  const DomainPair p = generate(cfg);
  std::mt19937_64 rng(1);
  const MiniBatch mb = sample_minibatch(p.source, p.target, 30, rng);
  std::multiset<double> a(p.source.features.values().begin(), p.source.features.values().end());
  std::multiset<double> b(mb.source.x.values().begin(), mb.source.x.values().end());
  EXPECT_EQ(a, b);
}

TEST(Sampler, DeterministicPerSeed) {
  const DomainPair p = generate(ShiftConfig{});
  MinibatchSampler a(p.source, p.target, 16, 9), b(p.source, p.target, 16, 9);
  for (int epoch = 0; epoch < 2; ++epoch) {
    const auto ea = a.epoch(), eb = b.epoch();
    for (std::size_t i = 0; i < ea.size(); ++i) {
      EXPECT_EQ(ea[i].source.x, eb[i].source.x);
      EXPECT_EQ(ea[i].target.x, eb[i].target.x);
    }
  }
  std::mt19937_64 r1(4), r2(4);
  EXPECT_EQ(sample_minibatch(p.source, p.target, 8, r1).target.x, sample_minibatch(p.source, p.target, 8, r2).target.x);
}

TEST(Sampler, BatchSizeContracts) {
  const DomainPair p = generate(ShiftConfig{});
  EXPECT_THROW(MinibatchSampler(p.source, p.target, 1, 0), ContractError);
  EXPECT_THROW(MinibatchSampler(p.source, p.target, 301, 0), DataError);
  std::mt19937_64 rng(0);
  EXPECT_THROW(sample_minibatch(p.source, p.target, 301, rng), DataError);
}

}  // namespace
}  // namespace mts::data
