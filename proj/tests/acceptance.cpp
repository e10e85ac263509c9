// Acceptance runner: prints one PASS/FAIL line per criterion and exits
// nonzero if any criterion fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <iostream>
#include <numeric>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "mts/eval.hpp"
#include "mts/experiment.hpp"
#include "mts/losses.hpp"
#include "mts/trainer.hpp"
#include "support.hpp"

using namespace mts;
using losses::BatchForward;
using losses::BatchWeights;
using losses::Detach;
using losses::IndicatorMode;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

struct Outcome {
  bool pass = true;
  std::string detail;
};

void report(int id, const char* name, const Outcome& o, bool& all) {
  std::printf("criterion %d %-22s %s  %s\n", id, name, o.pass ? "PASS" : "FAIL", o.detail.c_str());
  std::fflush(stdout);
  all = all && o.pass;
}

// ------------------------------------------------------------ 1. gradients

struct Point {
  nn::NetworkBundle net;
  data::MiniBatch batch;
  BatchWeights weights;
  losses::Triplet triplet;
};

Point make_point(std::uint64_t seed) {
  Point p{testing::random_bundle(testing::small_arch(), seed), {}, {}, {}};
  std::mt19937_64 rng(seed + 1000);
  p.batch = testing::random_batch(8, 3, rng);
  p.weights = losses::similarity_weights(p.net, p.batch.target.x);
  p.triplet.source_index = seed % 8;
  p.triplet.known_index = losses::argmax_first(p.weights.w);
  p.triplet.unknown_index = losses::argmin_first(p.weights.w);
  return p;
}

Outcome gradient_suite() {
  using L = std::function<ag::Var(BatchForward&, const Point&)>;
  const auto mode = UnknownWeightMode::one_minus_w;
  const std::vector<std::pair<const char*, L>> suite = {
      {"c1", [](BatchForward& f, const Point&) { return losses::loss_c1(f); }},
      {"s", [](BatchForward& f, const Point&) { return losses::loss_s(f); }},
      {"theta1", [](BatchForward& f, const Point&) { return losses::loss_theta1(f); }},
      {"c2", [mode](BatchForward& f, const Point& p) { return losses::loss_c2(f, p.weights, mode); }},
      {"c2_literal",
       [](BatchForward& f, const Point& p) { return losses::loss_c2(f, p.weights, UnknownWeightMode::literal_w); }},
      {"d", [](BatchForward& f, const Point& p) { return losses::loss_d(f, p.weights); }},
      {"ds_standard",
       [](BatchForward& f, const Point& p) { return losses::loss_ds(f, p.triplet, IndicatorMode::standard); }},
      {"ds_revised",
       [](BatchForward& f, const Point& p) { return losses::loss_ds(f, p.triplet, IndicatorMode::revised); }},
      {"theta2a",
       [mode](BatchForward& f, const Point& p) { return losses::loss_theta2a(f, p.weights, p.triplet, 0.8, mode); }},
      {"theta2b",
       [mode](BatchForward& f, const Point& p) { return losses::loss_theta2b(f, p.weights, p.triplet, 0.8, mode); }},
      {"mse", [](BatchForward& f, const Point&) { return losses::loss_mse_mutual(f, Detach::none); }},
      {"symmetric_kl", [](BatchForward& f, const Point&) { return losses::loss_symmetric_kl_mutual(f, Detach::none); }},
  };
  const auto t0 = Clock::now();
  double worst = 0.0;
  std::string worst_name;
  for (const auto& [name, loss] : suite) {
    for (std::uint64_t k = 0; k < 10; ++k) {
      Point p = make_point(500 + k);
      auto params = p.net.tensors(nn::kAllGroups);
      const auto r = ag::grad_check(
          [&](ag::Graph& g) {
            BatchForward fw(g, p.net, p.batch.source, p.batch.target);
            return loss(fw, p);
          },
          params, 1e-5);
      // NaN compares false, so it is recorded as the worst case.
      if (!(r.max_relative_error < worst) || worst_name.empty()) {
        worst = r.max_relative_error;
        worst_name = name;
      }
    }
  }
  const double elapsed = seconds_since(t0);
  std::ostringstream d;
  d << suite.size() << " losses x 10 points, max rel err " << worst << " (" << worst_name << "), " << elapsed << " s";
  return {worst <= 1e-4 && elapsed < 60.0, d.str()};
}

// ---------------------------------------------------------- 2. hand values

ag::Var softmax_probs(ag::Graph& g, const Matrix& p) {
  return g.constant(losses::softmax_logits_from_probabilities(p));
}
ag::Var sigmoid_probs(ag::Graph& g, const Matrix& p) {
  return g.constant(losses::sigmoid_logits_from_probabilities(p));
}

Outcome hand_values() {
  std::vector<std::pair<std::string, std::pair<double, double>>> checks;
  ag::Graph g;
  {
    const int labels[] = {1, 2};
    checks.push_back({"c1", {losses::loss_c1(softmax_probs(g, Matrix::from_rows({{0.8, 0.2}, {0.4, 0.6}})), labels).scalar(),
                             0.3669}});
  }
  {
    const int labels[] = {1};
    checks.push_back({"s", {losses::loss_s(sigmoid_probs(g, Matrix::from_rows({{0.8, 0.3}})), labels).scalar(), 0.2899}});
  }
  {
    const Matrix target_p = Matrix::from_rows({{0.1, 0.1, 0.8}, {0.25, 0.25, 0.5}, {0.3, 0.3, 0.4}});
    const int labels[] = {1};
    const ag::Var src = softmax_probs(g, Matrix::from_rows({{0.7, 0.2, 0.1}}));
    const BatchWeights w{Matrix(3, 2, 0.5), {0.9, 0.2, 0.6}};
    const double v = losses::loss_c2(src, labels, softmax_probs(g, target_p), w, UnknownWeightMode::one_minus_w).scalar();
    checks.push_back({"c2 target term", {v + std::log(0.7), 0.5545}});
  }
  {
    const BatchWeights w{Matrix(2, 1, 0.5), {0.9, 0.1}};
    checks.push_back({"d", {losses::loss_d(sigmoid_probs(g, Matrix(1, 1, 0.8)),
                                           sigmoid_probs(g, Matrix::from_rows({{0.3}, {0.6}})), w)
                                .scalar(),
                            0.6358}});
  }
  for (IndicatorMode m : {IndicatorMode::standard, IndicatorMode::revised}) {
    checks.push_back({"ds half heads", {losses::loss_ds(g.constant(Matrix(3, 3, 0.0)), m).scalar(), std::log(2.0)}});
  }
  {
    const ag::Var a = g.constant(Matrix(1, 1, 0.8)), b = g.constant(Matrix(1, 1, 0.6));
    checks.push_back({"mse", {losses::loss_mse_mutual(a, b, a, b).scalar(), 0.04}});
  }
  {
    const int labels[] = {1, 3, 2};
    checks.push_back({"c1 uniform", {losses::loss_c1(g.constant(Matrix(3, 3, 0.0)), labels).scalar(), std::log(3.0)}});
  }
  double worst = 0.0;
  std::string worst_name;
  for (const auto& [name, vals] : checks) {
    const double e = std::abs(vals.first - vals.second);
    if (e >= worst) {
      worst = e;
      worst_name = name;
    }
  }
  std::ostringstream d;
  d << checks.size() << " values, max abs err " << worst << " (" << worst_name << ")";
  return {worst <= 1e-4, d.str()};
}

// ------------------------------------------------------- 3. metric identity

Outcome metric_identity() {
  std::mt19937_64 rng(2024);
  double worst = 0.0;
  bool invariant = true;
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t k = 2 + rng() % 6;
    const std::size_t n = (k + 1) + rng() % 80;
    std::uniform_int_distribution<int> label(1, static_cast<int>(k) + 1);
    std::vector<int> truth(n), pred(n);
    for (std::size_t i = 0; i < n; ++i) {
      truth[i] = i <= k ? static_cast<int>(i) + 1 : label(rng);
      pred[i] = label(rng);
    }
    const eval::EvalReport r = eval::metrics(pred, truth, k);
    const double kd = static_cast<double>(k);
    worst = std::max(worst, std::abs(r.os - (kd * r.os_star + r.unk) / (kd + 1.0)));

    std::vector<std::size_t> perm(n);
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), rng);
    std::vector<int> t2, p2;
    for (std::size_t i : perm) {
      t2.push_back(truth[i]);
      p2.push_back(pred[i]);
    }
    const eval::EvalReport q = eval::metrics(p2, t2, k);
    invariant = invariant && q.os == r.os && q.os_star == r.os_star && q.unk == r.unk &&
                q.per_class_acc == r.per_class_acc;
  }
  std::ostringstream d;
  d << "1000 sets, max |OS - (K OS* + Unk)/(K+1)| = " << worst << ", permutation invariant: " << (invariant ? "yes" : "no");
  return {worst <= 1e-12 && invariant, d.str()};
}

// --------------------------------------------------- 4. structural invariants

Outcome structural_invariants() {
  Hyperparams hp;
  hp.hidden_dim = 6;
  hp.feature_dim = 4;
  hp.disc_hidden = 4;
  hp.lr = 0.05;
  hp.batch_size = 8;
  bool c_fixed = true, dmn_fixed = true, mse_equal = true, w_ok = true;
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    nn::NetworkBundle net = testing::random_bundle(testing::small_arch(), seed);
    std::mt19937_64 rng(seed + 77);
    const data::MiniBatch b = testing::random_batch(8, 3, rng);
    trainer::Trainer t(net, hp);

    const auto h0 = testing::group_hashes(net);
    t.dmn_step(b);
    const auto h1 = testing::group_hashes(net);
    for (nn::GroupId id : {nn::GroupId::c, nn::GroupId::f1, nn::GroupId::y1}) {
      const auto i = static_cast<std::size_t>(id);
      if (h0[i] != h1[i]) c_fixed = false;
    }
    t.ssn_step(b);
    const auto h2 = testing::group_hashes(net);
    for (nn::GroupId id : {nn::GroupId::f2, nn::GroupId::y2, nn::GroupId::d, nn::GroupId::ds}) {
      const auto i = static_cast<std::size_t>(id);
      if (h1[i] != h2[i]) dmn_fixed = false;
    }

    ag::Graph g;
    BatchForward fw(g, net, b.source, b.target);
    mse_equal = mse_equal && losses::loss_mse_mutual(fw, Detach::dmn_branch).scalar() ==
                                 losses::loss_mse_mutual(fw, Detach::ssn_branch).scalar();

    const BatchWeights w = losses::similarity_weights(net, testing::random_matrix(64, 2, rng, 6.0));
    for (double v : w.w) w_ok = w_ok && v > 0.0 && v < 1.0;
    // The weights enter the adversarial loss as constants: no gradient reaches c.
    const BatchWeights bw = losses::similarity_weights(net, b.target.x);
    ag::Graph h;
    BatchForward fw2(h, net, b.source, b.target);
    const nn::GroupId c[] = {nn::GroupId::c};
    h.backward(losses::loss_d(fw2, bw), net.tensors(c));
    for (ag::Tensor* tensor : net.tensors(c)) {
      for (double v : tensor->grad->values()) w_ok = w_ok && v == 0.0;
      tensor->grad.reset();
    }
  }
  std::ostringstream d;
  d << "c/SSN fixed by DMN: " << c_fixed << ", DMN fixed by SSN: " << dmn_fixed << ", mse1==mse2: " << mse_equal
    << ", w in (0,1) and gradient-free: " << w_ok;
  return {c_fixed && dmn_fixed && mse_equal && w_ok, d.str()};
}

// ------------------------------------------------------ 5-7. experiments

double mean_os(std::span<const experiment::JobResult> rs) { return experiment::summarize("", rs).mean_os; }

struct Sweep {
  std::vector<double> mts, baseline;
  std::vector<experiment::JobResult> mts_15;
  double seconds = 0.0;
};

Sweep gap_sweep() {
  std::vector<experiment::Job> jobs;
  for (double rot : experiment::kBenchmarkRotations) {
    for (Variant v : {Variant::full, Variant::source_only}) {
      for (std::size_t s = 0; s < experiment::kBenchmarkSeeds; ++s) {
        jobs.push_back({experiment::benchmark_shift(rot, s), experiment::benchmark_hyperparams(s, v)});
      }
    }
  }
  const auto t0 = Clock::now();
  const auto results = experiment::run_jobs(jobs, true);
  Sweep out;
  out.seconds = seconds_since(t0);
  const std::size_t n = experiment::kBenchmarkSeeds;
  for (std::size_t r = 0; r < std::size(experiment::kBenchmarkRotations); ++r) {
    const std::span<const experiment::JobResult> full(results.data() + 2 * r * n, n);
    const std::span<const experiment::JobResult> base(results.data() + (2 * r + 1) * n, n);
    out.mts.push_back(mean_os(full));
    out.baseline.push_back(mean_os(base));
    if (r == 0) out.mts_15.assign(full.begin(), full.end());
  }
  return out;
}

Outcome gap_benchmark(const Sweep& s) {
  bool gap = true, monotone = true;
  std::ostringstream d;
  d.precision(3);
  d << std::fixed;
  for (std::size_t r = 0; r < s.mts.size(); ++r) {
    const double diff = s.mts[r] - s.baseline[r];
    gap = gap && diff >= 0.05;
    if (r > 0) monotone = monotone && s.mts[r] <= s.mts[r - 1];
    d << experiment::kBenchmarkRotations[r] << "deg MTS " << s.mts[r] << " base " << s.baseline[r] << " diff "
      << diff << "; ";
  }
  d << "monotone " << (monotone ? "yes" : "no") << ", " << s.seconds << " s";
  return {gap && monotone && s.seconds < 600.0, d.str()};
}

Outcome ablation(const Sweep& s) {
  const Variant compared[] = {Variant::no_w, Variant::no_mutual, Variant::no_ds, Variant::no_mse};
  std::vector<experiment::Job> jobs;
  for (Variant v : compared) {
    for (std::size_t k = 0; k < experiment::kBenchmarkSeeds; ++k) {
      jobs.push_back({experiment::benchmark_shift(75.0, k), experiment::benchmark_hyperparams(k, v)});
    }
  }
  const auto results = experiment::run_jobs(jobs, true);
  const double full = s.mts.back();
  bool pass = true;
  std::ostringstream d;
  d.precision(3);
  d << std::fixed << "75deg full " << full;
  for (std::size_t i = 0; i < std::size(compared); ++i) {
    const std::span<const experiment::JobResult> block(results.data() + i * experiment::kBenchmarkSeeds,
                                                       experiment::kBenchmarkSeeds);
    const double os = mean_os(block);
    pass = pass && full >= os;
    d << ", " << to_string(compared[i]) << " " << os;
  }
  return {pass, d.str()};
}

Outcome confusion(const Sweep& s) {
  // Judged on the mean over the seeds, as the other multi-seed criteria are.
  double mean = 0.0;
  std::size_t outside = 0;
  std::ostringstream d;
  d.precision(3);
  d << std::fixed << "15deg per seed:";
  for (const experiment::JobResult& r : s.mts_15) {
    mean += r.confusion / static_cast<double>(s.mts_15.size());
    if (r.confusion < 0.35 || r.confusion > 0.65) ++outside;
    d << ' ' << r.confusion;
  }
  d << ", mean " << mean << ", seeds outside band " << outside;
  return {mean >= 0.35 && mean <= 0.65, d.str()};
}

// ---------------------------------------------------------- 8. determinism

Outcome determinism() {
  const data::ShiftConfig shift = experiment::benchmark_shift(45.0, 0);
  Hyperparams hp = experiment::benchmark_hyperparams(0);
  hp.epochs = 20;
  const data::DomainPair pair = data::generate(shift);
  auto run = [&] {
    const trainer::TrainResult r = trainer::train(pair.source, pair.target, hp);
    std::ostringstream h, c;
    trainer::write_history_csv(h, r.history);
    nn::write_checkpoint(c, r.network, r.inference.to_string());
    return std::pair{h.str(), c.str()};
  };
  const auto a = run(), b = run();
  const bool pass = a.first == b.first && a.second == b.second;
  std::ostringstream d;
  d << "history " << a.first.size() << " bytes, checkpoint " << a.second.size() << " bytes, identical: "
    << (pass ? "yes" : "no");
  return {pass, d.str()};
}

}  // namespace

int main() {
  bool all = true;
  report(1, "gradient suite", gradient_suite(), all);
  report(2, "hand values", hand_values(), all);
  report(3, "metric identity", metric_identity(), all);
  report(4, "structural invariants", structural_invariants(), all);
  const Sweep sweep = gap_sweep();
  report(5, "gap benchmark", gap_benchmark(sweep), all);
  report(6, "ablation direction", ablation(sweep), all);
  report(7, "domain confusion", confusion(sweep), all);
  report(8, "determinism", determinism(), all);
  std::printf("%s\n", all ? "ALL PASS" : "SOME CRITERIA FAILED");
  return all ? 0 : 1;
}
