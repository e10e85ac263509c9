#pragma once

// Seeded multi-run experiments: the desk-scale rotation benchmark and the
// ablation sweep. Jobs are independent, so they can run on an OpenMP team;
// the serial path is kept as the reference and yields identical results.

#include <cstddef>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "mts/data.hpp"
#include "mts/eval.hpp"
#include "mts/hyperparams.hpp"
#include "mts/trainer.hpp"

namespace mts::experiment {

/// Declared desk-scale setting of the rotation benchmark: 2-D, K=3, U=2,
/// sigma 0.8, 300 + 300 samples, lr 0.01 with step decay, batch 64, 300
/// epochs. Seed index s uses data and training seed 100 + s.
data::ShiftConfig benchmark_shift(double rotation_deg, std::size_t seed_index);
Hyperparams benchmark_hyperparams(std::size_t seed_index, Variant variant = Variant::full);

inline constexpr std::size_t kBenchmarkSeeds = 5;
inline constexpr double kBenchmarkRotations[] = {15.0, 45.0, 75.0};

struct Job {
  data::ShiftConfig shift;
  Hyperparams hp;
};

struct JobResult {
  eval::EvalReport report;
  /// Discriminator accuracy on known-class samples (source vs target).
  double confusion = 0.0;
  trainer::TrainResult train;
};

/// Generates the data, trains hp.variant and evaluates on the target.
JobResult run_job(const Job& job);

/// Runs every job; `parallel` distributes jobs over OpenMP threads. Results
/// are in job order and do not depend on the thread count.
std::vector<JobResult> run_jobs(std::span<const Job> jobs, bool parallel);

struct Summary {
  std::string label;
  double mean_os = 0.0;
  double mean_os_star = 0.0;
  double mean_unk = 0.0;
  double mean_confusion = 0.0;
  std::size_t runs = 0;
};

Summary summarize(const std::string& label, std::span<const JobResult> results);

/// Aligned text table, one row per summary.
void write_comparison_table(std::ostream& out, std::span<const Summary> rows);
/// `variant,mean_os,mean_os_star,mean_unk,mean_confusion,runs`
void write_comparison_csv(std::ostream& out, std::span<const Summary> rows);

/// Variants compared by the ablation sweep, in table order.
inline constexpr Variant kAblationVariants[] = {Variant::full, Variant::no_w, Variant::no_mutual,
                                                Variant::no_ds, Variant::no_mse, Variant::no_s};

}  // namespace mts::experiment
