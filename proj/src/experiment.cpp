#include "mts/experiment.hpp"

#include <charconv>
#include <cstdio>
#include <exception>
#include <ostream>

#include <omp.h>

namespace mts::experiment {

data::ShiftConfig benchmark_shift(double rotation_deg, std::size_t seed_index) {
  data::ShiftConfig cfg;
  cfg.rotation_deg = rotation_deg;
  cfg.noise_sigma = 0.8;
  cfg.n_source = 300;
  cfg.n_target = 300;
  cfg.seed = 100 + seed_index;
  return cfg;
}

Hyperparams benchmark_hyperparams(std::size_t seed_index, Variant variant) {
  Hyperparams hp;
  hp.lr = 0.01;
  hp.lr_decay = true;
  hp.batch_size = 64;
  hp.epochs = 300;
  hp.seed = 100 + seed_index;
  hp.variant = variant;
  return hp;
}

JobResult run_job(const Job& job) {
  const data::DomainPair pair = data::generate(job.shift);
  JobResult r;
  r.train = trainer::train_variant(pair.source, pair.target, job.hp);
  r.report = eval::evaluate(r.train.network, pair.target, r.train.inference);
  r.confusion = eval::discriminator_confusion(r.train.network, pair.source.known_only().features,
                                              pair.target.known_only().features);
  return r;
}

std::vector<JobResult> run_jobs(std::span<const Job> jobs, bool parallel) {
  std::vector<JobResult> out(jobs.size());
  if (!parallel) {
    for (std::size_t i = 0; i < jobs.size(); ++i) out[i] = run_job(jobs[i]);
    return out;
  }
  // Exceptions may not cross the parallel region; keep the first by job index.
  std::vector<std::exception_ptr> errors(jobs.size());
  const auto n = static_cast<std::ptrdiff_t>(jobs.size());
#pragma omp parallel for schedule(dynamic, 1)
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    try {
      out[static_cast<std::size_t>(i)] = run_job(jobs[static_cast<std::size_t>(i)]);
    } catch (...) {
      errors[static_cast<std::size_t>(i)] = std::current_exception();
    }
  }
  for (const auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
  return out;
}

Summary summarize(const std::string& label, std::span<const JobResult> results) {
  Summary s;
  s.label = label;
  s.runs = results.size();
  if (results.empty()) return s;
  for (const JobResult& r : results) {
    s.mean_os += r.report.os;
    s.mean_os_star += r.report.os_star;
    s.mean_unk += r.report.unk;
    s.mean_confusion += r.confusion;
  }
  const double n = static_cast<double>(results.size());
  s.mean_os /= n;
  s.mean_os_star /= n;
  s.mean_unk /= n;
  s.mean_confusion /= n;
  return s;
}

void write_comparison_table(std::ostream& out, std::span<const Summary> rows) {
  char line[128];
  std::snprintf(line, sizeof(line), "%-12s %8s %8s %8s %10s %5s\n", "variant", "OS", "OS*", "Unk",
                "confusion", "runs");
  out << line;
  for (const Summary& s : rows) {
    std::snprintf(line, sizeof(line), "%-12s %8.4f %8.4f %8.4f %10.4f %5zu\n", s.label.c_str(),
                  s.mean_os, s.mean_os_star, s.mean_unk, s.mean_confusion, s.runs);
    out << line;
  }
}

void write_comparison_csv(std::ostream& out, std::span<const Summary> rows) {
  auto num = [&out](double v) {
    char buf[32];
    const auto res = std::to_chars(buf, buf + sizeof(buf), v);
    out.write(buf, res.ptr - buf);
  };
  out << "variant,mean_os,mean_os_star,mean_unk,mean_confusion,runs\n";
  for (const Summary& s : rows) {
    out << s.label << ',';
    num(s.mean_os);
    out << ',';
    num(s.mean_os_star);
    out << ',';
    num(s.mean_unk);
    out << ',';
    num(s.mean_confusion);
    out << ',' << s.runs << '\n';
  }
}

}  // namespace mts::experiment
