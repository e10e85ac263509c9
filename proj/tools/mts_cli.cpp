// mts: generate data, train, evaluate, run ablations and export feature plots.
//
// Exit codes: 0 ok, 1 usage, 2 data error, 3 numerical abort.

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "mts/config.hpp"
#include "mts/data.hpp"
#include "mts/errors.hpp"
#include "mts/eval.hpp"
#include "mts/experiment.hpp"
#include "mts/nn.hpp"
#include "mts/trainer.hpp"

namespace fs = std::filesystem;
using namespace mts;

namespace {

constexpr int kExitUsage = 1;
constexpr int kExitData = 2;
constexpr int kExitNumeric = 3;

struct Options {
  std::string config;
  std::string data;
  std::string out;
  std::string checkpoint;
  std::string inference;
  std::optional<std::uint64_t> seed;
  std::size_t seeds = 5;
  bool serial = false;
};

config::RunConfig resolve_config(const Options& o) {
  config::RunConfig cfg = o.config.empty() ? config::RunConfig{} : config::load_run_config(o.config);
  if (o.seed) {
    cfg.hp.seed = *o.seed;
    cfg.shift.seed = *o.seed;
  }
  if (!o.out.empty()) cfg.out_dir = o.out;
  return cfg;
}

template <typename Fn>
void write_file(const fs::path& path, Fn fn) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  fn(out);
  if (!out) throw DataError("write failed: " + path.string());
}

void write_config(const fs::path& dir, const config::RunConfig& cfg) {
  write_file(dir / "config.txt", [&](std::ostream& o) { config::write_run_config(o, cfg); });
}

data::DomainPair load_pair(const fs::path& dir, std::size_t classes) {
  data::DomainPair p;
  p.source = data::load_csv(dir / "source.csv", classes, data::Domain::source);
  p.target = data::load_csv(dir / "target.csv", classes, data::Domain::target);
  return p;
}

nn::Checkpoint load_checkpoint(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open checkpoint " + path.string());
  return nn::read_checkpoint(in);
}

int cmd_generate(const Options& o) {
  const config::RunConfig cfg = resolve_config(o);
  const fs::path dir = cfg.out_dir;
  fs::create_directories(dir);
  const data::DomainPair pair = data::generate(cfg.shift);
  data::save_csv(pair.source, dir / "source.csv");
  data::save_csv(pair.target, dir / "target.csv");
  write_config(dir, cfg);
  std::cout << "wrote " << pair.source.size() << " source and " << pair.target.size()
            << " target samples to " << dir.string() << '\n';
  return 0;
}

void save_training(const fs::path& dir, const trainer::TrainHistory& history) {
  write_file(dir / "history.csv", [&](std::ostream& o) { trainer::write_history_csv(o, history); });
}

int cmd_train(const Options& o) {
  const config::RunConfig cfg = resolve_config(o);
  const fs::path dir = cfg.out_dir;
  fs::create_directories(dir);
  const data::DomainPair pair =
      o.data.empty() ? data::generate(cfg.shift) : load_pair(o.data, cfg.shift.known_classes);
  write_config(dir, cfg);

  trainer::TrainResult result;
  try {
    result = trainer::train_variant(pair.source, pair.target, cfg.hp);
  } catch (const trainer::TrainingAborted& e) {
    save_training(dir, e.history());
    throw;
  }
  save_training(dir, result.history);
  write_file(dir / "checkpoint.txt", [&](std::ostream& out) {
    nn::write_checkpoint(out, result.network, result.inference.to_string());
  });
  const eval::EvalReport report = eval::evaluate(result.network, pair.target, result.inference);
  write_file(dir / "report.csv", [&](std::ostream& out) { eval::write_report_csv(out, report); });
  eval::write_report_table(std::cout, report);
  return 0;
}

int cmd_eval(const Options& o) {
  if (o.checkpoint.empty() || o.data.empty()) throw CLI::ValidationError("eval needs --checkpoint and --data");
  const nn::Checkpoint ck = load_checkpoint(o.checkpoint);
  const eval::InferenceRule rule = eval::InferenceRule::parse(o.inference.empty() ? ck.inference : o.inference);
  const data::Dataset target =
      data::load_csv(fs::path(o.data) / "target.csv", ck.network.architecture().classes, data::Domain::target);
  if (target.dim() != ck.network.architecture().input_dim) {
    throw DataError("target feature dimension does not match the checkpoint");
  }
  const eval::EvalReport report = eval::evaluate(ck.network, target, rule);
  const fs::path dir = o.out.empty() ? fs::path(".") : fs::path(o.out);
  fs::create_directories(dir);
  write_file(dir / "report.csv", [&](std::ostream& out) { eval::write_report_csv(out, report); });
  eval::write_report_table(std::cout, report);
  return 0;
}

int cmd_ablate(const Options& o) {
  const config::RunConfig cfg = resolve_config(o);
  const fs::path dir = cfg.out_dir;
  fs::create_directories(dir);
  write_config(dir, cfg);

  std::vector<experiment::Job> jobs;
  for (Variant v : experiment::kAblationVariants) {
    for (std::size_t s = 0; s < o.seeds; ++s) {
      experiment::Job job{cfg.shift, cfg.hp};
      job.shift.seed = cfg.shift.seed + s;
      job.hp.seed = cfg.hp.seed + s;
      job.hp.variant = v;
      jobs.push_back(job);
    }
  }
  const auto results = experiment::run_jobs(jobs, !o.serial);

  std::vector<experiment::Summary> rows;
  for (std::size_t vi = 0; vi < std::size(experiment::kAblationVariants); ++vi) {
    const Variant v = experiment::kAblationVariants[vi];
    const std::span<const experiment::JobResult> block(results.data() + vi * o.seeds, o.seeds);
    for (std::size_t s = 0; s < o.seeds; ++s) {
      const fs::path run = dir / std::string(to_string(v)) / ("seed" + std::to_string(s));
      fs::create_directories(run);
      config::RunConfig run_cfg = cfg;
      run_cfg.shift = jobs[vi * o.seeds + s].shift;
      run_cfg.hp = jobs[vi * o.seeds + s].hp;
      run_cfg.out_dir = run.string();
      write_config(run, run_cfg);
      save_training(run, block[s].train.history);
      write_file(run / "report.csv", [&](std::ostream& out) { eval::write_report_csv(out, block[s].report); });
    }
    rows.push_back(experiment::summarize(std::string(to_string(v)), block));
  }
  write_file(dir / "comparison.csv", [&](std::ostream& out) { experiment::write_comparison_csv(out, rows); });
  write_file(dir / "comparison.txt", [&](std::ostream& out) { experiment::write_comparison_table(out, rows); });
  experiment::write_comparison_table(std::cout, rows);
  return 0;
}

int cmd_plot(const Options& o) {
  if (o.checkpoint.empty() || o.data.empty() || o.out.empty()) {
    throw CLI::ValidationError("plot needs --checkpoint, --data and --out");
  }
  const nn::Checkpoint ck = load_checkpoint(o.checkpoint);
  const std::size_t k = ck.network.architecture().classes;
  const data::DomainPair pair = load_pair(o.data, k);

  struct Point {
    double x, y;
    const char* color;
  };
  std::vector<Point> points;
  auto add = [&](const data::Dataset& ds) {
    const Matrix f = ck.network.forward_features(nn::Extractor::f2, ds.features);
    for (std::size_t i = 0; i < ds.size(); ++i) {
      const char* color = ds.domain == data::Domain::source ? "#ff69b4"
                          : ds.labels[i] == ds.unknown_label() ? "#9e9e9e"
                                                               : "#1f77b4";
      points.push_back({f(i, 0), f.cols() > 1 ? f(i, 1) : 0.0, color});
    }
  };
  add(pair.source);
  add(pair.target);

  double x0 = 0, x1 = 1, y0 = 0, y1 = 1;
  if (!points.empty()) {
    x0 = x1 = points[0].x;
    y0 = y1 = points[0].y;
    for (const Point& p : points) {
      x0 = std::min(x0, p.x);
      x1 = std::max(x1, p.x);
      y0 = std::min(y0, p.y);
      y1 = std::max(y1, p.y);
    }
  }
  const double w = x1 > x0 ? x1 - x0 : 1.0;
  const double h = y1 > y0 ? y1 - y0 : 1.0;
  constexpr double size = 600.0, pad = 20.0;

  const fs::path out = o.out;
  if (out.has_parent_path()) fs::create_directories(out.parent_path());
  write_file(out, [&](std::ostream& s) {
    char buf[160];
    s << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"640\" height=\"640\" viewBox=\"0 0 640 640\">\n";
    s << "<rect width=\"640\" height=\"640\" fill=\"white\"/>\n";
    for (const Point& p : points) {
      const double cx = pad + (p.x - x0) / w * size;
      const double cy = pad + size - (p.y - y0) / h * size;
      std::snprintf(buf, sizeof(buf), "<circle cx=\"%.2f\" cy=\"%.2f\" r=\"3\" fill=\"%s\" fill-opacity=\"0.7\"/>\n",
                    cx, cy, p.color);
      s << buf;
    }
    s << "</svg>\n";
  });
  std::cout << "wrote " << points.size() << " points to " << out.string() << '\n';
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Open-set domain adaptation with mutual-to-separate training"};
  app.require_subcommand(1);
  Options o;

  auto* gen = app.add_subcommand("generate", "write source.csv and target.csv");
  gen->add_option("--config", o.config, "run configuration file");
  gen->add_option("--out", o.out, "output directory");
  gen->add_option("--seed", o.seed, "overrides seed and data_seed");

  auto* train = app.add_subcommand("train", "train one model");
  train->add_option("--config", o.config, "run configuration file");
  train->add_option("--data", o.data, "directory with source.csv and target.csv (generated if omitted)");
  train->add_option("--out", o.out, "output directory");
  train->add_option("--seed", o.seed, "overrides seed and data_seed");

  auto* ev = app.add_subcommand("eval", "evaluate a checkpoint on target.csv");
  ev->add_option("--checkpoint", o.checkpoint, "checkpoint file")->required();
  ev->add_option("--data", o.data, "directory with target.csv")->required();
  ev->add_option("--out", o.out, "directory for report.csv");
  ev->add_option("--inference", o.inference,
                 "override the checkpoint's rule, e.g. \"similarity_threshold 0.5\"");

  auto* ablate = app.add_subcommand("ablate", "compare the ablation variants over several seeds");
  ablate->add_option("--config", o.config, "run configuration file");
  ablate->add_option("--out", o.out, "output directory");
  ablate->add_option("--seed", o.seed, "overrides seed and data_seed");
  ablate->add_option("--seeds", o.seeds, "runs per variant")->check(CLI::PositiveNumber);
  ablate->add_flag("--serial", o.serial, "run jobs one after another");

  auto* plot = app.add_subcommand("plot", "SVG scatter of the first two matching-network features");
  plot->add_option("--checkpoint", o.checkpoint, "checkpoint file")->required();
  plot->add_option("--data", o.data, "directory with source.csv and target.csv")->required();
  plot->add_option("--out", o.out, "SVG file to write")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitUsage;
  }

  try {
    if (*gen) return cmd_generate(o);
    if (*train) return cmd_train(o);
    if (*ev) return cmd_eval(o);
    if (*ablate) return cmd_ablate(o);
    if (*plot) return cmd_plot(o);
  } catch (const CLI::Error& e) {
    std::cerr << "usage error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const NumericalAbort& e) {
    std::cerr << "numerical abort: " << e.what() << '\n';
    return kExitNumeric;
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << '\n';
    return kExitData;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitData;
  }
  return kExitUsage;
}
