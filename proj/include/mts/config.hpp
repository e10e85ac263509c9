#pragma once

// Flat `key = value` run configuration. Blank lines and lines starting with
// '#' are ignored; unknown keys and malformed values are rejected with the
// offending line number.
//
// Keys (defaults in parentheses):
//   dataset:  dim (2) known_classes (3) unknown_classes (2) rotation_deg (0)
//             translation (empty, comma separated) noise_sigma (0.5)
//             n_source (300) n_target (300) data_seed (47)
//   training: alpha (0.8) beta (0.5) lr (1e-4) momentum (0.9)
//             weight_decay (5e-4) batch_size (32) epochs (300)
//             hidden_dim (32) feature_dim (16) disc_hidden (16) seed (47)
//             unknown_weight_mode (one_minus_w) lr_decay (false)
//             unknown_threshold (0.5) variant (full)
//   output:   out_dir (run)

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "mts/data.hpp"
#include "mts/hyperparams.hpp"

namespace mts::config {

struct RunConfig {
  data::ShiftConfig shift;
  Hyperparams hp;
  std::string out_dir = "run";
};

/// Throws ParseError naming the line for unknown keys or bad values.
RunConfig parse_run_config(std::istream& in);
RunConfig load_run_config(const std::filesystem::path& path);
/// Every key with its resolved value, in the documented order. Parsing the
/// output yields an equal configuration.
void write_run_config(std::ostream& out, const RunConfig& cfg);

/// Applies one `key = value` assignment; returns false for an unknown key.
/// Throws ContractError on a malformed value.
bool assign(RunConfig& cfg, const std::string& key, const std::string& value);

}  // namespace mts::config
