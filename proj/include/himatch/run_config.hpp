#pragma once

#include <string>
#include <vector>

#include "himatch/eval.hpp"
#include "himatch/flow.hpp"
#include "himatch/learn.hpp"
#include "himatch/match.hpp"
#include "himatch/match3d.hpp"

namespace himatch {

// Everything the tool can read from a key=value config file, with the
// defaults used when a key (or the whole file) is absent. Level descriptor
// settings are kept flat and materialized by make_levels() so config lines
// can arrive in any order.
struct RunConfig {
  std::vector<int> level_scales{1, 4};
  int cell_size = 4;
  int grid = 3;
  int orientation_bins = 8;
  int head_out_dim = 64;

  TrainConfig train;
  MatchConfig match;
  FlowConfig flow;
  Match3dConfig match3d;
  SynthSpec synth;
  std::vector<double> pck_thresholds{1, 2, 5, 10, 16};

  std::vector<LevelConfig> make_levels() const;
};

// Accepts "key = value" lines, blank lines and '#' comments. Throws
// ConfigError on unknown keys or unparseable values.
void apply_config_entry(RunConfig& cfg, const std::string& key, const std::string& value);
RunConfig read_run_config(const std::string& path);

// key=value text that read_run_config parses back to the same settings.
std::string serialize_run_config(const RunConfig& cfg);

}  // namespace himatch
