#include "himatch/run_config.hpp"

#include <fstream>
#include <sstream>

#include "himatch/error.hpp"

namespace himatch {

std::vector<LevelConfig> RunConfig::make_levels() const {
  if (level_scales.empty()) throw ConfigError("levels: need at least one scale factor");
  std::vector<LevelConfig> out;
  out.reserve(level_scales.size());
  for (std::size_t i = 0; i < level_scales.size(); ++i) {
    LevelConfig c;
    c.level_id = static_cast<int>(i);
    c.scale_factor = level_scales[i];
    c.cell_size = cell_size;
    c.grid = grid;
    c.orientation_bins = orientation_bins;
    c.head_out_dim = head_out_dim;
    out.push_back(c);
  }
  return out;
}

namespace {

std::string trim(const std::string& s) {
  const std::size_t a = s.find_first_not_of(" \t\r\n");
  if (a == std::string::npos) return "";
  const std::size_t b = s.find_last_not_of(" \t\r\n");
  return s.substr(a, b - a + 1);
}

double parse_double(const std::string& key, const std::string& value) {
  std::size_t used = 0;
  double v = 0.0;
  try {
    v = std::stod(value, &used);
  } catch (const std::logic_error&) {
    throw ConfigError(key + ": cannot parse '" + value + "' as a number");
  }
  if (used != value.size())
    throw ConfigError(key + ": trailing characters in '" + value + "'");
  return v;
}

long parse_int(const std::string& key, const std::string& value) {
  std::size_t used = 0;
  long v = 0;
  try {
    v = std::stol(value, &used);
  } catch (const std::logic_error&) {
    throw ConfigError(key + ": cannot parse '" + value + "' as an integer");
  }
  if (used != value.size())
    throw ConfigError(key + ": trailing characters in '" + value + "'");
  return v;
}

long parse_positive(const std::string& key, const std::string& value) {
  const long v = parse_int(key, value);
  if (v <= 0) throw ConfigError(key + ": must be positive, got " + value);
  return v;
}

double parse_nonneg(const std::string& key, const std::string& value) {
  const double v = parse_double(key, value);
  if (v < 0) throw ConfigError(key + ": must be non-negative, got " + value);
  return v;
}

template <typename T, typename Parse>
std::vector<T> parse_list(const std::string& key, const std::string& value, Parse parse) {
  std::vector<T> out;
  std::stringstream ss(value);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (item.empty()) throw ConfigError(key + ": empty list entry");
    out.push_back(static_cast<T>(parse(key, item)));
  }
  if (out.empty()) throw ConfigError(key + ": empty list");
  return out;
}

}  // namespace

void apply_config_entry(RunConfig& cfg, const std::string& raw_key,
                        const std::string& raw_value) {
  const std::string key = trim(raw_key);
  const std::string value = trim(raw_value);
  if (key.empty()) throw ConfigError("empty config key");

  if (key == "levels") {
    cfg.level_scales = parse_list<int>(key, value, parse_positive);
    for (std::size_t i = 1; i < cfg.level_scales.size(); ++i)
      if (cfg.level_scales[i] <= cfg.level_scales[i - 1])
        throw ConfigError("levels: scale factors must strictly increase");
  } else if (key == "cell_size") {
    cfg.cell_size = static_cast<int>(parse_positive(key, value));
  } else if (key == "grid") {
    cfg.grid = static_cast<int>(parse_positive(key, value));
  } else if (key == "orientation_bins") {
    cfg.orientation_bins = static_cast<int>(parse_positive(key, value));
  } else if (key == "head_out_dim") {
    cfg.head_out_dim = static_cast<int>(parse_positive(key, value));
  } else if (key == "margin") {
    cfg.train.margin = parse_double(key, value);
    if (cfg.train.margin <= 0) throw ConfigError("margin: must be positive");
  } else if (key == "positive_window") {
    cfg.train.positive_window = static_cast<int>(parse_positive(key, value));
  } else if (key == "learning_rate") {
    cfg.train.learning_rate = parse_double(key, value);
    if (cfg.train.learning_rate <= 0) throw ConfigError("learning_rate: must be positive");
  } else if (key == "iterations") {
    cfg.train.iterations = static_cast<int>(parse_int(key, value));
    if (cfg.train.iterations < 0) throw ConfigError("iterations: must be >= 0");
  } else if (key == "weight_decay") {
    cfg.train.weight_decay = parse_nonneg(key, value);
  } else if (key == "pairs_per_batch") {
    cfg.train.pairs_per_batch = static_cast<int>(parse_positive(key, value));
  } else if (key == "correspondences_per_pair") {
    cfg.train.correspondences_per_pair = static_cast<int>(parse_positive(key, value));
  } else if (key == "rng_seed") {
    cfg.train.rng_seed = static_cast<std::uint64_t>(parse_int(key, value));
    cfg.synth.rng_seed = cfg.train.rng_seed;
  } else if (key == "refine_radius") {
    cfg.match.refine_radius = static_cast<int>(parse_int(key, value));
    if (cfg.match.refine_radius < 0) throw ConfigError("refine_radius: must be >= 0");
  } else if (key == "dense_stride") {
    cfg.match.dense_stride = static_cast<int>(parse_positive(key, value));
  } else if (key == "fb_threshold") {
    cfg.flow.fb_threshold = parse_nonneg(key, value);
  } else if (key == "motion_window") {
    cfg.flow.motion_window = parse_nonneg(key, value);
  } else if (key == "interp_k") {
    cfg.flow.interp_k = static_cast<int>(parse_positive(key, value));
  } else if (key == "interp_sigma") {
    cfg.flow.interp_sigma = parse_double(key, value);
    if (cfg.flow.interp_sigma <= 0) throw ConfigError("interp_sigma: must be positive");
  } else if (key == "min_affine_neighbors") {
    cfg.flow.min_affine_neighbors = static_cast<int>(parse_positive(key, value));
  } else if (key == "subvolume_edge") {
    cfg.match3d.subvolume_edge = parse_double(key, value);
    if (cfg.match3d.subvolume_edge <= 0) throw ConfigError("subvolume_edge: must be positive");
  } else if (key == "coarse_gap") {
    cfg.match3d.coarse_gap = parse_double(key, value);
    if (cfg.match3d.coarse_gap <= 0) throw ConfigError("coarse_gap: must be positive");
  } else if (key == "fine_gap") {
    cfg.match3d.fine_gap = parse_double(key, value);
    if (cfg.match3d.fine_gap <= 0) throw ConfigError("fine_gap: must be positive");
  } else if (key == "refine_radius_3d") {
    cfg.match3d.refine_radius = parse_nonneg(key, value);
  } else if (key == "synth_kind") {
    if (value == "translation") cfg.synth.kind = SynthKind::translation;
    else if (value == "similarity") cfg.synth.kind = SynthKind::similarity;
    else throw ConfigError("synth_kind: expected translation or similarity, got '" + value + "'");
  } else if (key == "tx_min") {
    cfg.synth.tx_min = parse_double(key, value);
  } else if (key == "tx_max") {
    cfg.synth.tx_max = parse_double(key, value);
  } else if (key == "ty_min") {
    cfg.synth.ty_min = parse_double(key, value);
  } else if (key == "ty_max") {
    cfg.synth.ty_max = parse_double(key, value);
  } else if (key == "rot_max") {
    cfg.synth.rot_max = parse_nonneg(key, value);
  } else if (key == "scale_min") {
    cfg.synth.scale_min = parse_double(key, value);
    if (cfg.synth.scale_min <= 0) throw ConfigError("scale_min: must be positive");
  } else if (key == "scale_max") {
    cfg.synth.scale_max = parse_double(key, value);
    if (cfg.synth.scale_max <= 0) throw ConfigError("scale_max: must be positive");
  } else if (key == "noise_sigma") {
    cfg.synth.noise_sigma = parse_nonneg(key, value);
  } else if (key == "grid_stride") {
    cfg.synth.grid_stride = static_cast<int>(parse_positive(key, value));
  } else if (key == "pck_thresholds") {
    cfg.pck_thresholds = parse_list<double>(key, value, parse_nonneg);
  } else {
    throw ConfigError("unknown config key '" + key + "'");
  }
}

RunConfig read_run_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config " + path);
  RunConfig cfg;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const std::size_t hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    const std::size_t eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError(path + ":" + std::to_string(line_no) + ": expected key = value");
    apply_config_entry(cfg, line.substr(0, eq), line.substr(eq + 1));
  }
  return cfg;
}

std::string serialize_run_config(const RunConfig& cfg) {
  std::ostringstream out;
  out.precision(17);
  out << "levels = ";
  for (std::size_t i = 0; i < cfg.level_scales.size(); ++i)
    out << (i ? "," : "") << cfg.level_scales[i];
  out << "\n";
  out << "cell_size = " << cfg.cell_size << "\n";
  out << "grid = " << cfg.grid << "\n";
  out << "orientation_bins = " << cfg.orientation_bins << "\n";
  out << "head_out_dim = " << cfg.head_out_dim << "\n";
  out << "margin = " << cfg.train.margin << "\n";
  out << "positive_window = " << cfg.train.positive_window << "\n";
  out << "learning_rate = " << cfg.train.learning_rate << "\n";
  out << "iterations = " << cfg.train.iterations << "\n";
  out << "weight_decay = " << cfg.train.weight_decay << "\n";
  out << "pairs_per_batch = " << cfg.train.pairs_per_batch << "\n";
  out << "correspondences_per_pair = " << cfg.train.correspondences_per_pair << "\n";
  out << "rng_seed = " << cfg.train.rng_seed << "\n";
  out << "refine_radius = " << cfg.match.refine_radius << "\n";
  out << "dense_stride = " << cfg.match.dense_stride << "\n";
  out << "fb_threshold = " << cfg.flow.fb_threshold << "\n";
  out << "motion_window = " << cfg.flow.motion_window << "\n";
  out << "interp_k = " << cfg.flow.interp_k << "\n";
  out << "interp_sigma = " << cfg.flow.interp_sigma << "\n";
  out << "min_affine_neighbors = " << cfg.flow.min_affine_neighbors << "\n";
  out << "subvolume_edge = " << cfg.match3d.subvolume_edge << "\n";
  out << "coarse_gap = " << cfg.match3d.coarse_gap << "\n";
  out << "fine_gap = " << cfg.match3d.fine_gap << "\n";
  out << "refine_radius_3d = " << cfg.match3d.refine_radius << "\n";
  out << "synth_kind = "
      << (cfg.synth.kind == SynthKind::translation ? "translation" : "similarity") << "\n";
  out << "tx_min = " << cfg.synth.tx_min << "\n";
  out << "tx_max = " << cfg.synth.tx_max << "\n";
  out << "ty_min = " << cfg.synth.ty_min << "\n";
  out << "ty_max = " << cfg.synth.ty_max << "\n";
  out << "rot_max = " << cfg.synth.rot_max << "\n";
  out << "scale_min = " << cfg.synth.scale_min << "\n";
  out << "scale_max = " << cfg.synth.scale_max << "\n";
  out << "noise_sigma = " << cfg.synth.noise_sigma << "\n";
  out << "grid_stride = " << cfg.synth.grid_stride << "\n";
  out << "pck_thresholds = ";
  for (std::size_t i = 0; i < cfg.pck_thresholds.size(); ++i)
    out << (i ? "," : "") << cfg.pck_thresholds[i];
  out << "\n";
  return out.str();
}

}  // namespace himatch
