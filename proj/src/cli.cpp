#include "himatch/cli.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>

#include "CLI11.hpp"
#include "himatch/error.hpp"
#include "himatch/eval.hpp"
#include "himatch/flow.hpp"
#include "himatch/image.hpp"
#include "himatch/learn.hpp"
#include "himatch/match.hpp"
#include "himatch/match3d.hpp"
#include "himatch/run_config.hpp"

namespace himatch {

namespace {

RunConfig load_config(const std::string& path) {
  if (path.empty()) return RunConfig{};
  return read_run_config(path);
}

// Image paths inside a correspondence file are resolved against the file's
// own directory unless they already resolve as given.
std::string resolve_near(const std::string& base_file, const std::string& p) {
  namespace fs = std::filesystem;
  const fs::path pp(p);
  if (pp.is_absolute() || fs::exists(pp)) return p;
  return (fs::path(base_file).parent_path() / pp).string();
}

Image load_gray(const std::string& path) { return to_grayscale(load_pnm(path)); }

std::ofstream open_out(const std::string& path) {
  std::ofstream f(path);
  if (!f) throw IoError("cannot write " + path);
  f.precision(17);
  return f;
}

struct Options {
  std::string config;
  std::string out;
  std::string loss_csv;
  std::string mask;
  std::uint64_t seed = 0;
  bool seed_set = false;
  std::vector<std::string> corr_files;
  std::string ref, tgt, heads, pred, truth, image;
};

// Largest pixel coordinate sampleable at every level: the scale-f map has
// floor(extent / f) cells, covering pixels up to (cells - 1) * f.
Point2 coverage_limit(const std::vector<LevelConfig>& levels, int w, int h) {
  Point2 lim{static_cast<double>(w - 1), static_cast<double>(h - 1)};
  for (const LevelConfig& l : levels) {
    lim.x = std::min(lim.x, static_cast<double>((w / l.scale_factor - 1) * l.scale_factor));
    lim.y = std::min(lim.y, static_cast<double>((h / l.scale_factor - 1) * l.scale_factor));
  }
  return lim;
}

int cmd_train(const Options& o, std::ostream& out) {
  RunConfig cfg = load_config(o.config);
  if (o.seed_set) cfg.train.rng_seed = o.seed;
  const std::vector<LevelConfig> levels = cfg.make_levels();

  std::size_t skipped = 0;
  std::vector<TrainPair> data;
  for (const std::string& file : o.corr_files) {
    const CorrespondenceSet set = read_correspondences(file);
    TrainPair pair;
    pair.ref = load_gray(resolve_near(file, set.ref_id));
    pair.tgt = load_gray(resolve_near(file, set.tgt_id));
    // Keep only points every level can sample, on both sides of the pair.
    const Point2 rl = coverage_limit(levels, pair.ref.width, pair.ref.height);
    const Point2 tl = coverage_limit(levels, pair.tgt.width, pair.tgt.height);
    for (const Correspondence& c : set.items) {
      if (c.label != 1) continue;
      if (c.x.x > rl.x || c.x.y > rl.y || c.xp.x > tl.x || c.xp.y > tl.y) {
        ++skipped;
        continue;
      }
      pair.positives.push_back(c);
    }
    data.push_back(std::move(pair));
  }
  if (skipped > 0)
    out << "skipped " << skipped << " correspondences outside deep-level coverage\n";

  const TrainResult result = train(data, levels, cfg.train);
  write_heads(result.heads, o.out);

  const std::string csv_path = o.loss_csv.empty() ? o.out + ".loss.csv" : o.loss_csv;
  std::ofstream csv = open_out(csv_path);
  csv << "iter,loss\n";
  for (std::size_t i = 0; i < result.loss_log.size(); ++i)
    csv << i + 1 << "," << result.loss_log[i] << "\n";

  out << "trained " << result.heads.size() << " heads over " << data.size()
      << " pairs, " << cfg.train.iterations << " iterations\n";
  if (!result.loss_log.empty())
    out << "loss " << result.loss_log.front() << " -> " << result.loss_log.back() << "\n";
  out << "heads: " << o.out << "\nloss log: " << csv_path << "\n";
  return kExitOk;
}

int cmd_match(const Options& o, std::ostream& out) {
  const RunConfig cfg = load_config(o.config);
  const std::vector<LevelConfig> levels = cfg.make_levels();
  const std::vector<EmbeddingHead> heads = read_heads(o.heads);
  const FeatureHierarchy ref = extract_hierarchy(load_gray(o.ref), levels, heads);
  const FeatureHierarchy tgt = extract_hierarchy(load_gray(o.tgt), levels, heads);
  const DenseMatches m = dense_match(ref, tgt, cfg.match);
  write_matches(m, o.out);
  std::size_t valid = 0;
  for (const char v : m.valid) valid += v != 0;
  out << m.results.size() << " matches (" << valid << " valid) -> " << o.out << "\n";
  return kExitOk;
}

int cmd_flow(const Options& o, std::ostream& out) {
  const RunConfig cfg = load_config(o.config);
  const Image ref = load_gray(o.ref);
  const Image tgt = load_gray(o.tgt);
  if (ref.width != tgt.width || ref.height != tgt.height)
    throw DimensionMismatch("flow: " + std::to_string(ref.width) + "x" +
                            std::to_string(ref.height) + " vs " +
                            std::to_string(tgt.width) + "x" + std::to_string(tgt.height));

  const std::vector<LevelConfig> levels = cfg.make_levels();
  const std::vector<EmbeddingHead> heads = read_heads(o.heads);
  const FeatureHierarchy href = extract_hierarchy(ref, levels, heads);
  const FeatureHierarchy htgt = extract_hierarchy(tgt, levels, heads);

  const DenseMatches fwd = dense_match(href, htgt, cfg.match);
  const DenseMatches bwd = dense_match(htgt, href, cfg.match);
  const std::vector<SparseMatch> consistent =
      forward_backward_filter(fwd, bwd, cfg.flow.fb_threshold);
  const std::vector<SparseMatch> seeds =
      motion_window_filter(consistent, cfg.flow.motion_window);
  const FlowField flow = interpolate_flow(seeds, ref.width, ref.height, cfg.flow);
  write_flo(flow, o.out);

  out << fwd.results.size() << " forward matches, " << consistent.size()
      << " consistent, " << seeds.size() << " seeds -> " << o.out << "\n";
  return kExitOk;
}

int cmd_eval_pck(const Options& o, std::ostream& out) {
  const RunConfig cfg = load_config(o.config);
  const CorrespondenceSet pred = read_correspondences(o.pred);
  const CorrespondenceSet gt = read_correspondences(o.truth);
  if (pred.items.size() != gt.items.size())
    throw LengthMismatch("eval-pck: " + std::to_string(pred.items.size()) +
                         " predictions vs " + std::to_string(gt.items.size()) + " truths");
  std::vector<Point2> p, t;
  for (std::size_t i = 0; i < pred.items.size(); ++i) {
    if (std::abs(pred.items[i].x.x - gt.items[i].x.x) > 1e-9 ||
        std::abs(pred.items[i].x.y - gt.items[i].x.y) > 1e-9)
      throw DimMismatch("eval-pck: query points disagree at entry " + std::to_string(i));
    p.push_back(pred.items[i].xp);
    t.push_back(gt.items[i].xp);
  }
  const PckCurve curve = pck(p, t, cfg.pck_thresholds);

  std::ostringstream csv;
  csv.precision(17);
  csv << "theta,pck\n";
  for (std::size_t i = 0; i < curve.thresholds.size(); ++i)
    csv << curve.thresholds[i] << "," << curve.values[i] << "\n";
  out << csv.str();
  if (!o.out.empty()) open_out(o.out) << csv.str();
  return kExitOk;
}

std::vector<char> load_mask(const std::string& path, int w, int h) {
  if (path.empty()) return std::vector<char>(static_cast<std::size_t>(w) * h, 1);
  const Image img = load_gray(path);
  if (img.width != w || img.height != h)
    throw DimensionMismatch("mask " + std::to_string(img.width) + "x" +
                            std::to_string(img.height) + " vs flow " + std::to_string(w) +
                            "x" + std::to_string(h));
  std::vector<char> mask(img.data.size());
  for (std::size_t i = 0; i < img.data.size(); ++i) mask[i] = img.data[i] > 0 ? 1 : 0;
  return mask;
}

int cmd_eval_flow(const Options& o, std::ostream& out) {
  const FlowField flow = read_flo(o.pred);
  const FlowField gt = read_flo(o.truth);
  const std::vector<char> mask = load_mask(o.mask, gt.width, gt.height);
  std::ostringstream csv;
  csv.precision(17);
  csv << "metric,value\n";
  csv << "epe," << epe(flow, gt, mask) << "\n";
  csv << "fl," << fl_outlier_rate(flow, gt, mask) << "\n";
  out << csv.str();
  if (!o.out.empty()) open_out(o.out) << csv.str();
  return kExitOk;
}

int cmd_synth(const Options& o, std::ostream& out) {
  RunConfig cfg = load_config(o.config);
  if (o.seed_set) cfg.synth.rng_seed = o.seed;
  const Image src = load_pnm(o.image);
  const SynthPair pair = synth_pair(src, cfg.synth);

  const std::string tgt_path = o.out + (src.channels == 3 ? "_tgt.ppm" : "_tgt.pgm");
  const std::string corr_path = o.out + "_corr.txt";
  const std::string flo_path = o.out + "_gt.flo";
  save_pnm(pair.tgt, tgt_path);
  CorrespondenceSet set;
  set.ref_id = o.image;
  set.tgt_id = tgt_path;
  set.items = pair.truth;
  write_correspondences(set, corr_path);
  write_flo(pair.truth_flow, flo_path);

  out.precision(17);
  out << "transform s=" << pair.s << " theta=" << pair.theta << " t=(" << pair.tx << ","
      << pair.ty << ")\n"
      << pair.truth.size() << " ground-truth correspondences\n"
      << tgt_path << "\n" << corr_path << "\n" << flo_path << "\n";
  return kExitOk;
}

int cmd_match3d(const Options& o, std::ostream& out) {
  const RunConfig cfg = load_config(o.config);
  Rng rng(o.seed_set ? o.seed : cfg.train.rng_seed);

  // Self-contained demo: a seeded random grid matched against itself over
  // the full-grid search region.
  constexpr int kEdge = 60;
  VoxelGrid grid = VoxelGrid::make({0, 0, 0}, kEdge, kEdge, kEdge);
  for (float& v : grid.occ) v = static_cast<float>(rng.uniform());
  const Box3 region{{0, 0, 0}, {kEdge, kEdge, kEdge}};
  const Point3 query{kEdge / 2.0, kEdge / 2.0, kEdge / 2.0};
  const DescriptorOracle3 oracle = pooled_occupancy_oracle(cfg.match3d.subvolume_edge);
  const Match3dResult r = match_3d(grid, grid, query, region, cfg.match3d, oracle);

  std::ostringstream csv;
  csv.precision(17);
  csv << "key,value\n";
  csv << "coarse_candidates," << r.coarse_candidates << "\n";
  csv << "query," << r.query.x << " " << r.query.y << " " << r.query.z << "\n";
  csv << "coarse," << r.coarse.x << " " << r.coarse.y << " " << r.coarse.z << "\n";
  csv << "refined," << r.refined.x << " " << r.refined.y << " " << r.refined.z << "\n";
  csv << "d_coarse," << r.d_coarse << "\n";
  csv << "d_fine," << r.d_fine << "\n";
  out << csv.str();
  if (!o.out.empty()) open_out(o.out) << csv.str();
  return kExitOk;
}

int cmd_export_features(const Options& o, std::ostream& out) {
  const RunConfig cfg = load_config(o.config);
  const std::vector<LevelConfig> levels = cfg.make_levels();
  const Image img = load_gray(o.image);
  FeatureHierarchy hier;
  if (o.heads.empty()) {
    hier = extract_base_hierarchy(img, levels);
  } else {
    hier = extract_hierarchy(img, levels, read_heads(o.heads));
  }
  for (std::size_t l = 0; l < hier.maps.size(); ++l) {
    const std::string path = o.out + "_level" + std::to_string(hier.maps[l].level_id) + ".hfm";
    write_feature_map(hier.maps[l], path);
    out << path << " (" << hier.maps[l].width << "x" << hier.maps[l].height << "x"
        << hier.maps[l].dim << ")\n";
  }
  return kExitOk;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"hierarchical descriptor learning and coarse-to-fine matching"};
  app.require_subcommand(1);
  Options o;

  const auto add_common = [&](CLI::App* cmd, bool with_out) {
    cmd->add_option("--config", o.config, "key = value settings file");
    if (with_out) cmd->add_option("--out", o.out, "output path")->required();
    else cmd->add_option("--out", o.out, "output path");
    cmd->add_option("--seed", o.seed, "override the config seed")
        ->each([&](const std::string&) { o.seed_set = true; });
  };

  CLI::App* train_cmd = app.add_subcommand("train", "learn embedding heads");
  train_cmd->add_option("correspondences", o.corr_files, "correspondence files (PAIR header)")
      ->required();
  add_common(train_cmd, true);
  train_cmd->add_option("--loss-csv", o.loss_csv, "loss log path (default <out>.loss.csv)");

  CLI::App* match_cmd = app.add_subcommand("match", "dense matches between two images");
  match_cmd->add_option("ref", o.ref, "reference image")->required();
  match_cmd->add_option("tgt", o.tgt, "target image")->required();
  match_cmd->add_option("heads", o.heads, "trained heads file")->required();
  add_common(match_cmd, true);

  CLI::App* flow_cmd = app.add_subcommand("flow", "dense flow via match/filter/interpolate");
  flow_cmd->add_option("ref", o.ref, "reference image")->required();
  flow_cmd->add_option("tgt", o.tgt, "target image")->required();
  flow_cmd->add_option("heads", o.heads, "trained heads file")->required();
  add_common(flow_cmd, true);

  CLI::App* pck_cmd = app.add_subcommand("eval-pck", "PCK curve of predictions vs truth");
  pck_cmd->add_option("pred", o.pred, "predicted correspondences")->required();
  pck_cmd->add_option("truth", o.truth, "ground-truth correspondences")->required();
  add_common(pck_cmd, false);

  CLI::App* evf_cmd = app.add_subcommand("eval-flow", "EPE and Fl outlier rate of a .flo");
  evf_cmd->add_option("pred", o.pred, "predicted .flo")->required();
  evf_cmd->add_option("truth", o.truth, "ground-truth .flo")->required();
  evf_cmd->add_option("--mask", o.mask, "PGM region mask (nonzero = evaluate)");
  add_common(evf_cmd, false);

  CLI::App* synth_cmd = app.add_subcommand("synth", "ground-truthed warped pair");
  synth_cmd->add_option("image", o.image, "source image")->required();
  add_common(synth_cmd, true);

  CLI::App* m3d_cmd = app.add_subcommand("match3d", "two-stage subvolume search demo");
  add_common(m3d_cmd, false);

  CLI::App* exf_cmd = app.add_subcommand("export-features", "write per-level feature maps");
  exf_cmd->add_option("image", o.image, "source image")->required();
  exf_cmd->add_option("heads", o.heads, "optional trained heads file");
  add_common(exf_cmd, true);

  try {
    std::vector<const char*> argv;
    argv.reserve(args.size() + 1);
    argv.push_back("himatch");
    for (const std::string& a : args) argv.push_back(a.c_str());
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (app.got_subcommand(train_cmd)) return cmd_train(o, out);
    if (app.got_subcommand(match_cmd)) return cmd_match(o, out);
    if (app.got_subcommand(flow_cmd)) return cmd_flow(o, out);
    if (app.got_subcommand(pck_cmd)) return cmd_eval_pck(o, out);
    if (app.got_subcommand(evf_cmd)) return cmd_eval_flow(o, out);
    if (app.got_subcommand(synth_cmd)) return cmd_synth(o, out);
    if (app.got_subcommand(m3d_cmd)) return cmd_match3d(o, out);
    if (app.got_subcommand(exf_cmd)) return cmd_export_features(o, out);
    err << "no command selected\n";
    return kExitUsage;
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitData;
  }
}

}  // namespace himatch
