#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "himatch/features.hpp"
#include "himatch/rng.hpp"
#include "himatch/types.hpp"

namespace himatch {

// A labeled pair of locations in original-image pixels: x in the reference,
// xp in the target. label 1 = same point, 0 = mined negative.
struct Correspondence {
  Point2 x;
  Point2 xp;
  int label = 1;
};

struct CorrespondenceSet {
  std::string ref_id;
  std::string tgt_id;
  std::vector<Correspondence> items;
};

CorrespondenceSet read_correspondences(const std::string& path);
void write_correspondences(const CorrespondenceSet& set, const std::string& path);

struct TrainConfig {
  double margin = 1.0;
  int positive_window = 8;  // exclusion radius (original pixels) for mining
  double learning_rate = 1e-3;
  int iterations = 2000;
  double weight_decay = 1e-4;
  int pairs_per_batch = 3;
  int correspondences_per_pair = 1000;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  std::uint64_t rng_seed = 1;
};

// ||u - v|| between two unit descriptors; lives in [0, 2].
double pair_distance(std::span<const double> u, std::span<const double> v);

// Distance at one hierarchy level between the descriptors sampled at
// x / f and xp / f (bilinear + renormalize). Points are original pixels.
double pair_distance(const FeatureHierarchy& ref, const FeatureHierarchy& tgt,
                     int level, Point2 x, Point2 xp);

// y * d^2 + (1 - y) * max(0, margin - d)^2
double ccl_pair_loss(double d, int label, double margin);

// Sum of ccl_pair_loss over every correspondence at every level, sampling
// descriptors at x / scale and xp / scale with bilinear + renormalize.
// triplets_per_level[l] indexes hierarchy level l.
double total_loss(const FeatureHierarchy& ref, const FeatureHierarchy& tgt,
                  const std::vector<std::vector<Correspondence>>& triplets_per_level,
                  double margin);

struct HeadGradients {
  std::vector<Mat> d_weights;                // parallel to heads
  std::vector<std::vector<double>> d_bias;

  void zero();
};

// Data loss and its analytic gradient w.r.t. every head parameter, with
// weight decay added to the gradient (not the returned loss). Head feature
// maps are recomputed from the base hierarchies internally.
double loss_and_gradients(const FeatureHierarchy& base_ref,
                          const FeatureHierarchy& base_tgt,
                          const std::vector<EmbeddingHead>& heads,
                          const std::vector<std::vector<Correspondence>>& triplets_per_level,
                          const TrainConfig& cfg, HeadGradients& grads);

// For each positive, the target cell minimizing descriptor distance to the
// reference point, excluding a disk of radius ceil(window / f) * f original
// pixels around the true location. Ties prefer the lowest row-major cell.
// Returned negatives are in original pixels (cell * scale_factor).
std::vector<Correspondence> mine_hard_negatives(const FeatureMap& ref_map,
                                                const FeatureMap& tgt_map,
                                                const std::vector<Correspondence>& positives,
                                                int positive_window);

struct AdamState {
  std::vector<double> m;
  std::vector<double> v;
  long t = 0;

  explicit AdamState(std::size_t n) : m(n, 0.0), v(n, 0.0) {}
};

// One bias-corrected step; updates params in place.
void adam_step(std::span<double> params, std::span<const double> grads,
               AdamState& state, const TrainConfig& cfg);

// Flat parameter vector layout shared by the trainer and the gradient
// checker: levels in ascending order, W row-major then bias.
std::size_t head_param_count(const std::vector<EmbeddingHead>& heads);
std::vector<double> flatten_heads(const std::vector<EmbeddingHead>& heads);
void unflatten_heads(std::span<const double> params, std::vector<EmbeddingHead>& heads);
std::vector<double> flatten_gradients(const HeadGradients& grads);

// Xavier-uniform weights (+-sqrt(6 / (fan_in + fan_out))), zero bias.
std::vector<EmbeddingHead> init_heads(const std::vector<LevelConfig>& levels, Rng& rng);

struct TrainPair {
  Image ref;
  Image tgt;
  std::vector<Correspondence> positives;  // label 1, original pixels
};

struct TrainResult {
  std::vector<EmbeddingHead> heads;
  std::vector<double> loss_log;  // data loss per iteration
};

// Full loop: per iteration sample pairs and positives, mine one hard
// negative per positive per level, take one ADAM step on the summed loss.
TrainResult train(const std::vector<TrainPair>& data,
                  const std::vector<LevelConfig>& levels, const TrainConfig& cfg);

}  // namespace himatch
