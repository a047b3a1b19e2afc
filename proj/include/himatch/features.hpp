#pragma once

#include <vector>

#include "himatch/feature_map.hpp"
#include "himatch/image.hpp"
#include "himatch/types.hpp"

namespace himatch {

// One level of the descriptor pyramid. base_dim() is the raw gradient-
// histogram length before any learned projection.
struct LevelConfig {
  int level_id = 0;
  int scale_factor = 1;  // downsampling factor relative to the input image
  int cell_size = 4;     // pixels per histogram cell (after downsampling)
  int grid = 3;          // cells per side in the descriptor support
  int orientation_bins = 8;
  int head_out_dim = 64;  // output dim of the learned per-level projection

  int base_dim() const { return grid * grid * orientation_bins; }
};

// Default two-level pyramid: shallow full-res descriptors (f=1) and deep
// ones at quarter resolution (f=4).
std::vector<LevelConfig> default_levels();

// Learned linear projection applied per cell: z = W^T d + b, then l2.
struct EmbeddingHead {
  int level_id = 0;
  Mat weights;               // base_dim x out_dim
  std::vector<double> bias;  // out_dim

  int in_dim() const { return weights.rows; }
  int out_dim() const { return weights.cols; }
};

std::vector<EmbeddingHead> read_heads(const std::string& path);
void write_heads(const std::vector<EmbeddingHead>& heads, const std::string& path);

// Gradient-orientation histogram descriptors over a grid*cell_size square
// support centered on each pixel of the downsampled image, one descriptor
// per pixel, replicate padding at all borders. Output is NOT normalized;
// the head does that.
FeatureMap compute_base_descriptors(const Image& gray, const LevelConfig& level);

// z = l2(W^T d + b) for every cell. Throws DimMismatch if
// head.in_dim() != map.dim. raw_norms, when given, receives ||W^T d + b||
// per cell — the training backward pass needs it to undo the normalization.
FeatureMap apply_head(const FeatureMap& base, const EmbeddingHead& head,
                      std::vector<double>* raw_norms = nullptr);

struct FeatureHierarchy {
  std::vector<LevelConfig> levels;   // shallow first
  std::vector<FeatureMap> maps;      // parallel to levels

  int level_count() const { return static_cast<int>(maps.size()); }
  const FeatureMap& shallow() const { return maps.front(); }
  const FeatureMap& deep() const { return maps.back(); }
};

// Base descriptors at every level. Throws HierarchyTooShallow for fewer
// than two levels and ImageTooSmall if any level's downsampled image is
// empty.
FeatureHierarchy extract_base_hierarchy(const Image& gray,
                                        const std::vector<LevelConfig>& levels);

// Base hierarchy with each level pushed through its head. heads must be
// parallel to levels.
FeatureHierarchy extract_hierarchy(const Image& gray,
                                   const std::vector<LevelConfig>& levels,
                                   const std::vector<EmbeddingHead>& heads);

}  // namespace himatch
