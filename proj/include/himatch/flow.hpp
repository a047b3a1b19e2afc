#pragma once

#include <string>
#include <vector>

#include "himatch/match.hpp"
#include "himatch/types.hpp"

namespace himatch {

// Dense displacement field; valid marks pixels carrying a real estimate.
struct FlowField {
  int width = 0;
  int height = 0;
  std::vector<double> u;  // y * width + x
  std::vector<double> v;
  std::vector<char> valid;

  static FlowField make(int w, int h) {
    FlowField f;
    f.width = w;
    f.height = h;
    f.u.assign(static_cast<std::size_t>(w) * h, 0.0);
    f.v.assign(static_cast<std::size_t>(w) * h, 0.0);
    f.valid.assign(static_cast<std::size_t>(w) * h, 0);
    return f;
  }

  std::size_t idx(int x, int y) const { return static_cast<std::size_t>(y) * width + x; }
};

struct SparseMatch {
  Point2 x;   // reference pixel
  Point2 xp;  // matched target pixel
};

struct FlowConfig {
  double fb_threshold = 0.0;  // max forward/backward disagreement, pixels
  double motion_window = 240.0;
  int interp_k = 25;            // neighbors per interpolation query
  double interp_sigma = 25.0;   // Gaussian weight scale, pixels
  int min_affine_neighbors = 3; // below this, fall back to a weighted mean
};

// Keep (x, xh) iff the backward match at round(xh) lands within threshold of
// x. Backward matches live on bwd's sample grid; forward pixels whose
// rounded target falls off that grid or on an invalid entry are dropped.
std::vector<SparseMatch> forward_backward_filter(const DenseMatches& fwd,
                                                 const DenseMatches& bwd,
                                                 double threshold);

// Keep matches with |u| <= w and |v| <= w (inclusive).
std::vector<SparseMatch> motion_window_filter(const std::vector<SparseMatch>& in,
                                              double window);

// Dense field from sparse seeds: for each pixel, fit a weighted-least-squares
// affine motion model over the k nearest seeds (Gaussian weights in distance,
// coordinates centered at the query) and evaluate it at the pixel. Fewer
// than min_affine_neighbors seeds, or a rank-deficient fit, degrade to the
// weighted mean displacement. Throws NoSeeds on an empty seed list.
FlowField interpolate_flow(const std::vector<SparseMatch>& seeds, int width,
                           int height, const FlowConfig& cfg);

// Middlebury .flo: "PIEH" tag as float, int32 width/height, interleaved
// float32 (u, v) row-major. Invalid pixels are written as 1e9.
void write_flo(const FlowField& f, const std::string& path);
FlowField read_flo(const std::string& path);

}  // namespace himatch
