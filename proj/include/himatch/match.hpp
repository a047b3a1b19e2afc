#pragma once

#include <string>
#include <vector>

#include "himatch/features.hpp"
#include "himatch/types.hpp"

namespace himatch {

struct MatchConfig {
  int refine_radius = 32;  // original pixels around the coarse estimate
  int dense_stride = 1;
};

struct MatchResult {
  Point2 query;        // reference pixel
  Point2 coarse_cell;  // winning deep cell (cell coordinates)
  Point2 refined;      // final target pixel
  double d_coarse = 0.0;
  double d_fine = 0.0;
};

// Exhaustive nearest neighbor over every integer cell of tgt_deep for the
// query descriptor sampled at p_deep (cell coordinates). Ties prefer the
// lowest row-major cell.
Point2 coarse_match(const FeatureMap& ref_deep, const FeatureMap& tgt_deep,
                    Point2 p_deep, double* dist_out = nullptr);

// Nearest neighbor over integer shallow cells within Euclidean distance
// radius (original pixels) of center_px, clipped to the map. The clipped
// center is always a candidate.
Point2 refine_match(const FeatureMap& ref_shallow, const FeatureMap& tgt_shallow,
                    Point2 query_px, Point2 center_px, int radius,
                    double* dist_out = nullptr);

// Two stages: deep NN at p / f_deep, project the winner back to pixels,
// refine with shallow descriptors inside the radius.
MatchResult hierarchical_match(const FeatureHierarchy& ref, const FeatureHierarchy& tgt,
                               Point2 query_px, const MatchConfig& cfg);
std::vector<MatchResult> hierarchical_match(const FeatureHierarchy& ref,
                                            const FeatureHierarchy& tgt,
                                            const std::vector<Point2>& queries,
                                            const MatchConfig& cfg);

struct DenseMatches {
  int grid_w = 0;
  int grid_h = 0;
  int stride = 1;
  std::vector<MatchResult> results;  // row-major over the sample grid
  std::vector<char> valid;
};

// hierarchical_match at every stride-th pixel of the reference.
DenseMatches dense_match(const FeatureHierarchy& ref, const FeatureHierarchy& tgt,
                         const MatchConfig& cfg);

// Hypercolumn baseline: one exhaustive pass over deepest-level cells, each
// described by the concatenation of unit descriptors sampled from every
// level at the same image location, renormalized after concatenation.
// With a single level this reduces to coarse matching on that level.
MatchResult concat_match(const FeatureHierarchy& ref, const FeatureHierarchy& tgt,
                         Point2 query_px);
std::vector<MatchResult> concat_match(const FeatureHierarchy& ref,
                                      const FeatureHierarchy& tgt,
                                      const std::vector<Point2>& queries);

// Matches text file: one line per query, "x y xh yh d_coarse d_fine valid".
struct MatchRow {
  double x = 0, y = 0, xh = 0, yh = 0, d_coarse = 0, d_fine = 0;
  int valid = 1;
};
void write_matches(const DenseMatches& m, const std::string& path);
std::vector<MatchRow> read_matches(const std::string& path);

}  // namespace himatch
