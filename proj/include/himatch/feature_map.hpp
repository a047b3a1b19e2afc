#pragma once

#include <array>
#include <span>
#include <string>
#include <vector>

#include "himatch/types.hpp"

namespace himatch {

// Grid of descriptor vectors at 1/scale_factor of the input resolution.
// Cell (x, y) sits at original-image pixel (x * scale_factor, y * scale_factor).
struct FeatureMap {
  int level_id = 0;
  int scale_factor = 1;  // input pixels per feature cell
  int width = 0;         // cells
  int height = 0;        // cells
  int dim = 0;           // descriptor length
  bool normalized = false;
  std::vector<double> data;  // (y * width + x) * dim + c

  static FeatureMap make(int level_id, int scale_factor, int w, int h, int dim) {
    FeatureMap m;
    m.level_id = level_id;
    m.scale_factor = scale_factor;
    m.width = w;
    m.height = h;
    m.dim = dim;
    m.data.assign(static_cast<std::size_t>(w) * h * dim, 0.0);
    return m;
  }

  std::span<const double> cell(int x, int y) const {
    return {data.data() + (static_cast<std::size_t>(y) * width + x) * dim,
            static_cast<std::size_t>(dim)};
  }
  std::span<double> cell(int x, int y) {
    return {data.data() + (static_cast<std::size_t>(y) * width + x) * dim,
            static_cast<std::size_t>(dim)};
  }

  std::size_t cell_count() const { return static_cast<std::size_t>(width) * height; }
};

constexpr double kNormEps = 1e-12;

// v / max(||v||, eps). The eps guard maps near-zero vectors near zero instead
// of dividing by zero on constant image regions.
std::vector<double> l2_normalize(std::span<const double> v, double eps = kNormEps);
void l2_normalize_inplace(std::span<double> v, double eps = kNormEps);

// The four cells and weights involved in sampling at a fractional cell
// coordinate. Shared by the sampler and the training backward pass so both
// use identical weights.
struct BilinearCells {
  std::array<std::size_t, 4> idx;  // cell index y * width + x
  std::array<double, 4> w;
};

// Throws OutOfBounds unless 0 <= p.x <= width-1 and 0 <= p.y <= height-1.
BilinearCells bilinear_cells(const FeatureMap& map, Point2 p_cells);

// Channel-wise bilinear blend of the four surrounding cells; exact at
// integer coordinates.
std::vector<double> bilinear_sample(const FeatureMap& map, Point2 p_cells);

// bilinear_sample followed by re-normalization, so descriptors sampled at
// sub-cell points stay unit length.
std::vector<double> sample_unit_descriptor(const FeatureMap& map, Point2 p_cells,
                                           double eps = kNormEps);

// Binary feature-map file, little-endian: magic "HFM1", then uint32
// level_id, scale_factor, width, height, dim, uint8 normalized flag, then
// width*height*dim float32 values row-major by cell then channel.
FeatureMap read_feature_map(const std::string& path);
void write_feature_map(const FeatureMap& map, const std::string& path);

}  // namespace himatch
