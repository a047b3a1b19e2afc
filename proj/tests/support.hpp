#pragma once

#include <cmath>
#include <filesystem>
#include <string>

#include "himatch/feature_map.hpp"
#include "himatch/image.hpp"
#include "himatch/rng.hpp"

namespace testsup {

// Fresh per-name scratch directory under the build tree.
inline std::string temp_dir(const std::string& name) {
  namespace fs = std::filesystem;
  const fs::path dir = fs::path("test_tmp") / name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir.string();
}

// Smooth deterministic ramp, values in [0,1].
inline himatch::Image gradient_image(int w, int h) {
  himatch::Image img = himatch::Image::zeros(w, h, 1);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      img.at(x, y, 0) = (x + 2.0 * y) / (w + 2.0 * h);
  return img;
}

// Texture with structure at both fine and coarse scales: crossed sinusoids
// plus blocky value noise, so that descriptors stay discriminative after a
// 4x downsample.
inline himatch::Image textured_image(int w, int h, std::uint64_t seed, int block = 8) {
  himatch::Rng rng(seed);
  const int bw = (w + block - 1) / block, bh = (h + block - 1) / block;
  std::vector<double> blocks(static_cast<std::size_t>(bw) * bh);
  for (double& b : blocks) b = rng.uniform();
  himatch::Image img = himatch::Image::zeros(w, h, 1);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const double s = 0.5 + 0.25 * std::sin(2.0 * M_PI * x / 7.3) * std::cos(2.0 * M_PI * y / 11.1);
      const double b = blocks[static_cast<std::size_t>(y / block) * bw + x / block];
      double v = 0.55 * s + 0.45 * b;
      img.at(x, y, 0) = std::min(1.0, std::max(0.0, v));
    }
  }
  return img;
}

// Random unit-descriptor map, for oracle tests that need arbitrary content.
inline himatch::FeatureMap random_unit_map(int level_id, int scale, int w, int h, int dim,
                                           std::uint64_t seed) {
  himatch::FeatureMap m = himatch::FeatureMap::make(level_id, scale, w, h, dim);
  m.normalized = true;
  himatch::Rng rng(seed);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      auto c = m.cell(x, y);
      for (int i = 0; i < dim; ++i) c[i] = rng.uniform() - 0.5;
      himatch::l2_normalize_inplace(c);
    }
  return m;
}

inline double dist(std::span<const double> a, std::span<const double> b) {
  double s = 0;
  for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
  return std::sqrt(s);
}

}  // namespace testsup
