#pragma once

#include <cassert>
#include <string>
#include <vector>

#include "himatch/types.hpp"

namespace himatch {

// Row-major image with 1 (grayscale) or 3 (RGB) channels; values in [0, 1].
struct Image {
  int width = 0;
  int height = 0;
  int channels = 1;
  std::vector<double> data;  // (y * width + x) * channels + c

  static Image zeros(int w, int h, int c = 1) {
    Image img;
    img.width = w;
    img.height = h;
    img.channels = c;
    img.data.assign(static_cast<std::size_t>(w) * h * c, 0.0);
    return img;
  }

  double at(int x, int y, int c = 0) const {
    assert(x >= 0 && x < width && y >= 0 && y < height && c >= 0 && c < channels);
    return data[(static_cast<std::size_t>(y) * width + x) * channels + c];
  }
  double& at(int x, int y, int c = 0) {
    assert(x >= 0 && x < width && y >= 0 && y < height && c >= 0 && c < channels);
    return data[(static_cast<std::size_t>(y) * width + x) * channels + c];
  }

  std::size_t pixel_count() const { return static_cast<std::size_t>(width) * height; }
};

// BT.601 luma; grayscale input is returned unchanged.
Image to_grayscale(const Image& img);

// Box average over factor x factor blocks. Output dims floor(W/f) x floor(H/f);
// trailing rows/columns not covered by a full block are dropped.
// Throws EmptyOutput when either output dimension is zero.
Image downsample(const Image& img, int factor);

// Binary PGM (P5) / PPM (P6), 8-bit, maxval 255, scaled to [0,1] by /255.
Image load_pnm(const std::string& path);
void save_pnm(const Image& img, const std::string& path);

}  // namespace himatch
