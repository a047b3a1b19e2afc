#pragma once

#include <cassert>
#include <cstddef>
#include <vector>

namespace himatch {

// 2D point in original-image pixel coordinates (sub-pixel allowed).
struct Point2 {
  double x = 0.0;
  double y = 0.0;
};

inline bool operator==(const Point2& a, const Point2& b) {
  return a.x == b.x && a.y == b.y;
}

struct Point3 {
  double x = 0.0;
  double y = 0.0;
  double z = 0.0;
};

inline bool operator==(const Point3& a, const Point3& b) {
  return a.x == b.x && a.y == b.y && a.z == b.z;
}

// Axis-aligned 3D box.
struct Box3 {
  Point3 lo;
  Point3 hi;
};

// Dense row-major matrix of doubles. Small helper, not a linear algebra
// library; used for embedding weights and their gradients.
struct Mat {
  int rows = 0;
  int cols = 0;
  std::vector<double> v;

  Mat() = default;
  Mat(int r, int c) : rows(r), cols(c), v(static_cast<std::size_t>(r) * c, 0.0) {}

  double& at(int r, int c) {
    assert(r >= 0 && r < rows && c >= 0 && c < cols);
    return v[static_cast<std::size_t>(r) * cols + c];
  }
  double at(int r, int c) const {
    assert(r >= 0 && r < rows && c >= 0 && c < cols);
    return v[static_cast<std::size_t>(r) * cols + c];
  }
};

}  // namespace himatch
