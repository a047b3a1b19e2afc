#pragma once

#include <cstdint>
#include <vector>

#include "himatch/flow.hpp"
#include "himatch/image.hpp"
#include "himatch/learn.hpp"
#include "himatch/types.hpp"

namespace himatch {

struct PckCurve {
  std::vector<double> thresholds;  // pixels, ascending
  std::vector<double> values;      // fraction correct per threshold
  std::size_t n = 0;               // sample count
};

// value(theta) = fraction of predictions within theta (inclusive) of the
// ground truth. Throws LengthMismatch / EmptyInput.
PckCurve pck(const std::vector<Point2>& predicted, const std::vector<Point2>& truth,
             const std::vector<double>& thetas);
double pck_at(const std::vector<Point2>& predicted, const std::vector<Point2>& truth,
              double theta);

// Mean endpoint error over pixels that are valid in both fields and set in
// `mask`. Throws EmptyMask if no pixel qualifies.
double epe(const FlowField& flow, const FlowField& truth, const std::vector<char>& mask);

// Fraction of evaluated pixels whose endpoint error exceeds 3 px AND 5% of
// the ground-truth magnitude.
double fl_outlier_rate(const FlowField& flow, const FlowField& truth,
                       const std::vector<char>& mask);

enum class SynthKind { translation, similarity };

// Similarity transform about the image center plus additive noise, used to
// manufacture ground-truthed pairs. Parameters are drawn uniformly from the
// ranges below; translation kind pins rotation to 0 and scale to 1.
struct SynthSpec {
  SynthKind kind = SynthKind::similarity;
  double tx_min = -16.0, tx_max = 16.0;
  double ty_min = -16.0, ty_max = 16.0;
  double rot_max = 0.05;     // radians, drawn from [-rot_max, rot_max]
  double scale_min = 0.97;
  double scale_max = 1.03;
  double noise_sigma = 0.0;  // gray-level sigma on the warped image
  int grid_stride = 4;       // ground-truth correspondence spacing
  std::uint64_t rng_seed = 1;
};

struct SynthPair {
  Image ref;
  Image tgt;
  double s = 1.0, theta = 0.0, tx = 0.0, ty = 0.0;
  std::vector<Correspondence> truth;  // label 1, both endpoints in bounds
  FlowField truth_flow;               // valid where the mapped point lands in bounds
};

// Draw a transform x' = s R (x - c) + c + t, inverse-warp the reference into
// the target with bilinear lookup, add clipped Gaussian noise, and record
// ground truth on a grid_stride lattice restricted to in-bounds points.
// Throws DegenerateTransform if fewer than half the pixels stay in bounds.
SynthPair synth_pair(const Image& ref, const SynthSpec& spec);

// Where the transform sends a reference pixel.
Point2 synth_map_point(const SynthPair& pair, int img_w, int img_h, Point2 x);

}  // namespace himatch
