#include "himatch/eval.hpp"

#include <algorithm>
#include <cmath>

#include "himatch/error.hpp"
#include "himatch/rng.hpp"

namespace himatch {

PckCurve pck(const std::vector<Point2>& predicted, const std::vector<Point2>& truth,
             const std::vector<double>& thetas) {
  if (predicted.size() != truth.size())
    throw LengthMismatch("pck: " + std::to_string(predicted.size()) +
                         " predictions vs " + std::to_string(truth.size()) + " truths");
  if (predicted.empty()) throw EmptyInput("pck: no samples");
  if (thetas.empty()) throw EmptyInput("pck: no thresholds");

  std::vector<double> errors(predicted.size());
  for (std::size_t i = 0; i < predicted.size(); ++i) {
    const double dx = predicted[i].x - truth[i].x;
    const double dy = predicted[i].y - truth[i].y;
    errors[i] = std::sqrt(dx * dx + dy * dy);
  }

  PckCurve curve;
  curve.thresholds = thetas;
  std::sort(curve.thresholds.begin(), curve.thresholds.end());
  curve.n = predicted.size();
  curve.values.reserve(thetas.size());
  for (const double theta : curve.thresholds) {
    std::size_t hits = 0;
    for (const double e : errors)
      if (e <= theta) ++hits;
    curve.values.push_back(static_cast<double>(hits) / curve.n);
  }
  return curve;
}

double pck_at(const std::vector<Point2>& predicted, const std::vector<Point2>& truth,
              double theta) {
  return pck(predicted, truth, {theta}).values.front();
}

namespace {

void check_same_shape(const FlowField& a, const FlowField& b,
                      const std::vector<char>& mask) {
  if (a.width != b.width || a.height != b.height)
    throw DimensionMismatch("flow fields " + std::to_string(a.width) + "x" +
                            std::to_string(a.height) + " vs " + std::to_string(b.width) +
                            "x" + std::to_string(b.height));
  if (mask.size() != a.u.size())
    throw DimensionMismatch("mask length " + std::to_string(mask.size()) +
                            " vs field of " + std::to_string(a.u.size()));
}

}  // namespace

double epe(const FlowField& flow, const FlowField& truth, const std::vector<char>& mask) {
  check_same_shape(flow, truth, mask);
  double sum = 0.0;
  std::size_t count = 0;
  for (std::size_t i = 0; i < mask.size(); ++i) {
    if (!mask[i] || !flow.valid[i] || !truth.valid[i]) continue;
    const double du = flow.u[i] - truth.u[i];
    const double dv = flow.v[i] - truth.v[i];
    sum += std::sqrt(du * du + dv * dv);
    ++count;
  }
  if (count == 0) throw EmptyMask("epe: no valid masked pixel");
  return sum / count;
}

double fl_outlier_rate(const FlowField& flow, const FlowField& truth,
                       const std::vector<char>& mask) {
  check_same_shape(flow, truth, mask);
  std::size_t outliers = 0;
  std::size_t count = 0;
  for (std::size_t i = 0; i < mask.size(); ++i) {
    if (!mask[i] || !flow.valid[i] || !truth.valid[i]) continue;
    const double du = flow.u[i] - truth.u[i];
    const double dv = flow.v[i] - truth.v[i];
    const double err = std::sqrt(du * du + dv * dv);
    const double mag = std::sqrt(truth.u[i] * truth.u[i] + truth.v[i] * truth.v[i]);
    if (err > 3.0 && err > 0.05 * mag) ++outliers;
    ++count;
  }
  if (count == 0) throw EmptyMask("fl_outlier_rate: no valid masked pixel");
  return static_cast<double>(outliers) / count;
}

namespace {

double bilinear_pixel(const Image& img, double x, double y, int c) {
  int x0 = std::min(static_cast<int>(x), img.width - 2);
  int y0 = std::min(static_cast<int>(y), img.height - 2);
  if (img.width == 1) x0 = 0;
  if (img.height == 1) y0 = 0;
  const int x1 = std::min(x0 + 1, img.width - 1);
  const int y1 = std::min(y0 + 1, img.height - 1);
  const double fx = x - x0;
  const double fy = y - y0;
  return (1 - fx) * (1 - fy) * img.at(x0, y0, c) + fx * (1 - fy) * img.at(x1, y0, c) +
         (1 - fx) * fy * img.at(x0, y1, c) + fx * fy * img.at(x1, y1, c);
}

}  // namespace

SynthPair synth_pair(const Image& ref, const SynthSpec& spec) {
  Rng rng(spec.rng_seed);
  SynthPair pair;
  pair.ref = ref;
  pair.tx = rng.uniform(spec.tx_min, spec.tx_max);
  pair.ty = rng.uniform(spec.ty_min, spec.ty_max);
  if (spec.kind == SynthKind::similarity) {
    pair.theta = rng.uniform(-spec.rot_max, spec.rot_max);
    pair.s = rng.uniform(spec.scale_min, spec.scale_max);
  }

  const double cx = (ref.width - 1) / 2.0;
  const double cy = (ref.height - 1) / 2.0;
  const double cos_t = std::cos(pair.theta);
  const double sin_t = std::sin(pair.theta);
  const auto fwd = [&](double x, double y) -> Point2 {
    const double dx = x - cx;
    const double dy = y - cy;
    return {pair.s * (cos_t * dx - sin_t * dy) + cx + pair.tx,
            pair.s * (sin_t * dx + cos_t * dy) + cy + pair.ty};
  };
  const auto in_bounds = [&](Point2 p) {
    return p.x >= 0.0 && p.x <= ref.width - 1 && p.y >= 0.0 && p.y <= ref.height - 1;
  };

  std::size_t kept = 0;
  for (int y = 0; y < ref.height; ++y)
    for (int x = 0; x < ref.width; ++x)
      if (in_bounds(fwd(x, y))) ++kept;
  if (kept * 2 < ref.pixel_count())
    throw DegenerateTransform("synth_pair: transform pushes " +
                              std::to_string(ref.pixel_count() - kept) + "/" +
                              std::to_string(ref.pixel_count()) + " pixels out of bounds");

  // Inverse warp: each target pixel looks up its source point.
  const double inv_s = 1.0 / pair.s;
  Image tgt = Image::zeros(ref.width, ref.height, ref.channels);
  for (int y = 0; y < ref.height; ++y)
    for (int x = 0; x < ref.width; ++x) {
      const double dx = x - cx - pair.tx;
      const double dy = y - cy - pair.ty;
      const Point2 src{inv_s * (cos_t * dx + sin_t * dy) + cx,
                       inv_s * (-sin_t * dx + cos_t * dy) + cy};
      if (!in_bounds(src)) continue;  // stays black
      for (int c = 0; c < ref.channels; ++c)
        tgt.at(x, y, c) = bilinear_pixel(ref, src.x, src.y, c);
    }
  if (spec.noise_sigma > 0.0)
    for (double& v : tgt.data)
      v = std::clamp(v + spec.noise_sigma * rng.normal(), 0.0, 1.0);
  pair.tgt = std::move(tgt);

  const int stride = std::max(1, spec.grid_stride);
  for (int y = 0; y < ref.height; y += stride)
    for (int x = 0; x < ref.width; x += stride) {
      const Point2 xp = fwd(x, y);
      if (in_bounds(xp))
        pair.truth.push_back({{static_cast<double>(x), static_cast<double>(y)}, xp, 1});
    }

  pair.truth_flow = FlowField::make(ref.width, ref.height);
  for (int y = 0; y < ref.height; ++y)
    for (int x = 0; x < ref.width; ++x) {
      const Point2 xp = fwd(x, y);
      if (!in_bounds(xp)) continue;
      const std::size_t i = pair.truth_flow.idx(x, y);
      pair.truth_flow.u[i] = xp.x - x;
      pair.truth_flow.v[i] = xp.y - y;
      pair.truth_flow.valid[i] = 1;
    }
  return pair;
}

Point2 synth_map_point(const SynthPair& pair, int img_w, int img_h, Point2 x) {
  const double cx = (img_w - 1) / 2.0;
  const double cy = (img_h - 1) / 2.0;
  const double dx = x.x - cx;
  const double dy = x.y - cy;
  const double cos_t = std::cos(pair.theta);
  const double sin_t = std::sin(pair.theta);
  return {pair.s * (cos_t * dx - sin_t * dy) + cx + pair.tx,
          pair.s * (sin_t * dx + cos_t * dy) + cy + pair.ty};
}

}  // namespace himatch
