#include <cmath>
#include <fstream>

#include "doctest.h"
#include "himatch/error.hpp"
#include "himatch/flow.hpp"
#include "support.hpp"

using namespace himatch;

namespace {

DenseMatches grid_matches(int w, int h, int stride) {
  DenseMatches dm;
  dm.grid_w = w;
  dm.grid_h = h;
  dm.stride = stride;
  dm.results.resize(static_cast<std::size_t>(w) * h);
  dm.valid.assign(dm.results.size(), 1);
  for (int gy = 0; gy < h; ++gy)
    for (int gx = 0; gx < w; ++gx) {
      MatchResult& r = dm.results[static_cast<std::size_t>(gy) * w + gx];
      r.query = {double(gx * stride), double(gy * stride)};
      r.refined = r.query;
    }
  return dm;
}

MatchResult& at(DenseMatches& dm, int gx, int gy) {
  return dm.results[static_cast<std::size_t>(gy) * dm.grid_w + gx];
}

}  // namespace

TEST_CASE("forward-backward filter keeps only cycle-consistent matches") {
  DenseMatches fwd = grid_matches(4, 1, 1);
  DenseMatches bwd = grid_matches(4, 1, 1);

  at(fwd, 0, 0).refined = {1.0, 0.0};
  at(bwd, 1, 0).refined = {0.0, 0.0};  // returns exactly: kept at t = 0

  at(fwd, 1, 0).refined = {3.0, 0.0};
  at(bwd, 3, 0).refined = {2.0, 0.0};  // returns 1px off: dropped at t = 0

  at(fwd, 2, 0).refined = {2.4, 0.0};  // rounds to target pixel 2
  at(bwd, 2, 0).refined = {2.0, 0.0};  // back at (2,0), query was (2,0): kept

  at(fwd, 3, 0).refined = {5.0, 0.0};  // off the backward grid: dropped

  const std::vector<SparseMatch> strict = forward_backward_filter(fwd, bwd, 0.0);
  REQUIRE(strict.size() == 2);
  CHECK(strict[0].x == Point2{0.0, 0.0});
  CHECK(strict[0].xp == Point2{1.0, 0.0});  // unrounded target is preserved
  CHECK(strict[1].x == Point2{2.0, 0.0});
  CHECK(strict[1].xp == Point2{2.4, 0.0});

  const std::vector<SparseMatch> loose = forward_backward_filter(fwd, bwd, 1.0);
  CHECK(loose.size() == 3);  // the 1px disagreement is inside the threshold

  // Invalid entries on either side drop the correspondence.
  fwd.valid[0] = 0;
  CHECK(forward_backward_filter(fwd, bwd, 0.0).size() == 1);
  fwd.valid[0] = 1;
  bwd.valid[1] = 0;
  CHECK(forward_backward_filter(fwd, bwd, 0.0).size() == 1);
}

TEST_CASE("forward-backward filter respects the backward sample stride") {
  DenseMatches fwd = grid_matches(4, 1, 1);
  DenseMatches bwd = grid_matches(2, 1, 2);  // covers pixels 0 and 2
  at(fwd, 1, 0).refined = {2.0, 0.0};
  at(bwd, 1, 0).refined = {1.0, 0.0};  // bwd grid cell 1 = pixel 2
  at(fwd, 3, 0).refined = {1.0, 0.0};  // target pixel 1 not on bwd grid

  const std::vector<SparseMatch> kept = forward_backward_filter(fwd, bwd, 0.0);
  REQUIRE(kept.size() == 2);
  CHECK(kept[0].x == Point2{0.0, 0.0});
  CHECK(kept[1].x == Point2{1.0, 0.0});
  CHECK(kept[1].xp == Point2{2.0, 0.0});
}

TEST_CASE("motion window bound is inclusive") {
  std::vector<SparseMatch> in = {
      {{0, 0}, {5.0, 0.0}},    // u = 5
      {{0, 0}, {5.001, 0.0}},  // u just over
      {{0, 0}, {0.0, -5.0}},   // v = -5
      {{0, 0}, {-6.0, 0.0}},
      {{0, 0}, {3.0, 3.0}},
  };
  const std::vector<SparseMatch> out = motion_window_filter(in, 5.0);
  REQUIRE(out.size() == 3);
  CHECK(out[0].xp == Point2{5.0, 0.0});
  CHECK(out[1].xp == Point2{0.0, -5.0});
  CHECK(out[2].xp == Point2{3.0, 3.0});
}

TEST_CASE("interpolation reproduces an affine field exactly") {
  const auto flow_u = [](double x, double y) { return 0.3 * x - 0.1 * y + 2.0; };
  const auto flow_v = [](double x, double y) { return 0.05 * x + 0.2 * y - 1.0; };

  Rng rng(8);
  std::vector<SparseMatch> seeds;
  for (int i = 0; i < 12; ++i) {
    const double x = rng.uniform() * 30.0;
    const double y = rng.uniform() * 30.0;
    seeds.push_back({{x, y}, {x + flow_u(x, y), y + flow_v(x, y)}});
  }

  FlowConfig cfg;
  const FlowField f = interpolate_flow(seeds, 31, 31, cfg);
  for (int y = 0; y < 31; y += 3)
    for (int x = 0; x < 31; x += 3) {
      CHECK(f.valid[f.idx(x, y)] == 1);
      CHECK(f.u[f.idx(x, y)] == doctest::Approx(flow_u(x, y)).epsilon(1e-6));
      CHECK(f.v[f.idx(x, y)] == doctest::Approx(flow_v(x, y)).epsilon(1e-6));
    }
}

TEST_CASE("interpolation falls back to the weighted mean") {
  FlowConfig cfg;

  // Too few seeds for an affine fit.
  std::vector<SparseMatch> two = {{{0, 0}, {1.0, 0.0}}, {{10, 0}, {10.0, 2.0}}};
  const FlowField f = interpolate_flow(two, 11, 1, cfg);
  const double s = 2.0 * cfg.interp_sigma * cfg.interp_sigma;
  const double w0 = std::exp(-(4.0 * 4.0) / s);   // seed (0,0) from pixel (4,0)
  const double w1 = std::exp(-(6.0 * 6.0) / s);
  CHECK(f.u[f.idx(4, 0)] == doctest::Approx((w0 * 1.0 + w1 * 0.0) / (w0 + w1)).epsilon(1e-12));
  CHECK(f.v[f.idx(4, 0)] == doctest::Approx((w0 * 0.0 + w1 * 2.0) / (w0 + w1)).epsilon(1e-12));

  // Co-located seeds make the normal matrix singular; same degraded path.
  std::vector<SparseMatch> stacked = {{{5, 5}, {6.0, 7.0}},
                                      {{5, 5}, {6.0, 7.0}},
                                      {{5, 5}, {6.0, 7.0}},
                                      {{5, 5}, {6.0, 7.0}}};
  const FlowField g = interpolate_flow(stacked, 8, 8, cfg);
  for (int y = 0; y < 8; ++y)
    for (int x = 0; x < 8; ++x) {
      CHECK(g.u[g.idx(x, y)] == doctest::Approx(1.0).epsilon(1e-12));
      CHECK(g.v[g.idx(x, y)] == doctest::Approx(2.0).epsilon(1e-12));
    }

  // Weights can underflow to zero far from every seed; the plain mean keeps
  // the field finite.
  FlowConfig sharp = cfg;
  sharp.interp_sigma = 1e-3;
  std::vector<SparseMatch> far = {{{0, 0}, {1.0, 0.0}}, {{10, 10}, {3.0, 4.0}}};
  const FlowField h = interpolate_flow(far, 11, 11, sharp);
  CHECK(h.u[h.idx(5, 5)] == doctest::Approx((1.0 + -7.0) / 2.0).epsilon(1e-12));
  CHECK(h.v[h.idx(5, 5)] == doctest::Approx((0.0 + -6.0) / 2.0).epsilon(1e-12));

  CHECK_THROWS_AS(interpolate_flow({}, 4, 4, cfg), NoSeeds);
}

TEST_CASE("equidistant seeds resolve by index") {
  FlowConfig cfg;
  cfg.interp_k = 1;
  std::vector<SparseMatch> seeds = {{{0, 0}, {2.0, 0.0}}, {{10, 0}, {10.0, 9.0}}};
  const FlowField f = interpolate_flow(seeds, 11, 1, cfg);
  // Pixel (5,0) is 5px from both; the lower seed index wins.
  CHECK(f.u[f.idx(5, 0)] == doctest::Approx(2.0).epsilon(1e-12));
  CHECK(f.v[f.idx(5, 0)] == doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("flo file round trip preserves values and validity") {
  const std::string dir = testsup::temp_dir("flo");
  FlowField f = FlowField::make(3, 2);
  const double us[6] = {0.5, -1.25, 3.0, 0.0, 100.0, -0.375};
  const double vs[6] = {1.0, 2.5, -3.5, 0.0, -100.0, 0.125};
  for (int i = 0; i < 6; ++i) {
    f.u[i] = us[i];
    f.v[i] = vs[i];
    f.valid[i] = 1;
  }
  f.valid[4] = 0;

  write_flo(f, dir + "/a.flo");
  const FlowField r = read_flo(dir + "/a.flo");
  CHECK(r.width == 3);
  CHECK(r.height == 2);
  for (int i = 0; i < 6; ++i) {
    CHECK(int(r.valid[i]) == int(f.valid[i]));
    if (f.valid[i]) {
      CHECK(r.u[i] == us[i]);  // chosen to be exact in float32
      CHECK(r.v[i] == vs[i]);
    } else {
      CHECK(r.u[i] == doctest::Approx(1e9));
    }
  }

  {
    std::ofstream bad(dir + "/bad.flo", std::ios::binary);
    bad << "FLOW1234";
  }
  CHECK_THROWS_AS(read_flo(dir + "/bad.flo"), BadMagic);
  {
    std::ifstream in(dir + "/a.flo", std::ios::binary);
    std::string all((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    std::ofstream cut(dir + "/cut.flo", std::ios::binary);
    cut.write(all.data(), static_cast<std::streamsize>(all.size() - 5));
  }
  CHECK_THROWS_AS(read_flo(dir + "/cut.flo"), TruncatedFile);
  CHECK_THROWS_AS(read_flo(dir + "/missing.flo"), IoError);
}
