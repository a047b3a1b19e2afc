#include <cmath>
#include <limits>

#include "doctest.h"
#include "himatch/error.hpp"
#include "himatch/match3d.hpp"
#include "himatch/rng.hpp"
#include "support.hpp"

using namespace himatch;

namespace {

VoxelGrid random_grid(int n, std::uint64_t seed, bool binary = false) {
  VoxelGrid g = VoxelGrid::make({0, 0, 0}, n, n, n);
  Rng rng(seed);
  for (float& v : g.occ)
    v = binary ? float(rng.uniform() > 0.5) : static_cast<float>(rng.uniform());
  return g;
}

// Spatially coherent volume: pooled descriptors of nearby subvolumes stay
// similar, which is what the coarse stage relies on.
VoxelGrid block_grid(int n, std::uint64_t seed, int block = 4) {
  VoxelGrid g = VoxelGrid::make({0, 0, 0}, n, n, n);
  Rng rng(seed);
  const int bn = (n + block - 1) / block;
  std::vector<float> bl(static_cast<std::size_t>(bn) * bn * bn);
  for (float& v : bl) v = static_cast<float>(rng.uniform());
  for (int z = 0; z < n; ++z)
    for (int y = 0; y < n; ++y)
      for (int x = 0; x < n; ++x)
        g.at(x, y, z) =
            0.8f * bl[(static_cast<std::size_t>(z / block) * bn + y / block) * bn + x / block] +
            0.2f * static_cast<float>(rng.uniform());
  return g;
}

// Independent two-stage search, written straight from the definition.
Match3dResult oracle_match(const VoxelGrid& ref, const VoxelGrid& tgt, Point3 q,
                           const Box3& region, const Match3dConfig& cfg,
                           const DescriptorOracle3& oracle) {
  const std::vector<double> qd = oracle.deep(ref, q);
  const std::vector<double> qs = oracle.shallow(ref, q);

  Match3dResult r;
  r.query = q;
  const std::vector<Point3> coarse = candidate_centers(region, cfg.subvolume_edge, cfg.coarse_gap);
  REQUIRE(!coarse.empty());
  r.coarse_candidates = coarse.size();
  double best = std::numeric_limits<double>::infinity();
  for (const Point3& c : coarse) {
    const double d = testsup::dist(qd, oracle.deep(tgt, c));
    if (d < best) {
      best = d;
      r.coarse = c;
    }
  }
  r.d_coarse = best;

  double best_f = std::numeric_limits<double>::infinity();
  bool found = false;
  for (const Point3& c : candidate_centers(region, cfg.subvolume_edge, cfg.fine_gap)) {
    const double dx = c.x - r.coarse.x, dy = c.y - r.coarse.y, dz = c.z - r.coarse.z;
    if (dx * dx + dy * dy + dz * dz > double(cfg.refine_radius) * cfg.refine_radius) continue;
    const double d = testsup::dist(qs, oracle.shallow(tgt, c));
    if (!found || d < best_f) {
      best_f = d;
      r.refined = c;
      found = true;
    }
  }
  if (!found) {
    r.refined = r.coarse;
    r.d_fine = testsup::dist(qs, oracle.shallow(tgt, r.coarse));
  } else {
    r.d_fine = best_f;
  }
  return r;
}

}  // namespace

TEST_CASE("candidate centers cover the valid-center box on a gap lattice") {
  const Box3 region{{0, 0, 0}, {60, 60, 60}};
  const std::vector<Point3> c = candidate_centers(region, 30.0, 3.0);
  CHECK(c.size() == 1331);  // 11 per axis
  CHECK(c.front() == Point3{15, 15, 15});
  CHECK(c[1] == Point3{18, 15, 15});     // x varies fastest
  CHECK(c[11] == Point3{15, 18, 15});    // then y
  CHECK(c[121] == Point3{15, 15, 18});   // then z
  CHECK(c.back() == Point3{45, 45, 45});

  // Non-divisible span keeps only lattice points inside.
  const Box3 small{{0, 0, 0}, {10, 10, 10}};
  const std::vector<Point3> s = candidate_centers(small, 4.0, 4.0);
  CHECK(s.size() == 8);
  CHECK(s.front() == Point3{2, 2, 2});
  CHECK(s.back() == Point3{6, 6, 6});

  // Region too small for a single subvolume.
  const Box3 tiny{{0, 0, 0}, {5, 5, 5}};
  CHECK(candidate_centers(tiny, 6.0, 1.0).empty());

  // Exactly one center when the region equals the subvolume.
  const std::vector<Point3> one = candidate_centers(tiny, 5.0, 3.0);
  CHECK(one.size() == 1);
  CHECK(one.front() == Point3{2.5, 2.5, 2.5});
}

TEST_CASE("pooled occupancy descriptor bins voxels by center") {
  VoxelGrid g = VoxelGrid::make({0, 0, 0}, 8, 8, 8);
  g.at(2, 3, 4) = 1.0f;  // center (2.5, 3.5, 4.5)
  const DescriptorOracle3 oracle = pooled_occupancy_oracle(8.0);

  const std::vector<double> deep = oracle.deep(g, {4, 4, 4});
  REQUIRE(deep.size() == 64);
  for (std::size_t i = 0; i < deep.size(); ++i) {
    // cell size 2: (cx, cy, cz) = (1, 1, 2), laid out (cz * 4 + cy) * 4 + cx
    CHECK(deep[i] == (i == (2 * 4 + 1) * 4 + 1 ? 1.0 : 0.0));
  }

  const std::vector<double> shallow = oracle.shallow(g, {4, 4, 4});
  REQUIRE(shallow.size() == 512);
  for (std::size_t i = 0; i < shallow.size(); ++i)
    CHECK(shallow[i] == (i == (4 * 8 + 3) * 8 + 2 ? 1.0 : 0.0));

  // Multiple voxels pool into cells before normalization.
  VoxelGrid h = VoxelGrid::make({0, 0, 0}, 8, 8, 8);
  h.at(0, 0, 0) = 1.0f;
  h.at(1, 0, 0) = 1.0f;  // same deep cell as (0,0,0)
  h.at(4, 4, 4) = 1.0f;
  const std::vector<double> d2 = oracle.deep(h, {4, 4, 4});
  const double n = std::sqrt(2.0 * 2.0 + 1.0);
  CHECK(d2[0] == doctest::Approx(2.0 / n).epsilon(1e-12));
  CHECK(d2[(2 * 4 + 2) * 4 + 2] == doctest::Approx(1.0 / n).epsilon(1e-12));

  // Space outside the grid counts as empty rather than wrapping.
  VoxelGrid e = VoxelGrid::make({0, 0, 0}, 8, 8, 8);
  e.at(0, 0, 0) = 1.0f;
  e.at(7, 7, 7) = 1.0f;
  const std::vector<double> corner = oracle.deep(e, {0, 0, 0});  // cube [-4, 4)
  CHECK(corner[(2 * 4 + 2) * 4 + 2] == doctest::Approx(1.0).epsilon(1e-12));
  double sum = 0;
  for (double v : corner) sum += v;
  CHECK(sum == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("two-stage 3d matching agrees with an exhaustive oracle") {
  Match3dConfig cfg;
  cfg.subvolume_edge = 6;
  cfg.coarse_gap = 2;
  cfg.fine_gap = 1;
  cfg.refine_radius = 3;
  const DescriptorOracle3 oracle = pooled_occupancy_oracle(cfg.subvolume_edge);
  const Box3 region{{0, 0, 0}, {12, 12, 12}};

  Rng rng(31);
  for (int trial = 0; trial < 8; ++trial) {
    const VoxelGrid ref = random_grid(12, 1000 + trial);
    const VoxelGrid tgt = random_grid(12, 2000 + trial);
    const Point3 q{3.0 + rng.uniform() * 6.0, 3.0 + rng.uniform() * 6.0,
                   3.0 + rng.uniform() * 6.0};
    const Match3dResult got = match_3d(ref, tgt, q, region, cfg, oracle);
    const Match3dResult want = oracle_match(ref, tgt, q, region, cfg, oracle);
    CHECK(got.coarse == want.coarse);
    CHECK(got.refined == want.refined);
    CHECK(got.coarse_candidates == want.coarse_candidates);
    CHECK(got.d_coarse == doctest::Approx(want.d_coarse).epsilon(1e-12));
    CHECK(got.d_fine == doctest::Approx(want.d_fine).epsilon(1e-12));
  }
}

TEST_CASE("3d matching recovers an integer translation exactly") {
  const int n = 16;
  const VoxelGrid ref = block_grid(n, 5);
  VoxelGrid tgt = VoxelGrid::make({0, 0, 0}, n, n, n);
  const int sx = 1, sy = 2, sz = 0;
  for (int z = 0; z < n; ++z)
    for (int y = 0; y < n; ++y)
      for (int x = 0; x < n; ++x) {
        const int px = x - sx, py = y - sy, pz = z - sz;
        if (px >= 0 && py >= 0 && pz >= 0 && px < n && py < n && pz < n)
          tgt.at(x, y, z) = ref.at(px, py, pz);
      }

  Match3dConfig cfg;
  cfg.subvolume_edge = 6;
  cfg.coarse_gap = 2;
  cfg.fine_gap = 1;
  cfg.refine_radius = 3;
  const Box3 region{{0, 0, 0}, {double(n), double(n), double(n)}};
  const DescriptorOracle3 oracle = pooled_occupancy_oracle(cfg.subvolume_edge);

  const Point3 q{8, 8, 8};
  const Match3dResult r = match_3d(ref, tgt, q, region, cfg, oracle);
  CHECK(r.refined == Point3{9, 10, 8});
  CHECK(r.d_fine == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(r.query == q);
}

TEST_CASE("3d matching honors a custom descriptor oracle and tie order") {
  DescriptorOracle3 constant;
  constant.deep = [](const VoxelGrid&, Point3) { return std::vector<double>{1.0, 0.0}; };
  constant.shallow = [](const VoxelGrid&, Point3) { return std::vector<double>{0.0, 1.0}; };

  const VoxelGrid g = random_grid(10, 3);
  Match3dConfig cfg;
  cfg.subvolume_edge = 4;
  cfg.coarse_gap = 2;
  cfg.fine_gap = 1;
  cfg.refine_radius = 2;
  const Box3 region{{0, 0, 0}, {10, 10, 10}};
  const Match3dResult r = match_3d(g, g, {5, 5, 5}, region, cfg, constant);
  // Every distance ties at zero; the first candidate in x-fastest order wins.
  CHECK(r.coarse == Point3{2, 2, 2});
  CHECK(r.refined == Point3{2, 2, 2});
  CHECK(r.d_coarse == 0.0);
  CHECK(r.d_fine == 0.0);
  CHECK(r.coarse_candidates == 64);  // centers {2,4,6,8} per axis
}

TEST_CASE("refine ball that misses the fine lattice keeps the coarse winner") {
  const VoxelGrid g = random_grid(16, 9, true);
  Match3dConfig cfg;
  cfg.subvolume_edge = 6;
  cfg.coarse_gap = 2;
  cfg.fine_gap = 5;  // fine lattice {3, 8, 13} per axis
  cfg.refine_radius = 1;
  const Box3 region{{0, 0, 0}, {16, 16, 16}};
  const DescriptorOracle3 oracle = pooled_occupancy_oracle(cfg.subvolume_edge);

  const Point3 q{5, 5, 5};  // on the coarse lattice, so d_coarse = 0 there
  const Match3dResult r = match_3d(g, g, q, region, cfg, oracle);
  CHECK(r.coarse == q);
  CHECK(r.refined == q);  // not a fine lattice point: the fallback fired
  CHECK(r.d_coarse == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(r.d_fine == doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("region smaller than a subvolume is rejected") {
  const VoxelGrid g = random_grid(6, 2);
  Match3dConfig cfg;
  cfg.subvolume_edge = 8;
  const Box3 region{{0, 0, 0}, {6, 6, 6}};
  CHECK_THROWS_AS(match_3d(g, g, {3, 3, 3}, region, cfg, pooled_occupancy_oracle(8.0)),
                  EmptyCandidateSet);
}
