#include "himatch/match3d.hpp"

#include <algorithm>
#include <cmath>

#include "himatch/error.hpp"
#include "himatch/feature_map.hpp"

namespace himatch {

std::vector<Point3> candidate_centers(const Box3& region, double edge, double gap) {
  const double half = edge / 2.0;
  const Point3 lo{region.lo.x + half, region.lo.y + half, region.lo.z + half};
  const Point3 hi{region.hi.x - half, region.hi.y - half, region.hi.z - half};
  const auto steps = [&](double a, double b) -> int {
    const double span = b - a;
    if (span < -1e-9) return 0;
    return static_cast<int>(std::floor(span / gap + 1e-9)) + 1;
  };
  const int nx = steps(lo.x, hi.x);
  const int ny = steps(lo.y, hi.y);
  const int nz = steps(lo.z, hi.z);
  std::vector<Point3> out;
  if (nx == 0 || ny == 0 || nz == 0) return out;
  out.reserve(static_cast<std::size_t>(nx) * ny * nz);
  for (int iz = 0; iz < nz; ++iz)
    for (int iy = 0; iy < ny; ++iy)
      for (int ix = 0; ix < nx; ++ix)
        out.push_back({lo.x + ix * gap, lo.y + iy * gap, lo.z + iz * gap});
  return out;
}

namespace {

// Occupancy summed over a g^3 cell grid spanning the subvolume cube, then
// l2-normalized. Voxels are binned by center; space outside the grid counts
// as empty.
std::vector<double> pooled_descriptor(const VoxelGrid& grid, Point3 center, double edge,
                                      int g) {
  const double half = edge / 2.0;
  const Point3 lo{center.x - half, center.y - half, center.z - half};
  const double cell = edge / g;
  std::vector<double> desc(static_cast<std::size_t>(g) * g * g, 0.0);

  const auto first_idx = [](double world_lo, double origin) {
    return std::max(0, static_cast<int>(std::floor(world_lo - origin - 0.5)));
  };
  const int x0 = first_idx(lo.x, grid.origin.x);
  const int y0 = first_idx(lo.y, grid.origin.y);
  const int z0 = first_idx(lo.z, grid.origin.z);
  for (int iz = z0; iz < grid.nz; ++iz) {
    const double wz = grid.origin.z + iz + 0.5;
    if (wz >= lo.z + edge) break;
    if (wz < lo.z) continue;
    const int cz = std::min(static_cast<int>((wz - lo.z) / cell), g - 1);
    for (int iy = y0; iy < grid.ny; ++iy) {
      const double wy = grid.origin.y + iy + 0.5;
      if (wy >= lo.y + edge) break;
      if (wy < lo.y) continue;
      const int cy = std::min(static_cast<int>((wy - lo.y) / cell), g - 1);
      for (int ix = x0; ix < grid.nx; ++ix) {
        const double wx = grid.origin.x + ix + 0.5;
        if (wx >= lo.x + edge) break;
        if (wx < lo.x) continue;
        const int cx = std::min(static_cast<int>((wx - lo.x) / cell), g - 1);
        desc[(static_cast<std::size_t>(cz) * g + cy) * g + cx] += grid.at(ix, iy, iz);
      }
    }
  }
  l2_normalize_inplace(desc);
  return desc;
}

double dist(std::span<const double> a, std::span<const double> b) {
  double sq = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double e = a[i] - b[i];
    sq += e * e;
  }
  return std::sqrt(sq);
}

}  // namespace

DescriptorOracle3 pooled_occupancy_oracle(double subvolume_edge) {
  DescriptorOracle3 o;
  o.deep = [subvolume_edge](const VoxelGrid& g, Point3 c) {
    return pooled_descriptor(g, c, subvolume_edge, 4);
  };
  o.shallow = [subvolume_edge](const VoxelGrid& g, Point3 c) {
    return pooled_descriptor(g, c, subvolume_edge, 8);
  };
  return o;
}

Match3dResult match_3d(std::span<const double> ref_deep,
                       std::span<const double> ref_shallow, const VoxelGrid& tgt,
                       const Box3& tgt_region, const Match3dConfig& cfg,
                       const DescriptorOracle3& oracle) {
  const std::vector<Point3> coarse =
      candidate_centers(tgt_region, cfg.subvolume_edge, cfg.coarse_gap);
  if (coarse.empty())
    throw EmptyCandidateSet("match_3d: region cannot hold one subvolume");

  Match3dResult r;
  r.coarse_candidates = coarse.size();
  double best = 0.0;
  std::size_t best_i = coarse.size();
  for (std::size_t i = 0; i < coarse.size(); ++i) {
    const double d = dist(ref_deep, oracle.deep(tgt, coarse[i]));
    if (best_i == coarse.size() || d < best) {
      best = d;
      best_i = i;
    }
  }
  r.coarse = coarse[best_i];
  r.d_coarse = best;

  const std::vector<Point3> fine =
      candidate_centers(tgt_region, cfg.subvolume_edge, cfg.fine_gap);
  const double rr = cfg.refine_radius * cfg.refine_radius;
  double best_f = 0.0;
  std::size_t best_fi = fine.size();
  for (std::size_t i = 0; i < fine.size(); ++i) {
    const double dx = fine[i].x - r.coarse.x;
    const double dy = fine[i].y - r.coarse.y;
    const double dz = fine[i].z - r.coarse.z;
    if (dx * dx + dy * dy + dz * dz > rr) continue;
    const double d = dist(ref_shallow, oracle.shallow(tgt, fine[i]));
    if (best_fi == fine.size() || d < best_f) {
      best_f = d;
      best_fi = i;
    }
  }
  if (best_fi == fine.size()) {
    // Refine ball too small to reach the fine lattice; keep the coarse winner.
    r.refined = r.coarse;
    r.d_fine = dist(ref_shallow, oracle.shallow(tgt, r.coarse));
  } else {
    r.refined = fine[best_fi];
    r.d_fine = best_f;
  }
  return r;
}

Match3dResult match_3d(const VoxelGrid& ref, const VoxelGrid& tgt, Point3 query,
                       const Box3& tgt_region, const Match3dConfig& cfg,
                       const DescriptorOracle3& oracle) {
  const std::vector<double> deep = oracle.deep(ref, query);
  const std::vector<double> shallow = oracle.shallow(ref, query);
  Match3dResult r = match_3d(deep, shallow, tgt, tgt_region, cfg, oracle);
  r.query = query;
  return r;
}

}  // namespace himatch
