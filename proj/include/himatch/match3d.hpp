#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "himatch/types.hpp"

namespace himatch {

// Dense occupancy over an axis-aligned box; voxel (x, y, z) spans
// origin + [x, x+1) x [y, y+1) x [z, z+1) in world units.
struct VoxelGrid {
  Point3 origin{0, 0, 0};
  int nx = 0, ny = 0, nz = 0;
  std::vector<float> occ;  // (z * ny + y) * nx + x

  static VoxelGrid make(Point3 origin, int nx, int ny, int nz) {
    VoxelGrid g;
    g.origin = origin;
    g.nx = nx;
    g.ny = ny;
    g.nz = nz;
    g.occ.assign(static_cast<std::size_t>(nx) * ny * nz, 0.0f);
    return g;
  }

  float& at(int x, int y, int z) {
    return occ[(static_cast<std::size_t>(z) * ny + y) * nx + x];
  }
  float at(int x, int y, int z) const {
    return occ[(static_cast<std::size_t>(z) * ny + y) * nx + x];
  }
};

struct Match3dConfig {
  double subvolume_edge = 30.0;  // world units per subvolume side
  double coarse_gap = 3.0;       // candidate spacing, stage 1
  double fine_gap = 1.0;         // candidate spacing, stage 2
  double refine_radius = 15.0;   // Euclidean radius around the coarse winner
};

// Descriptors for the cube of subvolume_edge centered at a point, at two
// granularities. Both must return unit-length vectors of fixed dim.
struct DescriptorOracle3 {
  std::function<std::vector<double>(const VoxelGrid&, Point3)> deep;
  std::function<std::vector<double>(const VoxelGrid&, Point3)> shallow;
};

// Default oracle: occupancy pooled over a fixed cell grid inside the
// subvolume of the given edge (4^3 cells deep, 8^3 shallow), l2-normalized.
DescriptorOracle3 pooled_occupancy_oracle(double subvolume_edge = 30.0);

struct Match3dResult {
  Point3 query;
  Point3 coarse;
  Point3 refined;
  double d_coarse = 0.0;
  double d_fine = 0.0;
  std::size_t coarse_candidates = 0;
};

// Centers c with c - edge/2 >= region.lo and c + edge/2 <= region.hi, i.e.
// subvolumes fully inside the region. Lexicographic (z, y, x) order, step
// `gap` from the low corner.
std::vector<Point3> candidate_centers(const Box3& region, double edge, double gap);

// Two-stage search mirroring the 2D matcher: exhaustive deep pass over the
// coarse candidate lattice (argmin distance to ref_deep), then a fine pass
// on the fine lattice restricted to the Euclidean refine ball around the
// winner (still within the valid-center box), scored against ref_shallow.
// Ties prefer the earlier candidate in lattice order. Throws
// EmptyCandidateSet when the region cannot hold a single subvolume.
Match3dResult match_3d(std::span<const double> ref_deep,
                       std::span<const double> ref_shallow, const VoxelGrid& tgt,
                       const Box3& tgt_region, const Match3dConfig& cfg,
                       const DescriptorOracle3& oracle);

// Convenience: reference descriptors come from the oracle at `query`.
Match3dResult match_3d(const VoxelGrid& ref, const VoxelGrid& tgt, Point3 query,
                       const Box3& tgt_region, const Match3dConfig& cfg,
                       const DescriptorOracle3& oracle);

}  // namespace himatch
