#include "himatch/flow.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <numeric>

#include "himatch/error.hpp"

namespace himatch {

std::vector<SparseMatch> forward_backward_filter(const DenseMatches& fwd,
                                                 const DenseMatches& bwd,
                                                 double threshold) {
  std::vector<SparseMatch> out;
  const double t_sq = threshold * threshold;
  for (std::size_t i = 0; i < fwd.results.size(); ++i) {
    if (!fwd.valid[i]) continue;
    const MatchResult& r = fwd.results[i];
    const long rx = std::lround(r.refined.x);
    const long ry = std::lround(r.refined.y);
    // The backward match for that target pixel must exist on bwd's grid.
    if (rx < 0 || ry < 0 || rx % bwd.stride != 0 || ry % bwd.stride != 0) continue;
    const long gx = rx / bwd.stride;
    const long gy = ry / bwd.stride;
    if (gx >= bwd.grid_w || gy >= bwd.grid_h) continue;
    const std::size_t j = static_cast<std::size_t>(gy) * bwd.grid_w + gx;
    if (!bwd.valid[j]) continue;
    const Point2 back = bwd.results[j].refined;
    const double dx = back.x - r.query.x;
    const double dy = back.y - r.query.y;
    if (dx * dx + dy * dy <= t_sq) out.push_back({r.query, r.refined});
  }
  return out;
}

std::vector<SparseMatch> motion_window_filter(const std::vector<SparseMatch>& in,
                                              double window) {
  std::vector<SparseMatch> out;
  out.reserve(in.size());
  for (const SparseMatch& m : in) {
    const double u = m.xp.x - m.x.x;
    const double v = m.xp.y - m.x.y;
    if (std::abs(u) <= window && std::abs(v) <= window) out.push_back(m);
  }
  return out;
}

namespace {

// Weighted least-squares affine fit of displacements over the selected
// seeds, coordinates centered at the query pixel so the constant term IS the
// flow there. Falls back to the weighted mean when the 3x3 normal system is
// rank-deficient.
struct AffineFit {
  double u = 0.0, v = 0.0;
};

bool solve3(double m[3][3], double rhs[3][2], double out[3][2]) {
  int perm[3] = {0, 1, 2};
  for (int col = 0; col < 3; ++col) {
    int piv = col;
    for (int r = col + 1; r < 3; ++r)
      if (std::abs(m[perm[r]][col]) > std::abs(m[perm[piv]][col])) piv = r;
    std::swap(perm[col], perm[piv]);
    const double p = m[perm[col]][col];
    if (std::abs(p) < 1e-12) return false;
    for (int r = col + 1; r < 3; ++r) {
      const double factor = m[perm[r]][col] / p;
      for (int c = col; c < 3; ++c) m[perm[r]][c] -= factor * m[perm[col]][c];
      rhs[perm[r]][0] -= factor * rhs[perm[col]][0];
      rhs[perm[r]][1] -= factor * rhs[perm[col]][1];
    }
  }
  for (int col = 2; col >= 0; --col) {
    double s0 = rhs[perm[col]][0];
    double s1 = rhs[perm[col]][1];
    for (int c = col + 1; c < 3; ++c) {
      s0 -= m[perm[col]][c] * out[c][0];
      s1 -= m[perm[col]][c] * out[c][1];
    }
    out[col][0] = s0 / m[perm[col]][col];
    out[col][1] = s1 / m[perm[col]][col];
  }
  return true;
}

}  // namespace

FlowField interpolate_flow(const std::vector<SparseMatch>& seeds, int width, int height,
                           const FlowConfig& cfg) {
  if (seeds.empty()) throw NoSeeds("interpolate_flow: no seeds survived filtering");
  FlowField out = FlowField::make(width, height);

  const std::size_t n = seeds.size();
  const std::size_t k = std::min<std::size_t>(std::max(1, cfg.interp_k), n);
  const double inv_two_sigma_sq = 1.0 / (2.0 * cfg.interp_sigma * cfg.interp_sigma);

  std::vector<std::pair<double, std::size_t>> by_dist(n);
  for (int py = 0; py < height; ++py)
    for (int px = 0; px < width; ++px) {
      for (std::size_t i = 0; i < n; ++i) {
        const double dx = seeds[i].x.x - px;
        const double dy = seeds[i].x.y - py;
        by_dist[i] = {dx * dx + dy * dy, i};
      }
      // Ties resolved by seed index so the field is reproducible.
      std::partial_sort(by_dist.begin(), by_dist.begin() + k, by_dist.end());

      double sw = 0.0;
      double m[3][3] = {};
      double rhs[3][2] = {};
      double mean_u = 0.0, mean_v = 0.0;
      for (std::size_t i = 0; i < k; ++i) {
        const SparseMatch& s = seeds[by_dist[i].second];
        const double w = std::exp(-by_dist[i].first * inv_two_sigma_sq);
        const double dx = s.x.x - px;
        const double dy = s.x.y - py;
        const double fu = s.xp.x - s.x.x;
        const double fv = s.xp.y - s.x.y;
        sw += w;
        mean_u += w * fu;
        mean_v += w * fv;
        const double row[3] = {dx, dy, 1.0};
        for (int a = 0; a < 3; ++a) {
          for (int b = 0; b < 3; ++b) m[a][b] += w * row[a] * row[b];
          rhs[a][0] += w * row[a] * fu;
          rhs[a][1] += w * row[a] * fv;
        }
      }

      const std::size_t at = out.idx(px, py);
      bool solved = false;
      if (k >= static_cast<std::size_t>(cfg.min_affine_neighbors)) {
        double sol[3][2] = {};
        if (solve3(m, rhs, sol)) {
          // Centered coordinates: the constant coefficients are the flow at p.
          out.u[at] = sol[2][0];
          out.v[at] = sol[2][1];
          solved = true;
        }
      }
      if (!solved) {
        if (sw > 0.0) {
          out.u[at] = mean_u / sw;
          out.v[at] = mean_v / sw;
        } else {
          // All weights underflowed; plain mean keeps the output finite.
          double su = 0.0, sv = 0.0;
          for (std::size_t i = 0; i < k; ++i) {
            const SparseMatch& s = seeds[by_dist[i].second];
            su += s.xp.x - s.x.x;
            sv += s.xp.y - s.x.y;
          }
          out.u[at] = su / k;
          out.v[at] = sv / k;
        }
      }
      out.valid[at] = 1;
    }
  return out;
}

namespace {

constexpr char kFloMagic[4] = {'P', 'I', 'E', 'H'};
constexpr float kFloSentinel = 1e9f;

void put_i32(std::ostream& out, std::int32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                        static_cast<unsigned char>(v >> 16),
                        static_cast<unsigned char>(v >> 24)};
  out.write(reinterpret_cast<const char*>(b), 4);
}

std::int32_t get_i32(std::istream& in, const std::string& path) {
  unsigned char b[4];
  in.read(reinterpret_cast<char*>(b), 4);
  if (in.gcount() != 4) throw TruncatedFile(path + ": header cut short");
  return static_cast<std::int32_t>(static_cast<std::uint32_t>(b[0]) |
                                   static_cast<std::uint32_t>(b[1]) << 8 |
                                   static_cast<std::uint32_t>(b[2]) << 16 |
                                   static_cast<std::uint32_t>(b[3]) << 24);
}

}  // namespace

void write_flo(const FlowField& f, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path);
  out.write(kFloMagic, 4);
  put_i32(out, f.width);
  put_i32(out, f.height);
  std::vector<float> row(static_cast<std::size_t>(f.width) * 2);
  for (int y = 0; y < f.height; ++y) {
    for (int x = 0; x < f.width; ++x) {
      const std::size_t i = f.idx(x, y);
      row[2 * x] = f.valid[i] ? static_cast<float>(f.u[i]) : kFloSentinel;
      row[2 * x + 1] = f.valid[i] ? static_cast<float>(f.v[i]) : kFloSentinel;
    }
    out.write(reinterpret_cast<const char*>(row.data()),
              static_cast<std::streamsize>(row.size() * sizeof(float)));
  }
  if (!out) throw IoError("short write to " + path);
}

FlowField read_flo(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path);
  char magic[4];
  in.read(magic, 4);
  if (in.gcount() != 4 || std::memcmp(magic, kFloMagic, 4) != 0)
    throw BadMagic(path + ": not a .flo file");
  const std::int32_t w = get_i32(in, path);
  const std::int32_t h = get_i32(in, path);
  if (w <= 0 || h <= 0 || w > 1 << 20 || h > 1 << 20)
    throw TruncatedFile(path + ": implausible dims " + std::to_string(w) + "x" +
                        std::to_string(h));
  FlowField f = FlowField::make(w, h);
  std::vector<float> data(static_cast<std::size_t>(w) * h * 2);
  in.read(reinterpret_cast<char*>(data.data()),
          static_cast<std::streamsize>(data.size() * sizeof(float)));
  if (static_cast<std::size_t>(in.gcount()) != data.size() * sizeof(float))
    throw TruncatedFile(path + ": flow data shorter than header declares");
  constexpr float kHuge = 1e8f;
  for (std::size_t i = 0; i < f.u.size(); ++i) {
    const float u = data[2 * i];
    const float v = data[2 * i + 1];
    f.u[i] = u;
    f.v[i] = v;
    f.valid[i] = (std::abs(u) < kHuge && std::abs(v) < kHuge) ? 1 : 0;
  }
  return f;
}

}  // namespace himatch
