#include "himatch/match.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include "himatch/error.hpp"

namespace himatch {

namespace {

double dist_sq(std::span<const double> a, std::span<const double> b) {
  double sq = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double e = a[i] - b[i];
    sq += e * e;
  }
  return sq;
}

}  // namespace

Point2 coarse_match(const FeatureMap& ref_deep, const FeatureMap& tgt_deep,
                    Point2 p_deep, double* dist_out) {
  const std::vector<double> q = sample_unit_descriptor(ref_deep, p_deep);
  // Candidates are unit descriptors; normalized maps hold them directly.
  std::vector<double> tmp;
  double best = 0.0;
  long best_cell = -1;
  for (int cy = 0; cy < tgt_deep.height; ++cy)
    for (int cx = 0; cx < tgt_deep.width; ++cx) {
      double dsq;
      if (tgt_deep.normalized) {
        dsq = dist_sq(q, tgt_deep.cell(cx, cy));
      } else {
        tmp = l2_normalize(tgt_deep.cell(cx, cy));
        dsq = dist_sq(q, tmp);
      }
      if (best_cell < 0 || dsq < best) {
        best = dsq;
        best_cell = static_cast<long>(cy) * tgt_deep.width + cx;
      }
    }
  if (dist_out) *dist_out = std::sqrt(best);
  return {static_cast<double>(best_cell % tgt_deep.width),
          static_cast<double>(best_cell / tgt_deep.width)};
}

Point2 refine_match(const FeatureMap& ref_shallow, const FeatureMap& tgt_shallow,
                    Point2 query_px, Point2 center_px, int radius, double* dist_out) {
  const double f_ref = ref_shallow.scale_factor;
  const std::vector<double> q =
      sample_unit_descriptor(ref_shallow, {query_px.x / f_ref, query_px.y / f_ref});

  const double f = tgt_shallow.scale_factor;
  const double max_x = (tgt_shallow.width - 1) * f;
  const double max_y = (tgt_shallow.height - 1) * f;
  const double cx = std::clamp(center_px.x, 0.0, max_x);
  const double cy = std::clamp(center_px.y, 0.0, max_y);
  const double r_sq = static_cast<double>(radius) * radius;

  const int x_lo = static_cast<int>(std::ceil(std::max(0.0, cx - radius)));
  const int x_hi = static_cast<int>(std::floor(std::min(max_x, cx + radius)));
  const int y_lo = static_cast<int>(std::ceil(std::max(0.0, cy - radius)));
  const int y_hi = static_cast<int>(std::floor(std::min(max_y, cy + radius)));

  double best = 0.0;
  Point2 best_px{cx, cy};
  bool found = false;
  std::vector<double> cand;
  for (int py = y_lo; py <= y_hi; ++py)
    for (int px = x_lo; px <= x_hi; ++px) {
      const double dx = px - cx;
      const double dy = py - cy;
      if (dx * dx + dy * dy > r_sq) continue;
      cand = sample_unit_descriptor(tgt_shallow, {px / f, py / f});
      const double dsq = dist_sq(q, cand);
      if (!found || dsq < best) {
        best = dsq;
        best_px = {static_cast<double>(px), static_cast<double>(py)};
        found = true;
      }
    }
  if (!found) {
    // Fractional center with a radius too small to reach an integer pixel:
    // the clipped center itself is still a candidate.
    cand = sample_unit_descriptor(tgt_shallow, {cx / f, cy / f});
    best = dist_sq(q, cand);
  }
  if (dist_out) *dist_out = std::sqrt(best);
  return best_px;
}

MatchResult hierarchical_match(const FeatureHierarchy& ref, const FeatureHierarchy& tgt,
                               Point2 query_px, const MatchConfig& cfg) {
  const FeatureMap& deep_ref = ref.deep();
  const FeatureMap& deep_tgt = tgt.deep();
  const double f_d = deep_ref.scale_factor;

  MatchResult r;
  r.query = query_px;
  r.coarse_cell = coarse_match(deep_ref, deep_tgt,
                               {query_px.x / f_d, query_px.y / f_d}, &r.d_coarse);
  const double f_t = deep_tgt.scale_factor;
  const Point2 center{r.coarse_cell.x * f_t, r.coarse_cell.y * f_t};
  r.refined = refine_match(ref.shallow(), tgt.shallow(), query_px, center,
                           cfg.refine_radius, &r.d_fine);
  return r;
}

std::vector<MatchResult> hierarchical_match(const FeatureHierarchy& ref,
                                            const FeatureHierarchy& tgt,
                                            const std::vector<Point2>& queries,
                                            const MatchConfig& cfg) {
  std::vector<MatchResult> out;
  out.reserve(queries.size());
  for (const Point2& q : queries) out.push_back(hierarchical_match(ref, tgt, q, cfg));
  return out;
}

DenseMatches dense_match(const FeatureHierarchy& ref, const FeatureHierarchy& tgt,
                         const MatchConfig& cfg) {
  const FeatureMap& shallow = ref.shallow();
  const int f_s = shallow.scale_factor;
  const int w_px = (shallow.width - 1) * f_s + 1;
  const int h_px = (shallow.height - 1) * f_s + 1;
  const int stride = std::max(1, cfg.dense_stride);

  DenseMatches dm;
  dm.stride = stride;
  dm.grid_w = w_px / stride;
  dm.grid_h = h_px / stride;
  if (dm.grid_w == 0 || dm.grid_h == 0)
    throw EmptyOutput("dense_match: stride larger than the image");
  dm.results.reserve(static_cast<std::size_t>(dm.grid_w) * dm.grid_h);
  dm.valid.reserve(dm.results.capacity());

  const FeatureMap& deep = ref.deep();
  const double f_d = deep.scale_factor;
  for (int gy = 0; gy < dm.grid_h; ++gy)
    for (int gx = 0; gx < dm.grid_w; ++gx) {
      const Point2 q{static_cast<double>(gx) * stride, static_cast<double>(gy) * stride};
      const bool in_deep = q.x / f_d <= deep.width - 1 && q.y / f_d <= deep.height - 1;
      if (!in_deep) {
        MatchResult r;
        r.query = q;
        r.refined = q;
        dm.results.push_back(r);
        dm.valid.push_back(0);
        continue;
      }
      dm.results.push_back(hierarchical_match(ref, tgt, q, cfg));
      dm.valid.push_back(1);
    }
  return dm;
}

namespace {

// Unit hypercolumn at an image pixel: per-level unit samples concatenated,
// then renormalized. Returns false if any level's coordinate leaves its map.
bool hypercolumn(const FeatureHierarchy& h, Point2 px, std::vector<double>& out) {
  out.clear();
  for (const FeatureMap& m : h.maps) {
    const double f = m.scale_factor;
    const Point2 p{px.x / f, px.y / f};
    if (!(p.x >= 0 && p.x <= m.width - 1 && p.y >= 0 && p.y <= m.height - 1)) return false;
    const std::vector<double> s = sample_unit_descriptor(m, p);
    out.insert(out.end(), s.begin(), s.end());
  }
  l2_normalize_inplace(out);
  return true;
}

}  // namespace

std::vector<MatchResult> concat_match(const FeatureHierarchy& ref,
                                      const FeatureHierarchy& tgt,
                                      const std::vector<Point2>& queries) {
  const FeatureMap& deep = tgt.maps.back();
  const double f_L = deep.scale_factor;

  // Candidate bank over deepest-level cells, built once for all queries.
  std::vector<std::vector<double>> bank(deep.cell_count());
  std::vector<char> usable(deep.cell_count(), 0);
  for (int cy = 0; cy < deep.height; ++cy)
    for (int cx = 0; cx < deep.width; ++cx) {
      const std::size_t cell = static_cast<std::size_t>(cy) * deep.width + cx;
      usable[cell] = hypercolumn(tgt, {cx * f_L, cy * f_L}, bank[cell]) ? 1 : 0;
    }

  std::vector<MatchResult> out;
  out.reserve(queries.size());
  std::vector<double> q;
  for (const Point2& query : queries) {
    if (!hypercolumn(ref, query, q))
      throw OutOfBounds("concat_match: query (" + std::to_string(query.x) + ", " +
                        std::to_string(query.y) + ") leaves a level");
    double best = 0.0;
    long best_cell = -1;
    for (std::size_t cell = 0; cell < bank.size(); ++cell) {
      if (!usable[cell]) continue;
      const double dsq = dist_sq(q, bank[cell]);
      if (best_cell < 0 || dsq < best) {
        best = dsq;
        best_cell = static_cast<long>(cell);
      }
    }
    if (best_cell < 0) throw EmptyCandidateSet("concat_match: no usable target cell");
    MatchResult r;
    r.query = query;
    r.coarse_cell = {static_cast<double>(best_cell % deep.width),
                     static_cast<double>(best_cell / deep.width)};
    r.refined = {r.coarse_cell.x * f_L, r.coarse_cell.y * f_L};
    r.d_coarse = r.d_fine = std::sqrt(best);
    out.push_back(r);
  }
  return out;
}

MatchResult concat_match(const FeatureHierarchy& ref, const FeatureHierarchy& tgt,
                         Point2 query_px) {
  return concat_match(ref, tgt, std::vector<Point2>{query_px}).front();
}

void write_matches(const DenseMatches& m, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path);
  out.precision(17);
  for (std::size_t i = 0; i < m.results.size(); ++i) {
    const MatchResult& r = m.results[i];
    out << r.query.x << " " << r.query.y << " " << r.refined.x << " " << r.refined.y
        << " " << r.d_coarse << " " << r.d_fine << " " << int(m.valid[i]) << "\n";
  }
  if (!out) throw IoError("short write to " + path);
}

std::vector<MatchRow> read_matches(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path);
  std::vector<MatchRow> rows;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r\n") == std::string::npos) continue;
    std::istringstream ls(line);
    MatchRow r;
    if (!(ls >> r.x >> r.y >> r.xh >> r.yh >> r.d_coarse >> r.d_fine >> r.valid))
      throw TruncatedFile(path + ": malformed match at line " + std::to_string(line_no));
    rows.push_back(r);
  }
  return rows;
}

}  // namespace himatch
