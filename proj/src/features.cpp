#include "himatch/features.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>

#include "himatch/error.hpp"

namespace himatch {

std::vector<LevelConfig> default_levels() {
  LevelConfig shallow;
  shallow.level_id = 0;
  shallow.scale_factor = 1;
  LevelConfig deep;
  deep.level_id = 1;
  deep.scale_factor = 4;
  return {shallow, deep};
}

FeatureMap compute_base_descriptors(const Image& gray, const LevelConfig& cfg) {
  if (gray.channels != 1)
    throw DimMismatch("compute_base_descriptors: expects a grayscale image");
  const int support = cfg.grid * cfg.cell_size;
  if (gray.width < support * cfg.scale_factor || gray.height < support * cfg.scale_factor)
    throw ImageTooSmall("compute_base_descriptors: " + std::to_string(gray.width) + "x" +
                        std::to_string(gray.height) + " below " +
                        std::to_string(support * cfg.scale_factor) + " minimum");

  const Image img = downsample(gray, cfg.scale_factor);
  const int w = img.width;
  const int h = img.height;
  const auto clamp_x = [&](int x) { return std::clamp(x, 0, w - 1); };
  const auto clamp_y = [&](int y) { return std::clamp(y, 0, h - 1); };

  // Gradient magnitude and hard-assigned orientation bin per pixel; replicate
  // borders for the central differences.
  std::vector<double> mag(img.pixel_count());
  std::vector<int> bin(img.pixel_count());
  const double bin_width = 2.0 * 3.14159265358979323846 / cfg.orientation_bins;
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      const double gx = (img.at(clamp_x(x + 1), y) - img.at(clamp_x(x - 1), y)) / 2.0;
      const double gy = (img.at(x, clamp_y(y + 1)) - img.at(x, clamp_y(y - 1))) / 2.0;
      double ang = std::atan2(gy, gx);
      if (ang < 0) ang += 2.0 * 3.14159265358979323846;
      int b = static_cast<int>(ang / bin_width);
      if (b >= cfg.orientation_bins) b = cfg.orientation_bins - 1;
      mag[static_cast<std::size_t>(y) * w + x] = std::sqrt(gx * gx + gy * gy);
      bin[static_cast<std::size_t>(y) * w + x] = b;
    }

  FeatureMap out = FeatureMap::make(cfg.level_id, cfg.scale_factor, w, h, cfg.base_dim());
  const int half = support / 2;
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      std::span<double> d = out.cell(x, y);
      for (int cy = 0; cy < cfg.grid; ++cy)
        for (int cx = 0; cx < cfg.grid; ++cx) {
          double* hist = d.data() + (cy * cfg.grid + cx) * cfg.orientation_bins;
          for (int sy = 0; sy < cfg.cell_size; ++sy) {
            const int py = clamp_y(y - half + cy * cfg.cell_size + sy);
            for (int sx = 0; sx < cfg.cell_size; ++sx) {
              const int px = clamp_x(x - half + cx * cfg.cell_size + sx);
              const std::size_t i = static_cast<std::size_t>(py) * w + px;
              hist[bin[i]] += mag[i];
            }
          }
        }
    }
  out.normalized = false;
  return out;
}

FeatureMap apply_head(const FeatureMap& base, const EmbeddingHead& head,
                      std::vector<double>* raw_norms) {
  if (base.dim != head.in_dim())
    throw DimMismatch("apply_head: map dim " + std::to_string(base.dim) +
                      " vs head input " + std::to_string(head.in_dim()));
  const int out_dim = head.out_dim();
  FeatureMap out = FeatureMap::make(base.level_id, base.scale_factor, base.width,
                                    base.height, out_dim);
  if (raw_norms) raw_norms->assign(base.cell_count(), 0.0);
  std::vector<double> z(out_dim);
  for (std::size_t cell = 0; cell < base.cell_count(); ++cell) {
    const double* d = base.data.data() + cell * base.dim;
    std::copy(head.bias.begin(), head.bias.end(), z.begin());
    for (int i = 0; i < base.dim; ++i) {
      const double di = d[i];
      if (di == 0.0) continue;
      const double* wrow = head.weights.v.data() + static_cast<std::size_t>(i) * out_dim;
      for (int j = 0; j < out_dim; ++j) z[j] += di * wrow[j];
    }
    double sq = 0.0;
    for (double v : z) sq += v * v;
    const double n = std::sqrt(sq);
    if (raw_norms) (*raw_norms)[cell] = n;
    const double inv = 1.0 / std::max(n, kNormEps);
    double* o = out.data.data() + cell * out_dim;
    for (int j = 0; j < out_dim; ++j) o[j] = z[j] * inv;
  }
  out.normalized = true;
  return out;
}

namespace {

void check_level_order(const std::vector<LevelConfig>& levels) {
  for (std::size_t i = 1; i < levels.size(); ++i)
    if (levels[i].scale_factor <= levels[i - 1].scale_factor)
      throw ConfigError("level scale factors must strictly increase");
}

}  // namespace

FeatureHierarchy extract_base_hierarchy(const Image& gray,
                                        const std::vector<LevelConfig>& levels) {
  check_level_order(levels);
  FeatureHierarchy h;
  h.levels = levels;
  h.maps.reserve(levels.size());
  for (const LevelConfig& cfg : levels) h.maps.push_back(compute_base_descriptors(gray, cfg));
  return h;
}

FeatureHierarchy extract_hierarchy(const Image& gray,
                                   const std::vector<LevelConfig>& levels,
                                   const std::vector<EmbeddingHead>& heads) {
  if (levels.size() < 2)
    throw HierarchyTooShallow("extract_hierarchy: need at least 2 levels, got " +
                              std::to_string(levels.size()));
  if (levels.size() != heads.size())
    throw DimMismatch("extract_hierarchy: " + std::to_string(levels.size()) +
                      " levels vs " + std::to_string(heads.size()) + " heads");
  check_level_order(levels);
  FeatureHierarchy h;
  h.levels = levels;
  h.maps.reserve(levels.size());
  for (std::size_t l = 0; l < levels.size(); ++l) {
    if (heads[l].level_id != levels[l].level_id)
      throw DimMismatch("extract_hierarchy: head/level id mismatch at slot " +
                        std::to_string(l));
    h.maps.push_back(apply_head(compute_base_descriptors(gray, levels[l]), heads[l]));
  }
  return h;
}

namespace {

constexpr char kHeadsMagic[4] = {'H', 'H', 'D', '1'};

void put_u32(std::ostream& out, std::uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                        static_cast<unsigned char>(v >> 16),
                        static_cast<unsigned char>(v >> 24)};
  out.write(reinterpret_cast<const char*>(b), 4);
}

std::uint32_t get_u32(std::istream& in, const std::string& path) {
  unsigned char b[4];
  in.read(reinterpret_cast<char*>(b), 4);
  if (in.gcount() != 4) throw TruncatedFile(path + ": header cut short");
  return static_cast<std::uint32_t>(b[0]) | static_cast<std::uint32_t>(b[1]) << 8 |
         static_cast<std::uint32_t>(b[2]) << 16 | static_cast<std::uint32_t>(b[3]) << 24;
}

void put_f32(std::ostream& out, const std::vector<double>& v) {
  std::vector<float> f(v.begin(), v.end());
  out.write(reinterpret_cast<const char*>(f.data()),
            static_cast<std::streamsize>(f.size() * sizeof(float)));
}

void get_f32(std::istream& in, std::vector<double>& v, const std::string& path) {
  std::vector<float> f(v.size());
  in.read(reinterpret_cast<char*>(f.data()),
          static_cast<std::streamsize>(f.size() * sizeof(float)));
  if (static_cast<std::size_t>(in.gcount()) != f.size() * sizeof(float))
    throw TruncatedFile(path + ": weight data shorter than header declares");
  std::copy(f.begin(), f.end(), v.begin());
}

}  // namespace

std::vector<EmbeddingHead> read_heads(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path);
  char magic[4];
  in.read(magic, 4);
  if (in.gcount() != 4 || std::memcmp(magic, kHeadsMagic, 4) != 0)
    throw BadMagic(path + ": not a heads file");
  const std::uint32_t count = get_u32(in, path);
  if (count == 0 || count > 64) throw DimOverflow(path + ": implausible level count");
  std::vector<EmbeddingHead> heads(count);
  for (EmbeddingHead& head : heads) {
    head.level_id = static_cast<int>(get_u32(in, path));
    const std::uint32_t rows = get_u32(in, path);
    const std::uint32_t cols = get_u32(in, path);
    constexpr std::uint32_t kMaxSide = 1u << 16;
    if (rows == 0 || cols == 0 || rows > kMaxSide || cols > kMaxSide)
      throw DimOverflow(path + ": implausible head dims");
    head.weights = Mat(static_cast<int>(rows), static_cast<int>(cols));
    get_f32(in, head.weights.v, path);
    head.bias.assign(cols, 0.0);
    get_f32(in, head.bias, path);
  }
  return heads;
}

void write_heads(const std::vector<EmbeddingHead>& heads, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path);
  out.write(kHeadsMagic, 4);
  put_u32(out, static_cast<std::uint32_t>(heads.size()));
  for (const EmbeddingHead& head : heads) {
    put_u32(out, static_cast<std::uint32_t>(head.level_id));
    put_u32(out, static_cast<std::uint32_t>(head.weights.rows));
    put_u32(out, static_cast<std::uint32_t>(head.weights.cols));
    put_f32(out, head.weights.v);
    put_f32(out, head.bias);
  }
  if (!out) throw IoError("short write to " + path);
}

}  // namespace himatch
