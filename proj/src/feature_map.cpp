#include "himatch/feature_map.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>

#include "himatch/error.hpp"

namespace himatch {

std::vector<double> l2_normalize(std::span<const double> v, double eps) {
  std::vector<double> out(v.begin(), v.end());
  l2_normalize_inplace(out, eps);
  return out;
}

void l2_normalize_inplace(std::span<double> v, double eps) {
  double sq = 0.0;
  for (double x : v) sq += x * x;
  // Divide rather than multiply by the reciprocal: exact when the norm is
  // exactly representable, e.g. (3, 4) -> (0.6, 0.8).
  const double n = std::max(std::sqrt(sq), eps);
  for (double& x : v) x /= n;
}

BilinearCells bilinear_cells(const FeatureMap& map, Point2 p) {
  if (!(p.x >= 0.0 && p.x <= map.width - 1 && p.y >= 0.0 && p.y <= map.height - 1))
    throw OutOfBounds("sample at (" + std::to_string(p.x) + ", " + std::to_string(p.y) +
                      ") outside " + std::to_string(map.width) + "x" +
                      std::to_string(map.height) + " map");
  // Clamp the low corner so x+1 stays in range even at the upper edge; this
  // keeps integer coordinates exact (weight 1 on a stored cell).
  int x0 = std::min(static_cast<int>(p.x), map.width - 2);
  int y0 = std::min(static_cast<int>(p.y), map.height - 2);
  if (map.width == 1) x0 = 0;
  if (map.height == 1) y0 = 0;
  const int x1 = std::min(x0 + 1, map.width - 1);
  const int y1 = std::min(y0 + 1, map.height - 1);
  const double fx = p.x - x0;
  const double fy = p.y - y0;

  BilinearCells b;
  const auto cell = [&](int x, int y) {
    return static_cast<std::size_t>(y) * map.width + x;
  };
  b.idx = {cell(x0, y0), cell(x1, y0), cell(x0, y1), cell(x1, y1)};
  b.w = {(1 - fx) * (1 - fy), fx * (1 - fy), (1 - fx) * fy, fx * fy};
  return b;
}

std::vector<double> bilinear_sample(const FeatureMap& map, Point2 p) {
  const BilinearCells b = bilinear_cells(map, p);
  std::vector<double> out(map.dim, 0.0);
  for (int k = 0; k < 4; ++k) {
    if (b.w[k] == 0.0) continue;
    const double* src = map.data.data() + b.idx[k] * map.dim;
    for (int c = 0; c < map.dim; ++c) out[c] += b.w[k] * src[c];
  }
  return out;
}

std::vector<double> sample_unit_descriptor(const FeatureMap& map, Point2 p, double eps) {
  std::vector<double> out = bilinear_sample(map, p);
  l2_normalize_inplace(out, eps);
  return out;
}

namespace {

constexpr char kMapMagic[4] = {'H', 'F', 'M', '1'};

void write_u32(std::ostream& out, std::uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                        static_cast<unsigned char>(v >> 16),
                        static_cast<unsigned char>(v >> 24)};
  out.write(reinterpret_cast<const char*>(b), 4);
}

std::uint32_t read_u32(std::istream& in, const std::string& path) {
  unsigned char b[4];
  in.read(reinterpret_cast<char*>(b), 4);
  if (in.gcount() != 4) throw TruncatedFile(path + ": header cut short");
  return static_cast<std::uint32_t>(b[0]) | static_cast<std::uint32_t>(b[1]) << 8 |
         static_cast<std::uint32_t>(b[2]) << 16 | static_cast<std::uint32_t>(b[3]) << 24;
}

void write_f32(std::ostream& out, const std::vector<double>& v) {
  std::vector<float> f(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) f[i] = static_cast<float>(v[i]);
  out.write(reinterpret_cast<const char*>(f.data()),
            static_cast<std::streamsize>(f.size() * sizeof(float)));
}

void read_f32(std::istream& in, std::vector<double>& v, const std::string& path) {
  std::vector<float> f(v.size());
  in.read(reinterpret_cast<char*>(f.data()),
          static_cast<std::streamsize>(f.size() * sizeof(float)));
  if (static_cast<std::size_t>(in.gcount()) != f.size() * sizeof(float))
    throw TruncatedFile(path + ": data shorter than header declares");
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = f[i];
}

}  // namespace

FeatureMap read_feature_map(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path);
  char magic[4];
  in.read(magic, 4);
  if (in.gcount() != 4 || std::memcmp(magic, kMapMagic, 4) != 0)
    throw BadMagic(path + ": not a feature-map file");

  FeatureMap m;
  m.level_id = static_cast<int>(read_u32(in, path));
  m.scale_factor = static_cast<int>(read_u32(in, path));
  const std::uint32_t w = read_u32(in, path);
  const std::uint32_t h = read_u32(in, path);
  const std::uint32_t dim = read_u32(in, path);
  constexpr std::uint32_t kMaxDim = 1u << 20;
  if (w == 0 || h == 0 || dim == 0 || w > kMaxDim || h > kMaxDim || dim > kMaxDim ||
      m.scale_factor < 1)
    throw DimOverflow(path + ": implausible dims " + std::to_string(w) + "x" +
                      std::to_string(h) + "x" + std::to_string(dim));
  char flag = 0;
  in.read(&flag, 1);
  if (in.gcount() != 1) throw TruncatedFile(path + ": missing normalized flag");
  m.width = static_cast<int>(w);
  m.height = static_cast<int>(h);
  m.dim = static_cast<int>(dim);
  m.normalized = flag != 0;
  m.data.resize(static_cast<std::size_t>(w) * h * dim);
  read_f32(in, m.data, path);
  return m;
}

void write_feature_map(const FeatureMap& map, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path);
  out.write(kMapMagic, 4);
  write_u32(out, static_cast<std::uint32_t>(map.level_id));
  write_u32(out, static_cast<std::uint32_t>(map.scale_factor));
  write_u32(out, static_cast<std::uint32_t>(map.width));
  write_u32(out, static_cast<std::uint32_t>(map.height));
  write_u32(out, static_cast<std::uint32_t>(map.dim));
  const char flag = map.normalized ? 1 : 0;
  out.write(&flag, 1);
  write_f32(out, map.data);
  if (!out) throw IoError("short write to " + path);
}

}  // namespace himatch
