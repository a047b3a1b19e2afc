#include <cmath>
#include <fstream>

#include "doctest.h"
#include "himatch/error.hpp"
#include "himatch/features.hpp"
#include "himatch/learn.hpp"
#include "support.hpp"

using namespace himatch;

namespace {

// Straight-line reimplementation of the descriptor definition, one pixel at
// a time, with no shared precomputation.
std::vector<double> oracle_desc(const Image& img, const LevelConfig& cfg, int x, int y) {
  const auto at = [&](int xx, int yy) {
    return img.at(std::clamp(xx, 0, img.width - 1), std::clamp(yy, 0, img.height - 1), 0);
  };
  std::vector<double> d(cfg.base_dim(), 0.0);
  const int sup = cfg.grid * cfg.cell_size;
  const int half = sup / 2;
  for (int oy = 0; oy < sup; ++oy)
    for (int ox = 0; ox < sup; ++ox) {
      const int px = std::clamp(x - half + ox, 0, img.width - 1);
      const int py = std::clamp(y - half + oy, 0, img.height - 1);
      const double gx = (at(px + 1, py) - at(px - 1, py)) / 2.0;
      const double gy = (at(px, py + 1) - at(px, py - 1)) / 2.0;
      const double m = std::sqrt(gx * gx + gy * gy);
      double ang = std::atan2(gy, gx);
      if (ang < 0) ang += 2.0 * M_PI;
      int b = static_cast<int>(ang / (2.0 * M_PI / cfg.orientation_bins));
      if (b >= cfg.orientation_bins) b = cfg.orientation_bins - 1;
      const int cell = (oy / cfg.cell_size) * cfg.grid + ox / cfg.cell_size;
      d[static_cast<std::size_t>(cell) * cfg.orientation_bins + b] += m;
    }
  return d;
}

Image crop(const Image& img, int x0, int y0, int w, int h) {
  Image out = Image::zeros(w, h, 1);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) out.at(x, y, 0) = img.at(x0 + x, y0 + y, 0);
  return out;
}

}  // namespace

TEST_CASE("base descriptors match a per-pixel oracle") {
  LevelConfig cfg;
  cfg.level_id = 0;
  cfg.scale_factor = 1;
  cfg.cell_size = 2;
  cfg.grid = 2;
  cfg.orientation_bins = 4;
  const Image img = testsup::textured_image(16, 16, 5, 4);

  const FeatureMap map = compute_base_descriptors(img, cfg);
  CHECK(map.width == 16);
  CHECK(map.height == 16);
  CHECK(map.dim == cfg.base_dim());
  CHECK(map.dim == 16);
  CHECK_FALSE(map.normalized);

  for (int y = 0; y < 16; ++y)
    for (int x = 0; x < 16; ++x) {
      const std::vector<double> want = oracle_desc(img, cfg, x, y);
      const auto got = map.cell(x, y);
      for (int i = 0; i < map.dim; ++i)
        CHECK(got[i] == doctest::Approx(want[i]).epsilon(1e-12));
    }
}

TEST_CASE("deeper level descriptors are the oracle on the downsampled image") {
  LevelConfig cfg;
  cfg.level_id = 1;
  cfg.scale_factor = 2;
  cfg.cell_size = 2;
  cfg.grid = 2;
  cfg.orientation_bins = 4;
  const Image img = testsup::textured_image(18, 14, 7, 4);
  const Image small = downsample(img, 2);

  const FeatureMap map = compute_base_descriptors(img, cfg);
  CHECK(map.width == 9);
  CHECK(map.height == 7);
  for (int y = 0; y < map.height; ++y)
    for (int x = 0; x < map.width; ++x) {
      const std::vector<double> want = oracle_desc(small, cfg, x, y);
      const auto got = map.cell(x, y);
      for (int i = 0; i < map.dim; ++i)
        CHECK(got[i] == doctest::Approx(want[i]).epsilon(1e-12));
    }
}

TEST_CASE("descriptors are translation equivariant away from borders") {
  const Image parent = testsup::textured_image(56, 40, 21, 8);
  const Image a = crop(parent, 0, 0, 40, 40);
  const Image b = crop(parent, 8, 0, 40, 40);

  LevelConfig cfg;  // default cell 4, grid 3 -> support 12
  cfg.scale_factor = 1;
  const FeatureMap ma = compute_base_descriptors(a, cfg);
  const FeatureMap mb = compute_base_descriptors(b, cfg);

  for (int y = 7; y <= 32; ++y)
    for (int x = 7; x <= 24; ++x) {
      const auto da = ma.cell(x + 8, y);
      const auto db = mb.cell(x, y);
      for (int i = 0; i < ma.dim; ++i) CHECK(da[i] == db[i]);
    }
}

TEST_CASE("descriptor extraction rejects bad inputs") {
  const Image small = testsup::textured_image(24, 24, 1, 4);
  CHECK_THROWS_AS(extract_base_hierarchy(small, default_levels()), ImageTooSmall);

  Image rgb = Image::zeros(64, 64, 3);
  LevelConfig cfg;
  CHECK_THROWS_AS(compute_base_descriptors(rgb, cfg), DimMismatch);

  const Image ok = testsup::textured_image(48, 48, 2, 8);
  CHECK_NOTHROW(extract_base_hierarchy(ok, default_levels()));

  std::vector<LevelConfig> one = {default_levels()[0]};
  std::vector<EmbeddingHead> heads;
  CHECK_THROWS_AS(extract_hierarchy(ok, one, heads), HierarchyTooShallow);

  std::vector<LevelConfig> bad_order = default_levels();
  std::swap(bad_order[0], bad_order[1]);
  CHECK_THROWS_AS(extract_base_hierarchy(ok, bad_order), ConfigError);
}

TEST_CASE("default hierarchy has a shallow and a deep level") {
  const std::vector<LevelConfig> levels = default_levels();
  REQUIRE(levels.size() == 2);
  CHECK(levels[0].scale_factor == 1);
  CHECK(levels[1].scale_factor == 4);
  CHECK(levels[0].base_dim() == 72);
  CHECK(levels[0].head_out_dim == 64);

  const Image img = testsup::textured_image(64, 48, 3, 8);
  const FeatureHierarchy base = extract_base_hierarchy(img, levels);
  CHECK(base.shallow().width == 64);
  CHECK(base.shallow().height == 48);
  CHECK(base.deep().width == 16);
  CHECK(base.deep().height == 12);
  CHECK(base.deep().scale_factor == 4);

  Rng rng(9);
  const std::vector<EmbeddingHead> heads = init_heads(levels, rng);
  const FeatureHierarchy proj = extract_hierarchy(img, levels, heads);
  CHECK(proj.shallow().dim == 64);
  CHECK(proj.deep().dim == 64);
  CHECK(proj.shallow().normalized);
  // Every projected cell is unit length.
  for (std::size_t c = 0; c < proj.deep().cell_count(); ++c) {
    double sq = 0;
    const double* d = proj.deep().data.data() + c * proj.deep().dim;
    for (int i = 0; i < proj.deep().dim; ++i) sq += d[i] * d[i];
    CHECK(std::sqrt(sq) == doctest::Approx(1.0).epsilon(1e-9));
  }
}

TEST_CASE("apply_head projects then normalizes, reporting raw norms") {
  FeatureMap base = FeatureMap::make(0, 1, 2, 1, 2);
  base.cell(0, 0)[0] = 2.0;
  base.cell(0, 0)[1] = 3.0;
  // second cell stays all-zero

  EmbeddingHead head;
  head.level_id = 0;
  head.weights = Mat(2, 3);
  head.weights.at(0, 0) = 1.0;
  head.weights.at(0, 2) = 1.0;
  head.weights.at(1, 1) = 2.0;
  head.bias = {0.5, 0.0, -0.5};

  std::vector<double> norms;
  const FeatureMap out = apply_head(base, head, &norms);
  const double zx = 2.5, zy = 6.0, zz = 1.5;
  const double n = std::sqrt(zx * zx + zy * zy + zz * zz);
  CHECK(out.dim == 3);
  CHECK(out.normalized);
  CHECK(out.cell(0, 0)[0] == doctest::Approx(zx / n).epsilon(1e-12));
  CHECK(out.cell(0, 0)[1] == doctest::Approx(zy / n).epsilon(1e-12));
  CHECK(out.cell(0, 0)[2] == doctest::Approx(zz / n).epsilon(1e-12));
  REQUIRE(norms.size() == 2);
  CHECK(norms[0] == doctest::Approx(n).epsilon(1e-12));

  // Zero input runs through the bias only.
  const double bn = std::sqrt(0.5 * 0.5 + 0.5 * 0.5);
  CHECK(out.cell(1, 0)[0] == doctest::Approx(0.5 / bn).epsilon(1e-12));
  CHECK(norms[1] == doctest::Approx(bn).epsilon(1e-12));

  FeatureMap wrong = FeatureMap::make(0, 1, 1, 1, 5);
  CHECK_THROWS_AS(apply_head(wrong, head, nullptr), DimMismatch);
}

TEST_CASE("heads file round trip") {
  const std::string dir = testsup::temp_dir("hhd");
  Rng rng(4);
  const std::vector<EmbeddingHead> heads = init_heads(default_levels(), rng);
  write_heads(heads, dir + "/h.hhd");
  const std::vector<EmbeddingHead> back = read_heads(dir + "/h.hhd");
  REQUIRE(back.size() == heads.size());
  for (std::size_t l = 0; l < heads.size(); ++l) {
    CHECK(back[l].level_id == heads[l].level_id);
    CHECK(back[l].weights.rows == heads[l].weights.rows);
    CHECK(back[l].weights.cols == heads[l].weights.cols);
    for (std::size_t i = 0; i < heads[l].weights.v.size(); ++i)
      CHECK(back[l].weights.v[i] == doctest::Approx(heads[l].weights.v[i]).epsilon(1e-6));
    for (std::size_t i = 0; i < heads[l].bias.size(); ++i)
      CHECK(back[l].bias[i] == doctest::Approx(heads[l].bias[i]).epsilon(1e-6));
  }

  {
    std::ofstream f(dir + "/bad.hhd", std::ios::binary);
    f << "XXXX";
  }
  CHECK_THROWS_AS(read_heads(dir + "/bad.hhd"), BadMagic);
  {
    std::ifstream in(dir + "/h.hhd", std::ios::binary);
    std::string all((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    std::ofstream f(dir + "/cut.hhd", std::ios::binary);
    f.write(all.data(), static_cast<std::streamsize>(all.size() - 7));
  }
  CHECK_THROWS_AS(read_heads(dir + "/cut.hhd"), TruncatedFile);
}
