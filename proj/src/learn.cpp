#include "himatch/learn.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

#include "himatch/error.hpp"
#include "himatch/image.hpp"

namespace himatch {

double pair_distance(std::span<const double> u, std::span<const double> v) {
  double sq = 0.0;
  for (std::size_t i = 0; i < u.size(); ++i) {
    const double e = u[i] - v[i];
    sq += e * e;
  }
  return std::sqrt(sq);
}

double pair_distance(const FeatureHierarchy& ref, const FeatureHierarchy& tgt,
                     int level, Point2 x, Point2 xp) {
  const FeatureMap& mr = ref.maps.at(level);
  const FeatureMap& mt = tgt.maps.at(level);
  const double fr = mr.scale_factor;
  const double ft = mt.scale_factor;
  const std::vector<double> a = sample_unit_descriptor(mr, {x.x / fr, x.y / fr});
  const std::vector<double> b = sample_unit_descriptor(mt, {xp.x / ft, xp.y / ft});
  return pair_distance(a, b);
}

double ccl_pair_loss(double d, int label, double margin) {
  if (label == 1) return d * d;
  const double hinge = margin - d;
  return hinge > 0.0 ? hinge * hinge : 0.0;
}

double total_loss(const FeatureHierarchy& ref, const FeatureHierarchy& tgt,
                  const std::vector<std::vector<Correspondence>>& triplets_per_level,
                  double margin) {
  if (triplets_per_level.size() != ref.maps.size())
    throw DimMismatch("total_loss: " + std::to_string(triplets_per_level.size()) +
                      " triplet lists vs " + std::to_string(ref.maps.size()) + " levels");
  double loss = 0.0;
  for (std::size_t l = 0; l < triplets_per_level.size(); ++l)
    for (const Correspondence& c : triplets_per_level[l])
      loss += ccl_pair_loss(pair_distance(ref, tgt, static_cast<int>(l), c.x, c.xp),
                            c.label, margin);
  return loss;
}

namespace {

// Forward record of one bilinear-sampled, re-normalized descriptor; keeps
// what the backward pass needs to chain through both steps.
struct SampleRec {
  BilinearCells cells;
  std::vector<double> a;  // unit output
  double s_norm = 0.0;    // norm of the blend before renormalization
};

SampleRec forward_sample(const FeatureMap& map, Point2 p_cells) {
  SampleRec rec;
  rec.cells = bilinear_cells(map, p_cells);
  std::vector<double> s(map.dim, 0.0);
  for (int k = 0; k < 4; ++k) {
    if (rec.cells.w[k] == 0.0) continue;
    const double* src = map.data.data() + rec.cells.idx[k] * map.dim;
    for (int c = 0; c < map.dim; ++c) s[c] += rec.cells.w[k] * src[c];
  }
  double sq = 0.0;
  for (double v : s) sq += v * v;
  rec.s_norm = std::sqrt(sq);
  const double inv = 1.0 / std::max(rec.s_norm, kNormEps);
  rec.a = std::move(s);
  for (double& v : rec.a) v *= inv;
  return rec;
}

// Pull dL/da back through the renormalization and the bilinear weights,
// accumulating per-cell gradients on the head-projected map.
void backward_sample(const SampleRec& rec, std::span<const double> g_a, int dim,
                     std::vector<double>& gz, std::vector<char>& touched,
                     std::vector<std::size_t>& order) {
  std::vector<double> g_s(dim);
  if (rec.s_norm >= kNormEps) {
    double dot = 0.0;
    for (int c = 0; c < dim; ++c) dot += rec.a[c] * g_a[c];
    for (int c = 0; c < dim; ++c) g_s[c] = (g_a[c] - dot * rec.a[c]) / rec.s_norm;
  } else {
    for (int c = 0; c < dim; ++c) g_s[c] = g_a[c] / kNormEps;
  }
  for (int k = 0; k < 4; ++k) {
    const double w = rec.cells.w[k];
    if (w == 0.0) continue;
    const std::size_t cell = rec.cells.idx[k];
    if (!touched[cell]) {
      touched[cell] = 1;
      order.push_back(cell);
    }
    double* dst = gz.data() + cell * dim;
    for (int c = 0; c < dim; ++c) dst[c] += w * g_s[c];
  }
}

struct ProjectedLevel {
  FeatureMap map;
  std::vector<double> raw_norms;
};

ProjectedLevel project(const FeatureMap& base, const EmbeddingHead& head) {
  ProjectedLevel p;
  p.map = apply_head(base, head, &p.raw_norms);
  return p;
}

// Data loss at one level plus its gradient accumulated into dW/db. Cells are
// first gathered into per-cell dL/dz buffers so each touched cell costs one
// outer product no matter how many triplets hit it.
double level_loss_and_grads(const FeatureMap& base_ref, const ProjectedLevel& ref,
                            const FeatureMap& base_tgt, const ProjectedLevel& tgt,
                            const std::vector<Correspondence>& triplets, double margin,
                            Mat& dW, std::vector<double>& db) {
  const int dim = ref.map.dim;
  const double f = ref.map.scale_factor;
  std::vector<double> gz_ref(ref.map.cell_count() * dim, 0.0);
  std::vector<double> gz_tgt(tgt.map.cell_count() * dim, 0.0);
  std::vector<char> touched_ref(ref.map.cell_count(), 0);
  std::vector<char> touched_tgt(tgt.map.cell_count(), 0);
  std::vector<std::size_t> order_ref, order_tgt;

  double loss = 0.0;
  std::vector<double> ga(dim), gb(dim);
  for (const Correspondence& c : triplets) {
    const SampleRec ra = forward_sample(ref.map, {c.x.x / f, c.x.y / f});
    const SampleRec rb = forward_sample(tgt.map, {c.xp.x / f, c.xp.y / f});
    double dsq = 0.0;
    for (int k = 0; k < dim; ++k) {
      const double e = ra.a[k] - rb.a[k];
      dsq += e * e;
    }
    std::fill(ga.begin(), ga.end(), 0.0);
    std::fill(gb.begin(), gb.end(), 0.0);
    bool contributes = false;
    if (c.label == 1) {
      loss += dsq;
      for (int k = 0; k < dim; ++k) {
        const double e = 2.0 * (ra.a[k] - rb.a[k]);
        ga[k] = e;
        gb[k] = -e;
      }
      contributes = true;
    } else {
      const double d = std::sqrt(dsq);
      const double hinge = margin - d;
      if (hinge > 0.0) {
        loss += hinge * hinge;
        // d(m-d)^2/da = -2(m-d)/d * (a-b); undefined direction at d=0, where
        // the gradient is left at zero.
        if (d > 1e-12) {
          const double coef = -2.0 * hinge / d;
          for (int k = 0; k < dim; ++k) {
            const double e = coef * (ra.a[k] - rb.a[k]);
            ga[k] = e;
            gb[k] = -e;
          }
          contributes = true;
        }
      }
    }
    if (!contributes) continue;
    backward_sample(ra, ga, dim, gz_ref, touched_ref, order_ref);
    backward_sample(rb, gb, dim, gz_tgt, touched_tgt, order_tgt);
  }

  const auto flush = [&](const ProjectedLevel& side, const FeatureMap& base,
                         const std::vector<double>& gz,
                         const std::vector<std::size_t>& order) {
    std::vector<double> gr(dim);
    for (const std::size_t cell : order) {
      const double* z = side.map.data.data() + cell * dim;
      const double* g = gz.data() + cell * dim;
      const double n = side.raw_norms[cell];
      if (n >= kNormEps) {
        double dot = 0.0;
        for (int k = 0; k < dim; ++k) dot += z[k] * g[k];
        for (int k = 0; k < dim; ++k) gr[k] = (g[k] - dot * z[k]) / n;
      } else {
        for (int k = 0; k < dim; ++k) gr[k] = g[k] / kNormEps;
      }
      const double* d = base.data.data() + cell * base.dim;
      for (int i = 0; i < base.dim; ++i) {
        if (d[i] == 0.0) continue;
        double* wrow = dW.v.data() + static_cast<std::size_t>(i) * dim;
        for (int k = 0; k < dim; ++k) wrow[k] += d[i] * gr[k];
      }
      for (int k = 0; k < dim; ++k) db[k] += gr[k];
    }
  };
  flush(ref, base_ref, gz_ref, order_ref);
  flush(tgt, base_tgt, gz_tgt, order_tgt);
  return loss;
}

}  // namespace

void HeadGradients::zero() {
  for (Mat& m : d_weights) std::fill(m.v.begin(), m.v.end(), 0.0);
  for (std::vector<double>& b : d_bias) std::fill(b.begin(), b.end(), 0.0);
}

double loss_and_gradients(const FeatureHierarchy& base_ref,
                          const FeatureHierarchy& base_tgt,
                          const std::vector<EmbeddingHead>& heads,
                          const std::vector<std::vector<Correspondence>>& triplets_per_level,
                          const TrainConfig& cfg, HeadGradients& grads) {
  const std::size_t levels = base_ref.maps.size();
  if (heads.size() != levels || triplets_per_level.size() != levels)
    throw DimMismatch("loss_and_gradients: levels/heads/triplets misaligned");
  grads.d_weights.assign(levels, Mat());
  grads.d_bias.assign(levels, {});
  double loss = 0.0;
  for (std::size_t l = 0; l < levels; ++l) {
    grads.d_weights[l] = Mat(heads[l].weights.rows, heads[l].weights.cols);
    grads.d_bias[l].assign(heads[l].bias.size(), 0.0);
    const ProjectedLevel pr = project(base_ref.maps[l], heads[l]);
    const ProjectedLevel pt = project(base_tgt.maps[l], heads[l]);
    loss += level_loss_and_grads(base_ref.maps[l], pr, base_tgt.maps[l], pt,
                                 triplets_per_level[l], cfg.margin, grads.d_weights[l],
                                 grads.d_bias[l]);
  }
  // Weight decay goes into the gradient, not the reported loss.
  if (cfg.weight_decay != 0.0)
    for (std::size_t l = 0; l < levels; ++l) {
      for (std::size_t i = 0; i < grads.d_weights[l].v.size(); ++i)
        grads.d_weights[l].v[i] += cfg.weight_decay * heads[l].weights.v[i];
      for (std::size_t i = 0; i < grads.d_bias[l].size(); ++i)
        grads.d_bias[l][i] += cfg.weight_decay * heads[l].bias[i];
    }
  return loss;
}

std::vector<Correspondence> mine_hard_negatives(const FeatureMap& ref_map,
                                                const FeatureMap& tgt_map,
                                                const std::vector<Correspondence>& positives,
                                                int positive_window) {
  const double f = tgt_map.scale_factor;
  const double radius = std::ceil(positive_window / f) * f;
  const double radius_sq = radius * radius;
  const double f_ref = ref_map.scale_factor;

  std::vector<Correspondence> out;
  out.reserve(positives.size());
  std::vector<double> anchor, tmp;
  for (const Correspondence& pos : positives) {
    anchor = sample_unit_descriptor(ref_map, {pos.x.x / f_ref, pos.x.y / f_ref});
    double best = 0.0;
    long best_cell = -1;
    for (int cy = 0; cy < tgt_map.height; ++cy)
      for (int cx = 0; cx < tgt_map.width; ++cx) {
        const double dx = cx * f - pos.xp.x;
        const double dy = cy * f - pos.xp.y;
        if (dx * dx + dy * dy <= radius_sq) continue;  // inside the exclusion disk
        const double* cell = tgt_map.data.data() +
                             (static_cast<std::size_t>(cy) * tgt_map.width + cx) * tgt_map.dim;
        // Candidates are unit descriptors, same as the matching stages.
        if (!tgt_map.normalized) {
          tmp = l2_normalize({cell, static_cast<std::size_t>(tgt_map.dim)});
          cell = tmp.data();
        }
        double dsq = 0.0;
        for (int k = 0; k < tgt_map.dim; ++k) {
          const double e = anchor[k] - cell[k];
          dsq += e * e;
        }
        if (best_cell < 0 || dsq < best) {
          best = dsq;
          best_cell = static_cast<long>(cy) * tgt_map.width + cx;
        }
      }
    if (best_cell < 0)
      throw NoValidNegative("mine_hard_negatives: exclusion disk covers the whole map");
    const long cy = best_cell / tgt_map.width;
    const long cx = best_cell % tgt_map.width;
    out.push_back({pos.x, {cx * f, cy * f}, 0});
  }
  return out;
}

void adam_step(std::span<double> params, std::span<const double> grads,
               AdamState& state, const TrainConfig& cfg) {
  if (params.size() != grads.size() || params.size() != state.m.size())
    throw DimMismatch("adam_step: parameter/gradient/state sizes differ");
  state.t += 1;
  const double bc1 = 1.0 - std::pow(cfg.adam_beta1, static_cast<double>(state.t));
  const double bc2 = 1.0 - std::pow(cfg.adam_beta2, static_cast<double>(state.t));
  for (std::size_t i = 0; i < params.size(); ++i) {
    state.m[i] = cfg.adam_beta1 * state.m[i] + (1.0 - cfg.adam_beta1) * grads[i];
    state.v[i] = cfg.adam_beta2 * state.v[i] + (1.0 - cfg.adam_beta2) * grads[i] * grads[i];
    const double mhat = state.m[i] / bc1;
    const double vhat = state.v[i] / bc2;
    params[i] -= cfg.learning_rate * mhat / (std::sqrt(vhat) + cfg.adam_eps);
  }
}

std::size_t head_param_count(const std::vector<EmbeddingHead>& heads) {
  std::size_t n = 0;
  for (const EmbeddingHead& h : heads) n += h.weights.v.size() + h.bias.size();
  return n;
}

std::vector<double> flatten_heads(const std::vector<EmbeddingHead>& heads) {
  std::vector<double> out;
  out.reserve(head_param_count(heads));
  for (const EmbeddingHead& h : heads) {
    out.insert(out.end(), h.weights.v.begin(), h.weights.v.end());
    out.insert(out.end(), h.bias.begin(), h.bias.end());
  }
  return out;
}

void unflatten_heads(std::span<const double> params, std::vector<EmbeddingHead>& heads) {
  if (params.size() != head_param_count(heads))
    throw DimMismatch("unflatten_heads: wrong parameter count");
  std::size_t at = 0;
  for (EmbeddingHead& h : heads) {
    std::copy(params.begin() + at, params.begin() + at + h.weights.v.size(),
              h.weights.v.begin());
    at += h.weights.v.size();
    std::copy(params.begin() + at, params.begin() + at + h.bias.size(), h.bias.begin());
    at += h.bias.size();
  }
}

std::vector<double> flatten_gradients(const HeadGradients& grads) {
  std::vector<double> out;
  for (std::size_t l = 0; l < grads.d_weights.size(); ++l) {
    out.insert(out.end(), grads.d_weights[l].v.begin(), grads.d_weights[l].v.end());
    out.insert(out.end(), grads.d_bias[l].begin(), grads.d_bias[l].end());
  }
  return out;
}

std::vector<EmbeddingHead> init_heads(const std::vector<LevelConfig>& levels, Rng& rng) {
  std::vector<EmbeddingHead> heads;
  heads.reserve(levels.size());
  for (const LevelConfig& cfg : levels) {
    EmbeddingHead h;
    h.level_id = cfg.level_id;
    h.weights = Mat(cfg.base_dim(), cfg.head_out_dim);
    const double a = std::sqrt(6.0 / (cfg.base_dim() + cfg.head_out_dim));
    for (double& w : h.weights.v) w = rng.uniform(-a, a);
    h.bias.assign(cfg.head_out_dim, 0.0);
    heads.push_back(std::move(h));
  }
  return heads;
}

CorrespondenceSet read_correspondences(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path);
  std::string line;
  if (!std::getline(in, line)) throw TruncatedFile(path + ": empty file");
  std::istringstream header(line);
  std::string tag;
  CorrespondenceSet set;
  header >> tag >> set.ref_id >> set.tgt_id;
  if (tag != "PAIR" || set.ref_id.empty() || set.tgt_id.empty())
    throw BadMagic(path + ": expected 'PAIR <ref> <tgt>' header");
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r\n") == std::string::npos) continue;
    std::istringstream ls(line);
    Correspondence c;
    if (!(ls >> c.x.x >> c.x.y >> c.xp.x >> c.xp.y >> c.label) ||
        (c.label != 0 && c.label != 1))
      throw TruncatedFile(path + ": malformed triplet at line " + std::to_string(line_no));
    set.items.push_back(c);
  }
  return set;
}

void write_correspondences(const CorrespondenceSet& set, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path);
  out.precision(17);
  out << "PAIR " << set.ref_id << " " << set.tgt_id << "\n";
  for (const Correspondence& c : set.items)
    out << c.x.x << " " << c.x.y << " " << c.xp.x << " " << c.xp.y << " " << c.label
        << "\n";
  if (!out) throw IoError("short write to " + path);
}

TrainResult train(const std::vector<TrainPair>& data,
                  const std::vector<LevelConfig>& levels, const TrainConfig& cfg) {
  if (data.empty()) throw EmptyDataset("train: no image pairs");
  for (const TrainPair& p : data)
    if (p.positives.empty()) throw EmptyDataset("train: pair without positives");

  // Base descriptors never change; compute them once per image.
  std::vector<FeatureHierarchy> base_ref, base_tgt;
  base_ref.reserve(data.size());
  base_tgt.reserve(data.size());
  for (const TrainPair& p : data) {
    base_ref.push_back(extract_base_hierarchy(to_grayscale(p.ref), levels));
    base_tgt.push_back(extract_base_hierarchy(to_grayscale(p.tgt), levels));
  }

  Rng rng(cfg.rng_seed);
  TrainResult result;
  result.heads = init_heads(levels, rng);
  std::vector<double> params = flatten_heads(result.heads);
  AdamState state(params.size());

  const std::size_t L = levels.size();
  std::vector<Mat> dW(L);
  std::vector<std::vector<double>> db(L);
  std::vector<std::size_t> sample_idx;
  for (int iter = 0; iter < cfg.iterations; ++iter) {
    for (std::size_t l = 0; l < L; ++l) {
      dW[l] = Mat(result.heads[l].weights.rows, result.heads[l].weights.cols);
      db[l].assign(result.heads[l].bias.size(), 0.0);
    }
    double batch_loss = 0.0;
    for (int b = 0; b < cfg.pairs_per_batch; ++b) {
      const std::size_t pi = rng.below(data.size());
      const std::vector<Correspondence>& pool = data[pi].positives;
      const std::size_t need = static_cast<std::size_t>(cfg.correspondences_per_pair);

      std::vector<Correspondence> positives;
      positives.reserve(need);
      if (pool.size() < need) {
        for (std::size_t i = 0; i < need; ++i) positives.push_back(pool[rng.below(pool.size())]);
      } else {
        sample_idx.resize(pool.size());
        std::iota(sample_idx.begin(), sample_idx.end(), 0);
        for (std::size_t i = 0; i < need; ++i) {
          const std::size_t j = i + rng.below(sample_idx.size() - i);
          std::swap(sample_idx[i], sample_idx[j]);
          positives.push_back(pool[sample_idx[i]]);
        }
      }

      for (std::size_t l = 0; l < L; ++l) {
        const ProjectedLevel pr = project(base_ref[pi].maps[l], result.heads[l]);
        const ProjectedLevel pt = project(base_tgt[pi].maps[l], result.heads[l]);
        std::vector<Correspondence> triplets =
            mine_hard_negatives(pr.map, pt.map, positives, cfg.positive_window);
        triplets.insert(triplets.end(), positives.begin(), positives.end());
        batch_loss += level_loss_and_grads(base_ref[pi].maps[l], pr, base_tgt[pi].maps[l],
                                           pt, triplets, cfg.margin, dW[l], db[l]);
      }
    }

    std::vector<double> grads;
    grads.reserve(params.size());
    for (std::size_t l = 0; l < L; ++l) {
      grads.insert(grads.end(), dW[l].v.begin(), dW[l].v.end());
      grads.insert(grads.end(), db[l].begin(), db[l].end());
    }
    if (cfg.weight_decay != 0.0)
      for (std::size_t i = 0; i < grads.size(); ++i) grads[i] += cfg.weight_decay * params[i];

    adam_step(params, grads, state, cfg);
    unflatten_heads(params, result.heads);
    result.loss_log.push_back(batch_loss);
  }
  return result;
}

}  // namespace himatch
