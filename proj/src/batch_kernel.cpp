// Copyright 2026 The langocc Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "langocc/batch_kernel.hpp"

#include <algorithm>
#include <cmath>
#include <span>
#include <string>

namespace langocc {

namespace {

constexpr std::size_t kChunkRays = 32;
constexpr std::size_t kBlockRays = 256;

// Normalizers of the five terms; all but the distillation count are fixed by
// the data and the sample placement.
struct Normalizers {
  int rgb = 0;
  int depth = 0;
  int occ = 0;
  int fs = 0;
  int sg = 0;
};

struct Context {
  const FieldSet& fields;
  const RayBundle& rays;
  const RaySamples& samples;
  const LossWeights& weights;
  const ScpContext* scp;
  Normalizers norm;
  bool want_grad;
  int fg, fc, fs, dim, n;
  BlockIndex blocks;
  bool shared_lattice;
};

// Per-ray loss pieces, reduced in ray order afterwards.
struct RayOutcome {
  bool active = false;
  double rgb = 0.0;
  bool depth_valid = false;
  double depth = 0.0;
  int occ_samples = 0;
  double occ = 0.0;
  int fs_samples = 0;
  double fs = 0.0;
  bool sg_defined = false;
  double sg = 0.0;
  double rendered_depth = 0.0;
  double weight_sum = 0.0;
  std::int64_t cell = -1;
  double sg_weight = 1.0;
};

// Gradient of one ray with respect to the queried grid features, laid out
// per sample; `scatter_*` flags which samples carry a contribution.
struct RayFeatureGrad {
  std::vector<double> geo, color, sem;
  std::vector<std::uint8_t> has_geo, has_color, has_sem;
  void resize(const Context& c) {
    geo.resize(static_cast<std::size_t>(c.n) * c.fg);
    color.resize(static_cast<std::size_t>(c.n) * c.fc);
    sem.resize(static_cast<std::size_t>(c.n) * c.fs);
    has_geo.assign(static_cast<std::size_t>(c.n), 0);
    has_color.assign(static_cast<std::size_t>(c.n), 0);
    has_sem.assign(static_cast<std::size_t>(c.n), 0);
  }
};

struct Scratch {
  std::vector<double> geo_feat, geo_tape, logit, occ, free, visible, weight;
  std::vector<double> color_in, color_tape, color_raw, rgb;
  std::vector<double> sem_feat, sem_tape, sem;
  std::vector<double> dw, d_in;
  std::vector<std::uint8_t> evaluated;
  std::vector<int> zone;

  explicit Scratch(const Context& c) {
    const std::size_t n = static_cast<std::size_t>(c.n);
    geo_feat.resize(n * c.fg);
    geo_tape.resize(n * c.fields.occ_decoder.tape_size());
    logit.resize(n);
    occ.resize(n);
    free.resize(n);
    visible.resize(n);
    weight.resize(n);
    color_in.resize(n * (c.fc + 3));
    color_tape.resize(n * c.fields.color_decoder.tape_size());
    color_raw.resize(n * 3);
    rgb.resize(n * 3);
    sem_feat.resize(n * c.fs);
    sem_tape.resize(n * c.fields.sem_decoder.tape_size());
    sem.resize(n * c.dim);
    dw.resize(n);
    d_in.resize(static_cast<std::size_t>(std::max({c.fg, c.fc + 3, c.fs})));
    evaluated.resize(n);
    zone.resize(n);
  }
};

bool ray_has_feature(const Context& c, std::size_t r) {
  return c.rays.has_features() && c.rays.feature_valid[r] != 0;
}

Normalizers count_normalizers(const RayBundle& rays, const RaySamples& samples, double t) {
  Normalizers nm;
  for (std::size_t r = 0; r < rays.size(); ++r) {
    const auto valid = samples.ray_valid(r);
    const auto z = samples.ray_depths(r);
    bool active = false;
    bool has_tr = false;
    bool has_fs = false;
    for (int i = 0; i < samples.n_samples; ++i) {
      if (!valid[i]) {
        continue;
      }
      active = true;
      const SampleZone zone = classify_sample(z[i], rays.gt_depth[r], t);
      has_tr |= zone == SampleZone::kTruncation;
      has_fs |= zone == SampleZone::kFreeSpace;
    }
    if (!active) {
      continue;
    }
    ++nm.rgb;
    nm.depth += rays.gt_depth[r] > 0.0 ? 1 : 0;
    nm.occ += has_tr ? 1 : 0;
    nm.fs += has_fs ? 1 : 0;
    nm.sg += rays.has_features() && rays.feature_valid[r] ? 1 : 0;
  }
  return nm;
}

struct RayHead {
  Vec3 g_rgb = Vec3::Zero();
  double g_depth = 0.0;
  bool sem_grad = false;
};

// Per-ray loss terms from the composited quantities, the SCP cell and weight,
// and the upstream gradients dL/d(rgb_hat), dL/d(depth_hat), dL/d(sem_hat).
RayHead ray_losses(const Context& c, std::size_t r, const Vec3& rgb_hat, double depth_hat,
                   double wsum, std::span<const double> sem_hat, double occ_acc, double fs_acc,
                   RayOutcome& out, std::vector<double>& g_sem) {
  const Normalizers& nm = c.norm;
  const LossWeights& lw = c.weights;
  const int dim = c.dim;
  RayHead head;
  const Vec3 rgb_err = rgb_hat - c.rays.gt_color[r];
  out.rgb = rgb_err.squaredNorm();
  if (nm.rgb > 0) {
    head.g_rgb = (2.0 * lw.rgb / nm.rgb) * rgb_err;
  }
  if (c.rays.gt_depth[r] > 0.0) {
    out.depth_valid = true;
    const double e = depth_hat - c.rays.gt_depth[r];
    out.depth = e * e;
    head.g_depth = 2.0 * lw.depth / nm.depth * e;
  }
  if (out.occ_samples > 0) {
    out.occ = occ_acc / out.occ_samples;
  }
  if (out.fs_samples > 0) {
    out.fs = fs_acc / out.fs_samples;
  }

  const bool scp = c.scp != nullptr && c.scp->beliefs != nullptr;
  if (scp && wsum > kMinTerminationWeight) {
    out.cell = c.scp->beliefs->cell_of(c.rays.origins[r] + depth_hat * c.rays.directions[r]);
  }

  g_sem.assign(static_cast<std::size_t>(dim), 0.0);
  if (!ray_has_feature(c, r)) {
    return head;
  }
  double norm2 = 0.0;
  for (int k = 0; k < dim; ++k) {
    norm2 += sem_hat[k] * sem_hat[k];
  }
  const double norm = std::sqrt(norm2);
  if (norm <= kMinSemanticNorm) {
    return head;
  }
  out.sg_defined = true;
  if (scp) {
    out.sg_weight = measurement_weight(*c.scp->beliefs, out.cell, c.scp->class_ids[r]);
  }
  const auto gt = c.rays.feature(r);
  double gnorm2 = 0.0;
  double dot = 0.0;
  for (int k = 0; k < dim; ++k) {
    const double g = gt[k];
    gnorm2 += g * g;
    dot += sem_hat[k] * g;
  }
  const double gnorm = std::sqrt(gnorm2);
  const double cos = dot / (norm * gnorm);
  const double residual = 1.0 - cos;
  const double u = out.sg_weight * residual * residual;
  out.sg = lw.robust_kernel ? huber(u, lw.huber_delta) : u;
  if (c.want_grad && lw.sg != 0.0 && nm.sg > 0) {
    const double drho = lw.robust_kernel ? (u <= lw.huber_delta ? u : lw.huber_delta) : 1.0;
    const double d_cos = lw.sg / nm.sg * drho * out.sg_weight * 2.0 * residual * (-1.0);
    for (int k = 0; k < dim; ++k) {
      const double fhat = gt[k] / gnorm;
      const double shat = sem_hat[k] / norm;
      g_sem[k] = d_cos * (fhat - cos * shat) / norm;
    }
    head.sem_grad = true;
  }
  return head;
}

// Forward and (optionally) backward pass of one ray. Decoder gradients are
// added to dec_grad[0..2] (occupancy, color, semantic); grid-feature
// gradients are written to fgrad.
void process_ray(const Context& c, std::size_t r, Scratch& s, double* const dec_grad[3],
                 RayFeatureGrad* fgrad, RayOutcome& out) {
  const FieldSet& f = c.fields;
  const int n = c.n;
  const int dim = c.dim;
  const Vec3& origin = c.rays.origins[r];
  const Vec3& dir = c.rays.directions[r];
  const auto z = c.samples.ray_depths(r);
  const auto valid = c.samples.ray_valid(r);
  const double t = c.weights.truncation;
  const bool has_feature = ray_has_feature(c, r);
  const std::size_t gtape = f.occ_decoder.tape_size();
  const std::size_t ctape = f.color_decoder.tape_size();
  const std::size_t stape = f.sem_decoder.tape_size();

  out = RayOutcome{};
  double visible = 1.0;
  Vec3 rgb_hat = Vec3::Zero();
  double depth_hat = 0.0;
  double wsum = 0.0;
  thread_local std::vector<double> sem_hat;
  sem_hat.assign(static_cast<std::size_t>(dim), 0.0);
  double occ_acc = 0.0;
  double fs_acc = 0.0;

  for (int i = 0; i < n; ++i) {
    s.evaluated[i] = 0;
    s.weight[i] = 0.0;
    if (!valid[i]) {
      continue;
    }
    out.active = true;
    const Vec3 p = origin + z[i] * dir;
    double* gf = s.geo_feat.data() + static_cast<std::size_t>(i) * c.fg;
    f.geometry.query_unchecked(p, gf);
    f.occ_decoder.forward(gf, s.geo_tape.data() + i * gtape, &s.logit[i]);
    const double a = s.logit[i];
    s.occ[i] = sigmoid(a);
    s.free[i] = sigmoid(-a);
    s.visible[i] = visible;
    const double w = s.occ[i] * visible;
    s.weight[i] = w;
    visible *= s.free[i];

    const SampleZone zone = classify_sample(z[i], c.rays.gt_depth[r], t);
    s.zone[i] = static_cast<int>(zone);
    if (zone == SampleZone::kTruncation) {
      occ_acc += softplus(-a);
      ++out.occ_samples;
    } else if (zone == SampleZone::kFreeSpace) {
      fs_acc += softplus(a);
      ++out.fs_samples;
    }

    if (w == 0.0) {
      continue;
    }
    s.evaluated[i] = 1;
    double* ci = s.color_in.data() + static_cast<std::size_t>(i) * (c.fc + 3);
    f.color.query_unchecked(p, ci);
    ci[c.fc] = dir[0];
    ci[c.fc + 1] = dir[1];
    ci[c.fc + 2] = dir[2];
    double* raw = s.color_raw.data() + i * 3;
    f.color_decoder.forward(ci, s.color_tape.data() + i * ctape, raw);
    double* rgb = s.rgb.data() + i * 3;
    for (int k = 0; k < 3; ++k) {
      rgb[k] = sigmoid(raw[k]);
      rgb_hat[k] += w * rgb[k];
    }
    if (has_feature) {
      double* sf = s.sem_feat.data() + static_cast<std::size_t>(i) * c.fs;
      f.semantic.query_unchecked(p, sf);
      double* sv = s.sem.data() + static_cast<std::size_t>(i) * dim;
      f.sem_decoder.forward(sf, s.sem_tape.data() + i * stape, sv);
      for (int k = 0; k < dim; ++k) {
        sem_hat[k] += w * sv[k];
      }
    }
    depth_hat += w * z[i];
    wsum += w;
  }

  out.rendered_depth = depth_hat;
  out.weight_sum = wsum;
  if (!out.active) {
    return;
  }

  thread_local std::vector<double> g_sem;
  const RayHead head = ray_losses(c, r, rgb_hat, depth_hat, wsum, sem_hat, occ_acc, fs_acc, out,
                                  g_sem);
  const Vec3& g_rgb = head.g_rgb;
  const double g_depth = head.g_depth;
  const bool sem_grad = head.sem_grad;

  if (!c.want_grad) {
    return;
  }

  // dL/dw_i, then dL/do_i through the transmittance products.
  for (int i = 0; i < n; ++i) {
    double g = 0.0;
    if (s.evaluated[i]) {
      const double* rgb = s.rgb.data() + i * 3;
      g = g_rgb[0] * rgb[0] + g_rgb[1] * rgb[1] + g_rgb[2] * rgb[2] + g_depth * z[i];
      if (sem_grad) {
        const double* sv = s.sem.data() + static_cast<std::size_t>(i) * dim;
        for (int k = 0; k < dim; ++k) {
          g += g_sem[k] * sv[k];
        }
      }
    }
    s.dw[i] = g;
  }

  const double occ_coef = out.occ_samples > 0 ? c.weights.occ / c.norm.occ / out.occ_samples : 0.0;
  const double fs_coef = out.fs_samples > 0 ? c.weights.fs / c.norm.fs / out.fs_samples : 0.0;
  double tail = 0.0;
  for (int i = n - 1; i >= 0; --i) {
    if (!valid[i]) {
      continue;
    }
    const double o = s.occ[i];
    const double q = s.free[i];
    const double d_occ = s.visible[i] * (s.dw[i] - tail);
    tail = o * s.dw[i] + q * tail;
    double d_logit = d_occ * o * q;
    const auto zone = static_cast<SampleZone>(s.zone[i]);
    if (zone == SampleZone::kTruncation) {
      d_logit += occ_coef * (o - 1.0);
    } else if (zone == SampleZone::kFreeSpace) {
      d_logit += fs_coef * o;
    }
    if (d_logit != 0.0) {
      double* gf = s.geo_feat.data() + static_cast<std::size_t>(i) * c.fg;
      double* dst = fgrad->geo.data() + static_cast<std::size_t>(i) * c.fg;
      f.occ_decoder.backward(gf, s.geo_tape.data() + i * gtape, &d_logit, dec_grad[0], dst);
      fgrad->has_geo[i] = 1;
    }

    if (!s.evaluated[i]) {
      continue;
    }
    const double w = s.weight[i];
    const double* rgb = s.rgb.data() + i * 3;
    double d_raw[3];
    bool any = false;
    for (int k = 0; k < 3; ++k) {
      d_raw[k] = w * g_rgb[k] * rgb[k] * (1.0 - rgb[k]);
      any |= d_raw[k] != 0.0;
    }
    if (any) {
      double* ci = s.color_in.data() + static_cast<std::size_t>(i) * (c.fc + 3);
      f.color_decoder.backward(ci, s.color_tape.data() + i * ctape, d_raw, dec_grad[1],
                               s.d_in.data());
      std::copy_n(s.d_in.data(), c.fc, fgrad->color.data() + static_cast<std::size_t>(i) * c.fc);
      fgrad->has_color[i] = 1;
    }
    if (sem_grad) {
      thread_local std::vector<double> d_sem;
      d_sem.resize(static_cast<std::size_t>(dim));
      for (int k = 0; k < dim; ++k) {
        d_sem[k] = w * g_sem[k];
      }
      double* sf = s.sem_feat.data() + static_cast<std::size_t>(i) * c.fs;
      f.sem_decoder.backward(sf, s.sem_tape.data() + i * stape, d_sem.data(), dec_grad[2],
                             fgrad->sem.data() + static_cast<std::size_t>(i) * c.fs);
      fgrad->has_sem[i] = 1;
    }
  }
}

void scatter_ray(const Context& c, std::size_t r, const RayFeatureGrad& fg, FieldGradient& grad) {
  const FieldSet& f = c.fields;
  const auto z = c.samples.ray_depths(r);
  const std::size_t n_levels[3] = {f.geometry.levels().size(), f.color.levels().size(),
                                   f.semantic.levels().size()};
  struct Target {
    const MultiResGrid* grid;
    std::size_t first;
    const std::vector<double>* values;
    const std::vector<std::uint8_t>* has;
    int width;
  };
  const Target targets[3] = {
      {&f.geometry, c.blocks.geometry, &fg.geo, &fg.has_geo, c.fg},
      {&f.color, c.blocks.color, &fg.color, &fg.has_color, c.fc},
      {&f.semantic, c.blocks.semantic, &fg.sem, &fg.has_sem, c.fs},
  };
  for (int g = 0; g < 3; ++g) {
    const Target& tg = targets[g];
    for (int i = 0; i < c.n; ++i) {
      if (!(*tg.has)[i]) {
        continue;
      }
      const Vec3 p = c.rays.origins[r] + z[i] * c.rays.directions[r];
      const double* src = tg.values->data() + static_cast<std::size_t>(i) * tg.width;
      int offset = 0;
      for (std::size_t l = 0; l < n_levels[g]; ++l) {
        const GridLevel& level = tg.grid->levels()[l];
        const int fd = level.feat_dim;
        const TrilinearStencil st = tg.grid->stencil(static_cast<int>(l), p);
        std::vector<double>& block = grad.blocks[tg.first + l];
        for (int k8 = 0; k8 < 8; ++k8) {
          const double w = st.weight[k8];
          double* dst = block.data() + static_cast<std::size_t>(st.vertex[k8]) * fd;
          for (int k = 0; k < fd; ++k) {
            dst[k] += w * src[offset + k];
          }
          grad.mark_touched(tg.first + l, st.vertex[k8]);
        }
        offset += fd;
      }
    }
  }
}

// Batched path: one chunk of rays is evaluated with each decoder applied to
// a matrix holding every sample that needs it.
struct ChunkDecoders {
  BatchDecoder occ, color, sem;
  explicit ChunkDecoders(const FieldSet& f)
      : occ(f.occ_decoder), color(f.color_decoder), sem(f.sem_decoder) {}
};

// Scratch reused across the chunks a thread processes.
struct Workspace {
  RowMatrix geo_in, logit, color_in, color_raw, sem_in, sem_out;
  RowMatrix d_logit, d_raw, d_sem;
  BatchDecoder::Tape geo_tape, color_tape, sem_tape;
  std::vector<Vec3> points;
  std::vector<double> z, occ, free, visible, weight;
  std::vector<int> zone, color_row, sem_row;
  std::vector<std::size_t> ray_begin;
  std::vector<double> sem_hat, g_sem;
};

// Everything a chunk hands to the serial reduction: decoder gradients and
// the per-sample feature gradients with the points they scatter from.
struct ChunkResult {
  std::vector<double> dec[3];
  /// Per-level stencils of every sample, indexed by sample row. Color and
  /// semantic grids share the geometry stencils when their lattices agree;
  /// otherwise stencils[1] and [2] hold their own, indexed by sample row too.
  std::vector<TrilinearStencil> stencils[3];
  /// Sample row of each color / semantic row.
  std::vector<std::uint32_t> color_src, sem_src;
  RowMatrix geo_din, color_din, sem_din;
  std::vector<std::uint8_t> geo_flag, color_flag, sem_flag;
};

void ensure(RowMatrix& m, Eigen::Index rows, Eigen::Index cols) {
  if (m.rows() < rows || m.cols() != cols) {
    m.resize(std::max(rows, m.rows()), cols);
  }
}

void run_chunk(const Context& c, const ChunkDecoders& dec, std::size_t r0, std::size_t r1,
               Workspace& ws, ChunkResult& cr, std::vector<RayOutcome>& outcomes) {
  const FieldSet& f = c.fields;
  const int n = c.n;
  const int dim = c.dim;
  const double t = c.weights.truncation;

  // Valid samples of the chunk, rays contiguous.
  std::size_t rows = 0;
  ws.ray_begin.assign(r1 - r0 + 1, 0);
  for (std::size_t r = r0; r < r1; ++r) {
    ws.ray_begin[r - r0] = rows;
    for (const std::uint8_t v : c.samples.ray_valid(r)) {
      rows += v ? 1 : 0;
    }
  }
  ws.ray_begin[r1 - r0] = rows;
  const auto nr = static_cast<Eigen::Index>(rows);
  const std::size_t levels = f.geometry.levels().size();
  const bool shared = c.shared_lattice;
  for (int g = 0; g < 3; ++g) {
    cr.stencils[g].resize(g == 0 || !shared ? rows * levels : 0);
  }
  ws.points.resize(rows);
  ws.z.resize(rows);
  ensure(ws.geo_in, nr, c.fg);
  for (std::size_t r = r0; r < r1; ++r) {
    const auto z = c.samples.ray_depths(r);
    const auto valid = c.samples.ray_valid(r);
    std::size_t row = ws.ray_begin[r - r0];
    for (int i = 0; i < n; ++i) {
      if (!valid[i]) {
        continue;
      }
      const Vec3 p = c.rays.origins[r] + z[i] * c.rays.directions[r];
      ws.points[row] = p;
      ws.z[row] = z[i];
      TrilinearStencil* st = cr.stencils[0].data() + row * levels;
      for (std::size_t l = 0; l < levels; ++l) {
        st[l] = f.geometry.stencil(static_cast<int>(l), p);
      }
      f.geometry.gather(st, ws.geo_in.row(static_cast<Eigen::Index>(row)).data());
      ++row;
    }
  }
  dec.occ.forward(ws.geo_in, nr, ws.geo_tape, ws.logit);

  // Compositing weights and the occupancy terms.
  ws.occ.resize(rows);
  ws.free.resize(rows);
  ws.visible.resize(rows);
  ws.weight.resize(rows);
  ws.zone.resize(rows);
  ws.color_row.assign(rows, -1);
  ws.sem_row.assign(rows, -1);
  std::vector<double> occ_acc(r1 - r0, 0.0), fs_acc(r1 - r0, 0.0);
  std::size_t n_color = 0;
  std::size_t n_sem = 0;
  for (std::size_t r = r0; r < r1; ++r) {
    RayOutcome& out = outcomes[r];
    out = RayOutcome{};
    const bool has_feature = ray_has_feature(c, r);
    double visible = 1.0;
    for (std::size_t row = ws.ray_begin[r - r0]; row < ws.ray_begin[r - r0 + 1]; ++row) {
      out.active = true;
      const double a = ws.logit(static_cast<Eigen::Index>(row), 0);
      ws.occ[row] = sigmoid(a);
      ws.free[row] = sigmoid(-a);
      ws.visible[row] = visible;
      ws.weight[row] = ws.occ[row] * visible;
      visible *= ws.free[row];
      const SampleZone zone = classify_sample(ws.z[row], c.rays.gt_depth[r], t);
      ws.zone[row] = static_cast<int>(zone);
      if (zone == SampleZone::kTruncation) {
        occ_acc[r - r0] += softplus(-a);
        ++out.occ_samples;
      } else if (zone == SampleZone::kFreeSpace) {
        fs_acc[r - r0] += softplus(a);
        ++out.fs_samples;
      }
      if (ws.weight[row] != 0.0) {
        ws.color_row[row] = static_cast<int>(n_color++);
        if (has_feature) {
          ws.sem_row[row] = static_cast<int>(n_sem++);
        }
      }
    }
  }

  // Color and semantic decoders on the samples with nonzero weight.
  const auto nc = static_cast<Eigen::Index>(n_color);
  const auto ns = static_cast<Eigen::Index>(n_sem);
  ensure(ws.color_in, nc, c.fc + 3);
  ensure(ws.sem_in, ns, c.fs);
  cr.color_src.resize(n_color);
  cr.sem_src.resize(n_sem);
  for (std::size_t r = r0; r < r1; ++r) {
    const Vec3& dir = c.rays.directions[r];
    for (std::size_t row = ws.ray_begin[r - r0]; row < ws.ray_begin[r - r0 + 1]; ++row) {
      const int ci = ws.color_row[row];
      if (ci < 0) {
        continue;
      }
      const Vec3& p = ws.points[row];
      double* dst = ws.color_in.row(ci).data();
      TrilinearStencil* st = shared ? cr.stencils[0].data() + row * levels
                                    : cr.stencils[1].data() + row * levels;
      if (!shared) {
        for (std::size_t l = 0; l < levels; ++l) {
          st[l] = f.color.stencil(static_cast<int>(l), p);
        }
      }
      f.color.gather(st, dst);
      dst[c.fc] = dir[0];
      dst[c.fc + 1] = dir[1];
      dst[c.fc + 2] = dir[2];
      cr.color_src[ci] = static_cast<std::uint32_t>(row);
      const int si = ws.sem_row[row];
      if (si >= 0) {
        st = shared ? cr.stencils[0].data() + row * levels : cr.stencils[2].data() + row * levels;
        if (!shared) {
          for (std::size_t l = 0; l < levels; ++l) {
            st[l] = f.semantic.stencil(static_cast<int>(l), p);
          }
        }
        f.semantic.gather(st, ws.sem_in.row(si).data());
        cr.sem_src[si] = static_cast<std::uint32_t>(row);
      }
    }
  }
  if (nc > 0) {
    dec.color.forward(ws.color_in, nc, ws.color_tape, ws.color_raw);
    ws.color_raw.topRows(nc) = ws.color_raw.topRows(nc).unaryExpr([](double v) {
      return sigmoid(v);
    });
  }
  if (ns > 0) {
    dec.sem.forward(ws.sem_in, ns, ws.sem_tape, ws.sem_out);
  }
  const RowMatrix& rgb = ws.color_raw;

  if (c.want_grad) {
    ensure(ws.d_logit, nr, 1);
    ensure(ws.d_raw, nc, 3);
    ensure(ws.d_sem, ns, dim);
    cr.geo_flag.assign(rows, 0);
    cr.color_flag.assign(n_color, 0);
    cr.sem_flag.assign(n_sem, 0);
  }

  // Per-ray losses and the backward pass through compositing.
  for (std::size_t r = r0; r < r1; ++r) {
    RayOutcome& out = outcomes[r];
    const std::size_t b = ws.ray_begin[r - r0];
    const std::size_t e = ws.ray_begin[r - r0 + 1];
    Vec3 rgb_hat = Vec3::Zero();
    double depth_hat = 0.0;
    double wsum = 0.0;
    ws.sem_hat.assign(static_cast<std::size_t>(dim), 0.0);
    for (std::size_t row = b; row < e; ++row) {
      const int ci = ws.color_row[row];
      if (ci < 0) {
        continue;
      }
      const double w = ws.weight[row];
      for (int k = 0; k < 3; ++k) {
        rgb_hat[k] += w * rgb(ci, k);
      }
      const int si = ws.sem_row[row];
      if (si >= 0) {
        for (int k = 0; k < dim; ++k) {
          ws.sem_hat[k] += w * ws.sem_out(si, k);
        }
      }
      depth_hat += w * ws.z[row];
      wsum += w;
    }
    out.rendered_depth = depth_hat;
    out.weight_sum = wsum;
    if (!out.active) {
      continue;
    }
    const RayHead head = ray_losses(c, r, rgb_hat, depth_hat, wsum, ws.sem_hat, occ_acc[r - r0],
                                    fs_acc[r - r0], out, ws.g_sem);
    if (!c.want_grad) {
      continue;
    }
    const double occ_coef =
        out.occ_samples > 0 ? c.weights.occ / c.norm.occ / out.occ_samples : 0.0;
    const double fs_coef = out.fs_samples > 0 ? c.weights.fs / c.norm.fs / out.fs_samples : 0.0;
    double tail = 0.0;
    for (std::size_t row = e; row-- > b;) {
      const int ci = ws.color_row[row];
      const int si = ws.sem_row[row];
      double dw = 0.0;
      if (ci >= 0) {
        dw = head.g_rgb[0] * rgb(ci, 0) + head.g_rgb[1] * rgb(ci, 1) + head.g_rgb[2] * rgb(ci, 2) +
             head.g_depth * ws.z[row];
        if (head.sem_grad && si >= 0) {
          for (int k = 0; k < dim; ++k) {
            dw += ws.g_sem[k] * ws.sem_out(si, k);
          }
        }
      }
      const double o = ws.occ[row];
      const double q = ws.free[row];
      const double d_occ = ws.visible[row] * (dw - tail);
      tail = o * dw + q * tail;
      double d_logit = d_occ * o * q;
      const auto zone = static_cast<SampleZone>(ws.zone[row]);
      if (zone == SampleZone::kTruncation) {
        d_logit += occ_coef * (o - 1.0);
      } else if (zone == SampleZone::kFreeSpace) {
        d_logit += fs_coef * o;
      }
      ws.d_logit(static_cast<Eigen::Index>(row), 0) = d_logit;
      cr.geo_flag[row] = d_logit != 0.0 ? 1 : 0;
      if (ci < 0) {
        continue;
      }
      const double w = ws.weight[row];
      bool any = false;
      for (int k = 0; k < 3; ++k) {
        const double v = rgb(ci, k);
        const double d = w * head.g_rgb[k] * v * (1.0 - v);
        ws.d_raw(ci, k) = d;
        any |= d != 0.0;
      }
      cr.color_flag[ci] = any ? 1 : 0;
      if (si >= 0) {
        for (int k = 0; k < dim; ++k) {
          ws.d_sem(si, k) = head.sem_grad ? w * ws.g_sem[k] : 0.0;
        }
        cr.sem_flag[si] = head.sem_grad ? 1 : 0;
      }
    }
  }
  if (!c.want_grad) {
    return;
  }

  // Rows without a gradient are zero in the upstream matrices, so one pass
  // per decoder covers the chunk.
  if (nr > 0) {
    dec.occ.backward(ws.geo_in, nr, ws.geo_tape, ws.d_logit, cr.dec[0].data(), &cr.geo_din);
  }
  if (nc > 0) {
    dec.color.backward(ws.color_in, nc, ws.color_tape, ws.d_raw, cr.dec[1].data(), &cr.color_din);
  }
  if (ns > 0) {
    dec.sem.backward(ws.sem_in, ns, ws.sem_tape, ws.d_sem, cr.dec[2].data(), &cr.sem_din);
  }
}

// Adds each flagged row of din, spread over its stencil, to the grid's
// gradient blocks. Row i scatters through stencils[src[i]] (or stencils[i]
// when src is empty).
void scatter_rows(const MultiResGrid& grid, std::size_t first_block,
                  const std::vector<TrilinearStencil>& stencils,
                  const std::vector<std::uint32_t>* src, const RowMatrix& din,
                  const std::vector<std::uint8_t>& flag, FieldGradient& grad) {
  const std::size_t levels = grid.levels().size();
  for (std::size_t row = 0; row < flag.size(); ++row) {
    if (!flag[row]) {
      continue;
    }
    const double* d = din.row(static_cast<Eigen::Index>(row)).data();
    const TrilinearStencil* st = stencils.data() + (src ? (*src)[row] : row) * levels;
    int offset = 0;
    for (std::size_t l = 0; l < levels; ++l) {
      const int fd = grid.levels()[l].feat_dim;
      std::vector<double>& block = grad.blocks[first_block + l];
      for (int k8 = 0; k8 < 8; ++k8) {
        const double w = st[l].weight[k8];
        double* dst = block.data() + static_cast<std::size_t>(st[l].vertex[k8]) * fd;
        for (int k = 0; k < fd; ++k) {
          dst[k] += w * d[offset + k];
        }
        grad.mark_touched(first_block + l, st[l].vertex[k8]);
      }
      offset += fd;
    }
  }
}

Context make_context(const FieldSet& fields, const RayBundle& rays, const RaySamples& samples,
                     const LossWeights& weights, const ScpContext* scp, bool want_grad) {
  if (samples.ray_count() != rays.size()) {
    throw DomainError("evaluate_batch: sample rows do not match the ray count");
  }
  if (rays.has_features() && rays.feat_dim != fields.semantic_dim) {
    throw DomainError("evaluate_batch: ray features have dimension " +
                      std::to_string(rays.feat_dim) + ", field has " +
                      std::to_string(fields.semantic_dim));
  }
  if (scp != nullptr && scp->beliefs != nullptr && scp->class_ids.size() != rays.size()) {
    throw DomainError("evaluate_batch: one class id per ray required");
  }
  weights.validate();
  Context c{fields,
            rays,
            samples,
            weights,
            scp,
            count_normalizers(rays, samples, weights.truncation),
            want_grad,
            fields.geometry.total_feat_dim(),
            fields.color.total_feat_dim(),
            fields.semantic.total_feat_dim(),
            fields.semantic_dim,
            samples.n_samples,
            block_index(fields),
            fields.geometry.same_lattice(fields.color) &&
                fields.geometry.same_lattice(fields.semantic)};
  return c;
}

BatchOutput summarize(const Context& c, const std::vector<RayOutcome>& outcomes) {
  BatchOutput out;
  const std::size_t m = outcomes.size();
  out.depth.resize(m);
  out.weight_sum.resize(m);
  out.cell_ids.resize(m);
  out.sg_weights.resize(m);
  LossReport& rep = out.report;
  double rgb = 0.0, depth = 0.0, occ = 0.0, fs = 0.0, sg = 0.0;
  for (std::size_t r = 0; r < m; ++r) {
    const RayOutcome& o = outcomes[r];
    out.depth[r] = o.rendered_depth;
    out.weight_sum[r] = o.weight_sum;
    out.cell_ids[r] = o.cell;
    out.sg_weights[r] = o.sg_weight;
    if (!o.active) {
      continue;
    }
    rgb += o.rgb;
    ++rep.rgb_rays;
    if (o.depth_valid) {
      depth += o.depth;
      ++rep.depth_rays;
    }
    if (o.occ_samples > 0) {
      occ += o.occ;
      ++rep.occ_rays;
      rep.occ_samples += o.occ_samples;
    }
    if (o.fs_samples > 0) {
      fs += o.fs;
      ++rep.fs_rays;
      rep.fs_samples += o.fs_samples;
    }
    if (o.sg_defined) {
      sg += o.sg;
      ++rep.sg_rays;
    }
  }
  rep.rgb = rep.rgb_rays ? rgb / rep.rgb_rays : 0.0;
  rep.depth = rep.depth_rays ? depth / rep.depth_rays : 0.0;
  rep.occ = rep.occ_rays ? occ / rep.occ_rays : 0.0;
  rep.fs = rep.fs_rays ? fs / rep.fs_rays : 0.0;
  rep.sg = rep.sg_rays ? sg / rep.sg_rays : 0.0;
  out.report = total_loss(rep, c.weights);
  return out;
}

void run_chunked(const Context& c, FieldGradient* grad, std::vector<RayOutcome>& outcomes,
                 Execution exec) {
  const std::size_t m = c.rays.size();
  const ChunkDecoders dec(c.fields);
  const std::size_t dec_sizes[3] = {c.fields.occ_decoder.params().size(),
                                    c.fields.color_decoder.params().size(),
                                    c.fields.sem_decoder.params().size()};
  const std::size_t chunks_per_block = kBlockRays / kChunkRays;
  std::vector<ChunkResult> results(chunks_per_block);

  for (std::size_t block_start = 0; block_start < m; block_start += kBlockRays) {
    const std::size_t block_end = std::min(m, block_start + kBlockRays);
    const std::size_t n_chunks = (block_end - block_start + kChunkRays - 1) / kChunkRays;

    auto chunk_task = [&](std::size_t chunk, Workspace& ws) {
      ChunkResult& cr = results[chunk];
      if (grad != nullptr) {
        for (int d = 0; d < 3; ++d) {
          cr.dec[d].assign(dec_sizes[d], 0.0);
        }
      }
      const std::size_t r0 = block_start + chunk * kChunkRays;
      const std::size_t r1 = std::min(block_end, r0 + kChunkRays);
      run_chunk(c, dec, r0, r1, ws, cr, outcomes);
    };

    if (exec == Execution::kSerial) {
      Workspace ws;
      for (std::size_t chunk = 0; chunk < n_chunks; ++chunk) {
        chunk_task(chunk, ws);
      }
    } else {
#pragma omp parallel
      {
        Workspace ws;
#pragma omp for schedule(dynamic, 1)
        for (std::int64_t chunk = 0; chunk < static_cast<std::int64_t>(n_chunks); ++chunk) {
          chunk_task(static_cast<std::size_t>(chunk), ws);
        }
      }
    }

    if (grad == nullptr) {
      continue;
    }
    const std::size_t dec_blocks[3] = {c.blocks.occ_decoder, c.blocks.color_decoder,
                                       c.blocks.sem_decoder};
    for (std::size_t chunk = 0; chunk < n_chunks; ++chunk) {
      const ChunkResult& cr = results[chunk];
      for (int d = 0; d < 3; ++d) {
        auto& dst = grad->blocks[dec_blocks[d]];
        for (std::size_t k = 0; k < cr.dec[d].size(); ++k) {
          dst[k] += cr.dec[d][k];
        }
      }
      const bool shared = c.shared_lattice;
      scatter_rows(c.fields.geometry, c.blocks.geometry, cr.stencils[0], nullptr, cr.geo_din,
                   cr.geo_flag, *grad);
      scatter_rows(c.fields.color, c.blocks.color, cr.stencils[shared ? 0 : 1], &cr.color_src,
                   cr.color_din, cr.color_flag, *grad);
      scatter_rows(c.fields.semantic, c.blocks.semantic, cr.stencils[shared ? 0 : 2],
                   &cr.sem_src, cr.sem_din, cr.sem_flag, *grad);
    }
  }
}

template <typename Runner>
BatchOutput evaluate_with(const FieldSet& fields, const RayBundle& rays, const RaySamples& samples,
                          const LossWeights& weights, const ScpContext* scp, FieldGradient* grad,
                          Runner&& run) {
  Context c = make_context(fields, rays, samples, weights, scp, grad != nullptr);
  std::vector<RayOutcome> outcomes(rays.size());
  if (grad != nullptr) {
    grad->zero();
  }
  run(c, outcomes);
  BatchOutput out = summarize(c, outcomes);
  // The distillation normalizer counts rays whose rendered feature turned out
  // to be defined; redo the pass in the rare case the guess was wrong.
  if (grad != nullptr && out.report.sg_rays != c.norm.sg) {
    c.norm.sg = out.report.sg_rays;
    grad->zero();
    run(c, outcomes);
    out = summarize(c, outcomes);
  }
  return out;
}

}  // namespace

BatchOutput evaluate_batch(const FieldSet& fields, const RayBundle& rays,
                           const RaySamples& samples, const LossWeights& weights,
                           const ScpContext* scp, FieldGradient* grad, Execution exec) {
  return evaluate_with(fields, rays, samples, weights, scp, grad,
                       [&](const Context& c, std::vector<RayOutcome>& outcomes) {
                         run_chunked(c, grad, outcomes, exec);
                       });
}

BatchOutput evaluate_batch_reference(const FieldSet& fields, const RayBundle& rays,
                                     const RaySamples& samples, const LossWeights& weights,
                                     const ScpContext* scp, FieldGradient* grad) {
  return evaluate_with(
      fields, rays, samples, weights, scp, grad,
      [&](const Context& c, std::vector<RayOutcome>& outcomes) {
        Scratch s(c);
        RayFeatureGrad fg;
        double* dec[3] = {nullptr, nullptr, nullptr};
        if (grad != nullptr) {
          dec[0] = grad->blocks[c.blocks.occ_decoder].data();
          dec[1] = grad->blocks[c.blocks.color_decoder].data();
          dec[2] = grad->blocks[c.blocks.sem_decoder].data();
        }
        for (std::size_t r = 0; r < rays.size(); ++r) {
          if (grad != nullptr) {
            fg.resize(c);
          }
          process_ray(c, r, s, dec, grad != nullptr ? &fg : nullptr, outcomes[r]);
          if (grad != nullptr) {
            scatter_ray(c, r, fg, *grad);
          }
        }
      });
}

}  // namespace langocc
