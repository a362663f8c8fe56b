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

#include "langocc/grid_field.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <limits>
#include <string>

namespace langocc {

SceneBounds::SceneBounds(const Vec3& lo, const Vec3& hi) : min_corner(lo), max_corner(hi) {
  for (int a = 0; a < 3; ++a) {
    if (!(hi[a] > lo[a]) || !std::isfinite(lo[a]) || !std::isfinite(hi[a])) {
      throw DomainError("SceneBounds: max_corner must exceed min_corner on every axis");
    }
  }
}

bool SceneBounds::contains(const Vec3& p) const {
  return (p.array() >= min_corner.array()).all() && (p.array() <= max_corner.array()).all();
}

std::optional<std::pair<double, double>> SceneBounds::intersect(const Vec3& origin,
                                                                const Vec3& direction) const {
  double t0 = 0.0;
  double t1 = std::numeric_limits<double>::infinity();
  for (int a = 0; a < 3; ++a) {
    if (std::abs(direction[a]) < 1e-15) {
      if (origin[a] < min_corner[a] || origin[a] > max_corner[a]) {
        return std::nullopt;
      }
      continue;
    }
    const double inv = 1.0 / direction[a];
    double near = (min_corner[a] - origin[a]) * inv;
    double far = (max_corner[a] - origin[a]) * inv;
    if (near > far) {
      std::swap(near, far);
    }
    t0 = std::max(t0, near);
    t1 = std::min(t1, far);
    if (t0 > t1) {
      return std::nullopt;
    }
  }
  if (!(t1 > t0)) {
    return std::nullopt;
  }
  return std::make_pair(t0, t1);
}

// ---------------------------------------------------------------------------
// MultiResGrid

MultiResGrid::MultiResGrid(const SceneBounds& bounds, std::vector<GridLevel> levels)
    : bounds_(bounds), levels_(std::move(levels)) {
  if (levels_.empty()) {
    throw DomainError("MultiResGrid: at least one level required");
  }
  const Vec3 extent = bounds_.extent();
  for (std::size_t l = 0; l < levels_.size(); ++l) {
    const GridLevel& level = levels_[l];
    if (level.feat_dim <= 0) {
      throw DomainError("MultiResGrid: feat_dim must be positive");
    }
    for (int a = 0; a < 3; ++a) {
      if (level.resolution[a] < 2) {
        throw DomainError("MultiResGrid: resolution must be >= 2 on every axis");
      }
      if (l > 0 && level.resolution[a] < levels_[l - 1].resolution[a]) {
        throw DomainError("MultiResGrid: levels must be ordered coarse to fine");
      }
      const double span = level.voxel_size[a] * (level.resolution[a] - 1);
      if (std::abs(span - extent[a]) > 1e-9 * std::max(1.0, extent[a])) {
        throw DomainError("MultiResGrid: voxel_size * (resolution - 1) must span the bounds");
      }
    }
    if (level.features.size() != level.vertex_count() * static_cast<std::size_t>(level.feat_dim)) {
      throw DomainError("MultiResGrid: feature array has wrong length");
    }
    total_feat_dim_ += level.feat_dim;
  }
}

MultiResGrid MultiResGrid::zeros(const SceneBounds& bounds,
                                 const std::vector<std::array<int, 3>>& resolutions,
                                 const std::vector<int>& feat_dims) {
  if (resolutions.size() != feat_dims.size()) {
    throw DomainError("MultiResGrid::zeros: resolution and feat_dim lists differ in length");
  }
  std::vector<GridLevel> levels(resolutions.size());
  for (std::size_t l = 0; l < levels.size(); ++l) {
    GridLevel& level = levels[l];
    level.resolution = resolutions[l];
    level.feat_dim = feat_dims[l];
    for (int a = 0; a < 3; ++a) {
      if (level.resolution[a] < 2) {
        throw DomainError("MultiResGrid: resolution must be >= 2 on every axis");
      }
      level.voxel_size[a] = bounds.extent()[a] / (level.resolution[a] - 1);
    }
    level.features.assign(level.vertex_count() * static_cast<std::size_t>(level.feat_dim), 0.0f);
  }
  return MultiResGrid(bounds, std::move(levels));
}

TrilinearStencil MultiResGrid::stencil(int level_index, const Vec3& p) const {
  const GridLevel& level = levels_[level_index];
  int cell[3];
  double frac[3];
  for (int a = 0; a < 3; ++a) {
    const double u = (p[a] - bounds_.min_corner[a]) / level.voxel_size[a];
    // Truncation equals floor wherever the clamp below does not apply.
    int i = static_cast<int>(u);
    i = std::clamp(i, 0, level.resolution[a] - 2);
    cell[a] = i;
    frac[a] = std::clamp(u - i, 0.0, 1.0);
  }
  TrilinearStencil s;
  const std::size_t base = level.vertex_index(cell[0], cell[1], cell[2]);
  const std::size_t sx = 1;
  const std::size_t sy = static_cast<std::size_t>(level.resolution[0]);
  const std::size_t sz = sy * level.resolution[1];
  for (int c = 0; c < 8; ++c) {
    const int bx = c & 1;
    const int by = (c >> 1) & 1;
    const int bz = (c >> 2) & 1;
    s.vertex[c] = static_cast<std::uint32_t>(base + bx * sx + by * sy + bz * sz);
    s.weight[c] = (bx ? frac[0] : 1.0 - frac[0]) * (by ? frac[1] : 1.0 - frac[1]) *
                  (bz ? frac[2] : 1.0 - frac[2]);
  }
  return s;
}

std::vector<double> MultiResGrid::query_concat(const Vec3& p) const {
  if (!bounds_.contains(p)) {
    throw DomainError("query_concat: point outside scene bounds");
  }
  std::vector<double> out(static_cast<std::size_t>(total_feat_dim_));
  query_unchecked(p, out.data());
  return out;
}

void MultiResGrid::query_unchecked(const Vec3& p, double* out) const {
  int offset = 0;
  for (int l = 0; l < static_cast<int>(levels_.size()); ++l) {
    const GridLevel& level = levels_[l];
    const TrilinearStencil s = stencil(l, p);
    const int fd = level.feat_dim;
    double* dst = out + offset;
    std::fill(dst, dst + fd, 0.0);
    for (int c = 0; c < 8; ++c) {
      const float* src = level.features.data() + static_cast<std::size_t>(s.vertex[c]) * fd;
      const double w = s.weight[c];
      for (int k = 0; k < fd; ++k) {
        dst[k] += w * static_cast<double>(src[k]);
      }
    }
    offset += fd;
  }
}

void MultiResGrid::gather(const TrilinearStencil* stencils, double* out) const {
  int offset = 0;
  for (std::size_t l = 0; l < levels_.size(); ++l) {
    const GridLevel& level = levels_[l];
    const TrilinearStencil& s = stencils[l];
    const int fd = level.feat_dim;
    double* dst = out + offset;
    std::fill(dst, dst + fd, 0.0);
    for (int c = 0; c < 8; ++c) {
      const float* src = level.features.data() + static_cast<std::size_t>(s.vertex[c]) * fd;
      const double w = s.weight[c];
      for (int k = 0; k < fd; ++k) {
        dst[k] += w * static_cast<double>(src[k]);
      }
    }
    offset += fd;
  }
}

bool MultiResGrid::same_lattice(const MultiResGrid& other) const {
  if (levels_.size() != other.levels_.size() ||
      bounds_.min_corner != other.bounds_.min_corner ||
      bounds_.max_corner != other.bounds_.max_corner) {
    return false;
  }
  for (std::size_t l = 0; l < levels_.size(); ++l) {
    if (levels_[l].resolution != other.levels_[l].resolution ||
        levels_[l].voxel_size != other.levels_[l].voxel_size) {
      return false;
    }
  }
  return true;
}

void MultiResGrid::scatter_unchecked(const Vec3& p, const double* d_features,
                                     std::span<std::vector<double>> level_grads) const {
  int offset = 0;
  for (int l = 0; l < static_cast<int>(levels_.size()); ++l) {
    const int fd = levels_[l].feat_dim;
    const TrilinearStencil s = stencil(l, p);
    double* grad = level_grads[l].data();
    const double* src = d_features + offset;
    for (int c = 0; c < 8; ++c) {
      double* dst = grad + static_cast<std::size_t>(s.vertex[c]) * fd;
      const double w = s.weight[c];
      for (int k = 0; k < fd; ++k) {
        dst[k] += w * src[k];
      }
    }
    offset += fd;
  }
}

// ---------------------------------------------------------------------------
// Decoder

Decoder::Decoder(std::vector<int> dims) : dims_(std::move(dims)) {
  if (dims_.size() < 2) {
    throw DomainError("Decoder: need at least input and output widths");
  }
  std::size_t offset = 0;
  for (std::size_t k = 0; k + 1 < dims_.size(); ++k) {
    if (dims_[k] <= 0 || dims_[k + 1] <= 0) {
      throw DomainError("Decoder: layer widths must be positive");
    }
    offsets_.push_back(offset);
    offset += static_cast<std::size_t>(dims_[k]) * dims_[k + 1] + dims_[k + 1];
    if (k + 2 < dims_.size()) {
      tape_size_ += 2 * static_cast<std::size_t>(dims_[k + 1]);
    }
  }
  params_.assign(offset, 0.0f);
}

Decoder Decoder::create(int input_dim, int hidden_width, int hidden_layers, int output_dim,
                        Rng& rng) {
  std::vector<int> dims{input_dim};
  for (int h = 0; h < hidden_layers; ++h) {
    dims.push_back(hidden_width);
  }
  dims.push_back(output_dim);
  Decoder decoder(dims);
  for (int k = 0; k < decoder.layer_count(); ++k) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(dims[k]));
    const std::size_t n = static_cast<std::size_t>(dims[k]) * dims[k + 1];
    for (std::size_t i = 0; i < n; ++i) {
      decoder.params_[decoder.weight_offset(k) + i] = static_cast<float>(rng.uniform(-bound, bound));
    }
  }
  return decoder;
}

void Decoder::forward(const double* in, double* tape, double* out) const {
  const int layers = layer_count();
  const double* x = in;
  double* t = tape;
  for (int k = 0; k < layers; ++k) {
    const int n_in = dims_[k];
    const int n_out = dims_[k + 1];
    const float* w = params_.data() + weight_offset(k);
    const float* b = params_.data() + bias_offset(k);
    const bool hidden = k + 1 < layers;
    double* z = hidden ? t : out;
    for (int j = 0; j < n_out; ++j) {
      const float* row = w + static_cast<std::size_t>(j) * n_in;
      double acc = 0.0;
      for (int i = 0; i < n_in; ++i) {
        acc += static_cast<double>(row[i]) * x[i];
      }
      z[j] = acc + static_cast<double>(b[j]);
    }
    if (hidden) {
      double* slope = t + n_out;
      for (int j = 0; j < n_out; ++j) {
        const double v = z[j];
        const double e = std::exp(-std::abs(v));
        slope[j] = v >= 0.0 ? 1.0 / (1.0 + e) : e / (1.0 + e);
        z[j] = std::max(v, 0.0) + std::log1p(e);
      }
      x = z;
      t += 2 * n_out;
    }
  }
}

void Decoder::backward(const double* in, const double* tape, const double* d_out, double* grad,
                       double* d_in) const {
  const int layers = layer_count();
  // Hidden activations live at tape offsets; walk them in reverse.
  thread_local std::vector<const double*> acts;
  acts.assign(static_cast<std::size_t>(layers), nullptr);
  acts[0] = in;
  {
    const double* t = tape;
    for (int k = 1; k < layers; ++k) {
      acts[k] = t;
      t += 2 * dims_[k];
    }
  }
  thread_local std::vector<double> upstream;
  thread_local std::vector<double> next;
  upstream.assign(d_out, d_out + dims_.back());
  for (int k = layers - 1; k >= 0; --k) {
    const int n_in = dims_[k];
    const int n_out = dims_[k + 1];
    const float* w = params_.data() + weight_offset(k);
    double* gw = grad + weight_offset(k);
    double* gb = grad + bias_offset(k);
    const double* x = acts[k];
    const bool need_input_grad = k > 0 || d_in != nullptr;
    next.assign(static_cast<std::size_t>(n_in), 0.0);
    for (int j = 0; j < n_out; ++j) {
      const double g = upstream[j];
      if (g == 0.0) {
        continue;
      }
      gb[j] += g;
      double* grow = gw + static_cast<std::size_t>(j) * n_in;
      const float* row = w + static_cast<std::size_t>(j) * n_in;
      for (int i = 0; i < n_in; ++i) {
        grow[i] += g * x[i];
      }
      if (need_input_grad) {
        for (int i = 0; i < n_in; ++i) {
          next[i] += g * static_cast<double>(row[i]);
        }
      }
    }
    if (k > 0) {
      const double* slope = acts[k] + n_in;
      for (int i = 0; i < n_in; ++i) {
        next[i] *= slope[i];
      }
      upstream.swap(next);
    } else if (d_in != nullptr) {
      std::copy(next.begin(), next.end(), d_in);
    }
  }
}

namespace {

void ensure_rows(RowMatrix& m, Eigen::Index rows, Eigen::Index cols) {
  if (m.rows() < rows || m.cols() != cols) {
    m.resize(std::max(rows, m.rows()), cols);
  }
}

}  // namespace

BatchDecoder::BatchDecoder(const Decoder& decoder) : dims_(decoder.dims()) {
  const int layers = decoder.layer_count();
  for (int k = 0; k < layers; ++k) {
    const int n_in = dims_[k];
    const int n_out = dims_[k + 1];
    const float* w = decoder.params().data() + decoder.weight_offset(k);
    const float* b = decoder.params().data() + decoder.bias_offset(k);
    Eigen::MatrixXd wk(n_out, n_in);
    for (int j = 0; j < n_out; ++j) {
      for (int i = 0; i < n_in; ++i) {
        wk(j, i) = w[static_cast<std::size_t>(j) * n_in + i];
      }
    }
    Eigen::VectorXd bk(n_out);
    for (int j = 0; j < n_out; ++j) {
      bk[j] = b[j];
    }
    weight_.push_back(std::move(wk));
    bias_.push_back(std::move(bk));
    weight_offset_.push_back(decoder.weight_offset(k));
    bias_offset_.push_back(decoder.bias_offset(k));
  }
}

void BatchDecoder::forward(const RowMatrix& in, Eigen::Index n, Tape& tape, RowMatrix& out) const {
  const int layers = static_cast<int>(weight_.size());
  tape.act.resize(static_cast<std::size_t>(std::max(layers - 1, 0)));
  tape.slope.resize(tape.act.size());
  const RowMatrix* x = &in;
  for (int k = 0; k < layers; ++k) {
    const bool hidden = k + 1 < layers;
    RowMatrix& z = hidden ? tape.act[k] : out;
    ensure_rows(z, n, dims_[k + 1]);
    auto zn = z.topRows(n);
    zn.noalias() = x->topRows(n) * weight_[k].transpose();
    zn.rowwise() += bias_[k].transpose();
    if (hidden) {
      RowMatrix& slope = tape.slope[k];
      ensure_rows(slope, n, dims_[k + 1]);
      auto za = zn.array();
      // Kept free of select() so every step vectorizes; log(1 + e) differs
      // from log1p(e) by less than 2.3e-16 absolute.
      const auto e = (-za.abs()).exp().eval();
      slope.topRows(n).array() = 1.0 / (1.0 + (-za).exp());
      za = za.max(0.0) + (1.0 + e).log();
      x = &z;
    }
  }
}

void BatchDecoder::backward(const RowMatrix& in, Eigen::Index n, Tape& tape,
                            const RowMatrix& d_out, double* grad, RowMatrix* d_in) const {
  const int layers = static_cast<int>(weight_.size());
  ensure_rows(tape.upstream, n, dims_.back());
  tape.upstream.topRows(n) = d_out.topRows(n);
  for (int k = layers - 1; k >= 0; --k) {
    const int n_in = dims_[k];
    const int n_out = dims_[k + 1];
    const RowMatrix& x = k > 0 ? tape.act[k - 1] : in;
    Eigen::Map<RowMatrix> gw(grad + weight_offset_[k], n_out, n_in);
    Eigen::Map<Eigen::VectorXd> gb(grad + bias_offset_[k], n_out);
    const auto u = tape.upstream.topRows(n);
    // Products go through Eigen-owned storage: kernel peeling depends on the
    // destination's alignment, which a Map over `grad` does not fix.
    tape.weight_grad.noalias() = u.transpose() * x.topRows(n);
    gw += tape.weight_grad;
    for (Eigen::Index i = 0; i < n; ++i) {
      gb += u.row(i).transpose();
    }
    if (k > 0) {
      ensure_rows(tape.next, n, n_in);
      tape.next.topRows(n).noalias() = u * weight_[k];
      tape.next.topRows(n).array() *= tape.slope[k - 1].topRows(n).array();
      std::swap(tape.upstream, tape.next);
    } else if (d_in != nullptr) {
      ensure_rows(*d_in, n, n_in);
      d_in->topRows(n).noalias() = u * weight_[k];
    }
  }
}

std::vector<double> Decoder::evaluate(std::span<const double> in) const {
  if (static_cast<int>(in.size()) != input_dim()) {
    throw DomainError("Decoder::evaluate: input width mismatch");
  }
  std::vector<double> tape(tape_size_);
  std::vector<double> out(static_cast<std::size_t>(output_dim()));
  forward(in.data(), tape.data(), out.data());
  return out;
}

// ---------------------------------------------------------------------------
// FieldSet

std::vector<std::array<int, 3>> level_resolutions(const SceneBounds& bounds,
                                                  const FieldConfig& config) {
  if (config.levels <= 0 || !(config.coarse_divisions > 0.0)) {
    throw DomainError("FieldConfig: levels and coarse_divisions must be positive");
  }
  std::vector<std::array<int, 3>> out;
  double voxel = bounds.diagonal() / config.coarse_divisions;
  const Vec3 extent = bounds.extent();
  for (int l = 0; l < config.levels; ++l) {
    std::array<int, 3> res{};
    for (int a = 0; a < 3; ++a) {
      res[a] = std::max(2, static_cast<int>(std::ceil(extent[a] / voxel - 1e-9)) + 1);
    }
    out.push_back(res);
    voxel *= 0.5;
  }
  return out;
}

namespace {

MultiResGrid random_grid(const SceneBounds& bounds, const std::vector<std::array<int, 3>>& res,
                         int feat_dim, double range, Rng& rng) {
  MultiResGrid grid =
      MultiResGrid::zeros(bounds, res, std::vector<int>(res.size(), feat_dim));
  for (GridLevel& level : grid.levels()) {
    for (float& f : level.features) {
      f = static_cast<float>(rng.uniform(-range, range));
    }
  }
  return grid;
}

void check_finite(std::span<const float> values, const char* what) {
  for (float v : values) {
    if (!std::isfinite(v)) {
      throw DomainError(std::string("non-finite parameter in ") + what);
    }
  }
}

}  // namespace

FieldSet FieldSet::create(const SceneBounds& bounds, const FieldConfig& config,
                          std::uint64_t seed) {
  if (config.semantic_dim <= 0 || config.hidden_width <= 0 || config.hidden_layers < 0) {
    throw DomainError("FieldConfig: semantic_dim and hidden_width must be positive");
  }
  if (!(config.initial_occupancy > 0.0 && config.initial_occupancy < 1.0)) {
    throw DomainError("FieldConfig: initial_occupancy must lie in (0, 1)");
  }
  Rng rng(seed);
  const auto res = level_resolutions(bounds, config);
  FieldSet f;
  f.semantic_dim = config.semantic_dim;
  f.geometry = random_grid(bounds, res, config.geometry_feat_dim, config.grid_init_range, rng);
  f.color = random_grid(bounds, res, config.color_feat_dim, config.grid_init_range, rng);
  f.semantic = random_grid(bounds, res, config.semantic_feat_dim, config.grid_init_range, rng);
  f.occ_decoder = Decoder::create(f.geometry.total_feat_dim(), config.hidden_width,
                                  config.hidden_layers, 1, rng);
  f.color_decoder = Decoder::create(f.color.total_feat_dim() + 3, config.hidden_width,
                                    config.hidden_layers, 3, rng);
  f.sem_decoder = Decoder::create(f.semantic.total_feat_dim(), config.hidden_width,
                                  config.hidden_layers, config.semantic_dim, rng);

  // Shift the occupancy output bias so a zero feature vector decodes to the
  // configured prior.
  const std::vector<double> zero(static_cast<std::size_t>(f.geometry.total_feat_dim()), 0.0);
  const double logit_at_zero = f.occ_decoder.evaluate(zero)[0];
  const double target = std::log(config.initial_occupancy / (1.0 - config.initial_occupancy));
  const int last = f.occ_decoder.layer_count() - 1;
  float& bias = f.occ_decoder.params()[f.occ_decoder.bias_offset(last)];
  bias = static_cast<float>(static_cast<double>(bias) + target - logit_at_zero);
  f.validate();
  return f;
}

void FieldSet::validate() const {
  if (semantic_dim <= 0) {
    throw DomainError("FieldSet: semantic dimension must be positive");
  }
  if (occ_decoder.output_dim() != 1 || color_decoder.output_dim() != 3 ||
      sem_decoder.output_dim() != semantic_dim) {
    throw DomainError("FieldSet: decoder output widths must be 1, 3 and D (" +
                      std::to_string(semantic_dim) + "), got " +
                      std::to_string(occ_decoder.output_dim()) + ", " +
                      std::to_string(color_decoder.output_dim()) + ", " +
                      std::to_string(sem_decoder.output_dim()));
  }
  if (occ_decoder.input_dim() != geometry.total_feat_dim() ||
      color_decoder.input_dim() != color.total_feat_dim() + 3 ||
      sem_decoder.input_dim() != semantic.total_feat_dim()) {
    throw DomainError("FieldSet: decoder input widths do not match the grids");
  }
  for (const auto& block : parameter_blocks()) {
    check_finite(block, "FieldSet");
  }
}

std::vector<std::span<float>> FieldSet::parameter_blocks() {
  std::vector<std::span<float>> out;
  for (MultiResGrid* g : {&geometry, &color, &semantic}) {
    for (GridLevel& level : g->levels()) {
      out.emplace_back(level.features);
    }
  }
  out.emplace_back(occ_decoder.params());
  out.emplace_back(color_decoder.params());
  out.emplace_back(sem_decoder.params());
  return out;
}

std::vector<std::span<const float>> FieldSet::parameter_blocks() const {
  std::vector<std::span<const float>> out;
  for (const MultiResGrid* g : {&geometry, &color, &semantic}) {
    for (const GridLevel& level : g->levels()) {
      out.emplace_back(level.features);
    }
  }
  out.emplace_back(occ_decoder.params());
  out.emplace_back(color_decoder.params());
  out.emplace_back(sem_decoder.params());
  return out;
}

std::size_t FieldSet::parameter_count() const {
  std::size_t n = 0;
  for (const auto& b : parameter_blocks()) {
    n += b.size();
  }
  return n;
}

bool FieldSet::operator==(const FieldSet& other) const {
  if (semantic_dim != other.semantic_dim || occ_decoder.dims() != other.occ_decoder.dims() ||
      color_decoder.dims() != other.color_decoder.dims() ||
      sem_decoder.dims() != other.sem_decoder.dims() ||
      bounds().min_corner != other.bounds().min_corner ||
      bounds().max_corner != other.bounds().max_corner) {
    return false;
  }
  const auto a = parameter_blocks();
  const auto b = other.parameter_blocks();
  if (a.size() != b.size()) {
    return false;
  }
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a[i].size() != b[i].size() ||
        std::memcmp(a[i].data(), b[i].data(), a[i].size() * sizeof(float)) != 0) {
      return false;
    }
  }
  return true;
}

BlockIndex block_index(const FieldSet& fields) {
  BlockIndex idx;
  idx.geometry = 0;
  idx.color = fields.geometry.levels().size();
  idx.semantic = idx.color + fields.color.levels().size();
  idx.occ_decoder = idx.semantic + fields.semantic.levels().size();
  idx.color_decoder = idx.occ_decoder + 1;
  idx.sem_decoder = idx.occ_decoder + 2;
  return idx;
}

// ---------------------------------------------------------------------------
// FieldGradient

FieldGradient::FieldGradient(const FieldSet& fields) {
  for (const MultiResGrid* g : {&fields.geometry, &fields.color, &fields.semantic}) {
    for (const GridLevel& level : g->levels()) {
      blocks.emplace_back(level.features.size(), 0.0);
      feat_dims.push_back(level.feat_dim);
      touched_flag.emplace_back(level.vertex_count(), 0);
      touched.emplace_back();
    }
  }
  blocks.emplace_back(fields.occ_decoder.params().size(), 0.0);
  blocks.emplace_back(fields.color_decoder.params().size(), 0.0);
  blocks.emplace_back(fields.sem_decoder.params().size(), 0.0);
}

void FieldGradient::mark_touched(std::size_t block, std::uint32_t vertex) {
  std::uint8_t& flag = touched_flag[block][vertex];
  if (!flag) {
    flag = 1;
    touched[block].push_back(vertex);
  }
}

void FieldGradient::zero() {
  for (std::size_t b = 0; b < grid_block_count(); ++b) {
    const int fd = feat_dims[b];
    for (std::uint32_t v : touched[b]) {
      std::fill_n(blocks[b].data() + static_cast<std::size_t>(v) * fd, fd, 0.0);
      touched_flag[b][v] = 0;
    }
    touched[b].clear();
  }
  for (std::size_t b = grid_block_count(); b < blocks.size(); ++b) {
    std::fill(blocks[b].begin(), blocks[b].end(), 0.0);
  }
}

std::vector<double> FieldGradient::flatten() const {
  std::vector<double> out;
  for (const auto& b : blocks) {
    out.insert(out.end(), b.begin(), b.end());
  }
  return out;
}

// ---------------------------------------------------------------------------
// Point queries

namespace {

void require_inside(const FieldSet& fields, const Vec3& p) {
  if (!fields.bounds().contains(p)) {
    throw DomainError("field query: point outside scene bounds");
  }
}

void require_unit(const Vec3& d) {
  if (std::abs(d.norm() - 1.0) > 1e-6) {
    throw DomainError("color: view direction must be a unit vector");
  }
}

std::span<std::vector<double>> level_slice(FieldGradient& grad, std::size_t first,
                                           std::size_t count) {
  return std::span<std::vector<double>>(grad.blocks.data() + first, count);
}

void mark_point(const MultiResGrid& grid, const Vec3& p, FieldGradient& grad, std::size_t first) {
  for (int l = 0; l < static_cast<int>(grid.levels().size()); ++l) {
    const TrilinearStencil s = grid.stencil(l, p);
    for (std::uint32_t v : s.vertex) {
      grad.mark_touched(first + l, v);
    }
  }
}

}  // namespace

double occupancy_logit(const FieldSet& fields, const Vec3& p) {
  require_inside(fields, p);
  std::vector<double> feat(static_cast<std::size_t>(fields.geometry.total_feat_dim()));
  fields.geometry.query_unchecked(p, feat.data());
  return fields.occ_decoder.evaluate(feat)[0];
}

double occupancy(const FieldSet& fields, const Vec3& p) {
  return sigmoid(occupancy_logit(fields, p));
}

Vec3 color(const FieldSet& fields, const Vec3& p, const Vec3& direction) {
  require_inside(fields, p);
  require_unit(direction);
  const int fc = fields.color.total_feat_dim();
  std::vector<double> in(static_cast<std::size_t>(fc) + 3);
  fields.color.query_unchecked(p, in.data());
  in[fc] = direction[0];
  in[fc + 1] = direction[1];
  in[fc + 2] = direction[2];
  const std::vector<double> raw = fields.color_decoder.evaluate(in);
  return Vec3(sigmoid(raw[0]), sigmoid(raw[1]), sigmoid(raw[2]));
}

std::vector<double> semantic(const FieldSet& fields, const Vec3& p) {
  require_inside(fields, p);
  std::vector<double> feat(static_cast<std::size_t>(fields.semantic.total_feat_dim()));
  fields.semantic.query_unchecked(p, feat.data());
  return fields.sem_decoder.evaluate(feat);
}

void occupancy_backward(const FieldSet& fields, const Vec3& p, double d_occ,
                        FieldGradient& grad) {
  require_inside(fields, p);
  const BlockIndex idx = block_index(fields);
  const Decoder& dec = fields.occ_decoder;
  std::vector<double> feat(static_cast<std::size_t>(dec.input_dim()));
  std::vector<double> tape(dec.tape_size());
  std::vector<double> d_feat(feat.size());
  double logit = 0.0;
  fields.geometry.query_unchecked(p, feat.data());
  dec.forward(feat.data(), tape.data(), &logit);
  const double o = sigmoid(logit);
  const double d_logit = d_occ * o * (1.0 - o);
  dec.backward(feat.data(), tape.data(), &d_logit, grad.blocks[idx.occ_decoder].data(),
               d_feat.data());
  fields.geometry.scatter_unchecked(
      p, d_feat.data(), level_slice(grad, idx.geometry, fields.geometry.levels().size()));
  mark_point(fields.geometry, p, grad, idx.geometry);
}

void color_backward(const FieldSet& fields, const Vec3& p, const Vec3& direction,
                    const Vec3& d_rgb, FieldGradient& grad) {
  require_inside(fields, p);
  require_unit(direction);
  const BlockIndex idx = block_index(fields);
  const Decoder& dec = fields.color_decoder;
  const int fc = fields.color.total_feat_dim();
  std::vector<double> in(static_cast<std::size_t>(dec.input_dim()));
  std::vector<double> tape(dec.tape_size());
  std::vector<double> d_in(in.size());
  fields.color.query_unchecked(p, in.data());
  for (int a = 0; a < 3; ++a) {
    in[fc + a] = direction[a];
  }
  double raw[3];
  dec.forward(in.data(), tape.data(), raw);
  double d_raw[3];
  for (int a = 0; a < 3; ++a) {
    const double c = sigmoid(raw[a]);
    d_raw[a] = d_rgb[a] * c * (1.0 - c);
  }
  dec.backward(in.data(), tape.data(), d_raw, grad.blocks[idx.color_decoder].data(),
               d_in.data());
  fields.color.scatter_unchecked(p, d_in.data(),
                                 level_slice(grad, idx.color, fields.color.levels().size()));
  mark_point(fields.color, p, grad, idx.color);
}

void semantic_backward(const FieldSet& fields, const Vec3& p, std::span<const double> d_semantic,
                       FieldGradient& grad) {
  require_inside(fields, p);
  if (static_cast<int>(d_semantic.size()) != fields.semantic_dim) {
    throw DomainError("semantic_backward: upstream width must equal D");
  }
  const BlockIndex idx = block_index(fields);
  const Decoder& dec = fields.sem_decoder;
  std::vector<double> feat(static_cast<std::size_t>(dec.input_dim()));
  std::vector<double> tape(dec.tape_size());
  std::vector<double> out(static_cast<std::size_t>(dec.output_dim()));
  std::vector<double> d_feat(feat.size());
  fields.semantic.query_unchecked(p, feat.data());
  dec.forward(feat.data(), tape.data(), out.data());
  dec.backward(feat.data(), tape.data(), d_semantic.data(), grad.blocks[idx.sem_decoder].data(),
               d_feat.data());
  fields.semantic.scatter_unchecked(
      p, d_feat.data(), level_slice(grad, idx.semantic, fields.semantic.levels().size()));
  mark_point(fields.semantic, p, grad, idx.semantic);
}

}  // namespace langocc
