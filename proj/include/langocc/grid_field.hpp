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

#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <utility>
#include <vector>

#include "langocc/common.hpp"

namespace langocc {

/// Axis-aligned box that every grid and belief lattice spans exactly.
struct SceneBounds {
  Vec3 min_corner = Vec3::Zero();
  Vec3 max_corner = Vec3::Ones();

  SceneBounds() = default;
  /// Throws DomainError unless max_corner > min_corner on every axis.
  SceneBounds(const Vec3& lo, const Vec3& hi);

  Vec3 extent() const { return max_corner - min_corner; }
  double diagonal() const { return extent().norm(); }
  bool contains(const Vec3& p) const;

  /// Parametric interval [t_near, t_far] (t_near >= 0) where the ray
  /// origin + t * direction lies inside the box; nullopt on a miss.
  std::optional<std::pair<double, double>> intersect(const Vec3& origin,
                                                     const Vec3& direction) const;
};

/// One dense lattice of per-vertex feature vectors. Vertex (x, y, z) lives at
/// min_corner + (x, y, z) * voxel_size and its features start at
/// ((z * ny + y) * nx + x) * feat_dim.
struct GridLevel {
  std::array<int, 3> resolution{2, 2, 2};
  Vec3 voxel_size = Vec3::Ones();
  int feat_dim = 1;
  std::vector<float> features;

  std::size_t vertex_count() const {
    return static_cast<std::size_t>(resolution[0]) * resolution[1] * resolution[2];
  }
  std::size_t vertex_index(int x, int y, int z) const {
    return (static_cast<std::size_t>(z) * resolution[1] + y) * resolution[0] + x;
  }
};

/// The eight enclosing vertices of a point on one level and their trilinear
/// weights. Corner c has x offset (c & 1), y offset (c >> 1 & 1) and z offset
/// (c >> 2 & 1).
struct TrilinearStencil {
  std::array<std::uint32_t, 8> vertex{};
  std::array<double, 8> weight{};
};

class MultiResGrid {
 public:
  MultiResGrid() = default;
  /// Validates the level invariants; throws DomainError on violation.
  MultiResGrid(const SceneBounds& bounds, std::vector<GridLevel> levels);

  /// Zero-initialized grid whose levels span `bounds` with the given vertex
  /// counts and feature widths.
  static MultiResGrid zeros(const SceneBounds& bounds,
                            const std::vector<std::array<int, 3>>& resolutions,
                            const std::vector<int>& feat_dims);

  const SceneBounds& bounds() const { return bounds_; }
  const std::vector<GridLevel>& levels() const { return levels_; }
  std::vector<GridLevel>& levels() { return levels_; }
  int total_feat_dim() const { return total_feat_dim_; }

  /// Concatenated trilinear features of every level at p, coarse to fine.
  /// Throws DomainError when p lies outside the bounds.
  std::vector<double> query_concat(const Vec3& p) const;
  /// Same as query_concat into caller storage of total_feat_dim() doubles,
  /// without the bounds check.
  void query_unchecked(const Vec3& p, double* out) const;

  TrilinearStencil stencil(int level, const Vec3& p) const;
  /// query_unchecked from precomputed per-level stencils (levels() entries).
  void gather(const TrilinearStencil* stencils, double* out) const;
  /// True when both grids have identical level lattices, so stencils of one
  /// apply to the other.
  bool same_lattice(const MultiResGrid& other) const;

  /// Adds the transpose of query_unchecked: for every level and corner,
  /// grad[level][vertex] += weight * d_features[level slice].
  void scatter_unchecked(const Vec3& p, const double* d_features,
                         std::span<std::vector<double>> level_grads) const;

 private:
  SceneBounds bounds_;
  std::vector<GridLevel> levels_;
  int total_feat_dim_ = 0;
};

/// Fully connected network with softplus hidden activations and a linear
/// output layer. Parameters are one flat float array holding, per layer,
/// the row-major (out x in) weight followed by the bias.
class Decoder {
 public:
  Decoder() = default;
  /// dims = {input, hidden..., output}; parameters start at zero.
  explicit Decoder(std::vector<int> dims);

  /// Fan-in scaled uniform weights, zero biases.
  static Decoder create(int input_dim, int hidden_width, int hidden_layers,
                        int output_dim, Rng& rng);

  const std::vector<int>& dims() const { return dims_; }
  int input_dim() const { return dims_.front(); }
  int output_dim() const { return dims_.back(); }
  int layer_count() const { return static_cast<int>(dims_.size()) - 1; }
  std::size_t weight_offset(int layer) const { return offsets_[layer]; }
  std::size_t bias_offset(int layer) const {
    return offsets_[layer] + static_cast<std::size_t>(dims_[layer]) * dims_[layer + 1];
  }

  std::vector<float>& params() { return params_; }
  const std::vector<float>& params() const { return params_; }

  /// Doubles of scratch needed by forward/backward.
  std::size_t tape_size() const { return tape_size_; }

  void forward(const double* in, double* tape, double* out) const;
  /// Accumulates parameter gradients into grad (params().size() doubles) and
  /// writes dL/d(input) into d_in when non-null.
  void backward(const double* in, const double* tape, const double* d_out,
                double* grad, double* d_in) const;

  std::vector<double> evaluate(std::span<const double> in) const;

 private:
  std::vector<int> dims_;
  std::vector<std::size_t> offsets_;
  std::size_t tape_size_ = 0;
  std::vector<float> params_;
};

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Double-precision copy of a Decoder that evaluates many inputs at once;
/// every matrix row is one input. Matches Decoder::forward/backward up to
/// summation order.
class BatchDecoder {
 public:
  BatchDecoder() = default;
  explicit BatchDecoder(const Decoder& decoder);

  struct Tape {
    std::vector<RowMatrix> act;
    std::vector<RowMatrix> slope;
    RowMatrix upstream, next, weight_grad;
  };

  /// Evaluates rows [0, n) of `in` into rows [0, n) of `out`; both grow as
  /// needed.
  void forward(const RowMatrix& in, Eigen::Index n, Tape& tape, RowMatrix& out) const;
  /// Adds parameter gradients (Decoder layout) of rows [0, n) into grad and,
  /// when d_in is non-null, writes dL/d(input) into its rows [0, n).
  void backward(const RowMatrix& in, Eigen::Index n, Tape& tape, const RowMatrix& d_out,
                double* grad, RowMatrix* d_in) const;

 private:
  std::vector<int> dims_;
  std::vector<Eigen::MatrixXd> weight_;
  std::vector<Eigen::VectorXd> bias_;
  std::vector<std::size_t> weight_offset_;
  std::vector<std::size_t> bias_offset_;
};

struct FieldConfig {
  int levels = 4;
  /// Coarsest voxel edge is scene diagonal / coarse_divisions; each finer
  /// level halves it.
  double coarse_divisions = 16.0;
  int geometry_feat_dim = 4;
  int color_feat_dim = 4;
  int semantic_feat_dim = 8;
  int hidden_width = 64;
  int hidden_layers = 2;
  int semantic_dim = 16;
  double initial_occupancy = 0.1;
  double grid_init_range = 1e-2;
};

/// Vertex counts per level implied by `config` for `bounds`.
std::vector<std::array<int, 3>> level_resolutions(const SceneBounds& bounds,
                                                  const FieldConfig& config);

/// Geometry, color and semantic grids with their decoders.
struct FieldSet {
  MultiResGrid geometry;
  MultiResGrid color;
  MultiResGrid semantic;
  Decoder occ_decoder;
  Decoder color_decoder;
  Decoder sem_decoder;
  int semantic_dim = 0;

  static FieldSet create(const SceneBounds& bounds, const FieldConfig& config,
                         std::uint64_t seed);

  const SceneBounds& bounds() const { return geometry.bounds(); }

  /// Throws DomainError when decoder widths disagree with the grids or D, or
  /// any parameter is non-finite.
  void validate() const;

  /// Parameter arrays in declaration order: geometry levels, color levels,
  /// semantic levels, then the occupancy, color and semantic decoders.
  std::vector<std::span<float>> parameter_blocks();
  std::vector<std::span<const float>> parameter_blocks() const;
  std::size_t grid_block_count() const {
    return geometry.levels().size() + color.levels().size() + semantic.levels().size();
  }
  std::size_t parameter_count() const;

  bool operator==(const FieldSet& other) const;
};

/// Dense gradient storage mirroring FieldSet::parameter_blocks(), plus a
/// record of which grid vertices received a contribution.
struct FieldGradient {
  std::vector<std::vector<double>> blocks;
  /// Per grid block: vertex feature width, touched flags and touched list.
  std::vector<int> feat_dims;
  std::vector<std::vector<std::uint8_t>> touched_flag;
  std::vector<std::vector<std::uint32_t>> touched;

  FieldGradient() = default;
  explicit FieldGradient(const FieldSet& fields);

  std::size_t grid_block_count() const { return feat_dims.size(); }
  /// Marks every vertex whose gradient entries may be nonzero.
  void mark_touched(std::size_t block, std::uint32_t vertex);
  /// Resets gradients and touched lists; cost proportional to touched size.
  void zero();
  /// All blocks flattened in order (test helper).
  std::vector<double> flatten() const;
};

double occupancy_logit(const FieldSet& fields, const Vec3& p);
/// sigmoid of the occupancy decoder output; DomainError outside bounds.
double occupancy(const FieldSet& fields, const Vec3& p);
/// View-dependent color in [0, 1]^3; DomainError for a non-unit direction.
Vec3 color(const FieldSet& fields, const Vec3& p, const Vec3& direction);
/// Unnormalized D-dimensional semantic feature.
std::vector<double> semantic(const FieldSet& fields, const Vec3& p);

// Reverse-mode counterparts of the point queries above, accumulating
// upstream * Jacobian into grad.
void occupancy_backward(const FieldSet& fields, const Vec3& p, double d_occ,
                        FieldGradient& grad);
void color_backward(const FieldSet& fields, const Vec3& p, const Vec3& direction,
                    const Vec3& d_rgb, FieldGradient& grad);
void semantic_backward(const FieldSet& fields, const Vec3& p,
                       std::span<const double> d_semantic, FieldGradient& grad);

/// Indices of the first block of each grid inside FieldGradient::blocks.
struct BlockIndex {
  std::size_t geometry = 0, color = 0, semantic = 0;
  std::size_t occ_decoder = 0, color_decoder = 0, sem_decoder = 0;
};
BlockIndex block_index(const FieldSet& fields);

}  // namespace langocc
