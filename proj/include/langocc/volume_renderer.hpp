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

#include <optional>
#include <span>
#include <vector>

#include "langocc/grid_field.hpp"

namespace langocc {

/// A batch of camera rays and their supervision targets. gt_depth is the
/// distance along the (unit) ray to the observed surface; values <= 0 mark
/// missing depth.
struct RayBundle {
  std::vector<Vec3> origins;
  std::vector<Vec3> directions;
  std::vector<Vec3> gt_color;
  std::vector<double> gt_depth;
  int feat_dim = 0;
  /// size() x feat_dim, empty when no feature maps are available.
  std::vector<float> gt_feature;
  std::vector<std::uint8_t> feature_valid;
  std::vector<int> frame_ids;

  std::size_t size() const { return origins.size(); }
  bool has_features() const { return feat_dim > 0 && !gt_feature.empty(); }
  std::span<const float> feature(std::size_t ray) const {
    return {gt_feature.data() + ray * static_cast<std::size_t>(feat_dim),
            static_cast<std::size_t>(feat_dim)};
  }
  void resize(std::size_t n, int feature_dim);
  /// Throws DomainError on non-unit directions, mismatched array lengths, or
  /// valid feature rows that are not unit-norm within 1e-4.
  void validate() const;
};

/// Per-ray sample depths (strictly increasing) with a validity mask; samples
/// outside the scene bounds are masked and contribute nothing.
struct RaySamples {
  int n_samples = 0;
  std::vector<double> depths;
  std::vector<std::uint8_t> valid;

  std::size_t ray_count() const {
    return n_samples > 0 ? depths.size() / static_cast<std::size_t>(n_samples) : 0;
  }
  std::span<const double> ray_depths(std::size_t ray) const {
    return {depths.data() + ray * n_samples, static_cast<std::size_t>(n_samples)};
  }
  std::span<const std::uint8_t> ray_valid(std::size_t ray) const {
    return {valid.data() + ray * n_samples, static_cast<std::size_t>(n_samples)};
  }
  Vec3 position(const RayBundle& rays, std::size_t ray, int sample) const {
    return rays.origins[ray] + depths[ray * n_samples + sample] * rays.directions[ray];
  }
};

struct SamplingConfig {
  int n_samples = 132;
  /// Occupancy truncation t; surface samples cover [depth - 3t, depth + 3t].
  double truncation = 0.05;
  bool jitter = true;
};

/// Stratified samples on [near, far]. When gt_depth > 0, half of the budget
/// is stratified over [gt_depth - 3t, gt_depth + 3t] (clipped to [near, far]).
/// rng == nullptr selects bin midpoints. Result is strictly increasing.
std::vector<double> sample_ray(double near, double far, int n_samples, double gt_depth,
                               double truncation, Rng* rng);

/// Samples every ray between its entry and exit of `bounds`; rays that miss
/// the bounds get an all-invalid row.
RaySamples sample_bundle(const RayBundle& rays, const SceneBounds& bounds,
                         const SamplingConfig& config, Rng* rng);

/// w_i = o_i * prod_{j<i} (1 - o_j).
std::vector<double> compose_weights(std::span<const double> occs);

struct ColorDepth {
  std::vector<Vec3> color;
  std::vector<double> depth;
};
ColorDepth render_color_depth(const FieldSet& fields, const RayBundle& rays,
                              const RaySamples& samples);

struct SemanticImage {
  int dim = 0;
  /// ray_count x dim unit vectors (zeros where undefined).
  std::vector<double> features;
  std::vector<std::uint8_t> defined;
};
SemanticImage render_semantic(const FieldSet& fields, const RayBundle& rays,
                              const RaySamples& samples);

/// Minimum composite norm for a rendered semantic feature to be defined.
inline constexpr double kMinSemanticNorm = 1e-8;
/// Minimum accumulated weight for a ray to be associated with a surface.
inline constexpr double kMinTerminationWeight = 1e-3;

/// origin + D(r) * direction, or nullopt when the weights sum to at most
/// kMinTerminationWeight.
std::optional<Vec3> ray_termination_point(std::span<const double> depths,
                                          std::span<const double> weights, const Vec3& origin,
                                          const Vec3& direction);

/// Everything a forward pass produces per ray.
struct RenderResult {
  std::vector<Vec3> color;
  std::vector<double> depth;
  std::vector<double> weight_sum;
  SemanticImage semantic;
};

/// Forward rendering of all rays. The parallel path splits rays across
/// OpenMP threads; both paths give identical results.
RenderResult render_rays(const FieldSet& fields, const RayBundle& rays, const RaySamples& samples,
                         Execution exec = Execution::kParallel);

}  // namespace langocc
