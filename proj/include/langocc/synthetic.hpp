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

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "langocc/dataset_io.hpp"
#include "langocc/grid_field.hpp"
#include "langocc/scp_fusion.hpp"

namespace langocc {

/// Analytic solid. A room is an inverted box: everything outside [lo, hi] is
/// solid, its z-min face carries `floor_class` and the other faces `class_id`.
struct Primitive {
  enum class Kind { kBox, kSphere, kRoom };
  Kind kind = Kind::kBox;
  Vec3 lo = Vec3::Zero();
  Vec3 hi = Vec3::Zero();
  Vec3 center = Vec3::Zero();
  double radius = 0.0;
  int class_id = 0;
  int floor_class = 0;

  static Primitive box(const Vec3& lo, const Vec3& hi, int class_id);
  static Primitive sphere(const Vec3& center, double radius, int class_id);
  static Primitive room(const Vec3& lo, const Vec3& hi, int floor_class, int wall_class);

  bool contains(const Vec3& p) const;
};

struct SurfaceHit {
  double t = 0.0;
  int class_id = 0;
  Vec3 normal = Vec3::Zero();
};

struct SyntheticScene {
  SceneBounds bounds;
  std::vector<Primitive> primitives;
  std::vector<std::string> class_names;
  /// Per-class RGB in [0, 1].
  std::vector<Vec3> albedo;
  /// class_count() x dim unit vectors.
  std::vector<float> embeddings;
  int dim = 16;
  std::vector<Mat4> trajectory;
  Intrinsics intrinsics;
  int width = 128;
  int height = 128;

  int class_count() const { return static_cast<int>(class_names.size()); }
  ClassPrompts prompts() const;

  /// Throws DomainError on a camera outside the bounds or inside a solid,
  /// embeddings that are not unit or have pairwise cosine above 0.5, or
  /// inconsistent class tables.
  void validate() const;

  bool occupied(const Vec3& p) const;
  std::optional<SurfaceHit> intersect(const Vec3& origin, const Vec3& direction) const;
};

/// Unit vectors with pairwise cosine <= max_cosine, rejection sampled.
std::vector<float> planted_embeddings(int count, int dim, double max_cosine, Rng& rng);

/// Closed room with two boxes on the floor; classes floor, wall, box_a,
/// box_b. Cameras circle the room center looking across it.
SyntheticScene two_box_room(int n_frames, int width, int height, int dim, std::uint64_t seed);

struct CorruptionConfig {
  /// Probability that a pixel's feature is replaced by another class's.
  double flip_fraction = 0.0;
  /// Per-pixel isotropic Gaussian noise of total standard deviation sigma,
  /// added before renormalization.
  double noise_sigma = 0.0;
  std::uint64_t seed = 0;
};

struct SyntheticFrames {
  FrameSet frames;
  /// Per frame, per pixel: true class id (-1 on a miss) and flip flag.
  std::vector<std::vector<int>> pixel_class;
  std::vector<std::vector<std::uint8_t>> flipped;
};

SyntheticFrames generate_synthetic(const SyntheticScene& scene, const CorruptionConfig& corruption);

struct SurfaceSamples {
  std::vector<Vec3> points;
  std::vector<int> classes;
};

/// Uniform samples over every exposed primitive face (faces touching another
/// solid are dropped), `density` points per square meter.
SurfaceSamples sample_surface(const SyntheticScene& scene, double density, std::uint64_t seed);

}  // namespace langocc
