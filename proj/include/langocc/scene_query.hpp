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
#include <cstdint>
#include <span>
#include <vector>

#include "langocc/dataset_io.hpp"
#include "langocc/grid_field.hpp"
#include "langocc/mesh.hpp"
#include "langocc/scp_fusion.hpp"

namespace langocc {

inline constexpr std::uint16_t kVoidLabel = 65535;

/// Occupancy on a regular lattice over the scene bounds plus a decoded unit
/// semantic feature at every occupied lattice point.
struct OccFeatureMap {
  ScalarLattice occ;
  double threshold = 0.5;
  int dim = 0;
  /// Ascending lattice indices with occ >= threshold.
  std::vector<std::uint32_t> occupied;
  /// occupied.size() x dim.
  std::vector<float> feat;

  std::span<const float> feature(std::size_t k) const {
    return {feat.data() + k * static_cast<std::size_t>(dim), static_cast<std::size_t>(dim)};
  }
  Vec3 position(std::size_t k) const;
};

/// Occupancy probabilities at bounds.min + spacing * (i, j, k) for every
/// lattice point inside the bounds.
ScalarLattice occupancy_lattice(const FieldSet& fields, double spacing);

OccFeatureMap build_occ_feature_map(const FieldSet& fields, double voxel_size,
                                    double occ_threshold = 0.5);

/// Per occupied cell: 1 when a 6-neighbour inside the lattice lies below the
/// threshold, i.e. the cell sits on the extracted surface rather than inside
/// a solid.
std::vector<std::uint8_t> surface_cells(const OccFeatureMap& map);

/// Throws DomainError unless threshold lies in (0, 1) and voxel_size > 0.
Mesh extract_mesh(const FieldSet& fields, double voxel_size = 0.01, double threshold = 0.5);

/// Argmax-cosine class per occupied cell; ties go to the lowest index.
std::vector<int> segment_3d(const OccFeatureMap& map, const ClassPrompts& prompts);

struct LabelImage {
  int width = 0;
  int height = 0;
  std::vector<std::uint16_t> labels;
};

/// Per-pixel class from the rendered semantic feature; kVoidLabel where the
/// ray weight sum is below kMinTerminationWeight or the feature is undefined.
LabelImage render_segmentation(const FieldSet& fields, const Mat4& camera_to_world,
                               const Intrinsics& intrinsics, int width, int height,
                               const ClassPrompts& prompts, int samples_per_ray = 132);

/// Cosine similarity in [-1, 1] per occupied cell.
std::vector<double> query_similarity(const OccFeatureMap& map, std::span<const float> embedding);

}  // namespace langocc
