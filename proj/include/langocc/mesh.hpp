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
#include <filesystem>
#include <vector>

#include "langocc/common.hpp"

namespace langocc {

/// Triangle mesh or point cloud (no faces) with optional per-vertex class
/// ids and scalars.
struct Mesh {
  std::vector<Vec3> vertices;
  std::vector<std::array<std::uint32_t, 3>> faces;
  std::vector<int> vertex_class;
  std::vector<float> vertex_scalar;

  bool empty() const { return vertices.empty(); }
  /// Throws DomainError on out-of-range faces, non-finite vertices, or
  /// attribute arrays whose length differs from the vertex count.
  void validate() const;
};

/// Scalar samples on a regular lattice, x fastest.
struct ScalarLattice {
  std::array<int, 3> dims{0, 0, 0};
  Vec3 origin = Vec3::Zero();
  double spacing = 1.0;
  std::vector<float> values;

  std::size_t index(int x, int y, int z) const {
    return (static_cast<std::size_t>(z) * dims[1] + y) * dims[0] + x;
  }
  Vec3 position(int x, int y, int z) const {
    return origin + spacing * Vec3(x, y, z);
  }
};

/// Isosurface of `lattice` at `iso`; values >= iso count as inside. Vertices
/// on shared lattice edges are welded, so closed surfaces come out closed.
Mesh marching_cubes(const ScalarLattice& lattice, double iso);

enum class PlyFormat { kAscii, kBinaryLittleEndian };

/// Vertices are written as float x, y, z, then int `class` and float
/// `similarity` when present; faces as uchar-counted int index lists.
void write_ply(const std::filesystem::path& path, const Mesh& mesh, PlyFormat format);
/// Reads both encodings; unknown vertex properties are skipped.
Mesh read_ply(const std::filesystem::path& path);

}  // namespace langocc
