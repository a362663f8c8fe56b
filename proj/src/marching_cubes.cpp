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

#include "langocc/mesh.hpp"

#include <algorithm>
#include <cmath>
#include <string>
#include <unordered_map>

#include "mc_tables.hpp"

namespace langocc {

void Mesh::validate() const {
  for (const Vec3& v : vertices) {
    if (!v.allFinite()) {
      throw DomainError("mesh has a non-finite vertex");
    }
  }
  for (const auto& f : faces) {
    for (std::uint32_t i : f) {
      if (i >= vertices.size()) {
        throw DomainError("mesh face index " + std::to_string(i) + " out of range");
      }
    }
  }
  if (!vertex_class.empty() && vertex_class.size() != vertices.size()) {
    throw DomainError("mesh vertex_class length differs from the vertex count");
  }
  if (!vertex_scalar.empty() && vertex_scalar.size() != vertices.size()) {
    throw DomainError("mesh vertex_scalar length differs from the vertex count");
  }
}

Mesh marching_cubes(const ScalarLattice& lattice, double iso) {
  const auto& d = lattice.dims;
  if (d[0] < 0 || d[1] < 0 || d[2] < 0 ||
      lattice.values.size() != static_cast<std::size_t>(d[0]) * d[1] * d[2]) {
    throw DomainError("marching_cubes: lattice values do not match its dimensions");
  }
  Mesh mesh;
  if (d[0] < 2 || d[1] < 2 || d[2] < 2) {
    return mesh;
  }
  // Lattice edge id = 3 * (index of its lower endpoint) + axis.
  std::unordered_map<std::uint64_t, std::uint32_t> welded;
  auto edge_vertex = [&](int x, int y, int z, int e, const std::array<double, 8>& val) {
    const int a = detail::kEdgeCorners[e][0];
    const int b = detail::kEdgeCorners[e][1];
    const auto& oa = detail::kCornerOffset[a];
    const auto& ob = detail::kCornerOffset[b];
    int lo[3];
    int axis = 0;
    for (int k = 0; k < 3; ++k) {
      lo[k] = std::min(oa[k], ob[k]);
      if (oa[k] != ob[k]) {
        axis = k;
      }
    }
    const std::uint64_t key =
        3 * static_cast<std::uint64_t>(lattice.index(x + lo[0], y + lo[1], z + lo[2])) + axis;
    auto [it, inserted] = welded.try_emplace(key, static_cast<std::uint32_t>(mesh.vertices.size()));
    if (inserted) {
      const double fa = val[a];
      const double fb = val[b];
      const double t = std::abs(fb - fa) > 0.0 ? std::clamp((iso - fa) / (fb - fa), 0.0, 1.0) : 0.5;
      const Vec3 pa = lattice.position(x + oa[0], y + oa[1], z + oa[2]);
      const Vec3 pb = lattice.position(x + ob[0], y + ob[1], z + ob[2]);
      mesh.vertices.push_back(pa + t * (pb - pa));
    }
    return it->second;
  };

  std::array<double, 8> val{};
  for (int z = 0; z + 1 < d[2]; ++z) {
    for (int y = 0; y + 1 < d[1]; ++y) {
      for (int x = 0; x + 1 < d[0]; ++x) {
        int cube = 0;
        for (int c = 0; c < 8; ++c) {
          const auto& o = detail::kCornerOffset[c];
          val[c] = lattice.values[lattice.index(x + o[0], y + o[1], z + o[2])];
          if (val[c] < iso) {
            cube |= 1 << c;
          }
        }
        if (cube == 0 || cube == 255) {
          continue;
        }
        const auto& tri = detail::kTriangleTable[cube];
        for (int t = 0; tri[t] != -1; t += 3) {
          std::array<std::uint32_t, 3> face{};
          for (int k = 0; k < 3; ++k) {
            face[k] = edge_vertex(x, y, z, tri[t + k], val);
          }
          if (face[0] != face[1] && face[1] != face[2] && face[0] != face[2]) {
            mesh.faces.push_back(face);
          }
        }
      }
    }
  }
  return mesh;
}

}  // namespace langocc
