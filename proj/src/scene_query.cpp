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

#include "langocc/scene_query.hpp"

#include <algorithm>
#include <cmath>

#include "langocc/volume_renderer.hpp"

namespace langocc {

namespace {

constexpr double kUnitTolerance = 1e-4;

}  // namespace

Vec3 OccFeatureMap::position(std::size_t k) const {
  const std::uint32_t idx = occupied[k];
  const int nx = occ.dims[0];
  const int ny = occ.dims[1];
  const int x = static_cast<int>(idx % nx);
  const int y = static_cast<int>((idx / nx) % ny);
  const int z = static_cast<int>(idx / (static_cast<std::uint32_t>(nx) * ny));
  return occ.position(x, y, z);
}

ScalarLattice occupancy_lattice(const FieldSet& fields, double spacing) {
  if (!(spacing > 0.0)) {
    throw DomainError("lattice spacing must be positive");
  }
  const SceneBounds& b = fields.bounds();
  ScalarLattice lat;
  lat.origin = b.min_corner;
  lat.spacing = spacing;
  const Vec3 extent = b.extent();
  std::size_t total = 1;
  for (int a = 0; a < 3; ++a) {
    lat.dims[a] = static_cast<int>(std::floor(extent[a] / spacing + 1e-9)) + 1;
    total *= static_cast<std::size_t>(lat.dims[a]);
  }
  if (total > (std::size_t{1} << 31)) {
    throw DomainError("lattice too large; increase the spacing");
  }
  lat.values.resize(total);
  const int fg = fields.geometry.total_feat_dim();
  const std::size_t tape = fields.occ_decoder.tape_size();
  const std::int64_t slices = static_cast<std::int64_t>(lat.dims[2]) * lat.dims[1];
#pragma omp parallel
  {
    std::vector<double> feat(static_cast<std::size_t>(fg));
    std::vector<double> scratch(tape);
#pragma omp for schedule(static)
    for (std::int64_t s = 0; s < slices; ++s) {
      const int z = static_cast<int>(s / lat.dims[1]);
      const int y = static_cast<int>(s % lat.dims[1]);
      for (int x = 0; x < lat.dims[0]; ++x) {
        Vec3 p = lat.position(x, y, z);
        p = p.cwiseMin(b.max_corner);
        fields.geometry.query_unchecked(p, feat.data());
        double logit = 0.0;
        fields.occ_decoder.forward(feat.data(), scratch.data(), &logit);
        lat.values[lat.index(x, y, z)] = static_cast<float>(sigmoid(logit));
      }
    }
  }
  return lat;
}

OccFeatureMap build_occ_feature_map(const FieldSet& fields, double voxel_size,
                                    double occ_threshold) {
  OccFeatureMap map;
  map.occ = occupancy_lattice(fields, voxel_size);
  map.threshold = occ_threshold;
  map.dim = fields.semantic_dim;
  for (std::size_t i = 0; i < map.occ.values.size(); ++i) {
    if (map.occ.values[i] >= occ_threshold) {
      map.occupied.push_back(static_cast<std::uint32_t>(i));
    }
  }
  const std::size_t n = map.occupied.size();
  map.feat.assign(n * static_cast<std::size_t>(map.dim), 0.0f);
  const int fs = fields.semantic.total_feat_dim();
  const Vec3 hi = fields.bounds().max_corner;
#pragma omp parallel
  {
    std::vector<double> feat(static_cast<std::size_t>(fs));
    std::vector<double> scratch(fields.sem_decoder.tape_size());
    std::vector<double> out(static_cast<std::size_t>(map.dim));
#pragma omp for schedule(static)
    for (std::int64_t k = 0; k < static_cast<std::int64_t>(n); ++k) {
      const Vec3 p = map.position(static_cast<std::size_t>(k)).cwiseMin(hi);
      fields.semantic.query_unchecked(p, feat.data());
      fields.sem_decoder.forward(feat.data(), scratch.data(), out.data());
      double norm2 = 0.0;
      for (double v : out) {
        norm2 += v * v;
      }
      const double norm = std::sqrt(norm2);
      if (norm > kMinSemanticNorm) {
        float* dst = map.feat.data() + static_cast<std::size_t>(k) * map.dim;
        for (int d = 0; d < map.dim; ++d) {
          dst[d] = static_cast<float>(out[d] / norm);
        }
      }
    }
  }
  return map;
}

std::vector<std::uint8_t> surface_cells(const OccFeatureMap& map) {
  const auto& dims = map.occ.dims;
  const std::size_t nx = static_cast<std::size_t>(dims[0]);
  const std::size_t nxy = nx * static_cast<std::size_t>(dims[1]);
  std::vector<std::uint8_t> out(map.occupied.size(), 0);
  for (std::size_t k = 0; k < out.size(); ++k) {
    const std::size_t idx = map.occupied[k];
    const int x = static_cast<int>(idx % nx);
    const int y = static_cast<int>((idx / nx) % static_cast<std::size_t>(dims[1]));
    const int z = static_cast<int>(idx / nxy);
    const int c[3] = {x, y, z};
    const std::size_t stride[3] = {1, nx, nxy};
    for (int a = 0; a < 3 && !out[k]; ++a) {
      if (c[a] > 0 && map.occ.values[idx - stride[a]] < map.threshold) {
        out[k] = 1;
      }
      if (c[a] + 1 < dims[a] && map.occ.values[idx + stride[a]] < map.threshold) {
        out[k] = 1;
      }
    }
  }
  return out;
}

Mesh extract_mesh(const FieldSet& fields, double voxel_size, double threshold) {
  if (!(threshold > 0.0 && threshold < 1.0)) {
    throw DomainError("threshold must lie in (0, 1), got " + std::to_string(threshold));
  }
  if (!(voxel_size > 0.0)) {
    throw DomainError("voxel size must be positive");
  }
  return marching_cubes(occupancy_lattice(fields, voxel_size), threshold);
}

std::vector<int> segment_3d(const OccFeatureMap& map, const ClassPrompts& prompts) {
  if (prompts.dim != map.dim) {
    throw DomainError("prompt dimension " + std::to_string(prompts.dim) +
                      " differs from map dimension " + std::to_string(map.dim));
  }
  std::vector<int> ids(map.occupied.size());
  for (std::size_t k = 0; k < ids.size(); ++k) {
    ids[k] = classify_measurement(map.feature(k), prompts);
  }
  return ids;
}

LabelImage render_segmentation(const FieldSet& fields, const Mat4& camera_to_world,
                               const Intrinsics& intrinsics, int width, int height,
                               const ClassPrompts& prompts, int samples_per_ray) {
  if (width <= 0 || height <= 0) {
    throw DomainError("render_segmentation: image size must be positive");
  }
  if (prompts.dim != fields.semantic_dim) {
    throw DomainError("prompt dimension " + std::to_string(prompts.dim) +
                      " differs from field dimension " + std::to_string(fields.semantic_dim));
  }
  intrinsics.validate();
  validate_pose(camera_to_world, "render_segmentation");
  RayBundle rays;
  const std::size_t n = static_cast<std::size_t>(width) * height;
  rays.resize(n, 0);
  for (int v = 0; v < height; ++v) {
    for (int u = 0; u < width; ++u) {
      const std::size_t r = static_cast<std::size_t>(v) * width + u;
      const CameraRay ray = camera_ray(intrinsics, camera_to_world, u, v);
      rays.origins[r] = ray.origin;
      rays.directions[r] = ray.direction;
      rays.gt_color[r] = Vec3::Zero();
      rays.gt_depth[r] = 0.0;
    }
  }
  SamplingConfig cfg;
  cfg.n_samples = samples_per_ray;
  cfg.jitter = false;
  const RaySamples samples = sample_bundle(rays, fields.bounds(), cfg, nullptr);
  const RenderResult result = render_rays(fields, rays, samples);

  LabelImage img{width, height, std::vector<std::uint16_t>(n, kVoidLabel)};
  const int dim = result.semantic.dim;
  for (std::size_t r = 0; r < n; ++r) {
    if (!(result.weight_sum[r] >= kMinTerminationWeight) || !result.semantic.defined[r]) {
      continue;
    }
    const std::span<const double> f(result.semantic.features.data() + r * dim,
                                    static_cast<std::size_t>(dim));
    const int k = classify_measurement(f, prompts);
    if (k != kUnclassified) {
      img.labels[r] = static_cast<std::uint16_t>(k);
    }
  }
  return img;
}

std::vector<double> query_similarity(const OccFeatureMap& map, std::span<const float> embedding) {
  if (static_cast<int>(embedding.size()) != map.dim) {
    throw DomainError("embedding dimension " + std::to_string(embedding.size()) +
                      " differs from map dimension " + std::to_string(map.dim));
  }
  double norm2 = 0.0;
  for (float v : embedding) {
    norm2 += static_cast<double>(v) * v;
  }
  if (std::abs(std::sqrt(norm2) - 1.0) > kUnitTolerance) {
    throw DomainError("query embedding must be unit-norm");
  }
  std::vector<double> sim(map.occupied.size());
  for (std::size_t k = 0; k < sim.size(); ++k) {
    const auto f = map.feature(k);
    double dot = 0.0;
    double fn2 = 0.0;
    for (int d = 0; d < map.dim; ++d) {
      dot += static_cast<double>(f[d]) * embedding[d];
      fn2 += static_cast<double>(f[d]) * f[d];
    }
    const double denom = std::sqrt(fn2 * norm2);
    sim[k] = denom > 0.0 ? std::clamp(dot / denom, -1.0, 1.0) : 0.0;
  }
  return sim;
}

}  // namespace langocc
