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


// Small randomized fixtures shared by the unit and acceptance tests.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "langocc/batch_kernel.hpp"
#include "langocc/grid_field.hpp"
#include "langocc/volume_renderer.hpp"

namespace langocc::testing {

/// Fresh directory under the system temp dir, removed on destruction.
class ScratchDir {
 public:
  explicit ScratchDir(const std::string& tag) {
    Rng rng(std::hash<std::string>{}(tag) ^
            static_cast<std::uint64_t>(std::filesystem::file_time_type::clock::now()
                                           .time_since_epoch()
                                           .count()));
    path_ = std::filesystem::temp_directory_path() /
            ("langocc_" + tag + "_" + std::to_string(rng.below(1u << 30)));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~ScratchDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  ScratchDir(const ScratchDir&) = delete;
  ScratchDir& operator=(const ScratchDir&) = delete;

  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
};

inline void randomize(MultiResGrid& grid, Rng& rng, double range) {
  for (GridLevel& level : grid.levels()) {
    for (float& v : level.features) {
      v = static_cast<float>(rng.uniform(-range, range));
    }
  }
}

inline void randomize(Decoder& decoder, Rng& rng, double range) {
  for (float& v : decoder.params()) {
    v = static_cast<float>(rng.uniform(-range, range));
  }
}

/// Unit cube, two 4x4x4 levels per grid, 2x16 decoders, semantic dim `dim`.
inline FieldSet small_fields(std::uint64_t seed, int dim = 4) {
  const SceneBounds bounds(Vec3::Zero(), Vec3::Ones());
  const std::vector<std::array<int, 3>> res = {{4, 4, 4}, {4, 4, 4}};
  Rng rng(seed);
  FieldSet f;
  f.semantic_dim = dim;
  f.geometry = MultiResGrid::zeros(bounds, res, {2, 2});
  f.color = MultiResGrid::zeros(bounds, res, {2, 2});
  f.semantic = MultiResGrid::zeros(bounds, res, {3, 3});
  randomize(f.geometry, rng, 1.0);
  randomize(f.color, rng, 1.0);
  randomize(f.semantic, rng, 1.0);
  f.occ_decoder = Decoder::create(4, 16, 2, 1, rng);
  f.color_decoder = Decoder::create(4 + 3, 16, 2, 3, rng);
  f.sem_decoder = Decoder::create(6, 16, 2, dim, rng);
  randomize(f.occ_decoder, rng, 0.6);
  randomize(f.color_decoder, rng, 0.6);
  randomize(f.sem_decoder, rng, 0.6);
  f.validate();
  return f;
}

inline Vec3 random_unit(Rng& rng) {
  Vec3 v;
  do {
    v = Vec3(rng.normal(), rng.normal(), rng.normal());
  } while (v.norm() < 1e-6);
  return v.normalized();
}

/// Rays from inside the unit cube with random colors, depths and unit
/// features; about one ray in eight has no valid depth.
inline RayBundle random_rays(std::size_t n, int dim, Rng& rng) {
  RayBundle rays;
  rays.resize(n, dim);
  for (std::size_t r = 0; r < n; ++r) {
    rays.origins[r] = Vec3(rng.uniform(0.2, 0.8), rng.uniform(0.2, 0.8), rng.uniform(0.2, 0.8));
    rays.directions[r] = random_unit(rng);
    rays.gt_color[r] = Vec3(rng.uniform(), rng.uniform(), rng.uniform());
    rays.gt_depth[r] = rng.uniform() < 0.125 ? 0.0 : rng.uniform(0.1, 0.6);
    rays.frame_ids[r] = 0;
    double norm2 = 0.0;
    std::vector<double> f(static_cast<std::size_t>(dim));
    for (double& v : f) {
      v = rng.normal();
      norm2 += v * v;
    }
    for (int k = 0; k < dim; ++k) {
      rays.gt_feature[r * dim + k] = static_cast<float>(f[k] / std::sqrt(norm2));
    }
    rays.feature_valid[r] = 1;
  }
  return rays;
}

struct GradientCheck {
  std::size_t checked = 0;
  std::size_t passed = 0;
  double worst = 0.0;

  double pass_rate() const { return checked ? static_cast<double>(passed) / checked : 0.0; }
};

/// Compares evaluate_batch gradients of the total loss with central
/// differences on every parameter. The realized float step is used as the
/// denominator; entries where both values are below `floor` pass.
inline GradientCheck check_gradients(FieldSet fields, const RayBundle& rays,
                                     const RaySamples& samples, const LossWeights& weights,
                                     const ScpContext* scp, double step = 1e-4,
                                     double tolerance = 1e-3, double floor = 1e-7) {
  FieldGradient grad(fields);
  evaluate_batch(fields, rays, samples, weights, scp, &grad, Execution::kSerial);
  const std::vector<double> analytic = grad.flatten();
  GradientCheck out;
  std::size_t flat = 0;
  for (std::span<float> block : fields.parameter_blocks()) {
    for (float& p : block) {
      const float p0 = p;
      const float hi = static_cast<float>(p0 + step);
      const float lo = static_cast<float>(p0 - step);
      p = hi;
      const double l_hi =
          evaluate_batch(fields, rays, samples, weights, scp, nullptr, Execution::kSerial)
              .report.total;
      p = lo;
      const double l_lo =
          evaluate_batch(fields, rays, samples, weights, scp, nullptr, Execution::kSerial)
              .report.total;
      p = p0;
      const double numeric = (l_hi - l_lo) / (static_cast<double>(hi) - lo);
      const double a = analytic[flat++];
      const double scale = std::max(std::abs(a), std::abs(numeric));
      const double rel = scale < floor ? 0.0 : std::abs(a - numeric) / scale;
      ++out.checked;
      out.passed += rel <= tolerance ? 1 : 0;
      out.worst = std::max(out.worst, rel);
    }
  }
  return out;
}

}  // namespace langocc::testing
