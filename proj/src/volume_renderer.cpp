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

#include "langocc/volume_renderer.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace langocc {

void RayBundle::resize(std::size_t n, int feature_dim) {
  origins.resize(n);
  directions.resize(n);
  gt_color.resize(n);
  gt_depth.resize(n);
  frame_ids.resize(n);
  feat_dim = feature_dim;
  if (feature_dim > 0) {
    gt_feature.resize(n * static_cast<std::size_t>(feature_dim));
    feature_valid.resize(n);
  } else {
    gt_feature.clear();
    feature_valid.clear();
  }
}

void RayBundle::validate() const {
  const std::size_t n = origins.size();
  if (directions.size() != n || gt_color.size() != n || gt_depth.size() != n ||
      frame_ids.size() != n) {
    throw DomainError("RayBundle: per-ray arrays differ in length");
  }
  for (std::size_t r = 0; r < n; ++r) {
    if (std::abs(directions[r].norm() - 1.0) > 1e-6) {
      throw DomainError("RayBundle: direction " + std::to_string(r) + " is not unit length");
    }
  }
  if (has_features()) {
    if (gt_feature.size() != n * static_cast<std::size_t>(feat_dim) || feature_valid.size() != n) {
      throw DomainError("RayBundle: feature array has wrong length");
    }
    for (std::size_t r = 0; r < n; ++r) {
      if (!feature_valid[r]) {
        continue;
      }
      double norm2 = 0.0;
      for (float v : feature(r)) {
        norm2 += static_cast<double>(v) * v;
      }
      if (std::abs(std::sqrt(norm2) - 1.0) > 1e-4) {
        throw DomainError("RayBundle: feature row " + std::to_string(r) + " is not unit norm");
      }
    }
  }
}

std::vector<double> sample_ray(double near, double far, int n_samples, double gt_depth,
                               double truncation, Rng* rng) {
  if (!(near < far)) {
    throw DomainError("sample_ray: near must be smaller than far");
  }
  if (n_samples < 2) {
    throw DomainError("sample_ray: need at least two samples");
  }
  int n_surface = 0;
  double lo = 0.0;
  double hi = 0.0;
  if (gt_depth > 0.0) {
    lo = std::max(near, gt_depth - 3.0 * truncation);
    hi = std::min(far, gt_depth + 3.0 * truncation);
    if (hi > lo) {
      n_surface = n_samples / 2;
    }
  }
  const int n_uniform = n_samples - n_surface;
  std::vector<double> z;
  z.reserve(static_cast<std::size_t>(n_samples));
  const auto offset = [rng]() { return rng ? rng->uniform() : 0.5; };
  const double step = (far - near) / n_uniform;
  for (int k = 0; k < n_uniform; ++k) {
    z.push_back(near + (k + offset()) * step);
  }
  if (n_surface > 0) {
    const double band_step = (hi - lo) / n_surface;
    for (int k = 0; k < n_surface; ++k) {
      z.push_back(lo + (k + offset()) * band_step);
    }
  }
  std::sort(z.begin(), z.end());
  for (std::size_t i = 1; i < z.size(); ++i) {
    if (!(z[i] > z[i - 1])) {
      z[i] = std::nextafter(z[i - 1], std::numeric_limits<double>::infinity());
    }
  }
  return z;
}

RaySamples sample_bundle(const RayBundle& rays, const SceneBounds& bounds,
                         const SamplingConfig& config, Rng* rng) {
  RaySamples out;
  out.n_samples = config.n_samples;
  const std::size_t n = static_cast<std::size_t>(config.n_samples);
  out.depths.resize(rays.size() * n);
  out.valid.resize(rays.size() * n);
  for (std::size_t r = 0; r < rays.size(); ++r) {
    const auto hit = bounds.intersect(rays.origins[r], rays.directions[r]);
    double* depths = out.depths.data() + r * n;
    std::uint8_t* valid = out.valid.data() + r * n;
    if (!hit) {
      for (std::size_t i = 0; i < n; ++i) {
        depths[i] = static_cast<double>(i);
        valid[i] = 0;
      }
      continue;
    }
    const double pad = 1e-9 * std::max(1.0, hit->second);
    const double near = hit->first + pad;
    const double far = hit->second - pad;
    if (!(near < far)) {
      for (std::size_t i = 0; i < n; ++i) {
        depths[i] = near + static_cast<double>(i) * 1e-9;
        valid[i] = 0;
      }
      continue;
    }
    const std::vector<double> z =
        sample_ray(near, far, config.n_samples, rays.gt_depth[r], config.truncation,
                   config.jitter ? rng : nullptr);
    for (std::size_t i = 0; i < n; ++i) {
      depths[i] = z[i];
      valid[i] = bounds.contains(rays.origins[r] + z[i] * rays.directions[r]) ? 1 : 0;
    }
  }
  return out;
}

std::vector<double> compose_weights(std::span<const double> occs) {
  std::vector<double> w(occs.size());
  double visible = 1.0;
  for (std::size_t i = 0; i < occs.size(); ++i) {
    w[i] = occs[i] * visible;
    visible *= 1.0 - occs[i];
  }
  return w;
}

std::optional<Vec3> ray_termination_point(std::span<const double> depths,
                                          std::span<const double> weights, const Vec3& origin,
                                          const Vec3& direction) {
  double total = 0.0;
  double depth = 0.0;
  for (std::size_t i = 0; i < weights.size(); ++i) {
    total += weights[i];
    depth += weights[i] * depths[i];
  }
  if (!(total > kMinTerminationWeight)) {
    return std::nullopt;
  }
  return origin + depth * direction;
}

namespace {

struct RayScratch {
  std::vector<double> geo_feat, color_in, sem_feat, tape, sem;
  explicit RayScratch(const FieldSet& f)
      : geo_feat(static_cast<std::size_t>(f.geometry.total_feat_dim())),
        color_in(static_cast<std::size_t>(f.color.total_feat_dim()) + 3),
        sem_feat(static_cast<std::size_t>(f.semantic.total_feat_dim())),
        tape(std::max({f.occ_decoder.tape_size(), f.color_decoder.tape_size(),
                       f.sem_decoder.tape_size()})),
        sem(static_cast<std::size_t>(f.semantic_dim)) {}
};

void render_one(const FieldSet& fields, const RayBundle& rays, const RaySamples& samples,
                std::size_t r, RayScratch& s, RenderResult& out) {
  const int n = samples.n_samples;
  const int dim = fields.semantic_dim;
  const int fc = fields.color.total_feat_dim();
  const Vec3& dir = rays.directions[r];
  const auto depths = samples.ray_depths(r);
  const auto valid = samples.ray_valid(r);
  Vec3 rgb = Vec3::Zero();
  double depth = 0.0;
  double wsum = 0.0;
  double* sem_out = out.semantic.features.data() + r * dim;
  std::fill(sem_out, sem_out + dim, 0.0);
  double visible = 1.0;
  for (int i = 0; i < n; ++i) {
    if (!valid[i]) {
      continue;
    }
    const Vec3 p = rays.origins[r] + depths[i] * dir;
    double logit = 0.0;
    fields.geometry.query_unchecked(p, s.geo_feat.data());
    fields.occ_decoder.forward(s.geo_feat.data(), s.tape.data(), &logit);
    const double o = sigmoid(logit);
    const double w = o * visible;
    visible *= sigmoid(-logit);
    if (w == 0.0) {
      continue;
    }
    fields.color.query_unchecked(p, s.color_in.data());
    s.color_in[fc] = dir[0];
    s.color_in[fc + 1] = dir[1];
    s.color_in[fc + 2] = dir[2];
    double raw[3];
    fields.color_decoder.forward(s.color_in.data(), s.tape.data(), raw);
    for (int a = 0; a < 3; ++a) {
      rgb[a] += w * sigmoid(raw[a]);
    }
    fields.semantic.query_unchecked(p, s.sem_feat.data());
    fields.sem_decoder.forward(s.sem_feat.data(), s.tape.data(), s.sem.data());
    for (int k = 0; k < dim; ++k) {
      sem_out[k] += w * s.sem[k];
    }
    depth += w * depths[i];
    wsum += w;
  }
  double norm2 = 0.0;
  for (int k = 0; k < dim; ++k) {
    norm2 += sem_out[k] * sem_out[k];
  }
  const double norm = std::sqrt(norm2);
  if (norm > kMinSemanticNorm) {
    for (int k = 0; k < dim; ++k) {
      sem_out[k] /= norm;
    }
    out.semantic.defined[r] = 1;
  } else {
    std::fill(sem_out, sem_out + dim, 0.0);
    out.semantic.defined[r] = 0;
  }
  out.color[r] = rgb;
  out.depth[r] = depth;
  out.weight_sum[r] = wsum;
}

void check_shapes(const RayBundle& rays, const RaySamples& samples) {
  if (samples.ray_count() != rays.size()) {
    throw DomainError("render: sample rows do not match the ray count");
  }
}

}  // namespace

RenderResult render_rays(const FieldSet& fields, const RayBundle& rays, const RaySamples& samples,
                         Execution exec) {
  check_shapes(rays, samples);
  const std::size_t m = rays.size();
  RenderResult out;
  out.color.resize(m);
  out.depth.resize(m);
  out.weight_sum.resize(m);
  out.semantic.dim = fields.semantic_dim;
  out.semantic.features.resize(m * static_cast<std::size_t>(fields.semantic_dim));
  out.semantic.defined.resize(m);
  if (exec == Execution::kSerial) {
    RayScratch s(fields);
    for (std::size_t r = 0; r < m; ++r) {
      render_one(fields, rays, samples, r, s, out);
    }
    return out;
  }
#pragma omp parallel
  {
    RayScratch s(fields);
#pragma omp for schedule(dynamic, 16)
    for (std::int64_t r = 0; r < static_cast<std::int64_t>(m); ++r) {
      render_one(fields, rays, samples, static_cast<std::size_t>(r), s, out);
    }
  }
  return out;
}

ColorDepth render_color_depth(const FieldSet& fields, const RayBundle& rays,
                              const RaySamples& samples) {
  RenderResult r = render_rays(fields, rays, samples);
  return {std::move(r.color), std::move(r.depth)};
}

SemanticImage render_semantic(const FieldSet& fields, const RayBundle& rays,
                              const RaySamples& samples) {
  return render_rays(fields, rays, samples).semantic;
}

}  // namespace langocc
