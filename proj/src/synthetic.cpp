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

#include "langocc/synthetic.hpp"

#include <cmath>
#include <cstdio>
#include <limits>
#include <numbers>

namespace langocc {

namespace {

constexpr double kHitEpsilon = 1e-9;
constexpr double kBuriedProbe = 1e-4;
constexpr double kMaxPlantedCosine = 0.5;

Mat4 look_along(const Vec3& eye, const Vec3& forward) {
  const Vec3 z = forward.normalized();
  const Vec3 x = z.cross(Vec3::UnitZ()).normalized();
  const Vec3 y = z.cross(x);
  Mat4 pose = Mat4::Identity();
  pose.block<3, 1>(0, 0) = x;
  pose.block<3, 1>(0, 1) = y;
  pose.block<3, 1>(0, 2) = z;
  pose.block<3, 1>(0, 3) = eye;
  return pose;
}

// Axis-aligned rectangle {p : p[axis] = offset, lo <= p <= hi on the others}
// with the given outward normal sign.
struct Face {
  int axis;
  double offset;
  Vec3 lo, hi;
  double sign;
  int class_id;
};

std::vector<Face> box_faces(const Vec3& lo, const Vec3& hi, double outward, int class_id,
                            int floor_class) {
  std::vector<Face> faces;
  for (int axis = 0; axis < 3; ++axis) {
    for (int side = 0; side < 2; ++side) {
      Face f{axis, side == 0 ? lo[axis] : hi[axis], lo, hi, (side == 0 ? -1.0 : 1.0) * outward,
             class_id};
      if (axis == 2 && side == 0 && outward < 0.0) {
        f.class_id = floor_class;
      }
      faces.push_back(f);
    }
  }
  return faces;
}

}  // namespace

Primitive Primitive::box(const Vec3& lo, const Vec3& hi, int class_id) {
  Primitive p;
  p.kind = Kind::kBox;
  p.lo = lo;
  p.hi = hi;
  p.class_id = class_id;
  return p;
}

Primitive Primitive::sphere(const Vec3& center, double radius, int class_id) {
  Primitive p;
  p.kind = Kind::kSphere;
  p.center = center;
  p.radius = radius;
  p.class_id = class_id;
  return p;
}

Primitive Primitive::room(const Vec3& lo, const Vec3& hi, int floor_class, int wall_class) {
  Primitive p;
  p.kind = Kind::kRoom;
  p.lo = lo;
  p.hi = hi;
  p.class_id = wall_class;
  p.floor_class = floor_class;
  return p;
}

bool Primitive::contains(const Vec3& p) const {
  switch (kind) {
    case Kind::kBox:
      return (p.array() >= lo.array()).all() && (p.array() <= hi.array()).all();
    case Kind::kSphere:
      return (p - center).squaredNorm() <= radius * radius;
    case Kind::kRoom:
      return !((p.array() > lo.array()).all() && (p.array() < hi.array()).all());
  }
  return false;
}

ClassPrompts SyntheticScene::prompts() const {
  ClassPrompts p;
  p.dim = dim;
  p.labels = class_names;
  p.embeddings = embeddings;
  return p;
}

void SyntheticScene::validate() const {
  const int k = class_count();
  if (k <= 0 || static_cast<int>(albedo.size()) != k ||
      embeddings.size() != static_cast<std::size_t>(k) * dim || dim <= 0) {
    throw DomainError("synthetic scene: class tables are inconsistent");
  }
  prompts().validate();
  for (int a = 0; a < k; ++a) {
    for (int b = a + 1; b < k; ++b) {
      double dot = 0.0;
      for (int d = 0; d < dim; ++d) {
        dot += static_cast<double>(embeddings[a * dim + d]) * embeddings[b * dim + d];
      }
      if (dot > kMaxPlantedCosine + 1e-6) {
        throw DomainError("synthetic scene: planted embeddings " + std::to_string(a) + " and " +
                          std::to_string(b) + " have cosine " + std::to_string(dot));
      }
    }
  }
  for (const Primitive& p : primitives) {
    if (p.class_id < 0 || p.class_id >= k || p.floor_class < 0 || p.floor_class >= k) {
      throw DomainError("synthetic scene: primitive class out of range");
    }
  }
  if (width <= 0 || height <= 0) {
    throw DomainError("synthetic scene: image size must be positive");
  }
  intrinsics.validate();
  for (std::size_t i = 0; i < trajectory.size(); ++i) {
    const std::string what = "synthetic camera " + std::to_string(i);
    validate_pose(trajectory[i], what);
    const Vec3 c = trajectory[i].block<3, 1>(0, 3);
    if (!bounds.contains(c)) {
      throw DomainError(what + " lies outside the scene bounds");
    }
    if (occupied(c)) {
      throw DomainError(what + " lies inside a solid");
    }
  }
}

bool SyntheticScene::occupied(const Vec3& p) const {
  for (const Primitive& prim : primitives) {
    if (prim.contains(p)) {
      return true;
    }
  }
  return false;
}

std::optional<SurfaceHit> SyntheticScene::intersect(const Vec3& o, const Vec3& d) const {
  std::optional<SurfaceHit> best;
  auto offer = [&](double t, int class_id, const Vec3& n) {
    if (t > kHitEpsilon && (!best || t < best->t)) {
      best = SurfaceHit{t, class_id, n};
    }
  };
  for (const Primitive& p : primitives) {
    switch (p.kind) {
      case Primitive::Kind::kBox: {
        double t_near = -std::numeric_limits<double>::infinity();
        double t_far = std::numeric_limits<double>::infinity();
        int axis = -1;
        bool miss = false;
        for (int a = 0; a < 3; ++a) {
          if (d[a] == 0.0) {
            if (o[a] < p.lo[a] || o[a] > p.hi[a]) {
              miss = true;
            }
            continue;
          }
          double t0 = (p.lo[a] - o[a]) / d[a];
          double t1 = (p.hi[a] - o[a]) / d[a];
          if (t0 > t1) {
            std::swap(t0, t1);
          }
          if (t0 > t_near) {
            t_near = t0;
            axis = a;
          }
          t_far = std::min(t_far, t1);
        }
        if (!miss && axis >= 0 && t_near <= t_far) {
          Vec3 n = Vec3::Zero();
          n[axis] = d[axis] > 0.0 ? -1.0 : 1.0;
          offer(t_near, p.class_id, n);
        }
        break;
      }
      case Primitive::Kind::kSphere: {
        const Vec3 oc = o - p.center;
        const double b = oc.dot(d);
        const double c = oc.squaredNorm() - p.radius * p.radius;
        const double disc = b * b - c;
        if (disc >= 0.0) {
          const double s = std::sqrt(disc);
          const double t = -b - s > kHitEpsilon ? -b - s : -b + s;
          offer(t, p.class_id, (o + t * d - p.center).normalized());
        }
        break;
      }
      case Primitive::Kind::kRoom: {
        double t_exit = std::numeric_limits<double>::infinity();
        int axis = -1;
        for (int a = 0; a < 3; ++a) {
          if (d[a] == 0.0) {
            continue;
          }
          const double t = ((d[a] > 0.0 ? p.hi[a] : p.lo[a]) - o[a]) / d[a];
          if (t < t_exit) {
            t_exit = t;
            axis = a;
          }
        }
        if (axis >= 0) {
          Vec3 n = Vec3::Zero();
          n[axis] = d[axis] > 0.0 ? -1.0 : 1.0;
          const bool floor = axis == 2 && d[2] < 0.0;
          offer(t_exit, floor ? p.floor_class : p.class_id, n);
        }
        break;
      }
    }
  }
  return best;
}

std::vector<float> planted_embeddings(int count, int dim, double max_cosine, Rng& rng) {
  if (count <= 0 || dim <= 0) {
    throw DomainError("planted_embeddings: count and dim must be positive");
  }
  std::vector<Eigen::VectorXd> rows;
  int attempts = 0;
  while (static_cast<int>(rows.size()) < count) {
    if (++attempts > 100000) {
      throw DomainError("planted_embeddings: cannot satisfy the cosine bound in dimension " +
                        std::to_string(dim));
    }
    Eigen::VectorXd v(dim);
    for (int i = 0; i < dim; ++i) {
      v[i] = rng.normal();
    }
    v.normalize();
    bool ok = true;
    for (const auto& r : rows) {
      // Check in float precision, since that is what gets stored.
      ok &= r.cast<float>().cast<double>().dot(v.cast<float>().cast<double>()) <= max_cosine - 1e-6;
    }
    if (ok) {
      rows.push_back(v);
    }
  }
  std::vector<float> out;
  out.reserve(static_cast<std::size_t>(count) * dim);
  for (const auto& r : rows) {
    for (int i = 0; i < dim; ++i) {
      out.push_back(static_cast<float>(r[i]));
    }
  }
  return out;
}

SyntheticScene two_box_room(int n_frames, int width, int height, int dim, std::uint64_t seed) {
  if (n_frames <= 0 || width <= 0 || height <= 0) {
    throw DomainError("two_box_room: frame count and image size must be positive");
  }
  SyntheticScene s;
  s.bounds = SceneBounds(Vec3(0.0, 0.0, 0.0), Vec3(2.2, 2.2, 1.6));
  const Vec3 room_lo(0.05, 0.05, 0.05);
  const Vec3 room_hi(2.15, 2.15, 1.55);
  s.primitives.push_back(Primitive::room(room_lo, room_hi, 0, 1));
  s.primitives.push_back(Primitive::box(Vec3(0.35, 0.35, 0.05), Vec3(0.95, 0.95, 0.55), 2));
  s.primitives.push_back(Primitive::box(Vec3(1.25, 1.2, 0.05), Vec3(1.85, 1.8, 0.4), 3));
  s.class_names = {"floor", "wall", "box_a", "box_b"};
  s.albedo = {Vec3(0.55, 0.4, 0.25), Vec3(0.85, 0.85, 0.8), Vec3(0.2, 0.45, 0.8),
              Vec3(0.8, 0.25, 0.2)};
  s.dim = dim;
  Rng rng(seed);
  s.embeddings = planted_embeddings(s.class_count(), dim, kMaxPlantedCosine, rng);
  s.width = width;
  s.height = height;
  const double focal = 0.5 * width / std::tan(0.5 * 90.0 * std::numbers::pi / 180.0);
  s.intrinsics = Intrinsics{focal, focal, 0.5 * (width - 1), 0.5 * (height - 1)};

  const Vec3 center(1.1, 1.1, 0.0);
  const double pitches[3] = {-35.0, -12.0, 15.0};
  for (int i = 0; i < n_frames; ++i) {
    const double theta = 2.0 * std::numbers::pi * i / n_frames;
    const Vec3 eye(center[0] + 0.55 * std::cos(theta), center[1] + 0.55 * std::sin(theta),
                   1.05 + 0.1 * std::sin(3.0 * theta));
    const double heading = theta + std::numbers::pi + 0.35 * std::sin(2.0 * theta);
    const double pitch = pitches[i % 3] * std::numbers::pi / 180.0;
    const Vec3 forward(std::cos(pitch) * std::cos(heading), std::cos(pitch) * std::sin(heading),
                       std::sin(pitch));
    s.trajectory.push_back(look_along(eye, forward));
  }
  s.validate();
  return s;
}

SyntheticFrames generate_synthetic(const SyntheticScene& scene,
                                   const CorruptionConfig& corruption) {
  scene.validate();
  if (!(corruption.flip_fraction >= 0.0 && corruption.flip_fraction <= 1.0) ||
      !(corruption.noise_sigma >= 0.0)) {
    throw DomainError("corruption: flip fraction must lie in [0, 1] and noise be nonnegative");
  }
  const int w = scene.width;
  const int h = scene.height;
  const int k = scene.class_count();
  const int dim = scene.dim;
  const std::size_t n_pix = static_cast<std::size_t>(w) * h;
  Rng rng(corruption.seed);
  const double noise_scale = corruption.noise_sigma / std::sqrt(static_cast<double>(dim));

  SyntheticFrames out;
  out.frames.intrinsics = scene.intrinsics;
  std::vector<FeatureMap> maps;
  std::vector<double> f(static_cast<std::size_t>(dim));
  for (std::size_t i = 0; i < scene.trajectory.size(); ++i) {
    Frame frame;
    char name[16];
    std::snprintf(name, sizeof(name), "%04zu", i);
    frame.name = name;
    frame.width = w;
    frame.height = h;
    frame.pose = scene.trajectory[i];
    frame.rgb.assign(n_pix * 3, 0);
    frame.depth.assign(n_pix, 0.0f);
    FeatureMap map{h, w, dim, std::vector<float>(n_pix * dim, 0.0f)};
    std::vector<int> classes(n_pix, -1);
    std::vector<std::uint8_t> flipped(n_pix, 0);
    for (int v = 0; v < h; ++v) {
      for (int u = 0; u < w; ++u) {
        const std::size_t px = static_cast<std::size_t>(v) * w + u;
        const CameraRay ray = camera_ray(scene.intrinsics, frame.pose, u, v);
        const auto hit = scene.intersect(ray.origin, ray.direction);
        if (!hit) {
          continue;
        }
        classes[px] = hit->class_id;
        frame.depth[px] = static_cast<float>(hit->t / ray.z_to_range);
        const Vec3& a = scene.albedo[hit->class_id];
        for (int c = 0; c < 3; ++c) {
          frame.rgb[px * 3 + c] = static_cast<std::uint8_t>(std::lround(255.0 * a[c]));
        }
        int label = hit->class_id;
        if (k > 1 && rng.uniform() < corruption.flip_fraction) {
          int other = static_cast<int>(rng.below(static_cast<std::uint64_t>(k - 1)));
          label = other >= label ? other + 1 : other;
          flipped[px] = 1;
        }
        double norm2 = 0.0;
        for (int d = 0; d < dim; ++d) {
          f[d] = scene.embeddings[static_cast<std::size_t>(label) * dim + d];
          if (noise_scale > 0.0) {
            f[d] += noise_scale * rng.normal();
          }
          norm2 += f[d] * f[d];
        }
        const double norm = std::sqrt(norm2);
        for (int d = 0; d < dim; ++d) {
          map.data[px * dim + d] = static_cast<float>(f[d] / norm);
        }
      }
    }
    out.frames.frames.push_back(std::move(frame));
    maps.push_back(std::move(map));
    out.pixel_class.push_back(std::move(classes));
    out.flipped.push_back(std::move(flipped));
  }
  out.frames.set_feature_maps(std::move(maps));
  out.frames.prompts = scene.prompts();
  out.frames.validate();
  return out;
}

SurfaceSamples sample_surface(const SyntheticScene& scene, double density, std::uint64_t seed) {
  if (!(density > 0.0)) {
    throw DomainError("sample_surface: density must be positive");
  }
  Rng rng(seed);
  SurfaceSamples out;
  auto keep = [&](std::size_t self, const Vec3& p, const Vec3& n, int class_id) {
    const Vec3 probe = p + kBuriedProbe * n;
    for (std::size_t j = 0; j < scene.primitives.size(); ++j) {
      if (j != self && scene.primitives[j].contains(probe)) {
        return;
      }
    }
    out.points.push_back(p);
    out.classes.push_back(class_id);
  };
  for (std::size_t i = 0; i < scene.primitives.size(); ++i) {
    const Primitive& prim = scene.primitives[i];
    if (prim.kind == Primitive::Kind::kSphere) {
      const double area = 4.0 * std::numbers::pi * prim.radius * prim.radius;
      const auto n = static_cast<std::size_t>(std::ceil(area * density));
      for (std::size_t s = 0; s < n; ++s) {
        const Vec3 dir = Vec3(rng.normal(), rng.normal(), rng.normal()).normalized();
        keep(i, prim.center + prim.radius * dir, dir, prim.class_id);
      }
      continue;
    }
    const bool room = prim.kind == Primitive::Kind::kRoom;
    for (const Face& f : box_faces(prim.lo, prim.hi, room ? -1.0 : 1.0, prim.class_id,
                                   prim.floor_class)) {
      const int a1 = (f.axis + 1) % 3;
      const int a2 = (f.axis + 2) % 3;
      const double area = (f.hi[a1] - f.lo[a1]) * (f.hi[a2] - f.lo[a2]);
      const auto n = static_cast<std::size_t>(std::ceil(area * density));
      Vec3 normal = Vec3::Zero();
      normal[f.axis] = f.sign;
      for (std::size_t s = 0; s < n; ++s) {
        Vec3 p;
        p[f.axis] = f.offset;
        p[a1] = rng.uniform(f.lo[a1], f.hi[a1]);
        p[a2] = rng.uniform(f.lo[a2], f.hi[a2]);
        keep(i, p, normal, f.class_id);
      }
    }
  }
  return out;
}

}  // namespace langocc
