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

#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <limits>
#include <string>
#include <vector>

#include "langocc/dataset_io.hpp"
#include "langocc/synthetic.hpp"
#include "test_support.hpp"

using namespace langocc;
namespace fs = std::filesystem;

namespace {

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

// Distance from p to the boundary of the axis-aligned box [lo, hi].
double box_boundary_distance(const Vec3& p, const Vec3& lo, const Vec3& hi) {
  const Vec3 outside = (lo - p).cwiseMax(p - hi).cwiseMax(0.0);
  if (outside.maxCoeff() > 0.0) {
    return outside.norm();
  }
  return std::min((p - lo).minCoeff(), (hi - p).minCoeff());
}

template <class Fn>
std::string error_of(Fn&& fn) {
  try {
    fn();
  } catch (const std::exception& e) {
    return e.what();
  }
  return {};
}

SyntheticScene single_box_scene() {
  SyntheticScene s;
  s.bounds = SceneBounds(Vec3::Zero(), Vec3::Constant(2.0));
  s.primitives.push_back(Primitive::box(Vec3::Constant(0.8), Vec3::Constant(1.2), 0));
  s.class_names = {"box", "unused"};
  s.albedo = {Vec3(0.2, 0.4, 0.6), Vec3(1.0, 1.0, 1.0)};
  s.dim = 4;
  s.embeddings = {1, 0, 0, 0, 0, 1, 0, 0};
  s.width = 21;
  s.height = 21;
  s.intrinsics = Intrinsics{20.0, 20.0, 10.0, 10.0};
  Mat4 pose = Mat4::Identity();
  pose.block<3, 1>(0, 3) = Vec3(1.0, 1.0, 0.2);
  s.trajectory = {pose};
  return s;
}

}  // namespace

TEST_CASE("camera rays") {
  const Intrinsics k{100.0, 80.0, 31.5, 23.5};
  Mat4 pose = Mat4::Identity();
  pose.block<3, 3>(0, 0) = Eigen::AngleAxisd(0.7, Vec3(1, 2, 3).normalized()).toRotationMatrix();
  pose.block<3, 1>(0, 3) = Vec3(0.3, -1.0, 2.0);
  const CameraRay center = camera_ray(k, pose, 31.5, 23.5);
  CHECK((center.origin - Vec3(0.3, -1.0, 2.0)).norm() < 1e-15);
  CHECK((center.direction - pose.block<3, 1>(0, 2)).norm() < 1e-15);
  CHECK(center.z_to_range == doctest::Approx(1.0));
  const CameraRay corner = camera_ray(k, pose, 0, 0);
  CHECK(corner.direction.norm() == doctest::Approx(1.0).epsilon(1e-14));
  const Vec3 cam = pose.block<3, 3>(0, 0).transpose() * corner.direction * corner.z_to_range;
  CHECK(cam.z() == doctest::Approx(1.0).epsilon(1e-14));
  CHECK(cam.x() == doctest::Approx(-31.5 / 100.0).epsilon(1e-14));
  CHECK(cam.y() == doctest::Approx(-23.5 / 80.0).epsilon(1e-14));
}

TEST_CASE("pose validation") {
  Mat4 pose = Mat4::Identity();
  CHECK_NOTHROW(validate_pose(pose, "p"));
  pose(0, 0) = 1.01;
  CHECK_THROWS_AS(validate_pose(pose, "p"), DomainError);
  pose = Mat4::Identity();
  pose(0, 0) = -1.0;
  CHECK_THROWS_AS(validate_pose(pose, "p"), DomainError);
  pose = Mat4::Identity();
  pose(3, 0) = 0.5;
  CHECK_THROWS_AS(validate_pose(pose, "p"), DomainError);
}

TEST_CASE("single box renders its analytic depth") {
  const SyntheticScene scene = single_box_scene();
  const SyntheticFrames data = generate_synthetic(scene, {});
  const Frame& f = data.frames.frames[0];
  for (int v = 0; v < 21; ++v) {
    for (int u = 0; u < 21; ++u) {
      const bool hit = std::abs(0.6 * (u - 10) / 20.0) <= 0.2 &&
                       std::abs(0.6 * (v - 10) / 20.0) <= 0.2;
      CHECK(f.depth_at(u, v) == doctest::Approx(hit ? 0.6 : 0.0).epsilon(1e-6));
      CHECK(data.pixel_class[0][static_cast<std::size_t>(v) * 21 + u] == (hit ? 0 : -1));
    }
  }
}

TEST_CASE("uncorrupted features equal the planted embeddings") {
  const SyntheticScene scene = two_box_room(3, 32, 24, 8, 5);
  const SyntheticFrames data = generate_synthetic(scene, {});
  for (std::size_t i = 0; i < data.frames.size(); ++i) {
    const FeatureMap& map = data.frames.feature_map(i);
    for (int v = 0; v < 24; ++v) {
      for (int u = 0; u < 32; ++u) {
        const int c = data.pixel_class[i][static_cast<std::size_t>(v) * 32 + u];
        REQUIRE(c >= 0);
        double dot = 0.0;
        for (int d = 0; d < 8; ++d) {
          dot += static_cast<double>(map.at(v, u)[d]) * scene.embeddings[c * 8 + d];
        }
        CHECK(dot == doctest::Approx(1.0).epsilon(1e-6));
      }
    }
  }
}

TEST_CASE("flip fraction at 128x128") {
  const SyntheticScene scene = two_box_room(2, 128, 128, 16, 9);
  CorruptionConfig corruption;
  corruption.flip_fraction = 0.3;
  corruption.seed = 21;
  const SyntheticFrames data = generate_synthetic(scene, corruption);
  for (std::size_t i = 0; i < data.frames.size(); ++i) {
    std::size_t hits = 0;
    std::size_t flipped = 0;
    for (std::size_t px = 0; px < data.flipped[i].size(); ++px) {
      hits += data.pixel_class[i][px] >= 0 ? 1 : 0;
      flipped += data.flipped[i][px];
    }
    const double fraction = static_cast<double>(flipped) / static_cast<double>(hits);
    CHECK(std::abs(fraction - 0.3) <= 0.02);
  }
}

TEST_CASE("back-projected depth lands on the analytic surface") {
  const SyntheticScene scene = two_box_room(6, 64, 48, 8, 3);
  const SyntheticFrames data = generate_synthetic(scene, {});
  std::size_t checked = 0;
  double worst = 0.0;
  for (const Frame& f : data.frames.frames) {
    for (int v = 0; v < f.height; ++v) {
      for (int u = 0; u < f.width; ++u) {
        const double z = f.depth_at(u, v);
        if (z <= 0.0) {
          continue;
        }
        const CameraRay ray = camera_ray(scene.intrinsics, f.pose, u, v);
        const Vec3 p = ray.origin + z * ray.z_to_range * ray.direction;
        double d = std::numeric_limits<double>::infinity();
        for (const Primitive& prim : scene.primitives) {
          d = std::min(d, box_boundary_distance(p, prim.lo, prim.hi));
        }
        worst = std::max(worst, d);
        ++checked;
      }
    }
  }
  CHECK(checked == 6u * 64u * 48u);
  CHECK(worst <= 1e-4);
}

TEST_CASE("dataset round trip is bit-identical") {
  const SyntheticScene scene = two_box_room(3, 20, 16, 8, 4);
  CorruptionConfig corruption;
  corruption.flip_fraction = 0.2;
  corruption.noise_sigma = 0.1;
  corruption.seed = 3;
  const SyntheticFrames data = generate_synthetic(scene, corruption);
  testing::ScratchDir dir("roundtrip");
  write_frameset(dir.path() / "a", data.frames);
  const FrameSet loaded = load_frameset(dir.path() / "a");

  REQUIRE(loaded.size() == 3);
  CHECK(loaded.intrinsics.fx == data.frames.intrinsics.fx);
  CHECK(loaded.intrinsics.fy == data.frames.intrinsics.fy);
  CHECK(loaded.intrinsics.cx == data.frames.intrinsics.cx);
  CHECK(loaded.intrinsics.cy == data.frames.intrinsics.cy);
  for (std::size_t i = 0; i < 3; ++i) {
    const Frame& a = data.frames.frames[i];
    const Frame& b = loaded.frames[i];
    CHECK(a.name == b.name);
    CHECK(a.rgb == b.rgb);
    CHECK(a.depth == b.depth);
    CHECK(a.pose == b.pose);
    CHECK(data.frames.feature_map(i).data == loaded.feature_map(i).data);
  }
  REQUIRE(loaded.prompts.has_value());
  CHECK(loaded.prompts->labels == data.frames.prompts->labels);
  CHECK(loaded.prompts->embeddings == data.frames.prompts->embeddings);

  write_frameset(dir.path() / "b", loaded);
  for (const auto& entry : fs::recursive_directory_iterator(dir.path() / "a")) {
    if (entry.is_regular_file()) {
      const fs::path rel = fs::relative(entry.path(), dir.path() / "a");
      CHECK(slurp(entry.path()) == slurp(dir.path() / "b" / rel));
    }
  }
}

TEST_CASE("dataset loading errors") {
  const SyntheticScene scene = two_box_room(3, 20, 16, 8, 4);
  const SyntheticFrames data = generate_synthetic(scene, {});
  testing::ScratchDir dir("errors");
  const fs::path root = dir.path();
  write_frameset(root, data.frames);

  SUBCASE("absent feature directory disables features") {
    fs::remove_all(root / "feat");
    const FrameSet f = load_frameset(root);
    CHECK(f.size() == 3);
    CHECK_FALSE(f.has_features());
  }
  SUBCASE("missing pose names the frame") {
    fs::remove(root / "poses" / "0001.txt");
    const std::string msg = error_of([&] { load_frameset(root); });
    CHECK(msg.find("frame 0001") != std::string::npos);
  }
  SUBCASE("non-orthonormal pose") {
    Mat4 pose = data.frames.frames[2].pose;
    pose(0, 0) *= 1.1;
    write_pose(root / "poses" / "0002.txt", pose);
    const std::string msg = error_of([&] { load_frameset(root); });
    CHECK(msg.find("0002") != std::string::npos);
    CHECK(msg.find("orthonormal") != std::string::npos);
  }
  SUBCASE("depth of the wrong size names the file") {
    const std::vector<float> small(10 * 8, 1.0f);
    write_depth_f32(root / "depth" / "0001.d32", 10, 8, small);
    const std::string msg = error_of([&] { load_frameset(root); });
    CHECK(msg.find("0001.d32") != std::string::npos);
    CHECK(msg.find("dimension mismatch") != std::string::npos);
  }
  SUBCASE("missing intrinsics") {
    fs::remove(root / "intrinsics.txt");
    CHECK_THROWS_AS(load_frameset(root), FormatError);
  }
}

TEST_CASE("feature maps upsample bilinearly and normalize") {
  FeatureMap map{2, 2, 2, {1, 0, 1, 0, 0, 1, 0, 1}};
  FrameSet set;
  set.intrinsics = Intrinsics{4, 4, 1.5, 1.5};
  Frame f;
  f.width = 4;
  f.height = 4;
  f.rgb.assign(48, 0);
  f.depth.assign(16, 1.0f);
  set.frames.push_back(f);
  set.set_feature_maps({map});
  std::vector<float> out(2);
  REQUIRE(set.pixel_feature(0, 0, 0, out));
  CHECK(out[0] == doctest::Approx(1.0));
  CHECK(out[1] == doctest::Approx(0.0));
  REQUIRE(set.pixel_feature(0, 0, 3, out));
  CHECK(out[0] == doctest::Approx(0.0));
  CHECK(out[1] == doctest::Approx(1.0));
  REQUIRE(set.pixel_feature(0, 2, 1, out));
  CHECK(std::hypot(out[0], out[1]) == doctest::Approx(1.0).epsilon(1e-6));
  CHECK(out[0] > out[1]);
}
