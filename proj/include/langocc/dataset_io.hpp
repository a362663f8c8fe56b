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
#include <filesystem>
#include <memory>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "langocc/common.hpp"
#include "langocc/scp_fusion.hpp"

namespace langocc {

/// Pinhole intrinsics. Pixel (u, v) has its center at integer coordinates;
/// the camera looks down +z with +x right and +y down.
struct Intrinsics {
  double fx = 0.0;
  double fy = 0.0;
  double cx = 0.0;
  double cy = 0.0;

  void validate() const;
};

struct CameraRay {
  Vec3 origin;
  /// Unit direction in world coordinates.
  Vec3 direction;
  /// Along-ray distance per unit of camera z-depth.
  double z_to_range = 1.0;
};

CameraRay camera_ray(const Intrinsics& k, const Mat4& camera_to_world, double u, double v);

/// Throws DomainError unless the rotation block is orthonormal within 1e-4
/// with determinant +1 and the bottom row is (0, 0, 0, 1).
void validate_pose(const Mat4& pose, const std::string& what);

/// Dense H' x W' x D feature map.
struct FeatureMap {
  int height = 0;
  int width = 0;
  int dim = 0;
  std::vector<float> data;

  std::span<const float> at(int y, int x) const {
    return {data.data() + (static_cast<std::size_t>(y) * width + x) * dim,
            static_cast<std::size_t>(dim)};
  }
};

struct Frame {
  std::string name;
  int width = 0;
  int height = 0;
  /// width x height x 3, row-major.
  std::vector<std::uint8_t> rgb;
  /// Camera z-depth in meters, 0 where invalid.
  std::vector<float> depth;
  Mat4 pose = Mat4::Identity();

  Vec3 color(int u, int v) const;
  double depth_at(int u, int v) const {
    return depth[static_cast<std::size_t>(v) * width + u];
  }
};

class FrameSet {
 public:
  Intrinsics intrinsics;
  std::vector<Frame> frames;
  std::optional<ClassPrompts> prompts;

  std::size_t size() const { return frames.size(); }
  bool has_features() const { return feature_dim_ > 0; }
  int feature_dim() const { return feature_dim_; }

  /// In-memory maps, one per frame.
  void set_feature_maps(std::vector<FeatureMap> maps);
  /// Maps read from disk on first access. `dim` must match every file header.
  void set_feature_files(std::vector<std::filesystem::path> paths, int dim);
  void clear_features();

  /// Thread-safe; loads the map on first access.
  const FeatureMap& feature_map(std::size_t frame) const;

  /// Feature at pixel (u, v), bilinearly upsampled from the frame's map and
  /// normalized to unit length. Returns false when the result has near-zero
  /// norm.
  bool pixel_feature(std::size_t frame, int u, int v, std::span<float> out) const;

  /// Checks image sizes, poses, intrinsics and depth values.
  void validate() const;

 private:
  struct LazyMap {
    std::once_flag once;
    std::filesystem::path path;
    FeatureMap map;
  };
  std::vector<std::unique_ptr<LazyMap>> features_;
  int feature_dim_ = 0;
};

/// Layout under `root`: intrinsics.txt, poses/NNNN.txt, rgb/NNNN.png,
/// depth/NNNN.d32 or depth/NNNN.png, optional feat/NNNN.ofm and prompts.json.
FrameSet load_frameset(const std::filesystem::path& root);
void write_frameset(const std::filesystem::path& root, const FrameSet& frames);

void write_feature_map(const std::filesystem::path& path, const FeatureMap& map);
FeatureMap read_feature_map(const std::filesystem::path& path);
/// Header fields (height, width, dim) without reading the payload.
std::array<int, 3> read_feature_map_header(const std::filesystem::path& path);

void write_depth_f32(const std::filesystem::path& path, int width, int height,
                     std::span<const float> depth);
std::vector<float> read_depth_f32(const std::filesystem::path& path, int& width, int& height);

Mat4 read_pose(const std::filesystem::path& path);
void write_pose(const std::filesystem::path& path, const Mat4& pose);

}  // namespace langocc
