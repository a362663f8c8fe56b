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

#include "langocc/dataset_io.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>

#include "binary_io.hpp"
#include "langocc/image_io.hpp"

namespace langocc {

namespace fs = std::filesystem;

namespace {

constexpr char kFeatureMagic[5] = "OFM1";
constexpr char kDepthMagic[5] = "ODP1";
constexpr double kOrthonormalTolerance = 1e-4;

std::ifstream open_in(const fs::path& path, const std::string& what) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw FormatError(what + " not found: " + path.string());
  }
  return in;
}

std::ofstream open_out(const fs::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) {
    throw FormatError("cannot write " + path.string());
  }
  return out;
}

std::string frame_name(std::size_t i) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%04zu", i);
  return buf;
}

}  // namespace

void Intrinsics::validate() const {
  if (!(fx > 0.0) || !(fy > 0.0) || !std::isfinite(cx) || !std::isfinite(cy)) {
    throw DomainError("intrinsics: fx and fy must be positive and cx, cy finite");
  }
}

CameraRay camera_ray(const Intrinsics& k, const Mat4& camera_to_world, double u, double v) {
  const Vec3 cam((u - k.cx) / k.fx, (v - k.cy) / k.fy, 1.0);
  const double norm = cam.norm();
  CameraRay ray;
  ray.origin = camera_to_world.block<3, 1>(0, 3);
  ray.direction = (camera_to_world.block<3, 3>(0, 0) * cam).normalized();
  ray.z_to_range = norm;
  return ray;
}

void validate_pose(const Mat4& pose, const std::string& what) {
  if (!pose.allFinite()) {
    throw DomainError(what + ": pose has non-finite entries");
  }
  const Eigen::Matrix3d r = pose.block<3, 3>(0, 0);
  const double err = (r.transpose() * r - Eigen::Matrix3d::Identity()).cwiseAbs().maxCoeff();
  if (err > kOrthonormalTolerance) {
    throw DomainError(what + ": pose rotation is not orthonormal (error " + std::to_string(err) +
                      ")");
  }
  if (r.determinant() < 0.0) {
    throw DomainError(what + ": pose rotation has determinant -1");
  }
  const Eigen::RowVector4d bottom = pose.row(3);
  if ((bottom - Eigen::RowVector4d(0, 0, 0, 1)).cwiseAbs().maxCoeff() > kOrthonormalTolerance) {
    throw DomainError(what + ": pose bottom row must be (0, 0, 0, 1)");
  }
}

Vec3 Frame::color(int u, int v) const {
  const std::uint8_t* px = rgb.data() + (static_cast<std::size_t>(v) * width + u) * 3;
  return Vec3(px[0], px[1], px[2]) / 255.0;
}

// ---------------------------------------------------------------------------
// FrameSet

void FrameSet::set_feature_maps(std::vector<FeatureMap> maps) {
  if (maps.size() != frames.size()) {
    throw DomainError("set_feature_maps: one map per frame required");
  }
  features_.clear();
  feature_dim_ = maps.empty() ? 0 : maps.front().dim;
  for (FeatureMap& m : maps) {
    if (m.dim != feature_dim_ || m.dim <= 0 || m.width <= 0 || m.height <= 0 ||
        m.data.size() != static_cast<std::size_t>(m.width) * m.height * m.dim) {
      throw DomainError("set_feature_maps: inconsistent feature map dimensions");
    }
    auto lazy = std::make_unique<LazyMap>();
    lazy->map = std::move(m);
    std::call_once(lazy->once, [] {});
    features_.push_back(std::move(lazy));
  }
}

void FrameSet::set_feature_files(std::vector<fs::path> paths, int dim) {
  if (paths.size() != frames.size()) {
    throw DomainError("set_feature_files: one file per frame required");
  }
  if (dim <= 0) {
    throw DomainError("set_feature_files: dimension must be positive");
  }
  features_.clear();
  feature_dim_ = dim;
  for (fs::path& p : paths) {
    auto lazy = std::make_unique<LazyMap>();
    lazy->path = std::move(p);
    features_.push_back(std::move(lazy));
  }
}

void FrameSet::clear_features() {
  features_.clear();
  feature_dim_ = 0;
}

const FeatureMap& FrameSet::feature_map(std::size_t frame) const {
  if (!has_features() || frame >= features_.size()) {
    throw DomainError("feature_map: no feature map for frame " + std::to_string(frame));
  }
  LazyMap& lazy = *features_[frame];
  std::call_once(lazy.once, [&] {
    FeatureMap m = read_feature_map(lazy.path);
    if (m.dim != feature_dim_) {
      throw FormatError(lazy.path.string() + ": feature dimension " + std::to_string(m.dim) +
                        " differs from " + std::to_string(feature_dim_));
    }
    lazy.map = std::move(m);
  });
  return lazy.map;
}

bool FrameSet::pixel_feature(std::size_t frame, int u, int v, std::span<float> out) const {
  const FeatureMap& m = feature_map(frame);
  const Frame& f = frames[frame];
  if (out.size() != static_cast<std::size_t>(m.dim)) {
    throw DomainError("pixel_feature: output has the wrong dimension");
  }
  const double sx = std::clamp((u + 0.5) * m.width / f.width - 0.5, 0.0, m.width - 1.0);
  const double sy = std::clamp((v + 0.5) * m.height / f.height - 0.5, 0.0, m.height - 1.0);
  const int x0 = static_cast<int>(sx);
  const int y0 = static_cast<int>(sy);
  const int x1 = std::min(x0 + 1, m.width - 1);
  const int y1 = std::min(y0 + 1, m.height - 1);
  const double ax = sx - x0;
  const double ay = sy - y0;
  const auto f00 = m.at(y0, x0);
  const auto f01 = m.at(y0, x1);
  const auto f10 = m.at(y1, x0);
  const auto f11 = m.at(y1, x1);
  thread_local std::vector<double> acc;
  acc.resize(static_cast<std::size_t>(m.dim));
  double norm2 = 0.0;
  for (int k = 0; k < m.dim; ++k) {
    const double top = (1.0 - ax) * f00[k] + ax * f01[k];
    const double bottom = (1.0 - ax) * f10[k] + ax * f11[k];
    acc[k] = (1.0 - ay) * top + ay * bottom;
    norm2 += acc[k] * acc[k];
  }
  const double norm = std::sqrt(norm2);
  if (!(norm > 1e-8)) {
    std::fill(out.begin(), out.end(), 0.0f);
    return false;
  }
  for (int k = 0; k < m.dim; ++k) {
    out[k] = static_cast<float>(acc[k] / norm);
  }
  return true;
}

void FrameSet::validate() const {
  intrinsics.validate();
  for (const Frame& f : frames) {
    const std::string what = "frame " + f.name;
    if (f.width <= 0 || f.height <= 0) {
      throw DomainError(what + ": empty image");
    }
    const std::size_t n = static_cast<std::size_t>(f.width) * f.height;
    if (f.rgb.size() != n * 3 || f.depth.size() != n) {
      throw DomainError(what + ": image buffers do not match " + std::to_string(f.width) + "x" +
                        std::to_string(f.height));
    }
    for (float d : f.depth) {
      if (!(d >= 0.0f) || !std::isfinite(d)) {
        throw DomainError(what + ": depth must be finite and nonnegative");
      }
    }
    validate_pose(f.pose, what);
  }
  if (prompts) {
    prompts->validate();
    if (has_features() && prompts->dim != feature_dim_) {
      throw DomainError("prompts have dimension " + std::to_string(prompts->dim) +
                        ", feature maps " + std::to_string(feature_dim_));
    }
  }
}

// ---------------------------------------------------------------------------
// File formats

void write_feature_map(const fs::path& path, const FeatureMap& map) {
  if (map.data.size() != static_cast<std::size_t>(map.width) * map.height * map.dim) {
    throw DomainError("write_feature_map: buffer does not match its dimensions");
  }
  std::ofstream out = open_out(path);
  detail::write_magic(out, kFeatureMagic);
  detail::write_pod(out, static_cast<std::uint32_t>(map.height));
  detail::write_pod(out, static_cast<std::uint32_t>(map.width));
  detail::write_pod(out, static_cast<std::uint32_t>(map.dim));
  detail::write_array<float>(out, map.data);
  if (!out) {
    throw FormatError("failed writing " + path.string());
  }
}

namespace {

std::array<int, 3> read_feature_header(std::istream& in, const fs::path& path) {
  const std::string what = path.string();
  detail::expect_magic(in, kFeatureMagic, what);
  std::array<int, 3> hwd{};
  for (int& v : hwd) {
    const auto raw = detail::read_pod<std::uint32_t>(in, what);
    if (raw == 0 || raw > (1u << 20)) {
      throw FormatError(what + ": implausible feature map header");
    }
    v = static_cast<int>(raw);
  }
  return hwd;
}

}  // namespace

std::array<int, 3> read_feature_map_header(const fs::path& path) {
  std::ifstream in = open_in(path, "feature map");
  return read_feature_header(in, path);
}

FeatureMap read_feature_map(const fs::path& path) {
  std::ifstream in = open_in(path, "feature map");
  const auto hwd = read_feature_header(in, path);
  FeatureMap m;
  m.height = hwd[0];
  m.width = hwd[1];
  m.dim = hwd[2];
  m.data.resize(static_cast<std::size_t>(m.height) * m.width * m.dim);
  detail::read_array<float>(in, m.data, path.string());
  return m;
}

void write_depth_f32(const fs::path& path, int width, int height, std::span<const float> depth) {
  if (depth.size() != static_cast<std::size_t>(width) * height) {
    throw DomainError("write_depth_f32: buffer does not match its dimensions");
  }
  std::ofstream out = open_out(path);
  detail::write_magic(out, kDepthMagic);
  detail::write_pod(out, static_cast<std::uint32_t>(height));
  detail::write_pod(out, static_cast<std::uint32_t>(width));
  detail::write_array<float>(out, depth);
  if (!out) {
    throw FormatError("failed writing " + path.string());
  }
}

std::vector<float> read_depth_f32(const fs::path& path, int& width, int& height) {
  std::ifstream in = open_in(path, "depth file");
  const std::string what = path.string();
  detail::expect_magic(in, kDepthMagic, what);
  const auto h = detail::read_pod<std::uint32_t>(in, what);
  const auto w = detail::read_pod<std::uint32_t>(in, what);
  if (h == 0 || w == 0 || h > (1u << 16) || w > (1u << 16)) {
    throw FormatError(what + ": implausible depth image size");
  }
  height = static_cast<int>(h);
  width = static_cast<int>(w);
  std::vector<float> depth(static_cast<std::size_t>(w) * h);
  detail::read_array<float>(in, depth, what);
  return depth;
}

Mat4 read_pose(const fs::path& path) {
  std::ifstream in(path);
  if (!in) {
    throw FormatError("pose file not found: " + path.string());
  }
  Mat4 pose;
  for (int r = 0; r < 4; ++r) {
    for (int c = 0; c < 4; ++c) {
      if (!(in >> pose(r, c))) {
        throw FormatError(path.string() + ": expected 16 numbers");
      }
    }
  }
  return pose;
}

void write_pose(const fs::path& path, const Mat4& pose) {
  std::FILE* f = std::fopen(path.c_str(), "w");
  if (f == nullptr) {
    throw FormatError("cannot write " + path.string());
  }
  for (int r = 0; r < 4; ++r) {
    std::fprintf(f, "%.17g %.17g %.17g %.17g\n", pose(r, 0), pose(r, 1), pose(r, 2), pose(r, 3));
  }
  std::fclose(f);
}

// ---------------------------------------------------------------------------
// Dataset directories

FrameSet load_frameset(const fs::path& root) {
  if (!fs::is_directory(root)) {
    throw FormatError("dataset directory not found: " + root.string());
  }
  FrameSet set;
  {
    const fs::path kpath = root / "intrinsics.txt";
    std::ifstream in(kpath);
    if (!in) {
      throw FormatError("intrinsics file not found: " + kpath.string());
    }
    Intrinsics& k = set.intrinsics;
    if (!(in >> k.fx >> k.fy >> k.cx >> k.cy)) {
      throw FormatError(kpath.string() + ": expected \"fx fy cx cy\"");
    }
    k.validate();
  }

  std::vector<std::string> names;
  if (fs::is_directory(root / "rgb")) {
    for (const auto& entry : fs::directory_iterator(root / "rgb")) {
      if (entry.path().extension() == ".png") {
        names.push_back(entry.path().stem().string());
      }
    }
  }
  std::sort(names.begin(), names.end());
  if (names.empty()) {
    throw FormatError("no frames found under " + (root / "rgb").string());
  }

  for (const std::string& name : names) {
    const std::string what = "frame " + name;
    Frame f;
    f.name = name;
    const fs::path pose_path = root / "poses" / (name + ".txt");
    if (!fs::exists(pose_path)) {
      throw FormatError(what + ": missing pose file " + pose_path.string());
    }
    f.pose = read_pose(pose_path);
    validate_pose(f.pose, what);

    Rgb8Image rgb = read_png_rgb8(root / "rgb" / (name + ".png"));
    f.width = rgb.width;
    f.height = rgb.height;
    f.rgb = std::move(rgb.data);

    const fs::path d32 = root / "depth" / (name + ".d32");
    const fs::path d16 = root / "depth" / (name + ".png");
    int dw = 0;
    int dh = 0;
    fs::path depth_path;
    if (fs::exists(d32)) {
      depth_path = d32;
      f.depth = read_depth_f32(d32, dw, dh);
    } else if (fs::exists(d16)) {
      depth_path = d16;
      Gray16Image mm = read_png_gray16(d16);
      dw = mm.width;
      dh = mm.height;
      f.depth.resize(mm.data.size());
      for (std::size_t i = 0; i < mm.data.size(); ++i) {
        f.depth[i] = static_cast<float>(mm.data[i] * 1e-3);
      }
    } else {
      throw FormatError(what + ": missing depth file " + d32.string() + " or " + d16.string());
    }
    if (dw != f.width || dh != f.height) {
      throw FormatError(depth_path.string() + ": dimension mismatch, depth is " +
                        std::to_string(dw) + "x" + std::to_string(dh) + " but rgb is " +
                        std::to_string(f.width) + "x" + std::to_string(f.height));
    }
    set.frames.push_back(std::move(f));
  }

  if (fs::is_directory(root / "feat")) {
    std::vector<fs::path> paths;
    int dim = 0;
    for (const std::string& name : names) {
      const fs::path p = root / "feat" / (name + ".ofm");
      if (!fs::exists(p)) {
        throw FormatError("frame " + name + ": missing feature map " + p.string());
      }
      const auto hwd = read_feature_map_header(p);
      if (dim == 0) {
        dim = hwd[2];
      } else if (hwd[2] != dim) {
        throw FormatError(p.string() + ": feature dimension " + std::to_string(hwd[2]) +
                          " differs from " + std::to_string(dim));
      }
      paths.push_back(p);
    }
    set.set_feature_files(std::move(paths), dim);
  }

  if (fs::exists(root / "prompts.json")) {
    set.prompts = load_prompts(root / "prompts.json");
  }
  set.validate();
  return set;
}

void write_frameset(const fs::path& root, const FrameSet& frames) {
  frames.validate();
  fs::create_directories(root / "poses");
  fs::create_directories(root / "rgb");
  fs::create_directories(root / "depth");
  if (frames.has_features()) {
    fs::create_directories(root / "feat");
  }
  {
    std::FILE* f = std::fopen((root / "intrinsics.txt").c_str(), "w");
    if (f == nullptr) {
      throw FormatError("cannot write " + (root / "intrinsics.txt").string());
    }
    const Intrinsics& k = frames.intrinsics;
    std::fprintf(f, "%.17g %.17g %.17g %.17g\n", k.fx, k.fy, k.cx, k.cy);
    std::fclose(f);
  }
  for (std::size_t i = 0; i < frames.size(); ++i) {
    const Frame& f = frames.frames[i];
    const std::string name = f.name.empty() ? frame_name(i) : f.name;
    write_pose(root / "poses" / (name + ".txt"), f.pose);
    write_png_rgb8(root / "rgb" / (name + ".png"), Rgb8Image{f.width, f.height, f.rgb});
    write_depth_f32(root / "depth" / (name + ".d32"), f.width, f.height, f.depth);
    if (frames.has_features()) {
      write_feature_map(root / "feat" / (name + ".ofm"), frames.feature_map(i));
    }
  }
  if (frames.prompts) {
    save_prompts(root / "prompts.json", *frames.prompts);
  }
}

}  // namespace langocc
