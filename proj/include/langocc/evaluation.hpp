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

#include <cstdint>
#include <span>
#include <vector>

#include "langocc/dataset_io.hpp"
#include "langocc/mesh.hpp"

namespace langocc {

/// Static 3D kd-tree for exact nearest-neighbor queries.
class KdTree {
 public:
  explicit KdTree(std::vector<Vec3> points);

  std::size_t size() const { return points_.size(); }
  const std::vector<Vec3>& points() const { return points_; }

  struct Hit {
    std::size_t index = 0;
    double distance = 0.0;
  };
  /// Throws DomainError on an empty tree.
  Hit nearest(const Vec3& query) const;

 private:
  struct Node {
    std::uint32_t begin, end;
    std::int32_t left = -1, right = -1;
    int axis = -1;
    double split = 0.0;
  };
  std::int32_t build(std::uint32_t begin, std::uint32_t end);
  void search(std::int32_t node, const Vec3& q, Hit& best, double& best_sq) const;

  std::vector<Vec3> points_;
  std::vector<std::uint32_t> order_;
  std::vector<Node> nodes_;
};

/// Distance from every point of `from` to its nearest point in `to`.
std::vector<double> nearest_distances(std::span<const Vec3> from, const KdTree& to);
/// Exhaustive O(|from| * |to|) version of nearest_distances.
std::vector<double> nearest_distances_brute(std::span<const Vec3> from, std::span<const Vec3> to);

struct ReconMetrics {
  double acc = 0.0;
  double comp = 0.0;
  double chamfer_l1 = 0.0;
  double prec = 0.0;
  double recall = 0.0;
  double fscore = 0.0;
  double threshold = 0.05;
};

/// acc: mean pred-to-gt distance; comp: mean gt-to-pred distance; prec and
/// recall: fractions of those distances strictly below the threshold.
ReconMetrics recon_metrics(std::span<const Vec3> pred, std::span<const Vec3> gt,
                           double threshold = 0.05);

inline constexpr int kVoidClass = -1;

struct SegMetrics {
  int class_count = 0;
  /// Row = ground truth, column = prediction.
  std::vector<std::int64_t> confusion;
  /// Per class; NaN where the class is absent from the ground truth.
  std::vector<double> iou;
  std::vector<double> acc;
  double miou = 0.0;
  double macc = 0.0;

  std::int64_t count(int gt, int pred) const {
    return confusion[static_cast<std::size_t>(gt) * class_count + pred];
  }
};

/// Entries with gt == kVoidClass are skipped; a void prediction counts as a
/// miss for its ground-truth class.
SegMetrics seg_metrics(std::span<const int> pred, std::span<const int> gt, int class_count);

/// Label of the nearest source point for every target point. Throws
/// DomainError when the source is empty or its arrays differ in length.
std::vector<int> transfer_labels(std::span<const Vec3> targets, std::span<const Vec3> source,
                                 std::span<const int> source_labels);

/// Area-weighted uniform samples: ceil(area * density) points, fixed by seed.
std::vector<Vec3> sample_mesh_points(const Mesh& mesh, double density_per_m2, std::uint64_t seed,
                                     std::vector<std::size_t>* face_of_point = nullptr);

/// true where a point projects into some frame at a pixel with valid depth d
/// and lies no more than `tolerance` behind it (camera z <= d + tolerance).
std::vector<std::uint8_t> observed_mask(std::span<const Vec3> points, const FrameSet& frames,
                                        double tolerance = 0.1);

template <typename T>
std::vector<T> select(std::span<const T> values, std::span<const std::uint8_t> mask) {
  std::vector<T> out;
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (mask[i]) {
      out.push_back(values[i]);
    }
  }
  return out;
}

}  // namespace langocc
