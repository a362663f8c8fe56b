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

#include "langocc/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>

namespace langocc {

namespace {

constexpr std::uint32_t kLeafSize = 8;

inline double squared_distance(const Vec3& a, const Vec3& b) {
  const double dx = a[0] - b[0];
  const double dy = a[1] - b[1];
  const double dz = a[2] - b[2];
  return dx * dx + dy * dy + dz * dz;
}

}  // namespace

KdTree::KdTree(std::vector<Vec3> points) : points_(std::move(points)) {
  if (points_.size() >= std::numeric_limits<std::uint32_t>::max()) {
    throw DomainError("KdTree: too many points");
  }
  order_.resize(points_.size());
  std::iota(order_.begin(), order_.end(), 0u);
  if (!points_.empty()) {
    nodes_.reserve(2 * points_.size() / kLeafSize + 1);
    build(0, static_cast<std::uint32_t>(points_.size()));
  }
}

std::int32_t KdTree::build(std::uint32_t begin, std::uint32_t end) {
  const auto id = static_cast<std::int32_t>(nodes_.size());
  nodes_.push_back(Node{begin, end});
  if (end - begin <= kLeafSize) {
    return id;
  }
  Vec3 lo = points_[order_[begin]];
  Vec3 hi = lo;
  for (std::uint32_t i = begin; i < end; ++i) {
    lo = lo.cwiseMin(points_[order_[i]]);
    hi = hi.cwiseMax(points_[order_[i]]);
  }
  int axis = 0;
  (hi - lo).maxCoeff(&axis);
  const std::uint32_t mid = begin + (end - begin) / 2;
  std::nth_element(order_.begin() + begin, order_.begin() + mid, order_.begin() + end,
                   [&](std::uint32_t a, std::uint32_t b) {
                     return points_[a][axis] < points_[b][axis];
                   });
  const double split = points_[order_[mid]][axis];
  const std::int32_t left = build(begin, mid);
  const std::int32_t right = build(mid, end);
  nodes_[id].axis = axis;
  nodes_[id].split = split;
  nodes_[id].left = left;
  nodes_[id].right = right;
  return id;
}

void KdTree::search(std::int32_t node_id, const Vec3& q, Hit& best, double& best_sq) const {
  const Node& node = nodes_[node_id];
  if (node.axis < 0) {
    for (std::uint32_t i = node.begin; i < node.end; ++i) {
      const std::uint32_t idx = order_[i];
      const double d2 = squared_distance(points_[idx], q);
      if (d2 < best_sq || (d2 == best_sq && idx < best.index)) {
        best_sq = d2;
        best.index = idx;
      }
    }
    return;
  }
  const double diff = q[node.axis] - node.split;
  const std::int32_t near = diff < 0.0 ? node.left : node.right;
  const std::int32_t far = diff < 0.0 ? node.right : node.left;
  search(near, q, best, best_sq);
  if (diff * diff <= best_sq) {
    search(far, q, best, best_sq);
  }
}

KdTree::Hit KdTree::nearest(const Vec3& query) const {
  if (points_.empty()) {
    throw DomainError("KdTree::nearest: empty tree");
  }
  Hit best;
  best.index = std::numeric_limits<std::size_t>::max();
  double best_sq = std::numeric_limits<double>::infinity();
  search(0, query, best, best_sq);
  best.distance = std::sqrt(best_sq);
  return best;
}

std::vector<double> nearest_distances(std::span<const Vec3> from, const KdTree& to) {
  std::vector<double> d(from.size());
#pragma omp parallel for schedule(static)
  for (std::int64_t i = 0; i < static_cast<std::int64_t>(from.size()); ++i) {
    d[i] = to.nearest(from[i]).distance;
  }
  return d;
}

std::vector<int> transfer_labels(std::span<const Vec3> targets, std::span<const Vec3> source,
                                 std::span<const int> source_labels) {
  if (source.empty() || source.size() != source_labels.size()) {
    throw DomainError("transfer_labels: source points and labels must be non-empty and aligned");
  }
  const KdTree tree(std::vector<Vec3>(source.begin(), source.end()));
  std::vector<int> out(targets.size());
#pragma omp parallel for schedule(static)
  for (std::int64_t i = 0; i < static_cast<std::int64_t>(targets.size()); ++i) {
    out[i] = source_labels[tree.nearest(targets[i]).index];
  }
  return out;
}

std::vector<double> nearest_distances_brute(std::span<const Vec3> from, std::span<const Vec3> to) {
  if (to.empty()) {
    throw DomainError("nearest_distances_brute: empty target set");
  }
  std::vector<double> d(from.size());
  for (std::size_t i = 0; i < from.size(); ++i) {
    double best = std::numeric_limits<double>::infinity();
    for (const Vec3& p : to) {
      best = std::min(best, squared_distance(p, from[i]));
    }
    d[i] = std::sqrt(best);
  }
  return d;
}

ReconMetrics recon_metrics(std::span<const Vec3> pred, std::span<const Vec3> gt,
                           double threshold) {
  if (pred.empty() || gt.empty()) {
    throw DomainError("recon_metrics: point sets must be nonempty");
  }
  if (!(threshold > 0.0)) {
    throw DomainError("recon_metrics: threshold must be positive");
  }
  const KdTree gt_tree(std::vector<Vec3>(gt.begin(), gt.end()));
  const KdTree pred_tree(std::vector<Vec3>(pred.begin(), pred.end()));
  const std::vector<double> d_pred = nearest_distances(pred, gt_tree);
  const std::vector<double> d_gt = nearest_distances(gt, pred_tree);
  auto mean = [](const std::vector<double>& v) {
    return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
  };
  auto within = [threshold](const std::vector<double>& v) {
    const auto n = std::count_if(v.begin(), v.end(), [&](double d) { return d < threshold; });
    return static_cast<double>(n) / static_cast<double>(v.size());
  };
  ReconMetrics m;
  m.threshold = threshold;
  m.acc = mean(d_pred);
  m.comp = mean(d_gt);
  m.chamfer_l1 = 0.5 * (m.acc + m.comp);
  m.prec = within(d_pred);
  m.recall = within(d_gt);
  m.fscore = m.prec + m.recall > 0.0 ? 2.0 * m.prec * m.recall / (m.prec + m.recall) : 0.0;
  return m;
}

SegMetrics seg_metrics(std::span<const int> pred, std::span<const int> gt, int class_count) {
  if (pred.size() != gt.size()) {
    throw DomainError("seg_metrics: prediction and ground truth lengths differ");
  }
  if (class_count <= 0) {
    throw DomainError("seg_metrics: class count must be positive");
  }
  SegMetrics m;
  m.class_count = class_count;
  const auto k = static_cast<std::size_t>(class_count);
  m.confusion.assign(k * k, 0);
  std::vector<std::int64_t> missed(k, 0);
  std::int64_t counted = 0;
  auto check = [class_count](int label, const char* what) {
    if (label != kVoidClass && (label < 0 || label >= class_count)) {
      throw DomainError(std::string("seg_metrics: ") + what + " label " + std::to_string(label) +
                        " outside [0, " + std::to_string(class_count) + ")");
    }
  };
  for (std::size_t i = 0; i < gt.size(); ++i) {
    check(gt[i], "ground-truth");
    check(pred[i], "predicted");
    if (gt[i] == kVoidClass) {
      continue;
    }
    ++counted;
    if (pred[i] == kVoidClass) {
      ++missed[gt[i]];
    } else {
      ++m.confusion[static_cast<std::size_t>(gt[i]) * k + pred[i]];
    }
  }
  if (counted == 0) {
    throw DomainError("seg_metrics: no non-void ground truth");
  }
  m.iou.assign(k, std::numeric_limits<double>::quiet_NaN());
  m.acc.assign(k, std::numeric_limits<double>::quiet_NaN());
  double iou_sum = 0.0;
  double acc_sum = 0.0;
  int present = 0;
  for (std::size_t c = 0; c < k; ++c) {
    std::int64_t row = missed[c];
    std::int64_t col = 0;
    for (std::size_t o = 0; o < k; ++o) {
      row += m.confusion[c * k + o];
      col += m.confusion[o * k + c];
    }
    if (row == 0) {
      continue;
    }
    const std::int64_t tp = m.confusion[c * k + c];
    const std::int64_t fn = row - tp;
    const std::int64_t fp = col - tp;
    m.iou[c] = static_cast<double>(tp) / static_cast<double>(tp + fp + fn);
    m.acc[c] = static_cast<double>(tp) / static_cast<double>(row);
    iou_sum += m.iou[c];
    acc_sum += m.acc[c];
    ++present;
  }
  m.miou = iou_sum / present;
  m.macc = acc_sum / present;
  return m;
}

std::vector<Vec3> sample_mesh_points(const Mesh& mesh, double density_per_m2, std::uint64_t seed,
                                     std::vector<std::size_t>* face_of_point) {
  mesh.validate();
  if (!(density_per_m2 > 0.0)) {
    throw DomainError("sample_mesh_points: density must be positive");
  }
  std::vector<double> cumulative(mesh.faces.size());
  double area = 0.0;
  for (std::size_t f = 0; f < mesh.faces.size(); ++f) {
    const auto& t = mesh.faces[f];
    const Vec3& a = mesh.vertices[t[0]];
    area += 0.5 * (mesh.vertices[t[1]] - a).cross(mesh.vertices[t[2]] - a).norm();
    cumulative[f] = area;
  }
  std::vector<Vec3> points;
  if (face_of_point != nullptr) {
    face_of_point->clear();
  }
  if (!(area > 0.0)) {
    return points;
  }
  const auto n = static_cast<std::size_t>(std::ceil(area * density_per_m2));
  Rng rng(seed);
  points.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double target = rng.uniform() * area;
    auto it = std::upper_bound(cumulative.begin(), cumulative.end(), target);
    const std::size_t f =
        std::min<std::size_t>(static_cast<std::size_t>(it - cumulative.begin()), cumulative.size() - 1);
    const auto& t = mesh.faces[f];
    const double r1 = std::sqrt(rng.uniform());
    const double r2 = rng.uniform();
    const Vec3& a = mesh.vertices[t[0]];
    const Vec3& b = mesh.vertices[t[1]];
    const Vec3& c = mesh.vertices[t[2]];
    points.push_back((1.0 - r1) * a + r1 * (1.0 - r2) * b + r1 * r2 * c);
    if (face_of_point != nullptr) {
      face_of_point->push_back(f);
    }
  }
  return points;
}

std::vector<std::uint8_t> observed_mask(std::span<const Vec3> points, const FrameSet& frames,
                                        double tolerance) {
  std::vector<std::uint8_t> mask(points.size(), 0);
  const Intrinsics& k = frames.intrinsics;
  for (const Frame& f : frames.frames) {
    const Eigen::Matrix3d rt = f.pose.block<3, 3>(0, 0).transpose();
    const Vec3 t = f.pose.block<3, 1>(0, 3);
#pragma omp parallel for schedule(static)
    for (std::int64_t i = 0; i < static_cast<std::int64_t>(points.size()); ++i) {
      if (mask[i]) {
        continue;
      }
      const Vec3 pc = rt * (points[i] - t);
      if (!(pc[2] > 0.0)) {
        continue;
      }
      const long u = std::lround(k.fx * pc[0] / pc[2] + k.cx);
      const long v = std::lround(k.fy * pc[1] / pc[2] + k.cy);
      if (u < 0 || v < 0 || u >= f.width || v >= f.height) {
        continue;
      }
      const double d = f.depth_at(static_cast<int>(u), static_cast<int>(v));
      if (d > 0.0 && pc[2] <= d + tolerance) {
        mask[i] = 1;
      }
    }
  }
  return mask;
}

}  // namespace langocc
