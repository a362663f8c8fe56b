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


// Exhaustive reference versions of the evaluation metrics.

#pragma once

#include <cmath>
#include <limits>
#include <vector>

#include "langocc/evaluation.hpp"

namespace langocc::testing {

/// Per-class IoU and accuracy counted straight from the label vectors; NaN
/// for classes absent from the ground truth.
struct OracleSeg {
  std::vector<double> iou, acc;
  double miou = 0.0, macc = 0.0;
};

inline OracleSeg oracle_seg(const std::vector<int>& pred, const std::vector<int>& gt, int k) {
  OracleSeg o;
  const double nan = std::numeric_limits<double>::quiet_NaN();
  int present = 0;
  for (int c = 0; c < k; ++c) {
    long tp = 0, fp = 0, fn = 0;
    for (std::size_t i = 0; i < gt.size(); ++i) {
      if (gt[i] == kVoidClass) {
        continue;
      }
      tp += gt[i] == c && pred[i] == c;
      fp += gt[i] != c && pred[i] == c;
      fn += gt[i] == c && pred[i] != c;
    }
    if (tp + fn == 0) {
      o.iou.push_back(nan);
      o.acc.push_back(nan);
      continue;
    }
    o.iou.push_back(static_cast<double>(tp) / static_cast<double>(tp + fp + fn));
    o.acc.push_back(static_cast<double>(tp) / static_cast<double>(tp + fn));
    o.miou += o.iou.back();
    o.macc += o.acc.back();
    ++present;
  }
  o.miou /= present;
  o.macc /= present;
  return o;
}

inline bool same_or_both_nan(double a, double b, double tol) {
  if (std::isnan(a) || std::isnan(b)) {
    return std::isnan(a) && std::isnan(b);
  }
  return std::abs(a - b) <= tol;
}

/// Lattice points spaced `spacing` apart, so a rigid shift below half the
/// spacing keeps every nearest neighbour fixed.
inline std::vector<Vec3> lattice_cloud(int n, double spacing) {
  std::vector<Vec3> pts;
  for (int z = 0; z < n; ++z) {
    for (int y = 0; y < n; ++y) {
      for (int x = 0; x < n; ++x) {
        pts.emplace_back(x * spacing, y * spacing, z * spacing);
      }
    }
  }
  return pts;
}

}  // namespace langocc::testing
