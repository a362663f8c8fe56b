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

#include <span>
#include <string>
#include <vector>

#include "langocc/volume_renderer.hpp"

namespace langocc {

/// Loss term weights and the occupancy/robust-kernel hyper-parameters.
struct LossWeights {
  double rgb = 10.0;
  double depth = 1.0;
  double occ = 10.0;
  double fs = 1.0;
  double sg = 2.0;
  /// Truncation band t (meters) for occupancy supervision.
  double truncation = 0.05;
  double huber_delta = 1.0;
  /// false replaces the Huber kernel with the identity.
  bool robust_kernel = true;

  void validate() const;
};

struct LossReport {
  double rgb = 0.0;
  double depth = 0.0;
  double occ = 0.0;
  double fs = 0.0;
  double sg = 0.0;
  double total = 0.0;
  int rgb_rays = 0;
  int depth_rays = 0;
  int occ_rays = 0;
  int fs_rays = 0;
  int sg_rays = 0;
  int occ_samples = 0;
  int fs_samples = 0;
};

/// Mean squared color error over rays; 0 for an empty batch.
double loss_rgb(std::span<const Vec3> pred, std::span<const Vec3> gt);
/// Mean squared depth error over rays with valid[r] != 0; 0 when none.
double loss_depth(std::span<const double> pred, std::span<const double> gt,
                  std::span<const std::uint8_t> valid);

/// Binary cross-entropy of a probability against a {0, 1} target.
double bce(double pred, int target);
/// Same quantity from the pre-sigmoid logit, stable for large |logit|.
double bce_from_logit(double logit, int target);

enum class SampleZone { kTruncation, kFreeSpace, kIgnored };

/// |gt - z| <= t is the truncation band, z < gt - t free space, everything
/// behind the band (or rays without depth) is unsupervised.
SampleZone classify_sample(double z, double gt_depth, double truncation);

struct OccFsLoss {
  double occ = 0.0;
  double fs = 0.0;
  int occ_rays = 0;
  int fs_rays = 0;
  int occ_samples = 0;
  int fs_samples = 0;
};

/// Ray-mean of per-ray sample-means of BCE over the truncation band (target 1)
/// and free space (target 0). occs is ray_count x n_samples.
OccFsLoss loss_occ_fs(const RaySamples& samples, std::span<const double> occs,
                      std::span<const double> gt_depth, double truncation);

double huber(double x, double delta);

/// Mean over defined rays of rho(w * (1 - cos(F, S))^2). gt rows are
/// normalized before the cosine; rays with defined[r] == 0 are skipped.
double loss_sg(std::span<const double> rendered, std::span<const float> gt,
               std::span<const double> weights, std::span<const std::uint8_t> defined, int dim,
               const LossWeights& config);

/// Fills total = sum of lambda_k * term_k (all other fields are kept).
LossReport total_loss(LossReport terms, const LossWeights& weights);

/// Name of the first non-finite term of a report, or empty when all finite.
std::string first_non_finite(const LossReport& report);

}  // namespace langocc
