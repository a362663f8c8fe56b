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

#include "langocc/objective.hpp"

#include <algorithm>
#include <cmath>

namespace langocc {

void LossWeights::validate() const {
  for (double l : {rgb, depth, occ, fs, sg}) {
    if (!(l >= 0.0) || !std::isfinite(l)) {
      throw DomainError("LossWeights: lambdas must be finite and non-negative");
    }
  }
  if (!(truncation > 0.0)) {
    throw DomainError("LossWeights: truncation must be positive");
  }
  if (!(huber_delta > 0.0)) {
    throw DomainError("LossWeights: huber delta must be positive");
  }
}

double loss_rgb(std::span<const Vec3> pred, std::span<const Vec3> gt) {
  if (pred.size() != gt.size()) {
    throw DomainError("loss_rgb: shapes differ");
  }
  if (pred.empty()) {
    return 0.0;
  }
  double sum = 0.0;
  for (std::size_t r = 0; r < pred.size(); ++r) {
    sum += (pred[r] - gt[r]).squaredNorm();
  }
  return sum / static_cast<double>(pred.size());
}

double loss_depth(std::span<const double> pred, std::span<const double> gt,
                  std::span<const std::uint8_t> valid) {
  if (pred.size() != gt.size() || pred.size() != valid.size()) {
    throw DomainError("loss_depth: shapes differ");
  }
  double sum = 0.0;
  int n = 0;
  for (std::size_t r = 0; r < pred.size(); ++r) {
    if (!valid[r]) {
      continue;
    }
    const double e = pred[r] - gt[r];
    sum += e * e;
    ++n;
  }
  return n > 0 ? sum / n : 0.0;
}

double bce(double pred, int target) {
  return -(target * std::log(pred) + (1 - target) * std::log(1.0 - pred));
}

double bce_from_logit(double logit, int target) {
  return target ? softplus(-logit) : softplus(logit);
}

SampleZone classify_sample(double z, double gt_depth, double truncation) {
  if (!(gt_depth > 0.0)) {
    return SampleZone::kIgnored;
  }
  if (std::abs(gt_depth - z) <= truncation) {
    return SampleZone::kTruncation;
  }
  if (z < gt_depth - truncation) {
    return SampleZone::kFreeSpace;
  }
  return SampleZone::kIgnored;
}

OccFsLoss loss_occ_fs(const RaySamples& samples, std::span<const double> occs,
                      std::span<const double> gt_depth, double truncation) {
  const std::size_t m = samples.ray_count();
  if (occs.size() != samples.depths.size() || gt_depth.size() != m) {
    throw DomainError("loss_occ_fs: shapes differ");
  }
  OccFsLoss out;
  double occ_sum = 0.0;
  double fs_sum = 0.0;
  for (std::size_t r = 0; r < m; ++r) {
    double tr = 0.0;
    double fs = 0.0;
    int n_tr = 0;
    int n_fs = 0;
    const auto z = samples.ray_depths(r);
    const auto valid = samples.ray_valid(r);
    for (int i = 0; i < samples.n_samples; ++i) {
      if (!valid[i]) {
        continue;
      }
      const double o = occs[r * samples.n_samples + i];
      switch (classify_sample(z[i], gt_depth[r], truncation)) {
        case SampleZone::kTruncation:
          tr += bce(o, 1);
          ++n_tr;
          break;
        case SampleZone::kFreeSpace:
          fs += bce(o, 0);
          ++n_fs;
          break;
        case SampleZone::kIgnored:
          break;
      }
    }
    if (n_tr > 0) {
      occ_sum += tr / n_tr;
      ++out.occ_rays;
      out.occ_samples += n_tr;
    }
    if (n_fs > 0) {
      fs_sum += fs / n_fs;
      ++out.fs_rays;
      out.fs_samples += n_fs;
    }
  }
  out.occ = out.occ_rays > 0 ? occ_sum / out.occ_rays : 0.0;
  out.fs = out.fs_rays > 0 ? fs_sum / out.fs_rays : 0.0;
  return out;
}

double huber(double x, double delta) {
  return x <= delta ? 0.5 * x * x : delta * (x - 0.5 * delta);
}

double loss_sg(std::span<const double> rendered, std::span<const float> gt,
               std::span<const double> weights, std::span<const std::uint8_t> defined, int dim,
               const LossWeights& config) {
  const std::size_t m = defined.size();
  if (rendered.size() != m * dim || gt.size() != m * dim || weights.size() != m) {
    throw DomainError("loss_sg: shapes differ");
  }
  double sum = 0.0;
  int n = 0;
  for (std::size_t r = 0; r < m; ++r) {
    if (!defined[r]) {
      continue;
    }
    double dot = 0.0;
    double gnorm2 = 0.0;
    for (int k = 0; k < dim; ++k) {
      const double g = gt[r * dim + k];
      dot += rendered[r * dim + k] * g;
      gnorm2 += g * g;
    }
    const double cos = dot / std::sqrt(gnorm2);
    const double residual = 1.0 - cos;
    const double u = weights[r] * residual * residual;
    sum += config.robust_kernel ? huber(u, config.huber_delta) : u;
    ++n;
  }
  return n > 0 ? sum / n : 0.0;
}

LossReport total_loss(LossReport terms, const LossWeights& w) {
  terms.total = w.rgb * terms.rgb + w.depth * terms.depth + w.occ * terms.occ + w.fs * terms.fs +
                w.sg * terms.sg;
  return terms;
}

std::string first_non_finite(const LossReport& report) {
  const std::pair<const char*, double> terms[] = {{"rgb", report.rgb},     {"depth", report.depth},
                                                  {"occ", report.occ},     {"fs", report.fs},
                                                  {"sg", report.sg},       {"total", report.total}};
  for (const auto& [name, value] : terms) {
    if (!std::isfinite(value)) {
      return name;
    }
  }
  return {};
}

}  // namespace langocc
