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
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "langocc/grid_field.hpp"

namespace langocc {

/// Text embeddings (one unit row per class) that features are matched to.
struct ClassPrompts {
  int dim = 0;
  std::vector<std::string> labels;
  /// labels.size() x dim.
  std::vector<float> embeddings;

  int class_count() const { return static_cast<int>(labels.size()); }
  std::span<const float> row(int k) const {
    return {embeddings.data() + static_cast<std::size_t>(k) * dim, static_cast<std::size_t>(dim)};
  }
  /// Throws DomainError unless rows are unit-norm within 1e-4.
  void validate() const;
};

inline constexpr int kUnclassified = -1;

/// Index of the prompt with the highest cosine similarity (ties to the
/// lowest index), or kUnclassified for a zero feature.
int classify_measurement(std::span<const double> feature, const ClassPrompts& prompts);
int classify_measurement(std::span<const float> feature, const ClassPrompts& prompts);

inline constexpr double kProbabilityClamp = 1e-3;
inline constexpr double kLogOddsLimit = 10.0;
/// Prior log-odds; every class starts here.
inline constexpr double kPriorLogOdds = 0.0;

/// Per-class log(p / (1 - p)) with p = clamp(N_k / N, eps, 1 - eps).
/// DomainError when the counts sum to zero.
std::vector<double> observation_logodds(std::span<const int> counts);

/// belief + obs - l0, clamped to [-kLogOddsLimit, kLogOddsLimit].
std::vector<double> update_cell(std::span<const double> belief, std::span<const double> obs);

/// Negative log-odds floored at 0, then normalized; uniform 1/K when every
/// floored value is 0.
std::vector<double> confidence_weights(std::span<const double> belief);

/// Per-cell class log-odds over a regular lattice of cells covering bounds.
class BeliefGrid {
 public:
  BeliefGrid() = default;
  /// `cells` counts cells (not vertices) per axis.
  BeliefGrid(const SceneBounds& bounds, std::array<int, 3> cells, int class_count);

  /// One cell per finest-level voxel of the semantic grid.
  static BeliefGrid for_fields(const FieldSet& fields, int class_count);

  const SceneBounds& bounds() const { return bounds_; }
  const std::array<int, 3>& cells() const { return cells_; }
  int class_count() const { return class_count_; }
  std::size_t cell_count() const {
    return static_cast<std::size_t>(cells_[0]) * cells_[1] * cells_[2];
  }

  /// Cell containing p, or -1 outside the bounds.
  std::int64_t cell_of(const Vec3& p) const;

  std::span<const double> belief(std::int64_t cell) const {
    return {logodds_.data() + static_cast<std::size_t>(cell) * class_count_,
            static_cast<std::size_t>(class_count_)};
  }
  std::span<double> belief(std::int64_t cell) {
    return {logodds_.data() + static_cast<std::size_t>(cell) * class_count_,
            static_cast<std::size_t>(class_count_)};
  }
  const std::vector<double>& logodds() const { return logodds_; }
  std::vector<double>& logodds() { return logodds_; }

  bool operator==(const BeliefGrid& other) const;

 private:
  SceneBounds bounds_;
  std::array<int, 3> cells_{1, 1, 1};
  int class_count_ = 0;
  std::vector<double> logodds_;
};

/// Measurements of one training step. cell_ids < 0 or class_ids < 0 mark
/// measurements without an association.
struct MeasurementBatch {
  std::vector<std::int64_t> cell_ids;
  std::vector<int> class_ids;

  std::size_t size() const { return cell_ids.size(); }
};

/// K * confidence_weights(belief[cell])[class] read from the pre-batch state;
/// exactly 1 for unknown cells, unclassified measurements and cells whose
/// floored beliefs are all zero.
double measurement_weight(const BeliefGrid& grid, std::int64_t cell, int class_id);

/// Weights for every measurement from the current state, then folds the
/// batch in: per cell (ascending id) the class counts become observation
/// log-odds that update_cell adds to the belief.
std::vector<double> weigh_batch(BeliefGrid& grid, const MeasurementBatch& batch);

/// The fold-in half of weigh_batch.
void fold_batch(BeliefGrid& grid, const MeasurementBatch& batch);

// Belief blob ("OBG1"): char[4] magic, u32 cells x/y/z, u32 K,
// f64[6] bounds, then cells * K f64 log-odds in cell-major order.
void save_beliefs(const std::filesystem::path& path, const BeliefGrid& grid);
BeliefGrid load_beliefs(const std::filesystem::path& path);

// Prompts file: JSON array of {"label": string, "embedding": [D numbers]}.
ClassPrompts load_prompts(const std::filesystem::path& path);
void save_prompts(const std::filesystem::path& path, const ClassPrompts& prompts);

}  // namespace langocc
