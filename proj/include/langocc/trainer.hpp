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
#include <functional>
#include <iosfwd>
#include <stdexcept>
#include <string>

#include "langocc/batch_kernel.hpp"
#include "langocc/dataset_io.hpp"
#include "langocc/grid_field.hpp"
#include "langocc/objective.hpp"
#include "langocc/optimizer.hpp"
#include "langocc/scp_fusion.hpp"
#include "langocc/volume_renderer.hpp"

namespace langocc {

/// Raised when a loss term turns non-finite; the message names the term.
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct TrainConfig {
  int iterations = 10000;
  int rays_per_batch = 6144;
  int samples_per_ray = 132;
  double lr_decoders = 1e-2;
  double lr_grids = 1e-3;
  std::uint64_t seed = 0;
  bool scp_enabled = true;
  int log_every = 100;
  int checkpoint_every = 1000;
  FieldConfig field;
  /// Scene box; derived from the frames when empty.
  std::optional<SceneBounds> bounds;
  Execution execution = Execution::kParallel;

  void validate() const;
};

struct TrainState {
  FieldSet fields;
  BeliefGrid beliefs;
  Adam optimizer;
  std::int64_t step = 0;
  Rng rng;
  /// Exponential moving averages (factor 0.9) of the reported terms.
  LossReport running;

  FieldGradient gradient;
};

/// Fresh state: fields from config.field and config.seed, zero beliefs over
/// the prompts of `frames` (K = 0 without prompts).
TrainState init_state(const FrameSet& frames, const TrainConfig& config);

/// Axis-aligned box around every back-projected valid depth pixel and camera
/// center, padded by `margin` meters.
SceneBounds frames_bounds(const FrameSet& frames, double margin = 0.05);

RayBundle sample_batch(const FrameSet& frames, const TrainConfig& config, Rng& rng);

/// Per-ray argmax class of the ground-truth feature, kUnclassified where the
/// ray has none.
std::vector<int> classify_rays(const RayBundle& rays, const ClassPrompts& prompts);

/// One optimization step. Throws NumericalError on a non-finite loss before
/// any parameter changes.
LossReport train_step(TrainState& state, const RayBundle& batch, const LossWeights& weights,
                      const TrainConfig& config, const ClassPrompts* prompts);

struct FitHooks {
  /// Receives one JSON object per log interval.
  std::ostream* log = nullptr;
  /// Checkpoint destination; nothing is written when empty.
  std::filesystem::path checkpoint_dir;
  std::function<void(const TrainState&, const LossReport&)> on_step;
};

/// Runs train_step until state.step reaches config.iterations.
void resume(TrainState& state, const FrameSet& frames, const TrainConfig& config,
            const LossWeights& weights, const FitHooks& hooks = {});

TrainState fit(const FrameSet& frames, const TrainConfig& config, const LossWeights& weights,
               const FitHooks& hooks = {});

/// Writes `<stem>.ooc` (fields), `<stem>.obg` (beliefs) and `<stem>.ots`
/// (step, RNG and optimizer moments).
void save_train_state(const std::filesystem::path& dir, const std::string& stem,
                      const TrainState& state);
TrainState load_train_state(const std::filesystem::path& dir, const std::string& stem,
                            const TrainConfig& config);

std::string checkpoint_stem(std::int64_t step);

std::string log_line(std::int64_t step, const LossReport& report);

}  // namespace langocc
