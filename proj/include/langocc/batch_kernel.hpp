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

#include "langocc/objective.hpp"
#include "langocc/scp_fusion.hpp"

namespace langocc {

/// Read-only confidence state for one step: per-ray measurement classes and
/// the beliefs from before the step.
struct ScpContext {
  const BeliefGrid* beliefs = nullptr;
  std::span<const int> class_ids;
};

struct BatchOutput {
  LossReport report;
  std::vector<double> depth;
  std::vector<double> weight_sum;
  /// Belief cell at each ray's termination point (-1 when none or SCP off).
  std::vector<std::int64_t> cell_ids;
  /// Confidence weight applied to each ray's distillation term.
  std::vector<double> sg_weights;
};

/// Renders the batch, evaluates the weighted objective and, when grad is
/// non-null, accumulates its exact gradient with respect to every field
/// parameter. Rays that miss the scene bounds are dropped from every term.
///
/// Work is split into fixed 32-ray chunks. Each chunk runs the decoders as
/// matrix products over all of its samples; partial decoder gradients are
/// reduced and grid gradients scattered serially in chunk order, so the
/// result is bit-identical for any thread count and for Execution::kSerial.
BatchOutput evaluate_batch(const FieldSet& fields, const RayBundle& rays,
                           const RaySamples& samples, const LossWeights& weights,
                           const ScpContext* scp, FieldGradient* grad,
                           Execution exec = Execution::kParallel);

/// Straight-line single-ray, single-sample implementation of evaluate_batch
/// (no chunking, no matrix products, direct accumulation). Kept as the test oracle for the
/// chunked kernel; agrees with it to rounding.
BatchOutput evaluate_batch_reference(const FieldSet& fields, const RayBundle& rays,
                                     const RaySamples& samples, const LossWeights& weights,
                                     const ScpContext* scp, FieldGradient* grad);

}  // namespace langocc
