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
#include <iosfwd>
#include <vector>

#include "langocc/grid_field.hpp"

namespace langocc {

struct AdamConfig {
  double lr_decoders = 1e-2;
  double lr_grids = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

/// Adam with lazy updates for grid features: only vertices listed as touched
/// in the gradient are stepped, and their moments are the only ones decayed.
/// Decoder parameters take dense steps.
class Adam {
 public:
  Adam() = default;
  Adam(const FieldSet& fields, AdamConfig config);

  const AdamConfig& config() const { return config_; }
  std::int64_t step_count() const { return step_; }

  void step(FieldSet& fields, const FieldGradient& grad);

  void write(std::ostream& out) const;
  static Adam read(std::istream& in, const AdamConfig& config);

  bool operator==(const Adam& other) const;

 private:
  AdamConfig config_;
  std::int64_t step_ = 0;
  std::size_t grid_blocks_ = 0;
  std::vector<std::vector<double>> m_;
  std::vector<std::vector<double>> v_;
};

}  // namespace langocc
