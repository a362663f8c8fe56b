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

#include "langocc/optimizer.hpp"

#include <cmath>
#include <istream>
#include <ostream>

#include "binary_io.hpp"

namespace langocc {

namespace {

constexpr char kMagic[5] = "OAD1";

struct StepConstants {
  double lr, b1, b2, c1, c2, eps;
};

inline void adam_entry(float& p, double g, double& m, double& v, const StepConstants& k) {
  m = k.b1 * m + (1.0 - k.b1) * g;
  v = k.b2 * v + (1.0 - k.b2) * g * g;
  const double m_hat = m / k.c1;
  const double v_hat = v / k.c2;
  p = static_cast<float>(static_cast<double>(p) - k.lr * m_hat / (std::sqrt(v_hat) + k.eps));
}

}  // namespace

Adam::Adam(const FieldSet& fields, AdamConfig config)
    : config_(config), grid_blocks_(fields.grid_block_count()) {
  if (!(config.lr_decoders > 0.0) || !(config.lr_grids > 0.0)) {
    throw DomainError("Adam: learning rates must be positive");
  }
  if (!(config.beta1 >= 0.0 && config.beta1 < 1.0 && config.beta2 >= 0.0 && config.beta2 < 1.0)) {
    throw DomainError("Adam: moment coefficients must lie in [0, 1)");
  }
  for (const auto& block : fields.parameter_blocks()) {
    m_.emplace_back(block.size(), 0.0);
    v_.emplace_back(block.size(), 0.0);
  }
}

void Adam::step(FieldSet& fields, const FieldGradient& grad) {
  auto blocks = fields.parameter_blocks();
  if (blocks.size() != m_.size() || grad.blocks.size() != m_.size()) {
    throw DomainError("Adam::step: parameter layout does not match the optimizer state");
  }
  ++step_;
  const double c1 = 1.0 - std::pow(config_.beta1, static_cast<double>(step_));
  const double c2 = 1.0 - std::pow(config_.beta2, static_cast<double>(step_));
  const StepConstants grid_k{config_.lr_grids, config_.beta1, config_.beta2, c1, c2,
                             config_.epsilon};
  const StepConstants dec_k{config_.lr_decoders, config_.beta1, config_.beta2, c1, c2,
                            config_.epsilon};

  for (std::size_t b = 0; b < grid_blocks_; ++b) {
    const int fd = grad.feat_dims[b];
    float* p = blocks[b].data();
    const double* g = grad.blocks[b].data();
    double* m = m_[b].data();
    double* v = v_[b].data();
    for (std::uint32_t vertex : grad.touched[b]) {
      const std::size_t base = static_cast<std::size_t>(vertex) * fd;
      for (int k = 0; k < fd; ++k) {
        adam_entry(p[base + k], g[base + k], m[base + k], v[base + k], grid_k);
      }
    }
  }
  for (std::size_t b = grid_blocks_; b < blocks.size(); ++b) {
    float* p = blocks[b].data();
    const double* g = grad.blocks[b].data();
    for (std::size_t i = 0; i < blocks[b].size(); ++i) {
      adam_entry(p[i], g[i], m_[b][i], v_[b][i], dec_k);
    }
  }
}

void Adam::write(std::ostream& out) const {
  detail::write_magic(out, kMagic);
  detail::write_pod(out, static_cast<std::int64_t>(step_));
  detail::write_pod(out, static_cast<std::uint32_t>(grid_blocks_));
  detail::write_pod(out, static_cast<std::uint32_t>(m_.size()));
  for (std::size_t b = 0; b < m_.size(); ++b) {
    detail::write_pod(out, static_cast<std::uint64_t>(m_[b].size()));
    detail::write_array<double>(out, m_[b]);
    detail::write_array<double>(out, v_[b]);
  }
}

Adam Adam::read(std::istream& in, const AdamConfig& config) {
  detail::expect_magic(in, kMagic, "optimizer state");
  Adam adam;
  adam.config_ = config;
  adam.step_ = detail::read_pod<std::int64_t>(in, "optimizer step");
  adam.grid_blocks_ = detail::read_pod<std::uint32_t>(in, "optimizer grid block count");
  const auto n_blocks = detail::read_pod<std::uint32_t>(in, "optimizer block count");
  if (adam.grid_blocks_ > n_blocks || n_blocks > 4096) {
    throw FormatError("optimizer state: inconsistent block counts");
  }
  adam.m_.resize(n_blocks);
  adam.v_.resize(n_blocks);
  for (std::uint32_t b = 0; b < n_blocks; ++b) {
    const auto n = detail::read_pod<std::uint64_t>(in, "optimizer block size");
    if (n > (std::uint64_t{1} << 34)) {
      throw FormatError("optimizer state: implausible block size");
    }
    adam.m_[b].resize(n);
    adam.v_[b].resize(n);
    detail::read_array<double>(in, adam.m_[b], "optimizer first moments");
    detail::read_array<double>(in, adam.v_[b], "optimizer second moments");
  }
  return adam;
}

bool Adam::operator==(const Adam& other) const {
  return step_ == other.step_ && grid_blocks_ == other.grid_blocks_ && m_ == other.m_ &&
         v_ == other.v_;
}

}  // namespace langocc
