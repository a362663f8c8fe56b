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


// Scalar re-implementation of the confidence fusion rules, written from the
// update equations without sharing code with the library.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <vector>

#include "langocc/scp_fusion.hpp"

namespace langocc::testing {

struct OracleGrid {
  int classes = 0;
  std::vector<std::vector<double>> cells;
};

inline OracleGrid to_oracle(const BeliefGrid& grid) {
  OracleGrid o;
  o.classes = grid.class_count();
  for (std::size_t c = 0; c < grid.cell_count(); ++c) {
    const auto b = grid.belief(static_cast<std::int64_t>(c));
    o.cells.emplace_back(b.begin(), b.end());
  }
  return o;
}

inline double oracle_weight(const OracleGrid& g, std::int64_t cell, int cls) {
  if (cell < 0 || cell >= static_cast<std::int64_t>(g.cells.size()) || cls < 0) {
    return 1.0;
  }
  const std::vector<double>& b = g.cells[cell];
  double total = 0.0;
  for (double v : b) {
    total += v > 0.0 ? v : 0.0;
  }
  if (total == 0.0) {
    return 1.0;
  }
  const double mine = b[cls] > 0.0 ? b[cls] : 0.0;
  return mine / total * g.classes;
}

inline std::vector<double> oracle_weigh(OracleGrid& g, const MeasurementBatch& batch) {
  std::vector<double> w;
  std::map<std::int64_t, std::vector<int>> counts;
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const std::int64_t cell = batch.cell_ids[i];
    const int cls = batch.class_ids[i];
    w.push_back(oracle_weight(g, cell, cls));
    if (cell >= 0 && cell < static_cast<std::int64_t>(g.cells.size()) && cls >= 0) {
      auto& c = counts[cell];
      c.resize(static_cast<std::size_t>(g.classes), 0);
      ++c[cls];
    }
  }
  for (const auto& [cell, c] : counts) {
    int n = 0;
    for (int v : c) {
      n += v;
    }
    for (int k = 0; k < g.classes; ++k) {
      double p = static_cast<double>(c[k]) / n;
      p = std::min(std::max(p, 1e-3), 1.0 - 1e-3);
      const double l = g.cells[cell][k] + std::log(p / (1.0 - p));
      g.cells[cell][k] = std::min(std::max(l, -10.0), 10.0);
    }
  }
  return w;
}

/// Random measurements over `cells` cells; about 5% carry an invalid cell
/// and 5% no class.
inline MeasurementBatch random_batch(Rng& rng, std::size_t cells, int classes, std::size_t n) {
  MeasurementBatch b;
  for (std::size_t i = 0; i < n; ++i) {
    const double u = rng.uniform();
    b.cell_ids.push_back(u < 0.05 ? -1 : static_cast<std::int64_t>(rng.below(cells)));
    b.class_ids.push_back(u > 0.95 ? kUnclassified : static_cast<int>(rng.below(classes)));
  }
  return b;
}

/// Mean normalized weight of the true class over `runs` independent
/// single-cell simulations, after each of `batches` batches of `batch_size`
/// measurements that report the true class with probability p and a uniform
/// other class otherwise.
inline std::vector<double> convergence_curve(double p, int classes, int batch_size, int batches,
                                             int runs, std::uint64_t seed) {
  std::vector<double> mean(static_cast<std::size_t>(batches), 0.0);
  Rng rng(seed);
  const SceneBounds bounds(Vec3::Zero(), Vec3::Ones());
  for (int run = 0; run < runs; ++run) {
    BeliefGrid grid(bounds, {1, 1, 1}, classes);
    for (int b = 0; b < batches; ++b) {
      MeasurementBatch batch;
      for (int i = 0; i < batch_size; ++i) {
        int cls = 0;
        if (rng.uniform() >= p) {
          cls = 1 + static_cast<int>(rng.below(static_cast<std::uint64_t>(classes - 1)));
        }
        batch.cell_ids.push_back(0);
        batch.class_ids.push_back(cls);
      }
      weigh_batch(grid, batch);
      mean[b] += confidence_weights(grid.belief(0))[0] / runs;
    }
  }
  return mean;
}

}  // namespace langocc::testing
