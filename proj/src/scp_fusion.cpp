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

#include "langocc/scp_fusion.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include <json.hpp>

#include "binary_io.hpp"

namespace langocc {

void ClassPrompts::validate() const {
  if (dim <= 0 || labels.empty()) {
    throw DomainError("ClassPrompts: need at least one class and a positive dimension");
  }
  if (embeddings.size() != labels.size() * static_cast<std::size_t>(dim)) {
    throw DomainError("ClassPrompts: embedding matrix has wrong size");
  }
  for (int k = 0; k < class_count(); ++k) {
    double norm2 = 0.0;
    for (float v : row(k)) {
      norm2 += static_cast<double>(v) * v;
    }
    if (std::abs(std::sqrt(norm2) - 1.0) > 1e-4) {
      throw DomainError("ClassPrompts: embedding for \"" + labels[k] + "\" is not unit norm");
    }
  }
}

namespace {

template <typename T>
int classify_impl(std::span<const T> feature, const ClassPrompts& prompts) {
  if (static_cast<int>(feature.size()) != prompts.dim) {
    throw DomainError("classify_measurement: feature has dimension " +
                      std::to_string(feature.size()) + ", prompts have " +
                      std::to_string(prompts.dim));
  }
  double norm2 = 0.0;
  for (T v : feature) {
    norm2 += static_cast<double>(v) * static_cast<double>(v);
  }
  if (!(norm2 > 0.0)) {
    return kUnclassified;
  }
  int best = kUnclassified;
  double best_score = -std::numeric_limits<double>::infinity();
  for (int k = 0; k < prompts.class_count(); ++k) {
    const auto row = prompts.row(k);
    double dot = 0.0;
    for (int i = 0; i < prompts.dim; ++i) {
      dot += static_cast<double>(feature[i]) * static_cast<double>(row[i]);
    }
    if (dot > best_score) {
      best_score = dot;
      best = k;
    }
  }
  return best;
}

}  // namespace

int classify_measurement(std::span<const double> feature, const ClassPrompts& prompts) {
  return classify_impl(feature, prompts);
}

int classify_measurement(std::span<const float> feature, const ClassPrompts& prompts) {
  return classify_impl(feature, prompts);
}

std::vector<double> observation_logodds(std::span<const int> counts) {
  long total = 0;
  for (int c : counts) {
    if (c < 0) {
      throw DomainError("observation_logodds: negative count");
    }
    total += c;
  }
  if (total == 0) {
    throw DomainError("observation_logodds: no measurements");
  }
  std::vector<double> out(counts.size());
  for (std::size_t k = 0; k < counts.size(); ++k) {
    const double p = std::clamp(static_cast<double>(counts[k]) / static_cast<double>(total),
                                kProbabilityClamp, 1.0 - kProbabilityClamp);
    out[k] = std::log(p / (1.0 - p));
  }
  return out;
}

std::vector<double> update_cell(std::span<const double> belief, std::span<const double> obs) {
  if (belief.size() != obs.size()) {
    throw DomainError("update_cell: belief and observation sizes differ");
  }
  std::vector<double> out(belief.size());
  for (std::size_t k = 0; k < belief.size(); ++k) {
    out[k] = std::clamp(belief[k] + obs[k] - kPriorLogOdds, -kLogOddsLimit, kLogOddsLimit);
  }
  return out;
}

std::vector<double> confidence_weights(std::span<const double> belief) {
  std::vector<double> out(belief.size());
  double total = 0.0;
  for (std::size_t k = 0; k < belief.size(); ++k) {
    out[k] = std::max(belief[k], 0.0);
    total += out[k];
  }
  if (total == 0.0) {
    std::fill(out.begin(), out.end(), 1.0 / static_cast<double>(belief.size()));
    return out;
  }
  for (double& w : out) {
    w /= total;
  }
  return out;
}

// ---------------------------------------------------------------------------
// BeliefGrid

BeliefGrid::BeliefGrid(const SceneBounds& bounds, std::array<int, 3> cells, int class_count)
    : bounds_(bounds), cells_(cells), class_count_(class_count) {
  if (class_count <= 0) {
    throw DomainError("BeliefGrid: class count must be positive");
  }
  for (int c : cells) {
    if (c <= 0) {
      throw DomainError("BeliefGrid: cell counts must be positive");
    }
  }
  logodds_.assign(cell_count() * static_cast<std::size_t>(class_count), kPriorLogOdds);
}

BeliefGrid BeliefGrid::for_fields(const FieldSet& fields, int class_count) {
  const GridLevel& finest = fields.semantic.levels().back();
  return BeliefGrid(fields.bounds(),
                    {finest.resolution[0] - 1, finest.resolution[1] - 1, finest.resolution[2] - 1},
                    class_count);
}

std::int64_t BeliefGrid::cell_of(const Vec3& p) const {
  if (!bounds_.contains(p)) {
    return -1;
  }
  const Vec3 extent = bounds_.extent();
  std::int64_t idx[3];
  for (int a = 0; a < 3; ++a) {
    const double u = (p[a] - bounds_.min_corner[a]) / extent[a] * cells_[a];
    idx[a] = std::clamp<std::int64_t>(static_cast<std::int64_t>(std::floor(u)), 0, cells_[a] - 1);
  }
  return (idx[2] * cells_[1] + idx[1]) * cells_[0] + idx[0];
}

bool BeliefGrid::operator==(const BeliefGrid& other) const {
  return cells_ == other.cells_ && class_count_ == other.class_count_ &&
         bounds_.min_corner == other.bounds_.min_corner &&
         bounds_.max_corner == other.bounds_.max_corner && logodds_ == other.logodds_;
}

double measurement_weight(const BeliefGrid& grid, std::int64_t cell, int class_id) {
  if (cell < 0 || static_cast<std::size_t>(cell) >= grid.cell_count() || class_id < 0 ||
      class_id >= grid.class_count()) {
    return 1.0;
  }
  const auto b = grid.belief(cell);
  double total = 0.0;
  for (double v : b) {
    total += std::max(v, 0.0);
  }
  if (total == 0.0) {
    return 1.0;
  }
  return std::max(b[class_id], 0.0) / total * static_cast<double>(grid.class_count());
}

void fold_batch(BeliefGrid& grid, const MeasurementBatch& batch) {
  if (batch.cell_ids.size() != batch.class_ids.size()) {
    throw DomainError("MeasurementBatch: cell and class arrays differ in length");
  }
  std::vector<std::pair<std::int64_t, int>> items;
  items.reserve(batch.size());
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const std::int64_t cell = batch.cell_ids[i];
    const int cls = batch.class_ids[i];
    if (cell < 0 || static_cast<std::size_t>(cell) >= grid.cell_count() || cls < 0) {
      continue;
    }
    if (cls >= grid.class_count()) {
      throw DomainError("MeasurementBatch: class id out of range");
    }
    items.emplace_back(cell, cls);
  }
  std::sort(items.begin(), items.end());
  std::vector<int> counts(static_cast<std::size_t>(grid.class_count()));
  std::size_t i = 0;
  while (i < items.size()) {
    const std::int64_t cell = items[i].first;
    std::fill(counts.begin(), counts.end(), 0);
    for (; i < items.size() && items[i].first == cell; ++i) {
      ++counts[items[i].second];
    }
    const auto obs = observation_logodds(counts);
    auto belief = grid.belief(cell);
    const auto updated = update_cell(belief, obs);
    std::copy(updated.begin(), updated.end(), belief.begin());
  }
}

std::vector<double> weigh_batch(BeliefGrid& grid, const MeasurementBatch& batch) {
  if (batch.cell_ids.size() != batch.class_ids.size()) {
    throw DomainError("MeasurementBatch: cell and class arrays differ in length");
  }
  std::vector<double> weights(batch.size());
  for (std::size_t i = 0; i < batch.size(); ++i) {
    weights[i] = measurement_weight(grid, batch.cell_ids[i], batch.class_ids[i]);
  }
  fold_batch(grid, batch);
  return weights;
}

// ---------------------------------------------------------------------------
// Files

namespace {
constexpr char kBeliefMagic[5] = "OBG1";
}

void save_beliefs(const std::filesystem::path& path, const BeliefGrid& grid) {
  std::ofstream out(path, std::ios::binary);
  if (!out) {
    throw FormatError("cannot open " + path.string() + " for writing");
  }
  detail::write_magic(out, kBeliefMagic);
  for (int c : grid.cells()) {
    detail::write_pod<std::uint32_t>(out, static_cast<std::uint32_t>(c));
  }
  detail::write_pod<std::uint32_t>(out, static_cast<std::uint32_t>(grid.class_count()));
  for (int a = 0; a < 3; ++a) {
    detail::write_pod<double>(out, grid.bounds().min_corner[a]);
  }
  for (int a = 0; a < 3; ++a) {
    detail::write_pod<double>(out, grid.bounds().max_corner[a]);
  }
  detail::write_array<double>(out, grid.logodds());
  if (!out) {
    throw FormatError("write failed: " + path.string());
  }
}

BeliefGrid load_beliefs(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw FormatError("belief file not found: " + path.string());
  }
  detail::expect_magic(in, kBeliefMagic, "belief file");
  std::array<int, 3> cells{};
  for (int& c : cells) {
    c = static_cast<int>(detail::read_pod<std::uint32_t>(in, "belief header"));
  }
  const int k = static_cast<int>(detail::read_pod<std::uint32_t>(in, "belief header"));
  Vec3 lo;
  Vec3 hi;
  for (int a = 0; a < 3; ++a) {
    lo[a] = detail::read_pod<double>(in, "belief header");
  }
  for (int a = 0; a < 3; ++a) {
    hi[a] = detail::read_pod<double>(in, "belief header");
  }
  BeliefGrid grid(SceneBounds(lo, hi), cells, k);
  detail::read_array<double>(in, grid.logodds(), "belief data");
  return grid;
}

ClassPrompts load_prompts(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) {
    throw FormatError("prompts file not found: " + path.string());
  }
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError("prompts file " + path.string() + ": " + e.what());
  }
  if (!j.is_array() || j.empty()) {
    throw FormatError("prompts file " + path.string() + ": expected a non-empty JSON array");
  }
  ClassPrompts prompts;
  for (const auto& item : j) {
    if (!item.contains("label") || !item.contains("embedding")) {
      throw FormatError("prompts file " + path.string() + ": entries need label and embedding");
    }
    const auto emb = item.at("embedding").get<std::vector<double>>();
    if (prompts.labels.empty()) {
      prompts.dim = static_cast<int>(emb.size());
    } else if (static_cast<int>(emb.size()) != prompts.dim) {
      throw FormatError("prompts file " + path.string() + ": embeddings differ in dimension");
    }
    prompts.labels.push_back(item.at("label").get<std::string>());
    for (double v : emb) {
      prompts.embeddings.push_back(static_cast<float>(v));
    }
  }
  prompts.validate();
  return prompts;
}

void save_prompts(const std::filesystem::path& path, const ClassPrompts& prompts) {
  nlohmann::json j = nlohmann::json::array();
  for (int k = 0; k < prompts.class_count(); ++k) {
    const auto row = prompts.row(k);
    j.push_back({{"label", prompts.labels[k]},
                 {"embedding", std::vector<float>(row.begin(), row.end())}});
  }
  std::ofstream out(path);
  if (!out) {
    throw FormatError("cannot open " + path.string() + " for writing");
  }
  out << j.dump(2) << '\n';
}

}  // namespace langocc
