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

#include "langocc/checkpoint.hpp"

#include <fstream>

#include "binary_io.hpp"

namespace langocc {

using detail::read_array;
using detail::read_pod;
using detail::write_array;
using detail::write_pod;

namespace {

constexpr char kMagic[5] = "OOC1";

void write_dims(std::ostream& out, const Decoder& decoder) {
  write_pod<std::uint32_t>(out, static_cast<std::uint32_t>(decoder.dims().size()));
  for (int d : decoder.dims()) {
    write_pod<std::uint32_t>(out, static_cast<std::uint32_t>(d));
  }
}

std::vector<int> read_dims(std::istream& in) {
  const auto n = read_pod<std::uint32_t>(in, "checkpoint decoder header");
  if (n < 2 || n > 64) {
    throw FormatError("checkpoint: implausible decoder layer count " + std::to_string(n));
  }
  std::vector<int> dims(n);
  for (auto& d : dims) {
    d = static_cast<int>(read_pod<std::uint32_t>(in, "checkpoint decoder header"));
  }
  return dims;
}

}  // namespace

void write_checkpoint(std::ostream& out, const FieldSet& fields) {
  const auto& geo = fields.geometry.levels();
  const std::size_t n_levels = geo.size();
  for (const MultiResGrid* g : {&fields.color, &fields.semantic}) {
    if (g->levels().size() != n_levels) {
      throw DomainError("checkpoint: grids must share the level count");
    }
    for (std::size_t l = 0; l < n_levels; ++l) {
      if (g->levels()[l].resolution != geo[l].resolution) {
        throw DomainError("checkpoint: grids must share per-level resolutions");
      }
    }
  }
  detail::write_magic(out, kMagic);
  write_pod<std::uint32_t>(out, static_cast<std::uint32_t>(n_levels));
  for (const GridLevel& level : geo) {
    for (int r : level.resolution) {
      write_pod<std::uint32_t>(out, static_cast<std::uint32_t>(r));
    }
  }
  for (const MultiResGrid* g : {&fields.geometry, &fields.color, &fields.semantic}) {
    for (const GridLevel& level : g->levels()) {
      write_pod<std::uint32_t>(out, static_cast<std::uint32_t>(level.feat_dim));
    }
  }
  write_pod<std::uint32_t>(out, static_cast<std::uint32_t>(fields.semantic_dim));
  for (int a = 0; a < 3; ++a) {
    write_pod<double>(out, fields.bounds().min_corner[a]);
  }
  for (int a = 0; a < 3; ++a) {
    write_pod<double>(out, fields.bounds().max_corner[a]);
  }
  write_dims(out, fields.occ_decoder);
  write_dims(out, fields.color_decoder);
  write_dims(out, fields.sem_decoder);
  for (const auto& block : fields.parameter_blocks()) {
    write_array<float>(out, block);
  }
  if (!out) {
    throw FormatError("checkpoint: write failed");
  }
}

FieldSet read_checkpoint(std::istream& in) {
  detail::expect_magic(in, kMagic, "checkpoint");
  const auto n_levels = read_pod<std::uint32_t>(in, "checkpoint header");
  if (n_levels == 0 || n_levels > 32) {
    throw FormatError("checkpoint: implausible level count " + std::to_string(n_levels));
  }
  std::vector<std::array<int, 3>> res(n_levels);
  for (auto& r : res) {
    for (int& v : r) {
      v = static_cast<int>(read_pod<std::uint32_t>(in, "checkpoint header"));
      if (v < 2 || v > (1 << 16)) {
        throw FormatError("checkpoint: implausible resolution " + std::to_string(v));
      }
    }
  }
  std::array<std::vector<int>, 3> feat_dims;
  for (auto& dims : feat_dims) {
    dims.resize(n_levels);
    for (int& d : dims) {
      d = static_cast<int>(read_pod<std::uint32_t>(in, "checkpoint header"));
    }
  }
  FieldSet fields;
  fields.semantic_dim = static_cast<int>(read_pod<std::uint32_t>(in, "checkpoint header"));
  Vec3 lo;
  Vec3 hi;
  for (int a = 0; a < 3; ++a) {
    lo[a] = read_pod<double>(in, "checkpoint bounds");
  }
  for (int a = 0; a < 3; ++a) {
    hi[a] = read_pod<double>(in, "checkpoint bounds");
  }
  const SceneBounds bounds(lo, hi);
  fields.geometry = MultiResGrid::zeros(bounds, res, feat_dims[0]);
  fields.color = MultiResGrid::zeros(bounds, res, feat_dims[1]);
  fields.semantic = MultiResGrid::zeros(bounds, res, feat_dims[2]);
  fields.occ_decoder = Decoder(read_dims(in));
  fields.color_decoder = Decoder(read_dims(in));
  fields.sem_decoder = Decoder(read_dims(in));
  for (auto& block : fields.parameter_blocks()) {
    read_array<float>(in, block, "checkpoint parameters");
  }
  fields.validate();
  return fields;
}

void save_checkpoint(const std::filesystem::path& path, const FieldSet& fields) {
  std::ofstream out(path, std::ios::binary);
  if (!out) {
    throw FormatError("cannot open " + path.string() + " for writing");
  }
  write_checkpoint(out, fields);
}

FieldSet load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw FormatError("checkpoint not found: " + path.string());
  }
  return read_checkpoint(in);
}

}  // namespace langocc
