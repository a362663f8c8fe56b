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

#include <filesystem>
#include <iosfwd>

#include "langocc/grid_field.hpp"

namespace langocc {

// Field checkpoint ("OOC1"). Layout, all little-endian:
//   char[4]  "OOC1"
//   u32      level count L
//   L x u32[3] vertex resolution per level (shared by the three grids)
//   3 x L x u32 feature width per level (geometry, color, semantic)
//   u32      semantic dimension D
//   f64[6]   scene bounds min xyz, max xyz
//   3 x { u32 n, n x u32 } decoder layer widths (occupancy, color, semantic)
//   f32 arrays of every parameter block in FieldSet::parameter_blocks() order
void write_checkpoint(std::ostream& out, const FieldSet& fields);
FieldSet read_checkpoint(std::istream& in);

void save_checkpoint(const std::filesystem::path& path, const FieldSet& fields);
FieldSet load_checkpoint(const std::filesystem::path& path);

}  // namespace langocc
