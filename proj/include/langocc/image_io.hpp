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
#include <vector>

namespace langocc {

/// Interleaved 8-bit RGB, row-major.
struct Rgb8Image {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> data;
};

/// Single-channel 16-bit image, row-major.
struct Gray16Image {
  int width = 0;
  int height = 0;
  std::vector<std::uint16_t> data;
};

/// Throws FormatError naming the file on I/O or decode failure, or when the
/// file is not the expected bit depth and channel layout.
Rgb8Image read_png_rgb8(const std::filesystem::path& path);
void write_png_rgb8(const std::filesystem::path& path, const Rgb8Image& image);

Gray16Image read_png_gray16(const std::filesystem::path& path);
void write_png_gray16(const std::filesystem::path& path, const Gray16Image& image);

}  // namespace langocc
