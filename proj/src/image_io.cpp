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

#include "langocc/image_io.hpp"

#include <png.h>

#include <cstdio>
#include <memory>
#include <string>

#include "langocc/common.hpp"

namespace langocc {

namespace {

struct FileCloser {
  void operator()(std::FILE* f) const { std::fclose(f); }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

FilePtr open_file(const std::filesystem::path& path, const char* mode) {
  FilePtr f(std::fopen(path.c_str(), mode));
  if (!f) {
    throw FormatError("cannot open image file: " + path.string());
  }
  return f;
}

// Reads an image with the requested channel count and bit depth into rows of
// bytes (big-endian samples for 16-bit, as stored by PNG).
std::vector<std::uint8_t> read_png(const std::filesystem::path& path, int channels, int depth,
                                   int& width, int& height) {
  FilePtr f = open_file(path, "rb");
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw FormatError("libpng initialization failed for " + path.string());
  }
  std::vector<std::uint8_t> pixels;
  std::vector<png_bytep> rows;
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw FormatError("corrupt PNG file: " + path.string());
  }
  png_init_io(png, f.get());
  png_read_info(png, info);
  const int color_type = png_get_color_type(png, info);
  const int bit_depth = png_get_bit_depth(png, info);
  const int expected_type = channels == 3 ? PNG_COLOR_TYPE_RGB : PNG_COLOR_TYPE_GRAY;
  if (color_type != expected_type || bit_depth != depth) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw FormatError("unexpected PNG layout in " + path.string() + ": expected " +
                      std::to_string(channels) + " channel(s) at " + std::to_string(depth) +
                      " bits");
  }
  width = static_cast<int>(png_get_image_width(png, info));
  height = static_cast<int>(png_get_image_height(png, info));
  const std::size_t stride = static_cast<std::size_t>(width) * channels * (depth / 8);
  pixels.resize(stride * height);
  rows.resize(static_cast<std::size_t>(height));
  for (int y = 0; y < height; ++y) {
    rows[y] = pixels.data() + stride * y;
  }
  png_read_image(png, rows.data());
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);
  return pixels;
}

void write_png(const std::filesystem::path& path, const std::uint8_t* pixels, int width,
               int height, int channels, int depth) {
  if (width <= 0 || height <= 0) {
    throw DomainError("cannot write an empty image to " + path.string());
  }
  FilePtr f = open_file(path, "wb");
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    png_destroy_write_struct(&png, &info);
    throw FormatError("libpng initialization failed for " + path.string());
  }
  std::vector<png_bytep> rows(static_cast<std::size_t>(height));
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw FormatError("failed to write PNG file: " + path.string());
  }
  png_init_io(png, f.get());
  png_set_IHDR(png, info, static_cast<png_uint_32>(width), static_cast<png_uint_32>(height),
               depth, channels == 3 ? PNG_COLOR_TYPE_RGB : PNG_COLOR_TYPE_GRAY,
               PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  const std::size_t stride = static_cast<std::size_t>(width) * channels * (depth / 8);
  for (int y = 0; y < height; ++y) {
    rows[y] = const_cast<png_bytep>(pixels + stride * y);
  }
  png_write_info(png, info);
  png_write_image(png, rows.data());
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

}  // namespace

Rgb8Image read_png_rgb8(const std::filesystem::path& path) {
  Rgb8Image img;
  img.data = read_png(path, 3, 8, img.width, img.height);
  return img;
}

void write_png_rgb8(const std::filesystem::path& path, const Rgb8Image& image) {
  if (image.data.size() != static_cast<std::size_t>(image.width) * image.height * 3) {
    throw DomainError("RGB image buffer does not match its dimensions");
  }
  write_png(path, image.data.data(), image.width, image.height, 3, 8);
}

Gray16Image read_png_gray16(const std::filesystem::path& path) {
  Gray16Image img;
  const auto bytes = read_png(path, 1, 16, img.width, img.height);
  img.data.resize(bytes.size() / 2);
  for (std::size_t i = 0; i < img.data.size(); ++i) {
    img.data[i] = static_cast<std::uint16_t>((bytes[2 * i] << 8) | bytes[2 * i + 1]);
  }
  return img;
}

void write_png_gray16(const std::filesystem::path& path, const Gray16Image& image) {
  if (image.data.size() != static_cast<std::size_t>(image.width) * image.height) {
    throw DomainError("16-bit image buffer does not match its dimensions");
  }
  std::vector<std::uint8_t> bytes(image.data.size() * 2);
  for (std::size_t i = 0; i < image.data.size(); ++i) {
    bytes[2 * i] = static_cast<std::uint8_t>(image.data[i] >> 8);
    bytes[2 * i + 1] = static_cast<std::uint8_t>(image.data[i] & 0xff);
  }
  write_png(path, bytes.data(), image.width, image.height, 1, 16);
}

}  // namespace langocc
