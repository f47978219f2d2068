#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "patchbag/common.hpp"

namespace patchbag {

/// Encodes an 8-bit RGB PNG. Output carries no timestamps or text chunks, so
/// identical pixels always give identical bytes.
std::vector<std::uint8_t> encode_png_rgb(const RgbImage& image);

/// Encodes a single-channel 8-bit PNG.
std::vector<std::uint8_t> encode_png_gray(int width, int height,
                                          std::span<const std::uint8_t> pixels);

void write_png(const std::filesystem::path& path, const RgbImage& image);
void write_png_gray(const std::filesystem::path& path, int width, int height,
                    std::span<const std::uint8_t> pixels);

/// Decodes any PNG libpng understands into 8-bit RGB.
RgbImage read_png(const std::filesystem::path& path);

struct GrayImage {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> pixels;
};
GrayImage read_png_gray(const std::filesystem::path& path);

}  // namespace patchbag
