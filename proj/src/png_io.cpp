#include "patchbag/png_io.hpp"

#include <png.h>

#include <cstring>

#include "patchbag/binary_io.hpp"

namespace patchbag {
namespace {

std::vector<std::uint8_t> encode(int width, int height, png_uint_32 format,
                                 const std::uint8_t* pixels) {
  png_image image;
  std::memset(&image, 0, sizeof(image));
  image.version = PNG_IMAGE_VERSION;
  image.width = static_cast<png_uint_32>(width);
  image.height = static_cast<png_uint_32>(height);
  image.format = format;

  png_alloc_size_t size = 0;
  if (!png_image_write_get_memory_size(image, size, 0, pixels, 0, nullptr)) {
    throw Error(ErrorCode::IoError,
                std::string("PNG size query failed: ") + image.message);
  }
  std::vector<std::uint8_t> out(size);
  if (!png_image_write_to_memory(&image, out.data(), &size, 0, pixels, 0,
                                 nullptr)) {
    throw Error(ErrorCode::IoError,
                std::string("PNG encode failed: ") + image.message);
  }
  out.resize(size);
  return out;
}

std::vector<std::uint8_t> decode(const std::filesystem::path& path,
                                 png_uint_32 format, int& width, int& height) {
  const auto bytes = read_file_bytes(path);
  png_image image;
  std::memset(&image, 0, sizeof(image));
  image.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_memory(&image, bytes.data(), bytes.size())) {
    throw Error(ErrorCode::IoError,
                "cannot decode PNG " + path.string() + ": " + image.message);
  }
  image.format = format;
  std::vector<std::uint8_t> pixels(PNG_IMAGE_SIZE(image));
  if (!png_image_finish_read(&image, nullptr, pixels.data(), 0, nullptr)) {
    png_image_free(&image);
    throw Error(ErrorCode::IoError,
                "cannot decode PNG " + path.string() + ": " + image.message);
  }
  width = static_cast<int>(image.width);
  height = static_cast<int>(image.height);
  return pixels;
}

}  // namespace

std::vector<std::uint8_t> encode_png_rgb(const RgbImage& image) {
  return encode(image.width, image.height, PNG_FORMAT_RGB, image.pixels.data());
}

std::vector<std::uint8_t> encode_png_gray(int width, int height,
                                          std::span<const std::uint8_t> pixels) {
  return encode(width, height, PNG_FORMAT_GRAY, pixels.data());
}

void write_png(const std::filesystem::path& path, const RgbImage& image) {
  atomic_write_file(path, encode_png_rgb(image));
}

void write_png_gray(const std::filesystem::path& path, int width, int height,
                    std::span<const std::uint8_t> pixels) {
  atomic_write_file(path, encode_png_gray(width, height, pixels));
}

RgbImage read_png(const std::filesystem::path& path) {
  RgbImage out;
  out.pixels = decode(path, PNG_FORMAT_RGB, out.width, out.height);
  return out;
}

GrayImage read_png_gray(const std::filesystem::path& path) {
  GrayImage out;
  out.pixels = decode(path, PNG_FORMAT_GRAY, out.width, out.height);
  return out;
}

}  // namespace patchbag
