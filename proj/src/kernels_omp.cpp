#include <omp.h>

#include <vector>

#include "kernel_bodies.hpp"
#include "patchbag/kernels.hpp"

namespace patchbag::kernels {

void assign_nearest(const FloatMatrix& points, const FloatMatrix& centroids,
                    std::span<std::uint32_t> labels, std::span<double> dist2) {
  const auto n = static_cast<std::int64_t>(points.rows);
#pragma omp parallel for schedule(static)
  for (std::int64_t i = 0; i < n; ++i) {
    detail::nearest_one(points.row(static_cast<std::size_t>(i)), centroids,
                        labels[static_cast<std::size_t>(i)],
                        dist2[static_cast<std::size_t>(i)]);
  }
}

std::vector<std::uint8_t> rotate_mask(std::span<const std::uint8_t> mask, int width,
                                      int height, const RotationMap& map,
                                      const Rect& out) {
  std::vector<std::uint8_t> result(static_cast<std::size_t>(out.area()));
#pragma omp parallel for schedule(static)
  for (std::int64_t y = 0; y < out.height; ++y) {
    for (std::int64_t x = 0; x < out.width; ++x) {
      result[static_cast<std::size_t>(y * out.width + x)] = detail::mask_sample(
          mask, width, height, map, static_cast<double>(out.x + x) + 0.5,
          static_cast<double>(out.y + y) + 0.5);
    }
  }
  return result;
}

RgbImage rotate_image(const RgbImage& image, const RotationMap& map, const Rect& out) {
  RgbImage result(static_cast<int>(out.width), static_cast<int>(out.height));
#pragma omp parallel for schedule(static)
  for (int y = 0; y < result.height; ++y) {
    for (int x = 0; x < result.width; ++x) {
      detail::image_sample(image, map, static_cast<double>(out.x + x) + 0.5,
                           static_cast<double>(out.y + y) + 0.5, result.at(x, y));
    }
  }
  return result;
}

std::vector<std::uint32_t> window_counts(std::span<const std::uint8_t> mask,
                                         int width, int height, int window) {
  const int rows = height / window;
  const int cols = width / window;
  std::vector<std::uint32_t> counts(static_cast<std::size_t>(rows) * cols);
#pragma omp parallel for collapse(2) schedule(static)
  for (int r = 0; r < rows; ++r) {
    for (int c = 0; c < cols; ++c) {
      counts[static_cast<std::size_t>(r) * cols + c] =
          detail::window_count(mask, width, window, r, c);
    }
  }
  return counts;
}

std::vector<float> describe_patches(std::span<const RgbImage* const> patches, int grid) {
  const std::int64_t cells = static_cast<std::int64_t>(grid) * grid;
  const std::int64_t items = static_cast<std::int64_t>(patches.size()) * cells;
  std::vector<float> out(static_cast<std::size_t>(items) * kCellDescriptorWidth);
#pragma omp parallel for schedule(dynamic, 4)
  for (std::int64_t item = 0; item < items; ++item) {
    const RgbImage& img = *patches[static_cast<std::size_t>(item / cells)];
    const int c = static_cast<int>(item % cells);
    const int size = img.width / grid;
    describe_cell(img, (c % grid) * size, (c / grid) * size, size,
                  std::span(out).subspan(static_cast<std::size_t>(item) * kCellDescriptorWidth,
                                         kCellDescriptorWidth));
  }
  return out;
}

std::uint64_t count_tissue_pixels(const RgbImage& image, int background_level) {
  std::uint64_t count = 0;
  const auto n = static_cast<std::int64_t>(image.width) * image.height;
#pragma omp parallel for reduction(+ : count) schedule(static)
  for (std::int64_t i = 0; i < n; ++i) {
    count += detail::is_tissue(image.pixels.data() + 3 * i, background_level);
  }
  return count;
}

}  // namespace patchbag::kernels
