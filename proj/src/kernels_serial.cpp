#include <algorithm>
#include <cmath>
#include <numbers>
#include <vector>

#include "kernel_bodies.hpp"
#include "patchbag/kernels.hpp"

namespace patchbag::kernels {

RotationMap RotationMap::about(double cx, double cy, double degrees) {
  const double rad = degrees * std::numbers::pi / 180.0;
  return RotationMap{cx, cy, std::cos(rad), std::sin(rad)};
}

void describe_cell(const RgbImage& image, int x0, int y0, int size,
                   std::span<float> out) {
  const std::size_t n = static_cast<std::size_t>(size) * size;
  std::vector<double> gray(n);
  double sum[3] = {0, 0, 0};
  for (int y = 0; y < size; ++y) {
    for (int x = 0; x < size; ++x) {
      const std::uint8_t* p = image.at(x0 + x, y0 + y);
      for (int c = 0; c < 3; ++c) sum[c] += p[c];
      gray[static_cast<std::size_t>(y) * size + x] =
          0.299 * p[0] + 0.587 * p[1] + 0.114 * p[2];
    }
  }
  double mean[3];
  for (int c = 0; c < 3; ++c) mean[c] = sum[c] / static_cast<double>(n);
  double sq[3] = {0, 0, 0};
  for (int y = 0; y < size; ++y) {
    for (int x = 0; x < size; ++x) {
      const std::uint8_t* p = image.at(x0 + x, y0 + y);
      for (int c = 0; c < 3; ++c) {
        const double dv = p[c] - mean[c];
        sq[c] += dv * dv;
      }
    }
  }
  for (int c = 0; c < 3; ++c) {
    out[c] = static_cast<float>(mean[c] / 255.0);
    out[3 + c] = static_cast<float>(std::sqrt(sq[c] / static_cast<double>(n)) / 255.0);
  }

  // Unsigned gradient orientation, 8 bins over [0, pi), magnitude weighted.
  // Central differences clamped to the cell so a cell depends only on its
  // own pixels.
  double hist[8] = {0, 0, 0, 0, 0, 0, 0, 0};
  const auto g = [&](int x, int y) { return gray[static_cast<std::size_t>(y) * size + x]; };
  for (int y = 0; y < size; ++y) {
    const int ym = std::max(y - 1, 0);
    const int yp = std::min(y + 1, size - 1);
    for (int x = 0; x < size; ++x) {
      const int xm = std::max(x - 1, 0);
      const int xp = std::min(x + 1, size - 1);
      const double gx = g(xp, y) - g(xm, y);
      const double gy = g(x, yp) - g(x, ym);
      const double mag = std::sqrt(gx * gx + gy * gy);
      if (mag <= 0.0) continue;
      double theta = std::atan2(gy, gx);
      if (theta < 0.0) theta += std::numbers::pi;
      if (theta >= std::numbers::pi) theta -= std::numbers::pi;
      const int bin = std::min(7, static_cast<int>(theta / (std::numbers::pi / 8.0)));
      hist[bin] += mag;
    }
  }
  double total = 0.0;
  for (double h : hist) total += h;
  for (int b = 0; b < 8; ++b) {
    out[6 + b] = total > 0.0 ? static_cast<float>(hist[b] / total) : 0.0f;
  }

  const auto rank = [&](double p) {
    return static_cast<std::size_t>(std::lround(p * static_cast<double>(n - 1)));
  };
  const std::size_t lo = rank(0.1);
  const std::size_t hi = rank(0.9);
  std::nth_element(gray.begin(), gray.begin() + lo, gray.end());
  const double p10 = gray[lo];
  std::nth_element(gray.begin(), gray.begin() + hi, gray.end());
  const double p90 = gray[hi];
  out[14] = static_cast<float>(p10 / 255.0);
  out[15] = static_cast<float>(p90 / 255.0);
}

namespace serial {

void assign_nearest(const FloatMatrix& points, const FloatMatrix& centroids,
                    std::span<std::uint32_t> labels, std::span<double> dist2) {
  for (std::size_t i = 0; i < points.rows; ++i) {
    detail::nearest_one(points.row(i), centroids, labels[i], dist2[i]);
  }
}

std::vector<std::uint8_t> rotate_mask(std::span<const std::uint8_t> mask, int width,
                                      int height, const RotationMap& map,
                                      const Rect& out) {
  std::vector<std::uint8_t> result(static_cast<std::size_t>(out.area()));
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
  for (int r = 0; r < rows; ++r) {
    for (int c = 0; c < cols; ++c) {
      counts[static_cast<std::size_t>(r) * cols + c] =
          detail::window_count(mask, width, window, r, c);
    }
  }
  return counts;
}

std::vector<float> describe_patches(std::span<const RgbImage* const> patches, int grid) {
  const std::size_t cells = static_cast<std::size_t>(grid) * grid;
  std::vector<float> out(patches.size() * cells * kCellDescriptorWidth);
  for (std::size_t p = 0; p < patches.size(); ++p) {
    const RgbImage& img = *patches[p];
    const int size = img.width / grid;
    for (std::size_t c = 0; c < cells; ++c) {
      const int gx = static_cast<int>(c % grid);
      const int gy = static_cast<int>(c / grid);
      describe_cell(img, gx * size, gy * size, size,
                    std::span(out).subspan((p * cells + c) * kCellDescriptorWidth,
                                           kCellDescriptorWidth));
    }
  }
  return out;
}

std::uint64_t count_tissue_pixels(const RgbImage& image, int background_level) {
  std::uint64_t count = 0;
  const std::size_t n = static_cast<std::size_t>(image.width) * image.height;
  for (std::size_t i = 0; i < n; ++i) {
    count += detail::is_tissue(image.pixels.data() + 3 * i, background_level);
  }
  return count;
}

}  // namespace serial
}  // namespace patchbag::kernels
