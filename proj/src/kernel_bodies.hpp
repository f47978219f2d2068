#pragma once

// Per-item bodies shared by the OpenMP and serial kernel loops.

#include <cmath>
#include <cstdint>
#include <limits>
#include <span>

#include "patchbag/kernels.hpp"

namespace patchbag::kernels::detail {

inline void nearest_one(std::span<const float> point, const FloatMatrix& centroids,
                        std::uint32_t& label, double& dist2) {
  double best = std::numeric_limits<double>::infinity();
  std::uint32_t best_index = 0;
  const std::size_t d = centroids.cols;
  for (std::size_t c = 0; c < centroids.rows; ++c) {
    const float* centroid = centroids.data.data() + c * d;
    double s = 0.0;
    for (std::size_t j = 0; j < d; ++j) {
      const double diff = static_cast<double>(point[j]) - centroid[j];
      s += diff * diff;
    }
    if (s < best) {
      best = s;
      best_index = static_cast<std::uint32_t>(c);
    }
  }
  label = best_index;
  dist2 = best;
}

inline std::uint8_t mask_sample(std::span<const std::uint8_t> mask, int width,
                                int height, const RotationMap& map, double qx,
                                double qy) {
  double x = 0.0;
  double y = 0.0;
  map.inverse(qx, qy, x, y);
  const double fx = std::floor(x);
  const double fy = std::floor(y);
  if (fx < 0.0 || fy < 0.0 || fx >= width || fy >= height) return 0;
  return mask[static_cast<std::size_t>(fy) * width + static_cast<std::size_t>(fx)];
}

inline void image_sample(const RgbImage& image, const RotationMap& map, double qx,
                         double qy, std::uint8_t* out) {
  double x = 0.0;
  double y = 0.0;
  map.inverse(qx, qy, x, y);
  // Index space: pixel centres sit at integer coordinates.
  x -= 0.5;
  y -= 0.5;
  if (x < -1.0 || y < -1.0 || x > image.width || y > image.height) {
    out[0] = out[1] = out[2] = 255;
    return;
  }
  const double fx = std::floor(x);
  const double fy = std::floor(y);
  const int x0 = static_cast<int>(fx);
  const int y0 = static_cast<int>(fy);
  const double ax = x - fx;
  const double ay = y - fy;
  const double w[4] = {(1 - ax) * (1 - ay), ax * (1 - ay), (1 - ax) * ay, ax * ay};
  const int xs[4] = {x0, x0 + 1, x0, x0 + 1};
  const int ys[4] = {y0, y0, y0 + 1, y0 + 1};
  double acc[3] = {0.0, 0.0, 0.0};
  for (int k = 0; k < 4; ++k) {
    const bool inside =
        xs[k] >= 0 && ys[k] >= 0 && xs[k] < image.width && ys[k] < image.height;
    for (int c = 0; c < 3; ++c) {
      acc[c] += w[k] * (inside ? image.at(xs[k], ys[k])[c] : 255.0);
    }
  }
  for (int c = 0; c < 3; ++c) {
    const double v = std::floor(acc[c] + 0.5);
    out[c] = static_cast<std::uint8_t>(v < 0 ? 0 : (v > 255 ? 255 : v));
  }
}

inline std::uint32_t window_count(std::span<const std::uint8_t> mask, int width,
                                  int window, int row, int col) {
  std::uint32_t count = 0;
  for (int y = row * window; y < (row + 1) * window; ++y) {
    const std::uint8_t* line = mask.data() + static_cast<std::size_t>(y) * width;
    for (int x = col * window; x < (col + 1) * window; ++x) count += line[x] != 0;
  }
  return count;
}

inline bool is_tissue(const std::uint8_t* rgb, int background_level) {
  // mean < level  <=>  sum < 3 * level
  return static_cast<int>(rgb[0]) + rgb[1] + rgb[2] < 3 * background_level;
}

}  // namespace patchbag::kernels::detail
