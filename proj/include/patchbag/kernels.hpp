#pragma once

// Data-parallel inner loops. Every kernel has an OpenMP implementation in
// patchbag::kernels and a single-threaded reference with the same signature
// in patchbag::kernels::serial. Both produce bit-identical results; the
// serial path exists for tests and for the benchmark baseline.

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "patchbag/common.hpp"

namespace patchbag::kernels {

/// Descriptor width of the handcrafted cell descriptor.
inline constexpr std::size_t kCellDescriptorWidth = 16;

/// Inverse rotation about a centre, in continuous pixel coordinates where
/// pixel (i, j) covers [i, i+1) x [j, j+1).
struct RotationMap {
  double cx = 0.0;
  double cy = 0.0;
  double cos_t = 1.0;
  double sin_t = 0.0;

  static RotationMap about(double cx, double cy, double degrees);

  /// Forward map: source point to rotated frame.
  void forward(double x, double y, double& qx, double& qy) const {
    const double dx = x - cx;
    const double dy = y - cy;
    qx = cx + cos_t * dx - sin_t * dy;
    qy = cy + sin_t * dx + cos_t * dy;
  }
  /// Inverse map: rotated frame point to source.
  void inverse(double qx, double qy, double& x, double& y) const {
    const double dx = qx - cx;
    const double dy = qy - cy;
    x = cx + cos_t * dx + sin_t * dy;
    y = cy - sin_t * dx + cos_t * dy;
  }
};

/// Nearest-centroid assignment. `points` is n x d, `centroids` k x d.
/// Ties go to the lowest centroid index. `dist2` receives squared Euclidean
/// distances accumulated in double precision.
void assign_nearest(const FloatMatrix& points, const FloatMatrix& centroids,
                    std::span<std::uint32_t> labels, std::span<double> dist2);

/// Renders `out` (a rectangle in the rotated frame) from a binary mask by
/// nearest-neighbour inverse mapping. Outside the source reads as 0.
std::vector<std::uint8_t> rotate_mask(std::span<const std::uint8_t> mask, int width,
                                      int height, const RotationMap& map,
                                      const Rect& out);

/// Bilinear inverse mapping of an RGB raster; outside reads as white.
RgbImage rotate_image(const RgbImage& image, const RotationMap& map, const Rect& out);

/// Set-pixel counts for each 256x256 (or `window`-sized) grid cell of a
/// binary mask, row-major over the floor(W/window) x floor(H/window) grid.
std::vector<std::uint32_t> window_counts(std::span<const std::uint8_t> mask,
                                         int width, int height, int window);

/// Baseline descriptor of one square cell of `image` with top-left (x0, y0)
/// and side `size`. Writes kCellDescriptorWidth floats.
void describe_cell(const RgbImage& image, int x0, int y0, int size,
                   std::span<float> out);

/// Baseline descriptors for a batch of patches: for each patch a
/// (grid*grid) x 16 block, cells in row-major order.
std::vector<float> describe_patches(std::span<const RgbImage* const> patches, int grid);

/// Number of pixels whose mean RGB is below `background_level`.
std::uint64_t count_tissue_pixels(const RgbImage& image, int background_level);

namespace serial {

void assign_nearest(const FloatMatrix& points, const FloatMatrix& centroids,
                    std::span<std::uint32_t> labels, std::span<double> dist2);
std::vector<std::uint8_t> rotate_mask(std::span<const std::uint8_t> mask, int width,
                                      int height, const RotationMap& map,
                                      const Rect& out);
RgbImage rotate_image(const RgbImage& image, const RotationMap& map, const Rect& out);
std::vector<std::uint32_t> window_counts(std::span<const std::uint8_t> mask,
                                         int width, int height, int window);
std::vector<float> describe_patches(std::span<const RgbImage* const> patches, int grid);
std::uint64_t count_tissue_pixels(const RgbImage& image, int background_level);

}  // namespace serial

}  // namespace patchbag::kernels
