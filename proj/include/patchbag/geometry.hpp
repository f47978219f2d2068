#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "patchbag/annotations.hpp"
#include "patchbag/common.hpp"

namespace patchbag {

inline constexpr int kMaxScale = 2;

/// 4^scale: the downsampling factor between level 0 and `scale`.
std::int64_t scale_factor(int scale);

/// Binary raster placed at `origin` in slide pixels of some scale.
struct RegionMask {
  std::int64_t origin_x = 0;
  std::int64_t origin_y = 0;
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> bitmap;  // 0 or 1, row-major

  std::uint8_t at(int x, int y) const {
    return bitmap[static_cast<std::size_t>(y) * width + x];
  }
  std::uint64_t count() const;
  Rect bounds() const { return {origin_x, origin_y, width, height}; }
};

/// Fills the polygon (nonzero winding, sampled at pixel centres) over its
/// bounding box after dividing coordinates by 4^scale. A pixel whose centre
/// lies exactly on a left or top edge is inside; right or bottom, outside.
RegionMask rasterize_mask(const PolygonAnnotation& annotation, int scale);

struct AxisSummary {
  double centroid_x = 0.0;  // slide pixels at the mask's scale
  double centroid_y = 0.0;
  double major_axis_length = 0.0;
  double angle_deg = 0.0;  // in (-90, 90], measured in raster coordinates
};

/// Second-moment ellipse of the set pixels.
AxisSummary major_axis(const RegionMask& mask);

struct OrientedRegion {
  std::string region_id;
  ClassLabel label = ClassLabel::Benign;
  int scale = 0;
  RgbImage image;
  RegionMask mask;  // origin is (bbox.x, bbox.y)
  double rotation_deg = 0.0;
  /// Crop box in the rotated frame (slide pixels at `scale`); width and
  /// height are multiples of 256.
  Rect bbox;
};

struct OrientOptions {
  /// Regions whose output box would exceed this many pixels are skipped.
  std::uint64_t max_pixels = std::uint64_t{1} << 30;
};

/// Thrown by orient_region when a region exceeds the pixel budget.
class RegionSkipped : public Error {
 public:
  RegionSkipped(std::uint64_t pixels, const std::string& message)
      : Error(ErrorCode::RegionTooLarge, message), pixels_(pixels) {}
  std::uint64_t pixels() const { return pixels_; }

 private:
  std::uint64_t pixels_;
};

/// Smallest multiple of 256 that is >= n (and at least 256).
std::int64_t round_up_256(std::int64_t n);

/// Rotation that brings an axis at `angle_deg` to vertical, folded into
/// (-90, 90] since the axis is undirected.
double orientation_rotation(double angle_deg);

/// Rotates `image` and `mask` (same size; the image covers the mask's area)
/// about the mask centroid so the major axis is vertical, then crops to the
/// mask's tight box grown to multiples of 256 (centred; white / 0 padding).
OrientedRegion orient_region(const RgbImage& image, const RegionMask& mask,
                             const OrientOptions& options = {});

struct SkipRecord {
  std::string region_id;
  std::string reason;
  std::uint64_t pixel_count = 0;
};

}  // namespace patchbag
