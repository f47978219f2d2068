#include "patchbag/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <sstream>

#include "patchbag/kernels.hpp"

namespace patchbag {

std::int64_t scale_factor(int scale) {
  if (scale < 0 || scale > kMaxScale) {
    throw Error(ErrorCode::ConfigError,
                "unsupported scale " + std::to_string(scale) + " (expected 0, 1 or 2)");
  }
  return std::int64_t{1} << (2 * scale);
}

std::uint64_t RegionMask::count() const {
  std::uint64_t n = 0;
  for (std::uint8_t b : bitmap) n += b != 0;
  return n;
}

RegionMask rasterize_mask(const PolygonAnnotation& annotation, int scale) {
  const double f = static_cast<double>(scale_factor(scale));
  if (annotation.vertices.size() < 3) {
    throw Error(ErrorCode::DegenerateGeometry,
                annotation.region_id + ": polygon has fewer than 3 vertices");
  }
  std::vector<Point> pts;
  pts.reserve(annotation.vertices.size());
  double min_x = std::numeric_limits<double>::infinity();
  double min_y = min_x;
  double max_x = -min_x;
  double max_y = -min_x;
  for (const Point& v : annotation.vertices) {
    const Point p{v.x / f, v.y / f};
    min_x = std::min(min_x, p.x);
    min_y = std::min(min_y, p.y);
    max_x = std::max(max_x, p.x);
    max_y = std::max(max_y, p.y);
    pts.push_back(p);
  }

  RegionMask mask;
  mask.origin_x = static_cast<std::int64_t>(std::floor(min_x));
  mask.origin_y = static_cast<std::int64_t>(std::floor(min_y));
  const auto end_x = static_cast<std::int64_t>(std::ceil(max_x));
  const auto end_y = static_cast<std::int64_t>(std::ceil(max_y));
  mask.width = static_cast<int>(end_x - mask.origin_x);
  mask.height = static_cast<int>(end_y - mask.origin_y);
  if (mask.width <= 0 || mask.height <= 0) {
    throw Error(ErrorCode::DegenerateMask, annotation.region_id +
                                               ": polygon has zero area at scale " +
                                               std::to_string(scale));
  }
  mask.bitmap.assign(static_cast<std::size_t>(mask.width) * mask.height, 0);

  struct Crossing {
    double x;
    int dir;
  };
  std::vector<Crossing> crossings;
  const std::size_t n = pts.size();
  std::uint64_t filled = 0;
  for (int row = 0; row < mask.height; ++row) {
    const double yc = static_cast<double>(mask.origin_y + row) + 0.5;
    crossings.clear();
    for (std::size_t i = 0; i < n; ++i) {
      const Point& a = pts[i];
      const Point& b = pts[(i + 1) % n];
      int dir = 0;
      if (a.y <= yc && b.y > yc) {
        dir = 1;
      } else if (b.y <= yc && a.y > yc) {
        dir = -1;
      } else {
        continue;
      }
      const double x = a.x + (yc - a.y) * (b.x - a.x) / (b.y - a.y);
      crossings.push_back({x, dir});
    }
    std::sort(crossings.begin(), crossings.end(),
              [](const Crossing& l, const Crossing& r) { return l.x < r.x; });
    int winding = 0;
    std::uint8_t* line = mask.bitmap.data() + static_cast<std::size_t>(row) * mask.width;
    for (std::size_t c = 0; c + 1 < crossings.size(); ++c) {
      winding += crossings[c].dir;
      if (winding == 0) continue;
      // Pixel centres x_c = origin + i + 0.5 with x_a <= x_c < x_b.
      const double lo = crossings[c].x - static_cast<double>(mask.origin_x) - 0.5;
      const double hi = crossings[c + 1].x - static_cast<double>(mask.origin_x) - 0.5;
      const auto first = std::max<std::int64_t>(0, static_cast<std::int64_t>(std::ceil(lo)));
      const auto last = std::min<std::int64_t>(mask.width, static_cast<std::int64_t>(std::ceil(hi)));
      for (std::int64_t i = first; i < last; ++i) {
        filled += line[i] == 0;
        line[i] = 1;
      }
    }
  }
  if (filled == 0) {
    throw Error(ErrorCode::DegenerateMask, annotation.region_id +
                                               ": polygon covers no pixel centre at scale " +
                                               std::to_string(scale));
  }
  return mask;
}

AxisSummary major_axis(const RegionMask& mask) {
  double sx = 0.0;
  double sy = 0.0;
  std::uint64_t n = 0;
  for (int y = 0; y < mask.height; ++y) {
    for (int x = 0; x < mask.width; ++x) {
      if (!mask.at(x, y)) continue;
      sx += x + 0.5;
      sy += y + 0.5;
      ++n;
    }
  }
  if (n == 0) throw Error(ErrorCode::DegenerateMask, "mask has no set pixels");
  const double cx = sx / static_cast<double>(n);
  const double cy = sy / static_cast<double>(n);
  double mu20 = 0.0;
  double mu02 = 0.0;
  double mu11 = 0.0;
  for (int y = 0; y < mask.height; ++y) {
    for (int x = 0; x < mask.width; ++x) {
      if (!mask.at(x, y)) continue;
      const double dx = x + 0.5 - cx;
      const double dy = y + 0.5 - cy;
      mu20 += dx * dx;
      mu02 += dy * dy;
      mu11 += dx * dy;
    }
  }
  mu20 /= static_cast<double>(n);
  mu02 /= static_cast<double>(n);
  mu11 = mu11 / static_cast<double>(n) + 0.0;  // drop a negative zero

  const double half_diff = 0.5 * (mu20 - mu02);
  const double lambda_max = 0.5 * (mu20 + mu02) + std::sqrt(half_diff * half_diff + mu11 * mu11);
  if (n < 2 || !(lambda_max > 0.0)) {
    throw Error(ErrorCode::ZeroLengthAxis, "mask is a single point; axis undefined");
  }

  double angle = 0.5 * std::atan2(2.0 * mu11, mu20 - mu02) * 180.0 / std::numbers::pi;
  if (angle <= -90.0) angle += 180.0;

  AxisSummary s;
  s.centroid_x = static_cast<double>(mask.origin_x) + cx;
  s.centroid_y = static_cast<double>(mask.origin_y) + cy;
  s.major_axis_length = 4.0 * std::sqrt(lambda_max);
  s.angle_deg = angle;
  return s;
}

std::int64_t round_up_256(std::int64_t n) {
  if (n <= 0) return 256;
  return (n + 255) / 256 * 256;
}

double orientation_rotation(double angle_deg) {
  double r = 90.0 - angle_deg;
  if (r > 90.0) r -= 180.0;
  if (r <= -90.0) r += 180.0;
  return r;
}

OrientedRegion orient_region(const RgbImage& image, const RegionMask& mask,
                             const OrientOptions& options) {
  if (image.width != mask.width || image.height != mask.height) {
    std::ostringstream msg;
    msg << "image " << image.width << "x" << image.height << " does not match mask "
        << mask.width << "x" << mask.height;
    throw Error(ErrorCode::DimensionError, msg.str());
  }
  const AxisSummary axis = major_axis(mask);
  const double rotation = orientation_rotation(axis.angle_deg);
  const double cx = axis.centroid_x - static_cast<double>(mask.origin_x);
  const double cy = axis.centroid_y - static_cast<double>(mask.origin_y);
  const auto map = kernels::RotationMap::about(cx, cy, rotation);

  // The map is affine, so per row only the outermost set pixels can reach the
  // extremes of the rotated footprint.
  double min_qx = std::numeric_limits<double>::infinity();
  double min_qy = min_qx;
  double max_qx = -min_qx;
  double max_qy = -min_qx;
  for (int y = 0; y < mask.height; ++y) {
    int first = -1;
    int last = -1;
    for (int x = 0; x < mask.width; ++x) {
      if (mask.at(x, y)) {
        if (first < 0) first = x;
        last = x;
      }
    }
    if (first < 0) continue;
    for (int x : {first, last}) {
      double qx = 0.0;
      double qy = 0.0;
      map.forward(x + 0.5, y + 0.5, qx, qy);
      min_qx = std::min(min_qx, qx);
      max_qx = std::max(max_qx, qx);
      min_qy = std::min(min_qy, qy);
      max_qy = std::max(max_qy, qy);
    }
  }

  const auto estimate_w = static_cast<std::int64_t>(std::ceil(max_qx - min_qx + 1.0));
  const auto estimate_h = static_cast<std::int64_t>(std::ceil(max_qy - min_qy + 1.0));
  const auto estimate = static_cast<std::uint64_t>(round_up_256(estimate_w)) *
                        static_cast<std::uint64_t>(round_up_256(estimate_h));
  if (estimate > options.max_pixels) {
    throw RegionSkipped(estimate, "oriented region needs " + std::to_string(estimate) +
                                      " pixels, budget is " +
                                      std::to_string(options.max_pixels));
  }

  Rect window;
  window.x = static_cast<std::int64_t>(std::floor(min_qx)) - 2;
  window.y = static_cast<std::int64_t>(std::floor(min_qy)) - 2;
  window.width = static_cast<std::int64_t>(std::ceil(max_qx)) + 2 - window.x;
  window.height = static_cast<std::int64_t>(std::ceil(max_qy)) + 2 - window.y;
  const auto rotated = kernels::rotate_mask(mask.bitmap, mask.width, mask.height, map, window);

  std::int64_t tx0 = window.width;
  std::int64_t ty0 = window.height;
  std::int64_t tx1 = -1;
  std::int64_t ty1 = -1;
  for (std::int64_t y = 0; y < window.height; ++y) {
    for (std::int64_t x = 0; x < window.width; ++x) {
      if (!rotated[static_cast<std::size_t>(y * window.width + x)]) continue;
      tx0 = std::min(tx0, x);
      tx1 = std::max(tx1, x);
      ty0 = std::min(ty0, y);
      ty1 = std::max(ty1, y);
    }
  }
  if (tx1 < 0) {
    throw Error(ErrorCode::DegenerateMask, "mask vanished under rotation");
  }
  const std::int64_t tight_w = tx1 - tx0 + 1;
  const std::int64_t tight_h = ty1 - ty0 + 1;
  const std::int64_t out_w = round_up_256(tight_w);
  const std::int64_t out_h = round_up_256(tight_h);
  const auto pixels = static_cast<std::uint64_t>(out_w) * static_cast<std::uint64_t>(out_h);
  if (pixels > options.max_pixels) {
    throw RegionSkipped(pixels, "oriented region needs " + std::to_string(pixels) +
                                    " pixels, budget is " +
                                    std::to_string(options.max_pixels));
  }

  Rect box;
  box.x = window.x + tx0 - (out_w - tight_w) / 2;
  box.y = window.y + ty0 - (out_h - tight_h) / 2;
  box.width = out_w;
  box.height = out_h;

  OrientedRegion region;
  region.rotation_deg = rotation;
  region.bbox = {mask.origin_x + box.x, mask.origin_y + box.y, out_w, out_h};
  region.mask.origin_x = region.bbox.x;
  region.mask.origin_y = region.bbox.y;
  region.mask.width = static_cast<int>(out_w);
  region.mask.height = static_cast<int>(out_h);
  region.mask.bitmap = kernels::rotate_mask(mask.bitmap, mask.width, mask.height, map, box);
  region.image = kernels::rotate_image(image, map, box);
  return region;
}

}  // namespace patchbag
