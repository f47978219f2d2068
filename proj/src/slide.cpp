#include "patchbag/slide.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include "patchbag/binary_io.hpp"
#include "patchbag/kernels.hpp"
#include "patchbag/png_io.hpp"

namespace patchbag {
namespace {

void check_rect(const LevelSize& size, const Rect& rect, int level) {
  if (rect.x < 0 || rect.y < 0 || rect.width <= 0 || rect.height <= 0 ||
      rect.x + rect.width > size.width || rect.y + rect.height > size.height) {
    std::ostringstream msg;
    msg << "rectangle (" << rect.x << ", " << rect.y << ", " << rect.width << "x"
        << rect.height << ") is outside level " << level << " (" << size.width << "x"
        << size.height << ")";
    throw Error(ErrorCode::RangeError, msg.str());
  }
}

double is_left(const Point& a, const Point& b, const Point& p) {
  return (b.x - a.x) * (p.y - a.y) - (p.x - a.x) * (b.y - a.y);
}

bool point_in_polygon(const Point& p, std::span<const Point> poly) {
  int wn = 0;
  for (std::size_t i = 0; i < poly.size(); ++i) {
    const Point& a = poly[i];
    const Point& b = poly[(i + 1) % poly.size()];
    if (a.y <= p.y) {
      if (b.y > p.y && is_left(a, b, p) > 0) ++wn;
    } else if (b.y <= p.y && is_left(a, b, p) < 0) {
      --wn;
    }
  }
  return wn != 0;
}

bool segments_touch(const Point& a, const Point& b, const Point& c, const Point& d) {
  const auto orient = [](const Point& o, const Point& p, const Point& q) {
    const double v = (p.x - o.x) * (q.y - o.y) - (p.y - o.y) * (q.x - o.x);
    return (v > 0) - (v < 0);
  };
  const auto within = [](const Point& p, const Point& q, const Point& r) {
    return std::min(p.x, r.x) <= q.x && q.x <= std::max(p.x, r.x) &&
           std::min(p.y, r.y) <= q.y && q.y <= std::max(p.y, r.y);
  };
  const int o1 = orient(a, b, c);
  const int o2 = orient(a, b, d);
  const int o3 = orient(c, d, a);
  const int o4 = orient(c, d, b);
  if (o1 != o2 && o3 != o4) return true;
  if (o1 == 0 && within(a, c, b)) return true;
  if (o2 == 0 && within(a, d, b)) return true;
  if (o3 == 0 && within(c, a, d)) return true;
  if (o4 == 0 && within(c, b, d)) return true;
  return false;
}

bool rects_overlap(const Rect& a, const Rect& b) {
  return a.x < b.x + b.width && b.x < a.x + a.width && a.y < b.y + b.height &&
         b.y < a.y + a.height;
}

}  // namespace

RgbImage box_downsample4(const RgbImage& image) {
  RgbImage out(image.width / 4, image.height / 4);
#pragma omp parallel for schedule(static)
  for (int y = 0; y < out.height; ++y) {
    for (int x = 0; x < out.width; ++x) {
      for (int c = 0; c < 3; ++c) {
        int sum = 0;
        for (int dy = 0; dy < 4; ++dy) {
          for (int dx = 0; dx < 4; ++dx) sum += image.at(4 * x + dx, 4 * y + dy)[c];
        }
        out.at(x, y)[c] = static_cast<std::uint8_t>((sum + 8) / 16);
      }
    }
  }
  return out;
}

MemorySlide::MemorySlide(RgbImage level0, int levels) {
  levels_.push_back(std::move(level0));
  for (int l = 1; l < levels; ++l) levels_.push_back(box_downsample4(levels_.back()));
}

LevelSize MemorySlide::level_size(int level) const {
  const RgbImage& img = levels_.at(static_cast<std::size_t>(level));
  return {img.width, img.height};
}

RgbImage MemorySlide::read_region(int level, const Rect& rect) const {
  if (level < 0 || level >= level_count()) {
    throw Error(ErrorCode::ConfigError, "slide has no level " + std::to_string(level));
  }
  check_rect(level_size(level), rect, level);
  return crop(levels_[static_cast<std::size_t>(level)], rect);
}

DirectorySlide::DirectorySlide(std::filesystem::path dir) : dir_(std::move(dir)) {
  for (int l = 0;; ++l) {
    const auto meta = dir_ / ("level_" + std::to_string(l)) / "level.txt";
    if (!std::filesystem::exists(meta)) break;
    std::ifstream in(meta);
    LevelSize size;
    int tile = 0;
    if (!(in >> size.width >> size.height >> tile) || tile <= 0) {
      throw Error(ErrorCode::ParseError, "malformed " + meta.string());
    }
    sizes_.push_back(size);
    tile_sizes_.push_back(tile);
  }
  if (sizes_.empty()) {
    throw Error(ErrorCode::IoError, "no level_0/level.txt under " + dir_.string());
  }
}

LevelSize DirectorySlide::level_size(int level) const {
  return sizes_.at(static_cast<std::size_t>(level));
}

RgbImage DirectorySlide::read_region(int level, const Rect& rect) const {
  if (level < 0 || level >= level_count()) {
    throw Error(ErrorCode::ConfigError, "slide has no level " + std::to_string(level));
  }
  check_rect(level_size(level), rect, level);
  const int tile = tile_sizes_[static_cast<std::size_t>(level)];
  RgbImage out(static_cast<int>(rect.width), static_cast<int>(rect.height));
  const auto level_dir = dir_ / ("level_" + std::to_string(level));
  const std::int64_t r0 = rect.y / tile;
  const std::int64_t r1 = (rect.y + rect.height - 1) / tile;
  const std::int64_t c0 = rect.x / tile;
  const std::int64_t c1 = (rect.x + rect.width - 1) / tile;
  for (std::int64_t r = r0; r <= r1; ++r) {
    for (std::int64_t c = c0; c <= c1; ++c) {
      const auto path = level_dir / ("tile_" + std::to_string(r) + "_" + std::to_string(c) + ".png");
      const RgbImage t = read_png(path);
      const std::int64_t tx = c * tile;
      const std::int64_t ty = r * tile;
      const std::int64_t x0 = std::max(rect.x, tx);
      const std::int64_t x1 = std::min(rect.x + rect.width, tx + t.width);
      const std::int64_t y0 = std::max(rect.y, ty);
      const std::int64_t y1 = std::min(rect.y + rect.height, ty + t.height);
      for (std::int64_t y = y0; y < y1; ++y) {
        std::copy_n(t.at(static_cast<int>(x0 - tx), static_cast<int>(y - ty)), (x1 - x0) * 3,
                    out.at(static_cast<int>(x0 - rect.x), static_cast<int>(y - rect.y)));
      }
    }
  }
  return out;
}

void write_slide_directory(const MemorySlide& slide, const std::filesystem::path& dir,
                           int tile_size) {
  for (int l = 0; l < slide.level_count(); ++l) {
    const auto level_dir = dir / ("level_" + std::to_string(l));
    std::filesystem::create_directories(level_dir);
    const RgbImage& img = slide.level(l);
    for (int ty = 0; ty * tile_size < img.height; ++ty) {
      for (int tx = 0; tx * tile_size < img.width; ++tx) {
        const Rect r{static_cast<std::int64_t>(tx) * tile_size,
                     static_cast<std::int64_t>(ty) * tile_size,
                     std::min(tile_size, img.width - tx * tile_size),
                     std::min(tile_size, img.height - ty * tile_size)};
        write_png(level_dir / ("tile_" + std::to_string(ty) + "_" + std::to_string(tx) + ".png"),
                  crop(img, r));
      }
    }
    std::ostringstream meta;
    meta << img.width << " " << img.height << " " << tile_size << "\n";
    atomic_write_text(level_dir / "level.txt", meta.str());
  }
}

RgbImage extract_region_at_scale(const SlideSource& slide, const Rect& bbox, int scale) {
  const std::int64_t f = scale_factor(scale);
  if (scale >= slide.level_count()) {
    throw Error(ErrorCode::ConfigError, "slide has no level for scale " + std::to_string(scale));
  }
  check_rect(slide.level_size(0), bbox, 0);
  const Rect r{bbox.x / f, bbox.y / f, bbox.width / f, bbox.height / f};
  if (r.width <= 0 || r.height <= 0) {
    throw Error(ErrorCode::RangeError, "region vanishes at scale " + std::to_string(scale));
  }
  // Flooring origin and size separately can reach one pixel past the level
  // edge; that sliver is padded white.
  const LevelSize size = slide.level_size(scale);
  Rect inside = r;
  inside.width = std::min(r.width, size.width - r.x);
  inside.height = std::min(r.height, size.height - r.y);
  if (inside == r) return slide.read_region(scale, r);
  return crop(slide.read_region(scale, inside), {0, 0, r.width, r.height});
}

bool rect_intersects_polygon(const Rect& rect, std::span<const Point> polygon) {
  const double x0 = static_cast<double>(rect.x);
  const double y0 = static_cast<double>(rect.y);
  const double x1 = static_cast<double>(rect.x + rect.width);
  const double y1 = static_cast<double>(rect.y + rect.height);
  for (const Point& p : polygon) {
    if (p.x >= x0 && p.x <= x1 && p.y >= y0 && p.y <= y1) return true;
  }
  const Point corners[4] = {{x0, y0}, {x1, y0}, {x1, y1}, {x0, y1}};
  for (const Point& c : corners) {
    if (point_in_polygon(c, polygon)) return true;
  }
  for (std::size_t i = 0; i < polygon.size(); ++i) {
    const Point& a = polygon[i];
    const Point& b = polygon[(i + 1) % polygon.size()];
    for (int e = 0; e < 4; ++e) {
      if (segments_touch(a, b, corners[e], corners[(e + 1) % 4])) return true;
    }
  }
  return false;
}

NormalSampling sample_normal_regions(const SlideSource& slide,
                                     std::span<const PolygonAnnotation> annotations,
                                     const NormalSamplingOptions& options,
                                     const std::string& slide_id) {
  if (options.region_size <= 0 || options.region_size % 256 != 0) {
    throw Error(ErrorCode::ConfigError, "normal region size must be a positive multiple of 256");
  }
  NormalSampling result;
  const std::int64_t f = scale_factor(options.scale);
  const std::int64_t side0 = static_cast<std::int64_t>(options.region_size) * f;
  const LevelSize size0 = slide.level_size(0);
  if (options.count <= 0) return result;
  if (side0 > size0.width || side0 > size0.height) {
    result.warnings.push_back(slide_id + ": slide smaller than one normal region");
    return result;
  }

  Rng rng(options.seed);
  std::vector<Rect> accepted;
  const std::int64_t budget = static_cast<std::int64_t>(options.attempts_per_region) * options.count;
  const auto need = static_cast<std::uint64_t>(
      std::ceil(options.min_tissue_fraction * static_cast<double>(options.region_size) *
                options.region_size));
  for (std::int64_t attempt = 0;
       attempt < budget && static_cast<int>(accepted.size()) < options.count; ++attempt) {
    // Positions are drawn on the scale grid so the region maps exactly.
    const std::uint64_t span_x = static_cast<std::uint64_t>((size0.width - side0) / f) + 1;
    const std::uint64_t span_y = static_cast<std::uint64_t>((size0.height - side0) / f) + 1;
    const Rect cand{static_cast<std::int64_t>(rng.below(span_x)) * f,
                    static_cast<std::int64_t>(rng.below(span_y)) * f, side0, side0};
    if (std::any_of(accepted.begin(), accepted.end(),
                    [&](const Rect& r) { return rects_overlap(r, cand); })) {
      continue;
    }
    if (std::any_of(annotations.begin(), annotations.end(), [&](const PolygonAnnotation& a) {
          return rect_intersects_polygon(cand, a.vertices);
        })) {
      continue;
    }
    RgbImage image = extract_region_at_scale(slide, cand, options.scale);
    if (kernels::count_tissue_pixels(image, options.background_level) < need) continue;

    OrientedRegion region;
    region.region_id = slide_id + "_normal" + std::to_string(accepted.size());
    region.label = ClassLabel::Normal;
    region.scale = options.scale;
    region.rotation_deg = 0.0;
    region.bbox = {cand.x / f, cand.y / f, options.region_size, options.region_size};
    region.mask.origin_x = region.bbox.x;
    region.mask.origin_y = region.bbox.y;
    region.mask.width = options.region_size;
    region.mask.height = options.region_size;
    region.mask.bitmap.assign(static_cast<std::size_t>(options.region_size) * options.region_size, 1);
    region.image = std::move(image);
    result.regions.push_back(std::move(region));
    accepted.push_back(cand);
  }
  if (static_cast<int>(accepted.size()) < options.count) {
    result.warnings.push_back(slide_id + ": placed " + std::to_string(accepted.size()) + " of " +
                              std::to_string(options.count) + " normal regions after " +
                              std::to_string(budget) + " attempts");
  }
  return result;
}

}  // namespace patchbag
