#include "patchbag/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numbers>

#include "patchbag/binary_io.hpp"
#include "patchbag/geometry.hpp"
#include "patchbag/png_io.hpp"
#include "patchbag/tiler.hpp"

namespace patchbag {
namespace {

/// Hash noise in [-1, 1] for an integer lattice point.
double lattice_noise(std::int64_t x, std::int64_t y, std::uint64_t seed) {
  const std::uint64_t h = mix64(seed ^ mix64(static_cast<std::uint64_t>(x) * 0x9e3779b97f4a7c15ULL +
                                             static_cast<std::uint64_t>(y)));
  return static_cast<double>(h >> 11) * 0x1.0p-52 - 1.0;
}

std::uint8_t clamp_byte(double v) {
  return static_cast<std::uint8_t>(std::clamp(std::lround(v), 0L, 255L));
}

void set_rgb(std::uint8_t* rgb, double r, double g, double b) {
  rgb[0] = clamp_byte(r);
  rgb[1] = clamp_byte(g);
  rgb[2] = clamp_byte(b);
}

std::int64_t floor_div(std::int64_t a, std::int64_t b) {
  return a >= 0 ? a / b : -((-a + b - 1) / b);
}

}  // namespace

void paint_texel(ClassLabel label, std::int64_t x, std::int64_t y, std::uint64_t seed,
                 std::uint8_t* rgb) {
  const double fine = lattice_noise(x, y, seed);
  switch (label) {
    case ClassLabel::Normal:
      set_rgb(rgb, 232 + 6 * fine, 190 + 6 * fine, 205 + 6 * fine);
      return;
    case ClassLabel::Benign: {
      const double band = 25.0 * std::sin(2.0 * std::numbers::pi * static_cast<double>(y) / 18.0);
      set_rgb(rgb, 185 + band + 8 * fine, 125 + band + 8 * fine, 190 + band + 8 * fine);
      return;
    }
    case ClassLabel::InSitu: {
      constexpr std::int64_t cell = 22;
      const std::int64_t cx = floor_div(x, cell);
      const std::int64_t cy = floor_div(y, cell);
      const double ox = 11.0 + 4.0 * lattice_noise(cx, cy, seed ^ 0x51ULL);
      const double oy = 11.0 + 4.0 * lattice_noise(cx, cy, seed ^ 0x52ULL);
      const double dx = static_cast<double>(x - cx * cell) - ox;
      const double dy = static_cast<double>(y - cy * cell) - oy;
      if (dx * dx + dy * dy < 49.0) {
        set_rgb(rgb, 70 + 8 * fine, 70 + 8 * fine, 160 + 8 * fine);
      } else {
        set_rgb(rgb, 150 + 8 * fine, 150 + 8 * fine, 215 + 8 * fine);
      }
      return;
    }
    case ClassLabel::Invasive: {
      const double coarse = 40.0 * lattice_noise(floor_div(x, 4), floor_div(y, 4), seed ^ 0x1aULL);
      set_rgb(rgb, 110 + coarse + 6 * fine, 70 + coarse + 6 * fine, 135 + coarse + 6 * fine);
      return;
    }
  }
}

RgbImage texture_image(ClassLabel label, int width, int height, std::uint64_t seed) {
  RgbImage img(width, height);
#pragma omp parallel for schedule(static)
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) paint_texel(label, x, y, seed, img.at(x, y));
  }
  return img;
}

void paint_polygon(RgbImage& image, const std::vector<Point>& polygon, ClassLabel label,
                   std::uint64_t seed) {
  PolygonAnnotation a;
  a.vertices = polygon;
  const RegionMask mask = rasterize_mask(a, 0);
#pragma omp parallel for schedule(static)
  for (int my = 0; my < mask.height; ++my) {
    const std::int64_t y = mask.origin_y + my;
    if (y < 0 || y >= image.height) continue;
    for (int mx = 0; mx < mask.width; ++mx) {
      const std::int64_t x = mask.origin_x + mx;
      if (x < 0 || x >= image.width || !mask.at(mx, my)) continue;
      paint_texel(label, x, y, seed, image.at(static_cast<int>(x), static_cast<int>(y)));
    }
  }
}

std::vector<Point> ellipse_polygon(double cx, double cy, double semi_major, double semi_minor,
                                   double angle_rad, int vertices) {
  std::vector<Point> pts;
  pts.reserve(static_cast<std::size_t>(vertices));
  const double c = std::cos(angle_rad);
  const double s = std::sin(angle_rad);
  for (int i = 0; i < vertices; ++i) {
    const double t = 2.0 * std::numbers::pi * i / vertices;
    const double u = semi_major * std::cos(t);
    const double v = semi_minor * std::sin(t);
    pts.push_back({cx + u * c - v * s, cy + u * s + v * c});
  }
  return pts;
}

SyntheticSlide make_synthetic_slide(const std::string& slide_id,
                                    const SyntheticSlideOptions& options) {
  if (options.lesions.size() > 4) {
    throw Error(ErrorCode::ConfigError, "at most 4 lesions fit the synthetic layout");
  }
  const int tissue = options.size - 2 * options.margin;
  const double cell = tissue / 2.0;
  if (tissue <= 0 || 2.0 * options.semi_major > cell) {
    throw Error(ErrorCode::ConfigError, "lesions do not fit the synthetic slide");
  }
  Rng rng(derive_seed(options.seed, "synthetic/" + slide_id));
  const std::uint64_t texture_seed = rng.next_u64();

  SyntheticSlide out;
  out.slide_id = slide_id;
  out.level0 = RgbImage(options.size, options.size);
  {
    const int m = options.margin;
    RgbImage& img = out.level0;
#pragma omp parallel for schedule(static)
    for (int y = m; y < options.size - m; ++y) {
      for (int x = m; x < options.size - m; ++x) {
        paint_texel(ClassLabel::Normal, x, y, texture_seed, img.at(x, y));
      }
    }
  }

  std::vector<int> cells = {0, 1, 2, 3};
  rng.shuffle(cells);
  const double slack = cell / 2.0 - options.semi_major;
  for (std::size_t i = 0; i < options.lesions.size(); ++i) {
    const int c = cells[i];
    const double cx = options.margin + cell * (c % 2 + 0.5) + slack * (2 * rng.uniform() - 1);
    const double cy = options.margin + cell * (c / 2 + 0.5) + slack * (2 * rng.uniform() - 1);
    const double angle = std::numbers::pi * rng.uniform();
    PolygonAnnotation a;
    a.slide_id = slide_id;
    a.region_id = slide_id + "_r" + std::to_string(i + 1);
    a.label = options.lesions[i];
    a.vertices = ellipse_polygon(cx, cy, options.semi_major, options.semi_minor, angle);
    paint_polygon(out.level0, a.vertices, a.label, texture_seed + i + 1);
    out.annotations.push_back(std::move(a));
  }
  return out;
}

void write_synthetic_slides(const std::filesystem::path& root, int count,
                            const SyntheticSlideOptions& options) {
  for (int i = 0; i < count; ++i) {
    char name[32];
    std::snprintf(name, sizeof name, "slide_%02d", i);
    const SyntheticSlide s = make_synthetic_slide(name, options);
    const std::filesystem::path dir = root / name;
    std::filesystem::create_directories(dir);
    atomic_write_text(dir / "annotations.xml", format_annotations(name, s.annotations));
    write_slide_directory(MemorySlide(s.level0), dir);
  }
}

void write_synthetic_microscopy(const std::filesystem::path& root, int per_class,
                                std::uint64_t seed) {
  for (ClassLabel label : kAllLabels) {
    const std::filesystem::path dir = root / std::string(label_name(label));
    std::filesystem::create_directories(dir);
    for (int i = 0; i < per_class; ++i) {
      char name[32];
      std::snprintf(name, sizeof name, "img_%03d.png", i);
      const std::uint64_t s = derive_seed(seed, std::string(label_name(label)) + name);
      write_png(dir / name, texture_image(label, kMicroscopyWidth, kMicroscopyHeight, s));
    }
  }
}

}  // namespace patchbag
