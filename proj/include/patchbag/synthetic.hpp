#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "patchbag/annotations.hpp"
#include "patchbag/common.hpp"
#include "patchbag/slide.hpp"

namespace patchbag {

/// Procedural tissue textures with class-specific colour and structure,
/// used for fixtures and the synthetic end-to-end experiment.
///
///   Normal    pale pink, smooth, fine noise
///   Benign    purple, horizontal bands
///   InSitu    blue, round nuclei-like blobs
///   Invasive  dark violet, coarse high-contrast noise
void paint_texel(ClassLabel label, std::int64_t x, std::int64_t y, std::uint64_t seed,
                 std::uint8_t* rgb);

RgbImage texture_image(ClassLabel label, int width, int height, std::uint64_t seed);

/// Fills every pixel inside `polygon` (nonzero winding at pixel centres).
void paint_polygon(RgbImage& image, const std::vector<Point>& polygon, ClassLabel label,
                   std::uint64_t seed);

/// Closed ellipse outline with `vertices` points.
std::vector<Point> ellipse_polygon(double cx, double cy, double semi_major, double semi_minor,
                                   double angle_rad, int vertices = 64);

struct SyntheticSlideOptions {
  int size = 4096;
  /// White border around the tissue.
  int margin = 128;
  double semi_major = 900.0;
  double semi_minor = 330.0;
  std::vector<ClassLabel> lesions = {ClassLabel::Benign, ClassLabel::InSitu,
                                     ClassLabel::Invasive};
  std::uint64_t seed = 0;
};

struct SyntheticSlide {
  std::string slide_id;
  RgbImage level0;
  std::vector<PolygonAnnotation> annotations;
};

/// A square slide of Normal texture carrying one elliptical lesion per
/// entry of `lesions`, each with a random orientation, placed in separate
/// cells of a 2x2 layout. Lesions are listed in `annotations` in order.
SyntheticSlide make_synthetic_slide(const std::string& slide_id,
                                    const SyntheticSlideOptions& options);

/// Writes <root>/<slide_id>/annotations.xml and the slide's level
/// directories for `count` slides named slide_00, slide_01, ...
void write_synthetic_slides(const std::filesystem::path& root, int count,
                            const SyntheticSlideOptions& options);

/// Writes <root>/<Class>/img_NNN.png, `per_class` 2048x1536 images per class.
void write_synthetic_microscopy(const std::filesystem::path& root, int per_class,
                                std::uint64_t seed);

}  // namespace patchbag
