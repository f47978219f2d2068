#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "patchbag/annotations.hpp"
#include "patchbag/geometry.hpp"

namespace patchbag {

struct LevelSize {
  std::int64_t width = 0;
  std::int64_t height = 0;
};

/// Multiresolution raster source. Level l is level 0 downsampled by 4^l.
/// Implementations must allow concurrent read_region calls.
class SlideSource {
 public:
  virtual ~SlideSource() = default;
  virtual int level_count() const = 0;
  virtual LevelSize level_size(int level) const = 0;
  /// `rect` is in pixels of `level` and must lie inside it.
  virtual RgbImage read_region(int level, const Rect& rect) const = 0;
};

/// Pyramid held in memory; levels 1..2 are 4x4 box averages of the level
/// below.
class MemorySlide final : public SlideSource {
 public:
  explicit MemorySlide(RgbImage level0, int levels = kMaxScale + 1);

  int level_count() const override { return static_cast<int>(levels_.size()); }
  LevelSize level_size(int level) const override;
  RgbImage read_region(int level, const Rect& rect) const override;
  const RgbImage& level(int l) const { return levels_.at(static_cast<std::size_t>(l)); }

 private:
  std::vector<RgbImage> levels_;
};

/// Directory-of-levels slide:
///
///   <dir>/level_<l>/level.txt        "width height tile_size"
///   <dir>/level_<l>/tile_<row>_<col>.png
///
/// Edge tiles are cropped to the level bounds. Tiles are decoded on demand,
/// so concurrent readers share nothing mutable.
class DirectorySlide final : public SlideSource {
 public:
  explicit DirectorySlide(std::filesystem::path dir);

  int level_count() const override { return static_cast<int>(sizes_.size()); }
  LevelSize level_size(int level) const override;
  RgbImage read_region(int level, const Rect& rect) const override;

 private:
  std::filesystem::path dir_;
  std::vector<LevelSize> sizes_;
  std::vector<int> tile_sizes_;
};

RgbImage box_downsample4(const RgbImage& image);

void write_slide_directory(const MemorySlide& slide, const std::filesystem::path& dir,
                           int tile_size = 1024);

/// Reads the level-0 rectangle `bbox` at `scale`; the result is
/// floor(bbox / 4^scale) in each dimension.
RgbImage extract_region_at_scale(const SlideSource& slide, const Rect& bbox, int scale);

struct NormalSamplingOptions {
  int count = 1;
  std::uint64_t seed = 0;
  int scale = 0;
  /// Side of each region in pixels at `scale`; a multiple of 256.
  int region_size = 512;
  double min_tissue_fraction = 0.8;
  /// Pixels with mean RGB at or above this are background.
  int background_level = 230;
  /// Attempts per requested region.
  int attempts_per_region = 100;
};

struct NormalSampling {
  std::vector<OrientedRegion> regions;
  std::vector<std::string> warnings;
};

/// Axis-aligned rectangle vs polygon overlap. Boundary contact counts as
/// overlap.
bool rect_intersects_polygon(const Rect& rect, std::span<const Point> polygon);

/// Rejection-samples square Normal regions away from every annotation and
/// from each other, keeping only tissue-rich candidates.
NormalSampling sample_normal_regions(const SlideSource& slide,
                                     std::span<const PolygonAnnotation> annotations,
                                     const NormalSamplingOptions& options,
                                     const std::string& slide_id);

}  // namespace patchbag
