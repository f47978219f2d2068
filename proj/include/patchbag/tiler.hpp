#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "patchbag/geometry.hpp"

namespace patchbag {

inline constexpr int kPatchSize = 256;
inline constexpr int kMicroscopyWidth = 2048;
inline constexpr int kMicroscopyHeight = 1536;

enum class ScanOrder {
  Raster,      // every row left to right
  Serpentine,  // odd rows right to left
};

std::string_view scan_order_name(ScanOrder order);
ScanOrder parse_scan_order(std::string_view text);

struct Patch {
  int seq_index = 0;
  int row = 0;
  int col = 0;
  RgbImage pixels;
  double mask_coverage = 1.0;
};

/// The ordered patches of one region.
struct PatchSet {
  std::string region_id;
  ClassLabel label = ClassLabel::Benign;
  int scale = 0;
  ScanOrder order = ScanOrder::Raster;
  std::vector<Patch> patches;

  std::size_t n_patches() const { return patches.size(); }
};

/// Grid visiting order: the i-th entry is the row-major grid index visited
/// i-th.
std::vector<std::size_t> scan_permutation(int rows, int cols, ScanOrder order);

/// Every floor(W/256) x floor(H/256) window in row-major grid order, with
/// its mask coverage. Remainder pixels are dropped.
std::vector<Patch> tile_grid(const OrientedRegion& region);

/// Keeps windows whose background share (1 - coverage) is at most
/// `background_threshold`, ordered by `order`, seq_index renumbered 0..n-1.
PatchSet tile_region(const OrientedRegion& region, ScanOrder order = ScanOrder::Raster,
                     double background_threshold = 0.2);

/// 2048x1536 microscopy image into its 8x6 grid of 48 patches.
PatchSet tile_microscopy(const RgbImage& image, std::string region_id, ClassLabel label);

struct ManifestRecord {
  std::string region_id;
  ClassLabel label = ClassLabel::Benign;
  int scale = 0;
  std::size_t n_patches = 0;
  ScanOrder order = ScanOrder::Raster;
};

inline constexpr std::string_view kSetManifestHeader = "region_id,label,scale,n_patches,order";

std::string patch_file_name(std::string_view region_id, int seq_index);

/// Writes {region_id}_{seq:05}.png per patch and appends one line to
/// <dir>/sets.csv. On failure, files written by this call are removed.
ManifestRecord emit_patches(const PatchSet& set, const std::filesystem::path& dir);

std::vector<ManifestRecord> read_set_manifest(const std::filesystem::path& path);

/// Loads a set back from emitted PNGs.
PatchSet load_patch_set(const std::filesystem::path& dir, const ManifestRecord& record);

}  // namespace patchbag
