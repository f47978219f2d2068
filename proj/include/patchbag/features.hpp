#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "patchbag/common.hpp"
#include "patchbag/tiler.hpp"

namespace patchbag {

/// Per-patch local descriptors of one region: n_patches blocks of R x d.
struct DescriptorSet {
  std::string region_id;
  ClassLabel label = ClassLabel::Benign;
  int scale = 0;
  std::string extractor_id;
  std::uint32_t R = 0;
  std::uint32_t d = 0;
  std::vector<float> values;  // patch-major, then descriptor-major

  std::size_t n_patches() const {
    const std::size_t block = static_cast<std::size_t>(R) * d;
    return block == 0 ? 0 : values.size() / block;
  }
  std::span<const float> patch(std::size_t i) const {
    const std::size_t block = static_cast<std::size_t>(R) * d;
    return {values.data() + i * block, block};
  }
  /// All descriptors stacked as an (n_patches * R) x d matrix.
  FloatMatrix stacked() const;
  /// The set restricted to `patches`, in the given order.
  DescriptorSet subset(std::span<const std::size_t> patches) const;

  bool operator==(const DescriptorSet&) const = default;
};

inline constexpr int kDefaultBaselineGrid = 4;

std::string baseline_extractor_id(int grid);

/// Handcrafted stand-in for CNN features: the patch is cut into grid x grid
/// cells and each cell yields 16 values (RGB means and standard deviations,
/// an 8-bin magnitude-weighted unsigned gradient-orientation histogram,
/// grayscale 10th and 90th percentiles), all in [0, 1].
/// Returns an R x 16 block, R = grid^2, cells row-major.
std::vector<float> extract_baseline(const RgbImage& patch, int grid = kDefaultBaselineGrid);

/// Baseline descriptors for every patch of a set, parallel over cells.
DescriptorSet extract_baseline_set(const PatchSet& set, int grid = kDefaultBaselineGrid);

// Feature file ("PBFV", version 1), little-endian:
//   magic | u16 version | str16 extractor_id | u8 label | u8 scale |
//   str16 region_id | u32 n_patches | u32 R | u32 d |
//   n_patches*R*d f32 | u32 CRC-32 of all preceding bytes
inline constexpr std::uint16_t kFeatureFileVersion = 1;

std::vector<std::uint8_t> encode_feature_file(const DescriptorSet& set);
/// Errors: BadMagic, VersionMismatch, Truncated, CrcMismatch,
/// InconsistentShape, NonFinite, InvalidLabel.
DescriptorSet decode_feature_file(std::span<const std::uint8_t> bytes);

void write_feature_file(const DescriptorSet& set, const std::filesystem::path& path);
DescriptorSet read_feature_file(const std::filesystem::path& path);

}  // namespace patchbag
