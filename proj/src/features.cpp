#include "patchbag/features.hpp"

#include <cmath>
#include <cstring>

#include "patchbag/binary_io.hpp"
#include "patchbag/kernels.hpp"

namespace patchbag {
namespace {

constexpr char kMagic[4] = {'P', 'B', 'F', 'V'};

void check_grid(int grid) {
  if (grid < 1 || kPatchSize % grid != 0) {
    throw Error(ErrorCode::ConfigError,
                "baseline grid must divide 256, got " + std::to_string(grid));
  }
}

}  // namespace

FloatMatrix DescriptorSet::stacked() const {
  FloatMatrix m;
  m.rows = n_patches() * R;
  m.cols = d;
  m.data = values;
  return m;
}

DescriptorSet DescriptorSet::subset(std::span<const std::size_t> patches) const {
  DescriptorSet out;
  out.region_id = region_id;
  out.label = label;
  out.scale = scale;
  out.extractor_id = extractor_id;
  out.R = R;
  out.d = d;
  out.values.reserve(patches.size() * R * d);
  for (std::size_t i : patches) {
    const auto block = patch(i);
    out.values.insert(out.values.end(), block.begin(), block.end());
  }
  return out;
}

std::string baseline_extractor_id(int grid) {
  return "baseline/grid" + std::to_string(grid) + "/" + std::to_string(grid * grid) + "x" +
         std::to_string(kernels::kCellDescriptorWidth);
}

std::vector<float> extract_baseline(const RgbImage& patch, int grid) {
  check_grid(grid);
  if (patch.width != kPatchSize || patch.height != kPatchSize) {
    throw Error(ErrorCode::DimensionError, "baseline extractor expects a 256x256 patch, got " +
                                               std::to_string(patch.width) + "x" +
                                               std::to_string(patch.height));
  }
  const RgbImage* one[1] = {&patch};
  return kernels::describe_patches(one, grid);
}

DescriptorSet extract_baseline_set(const PatchSet& set, int grid) {
  check_grid(grid);
  std::vector<const RgbImage*> images;
  images.reserve(set.patches.size());
  for (const Patch& p : set.patches) {
    if (p.pixels.width != kPatchSize || p.pixels.height != kPatchSize) {
      throw Error(ErrorCode::DimensionError, set.region_id + ": patch " +
                                                 std::to_string(p.seq_index) +
                                                 " is not 256x256");
    }
    images.push_back(&p.pixels);
  }
  DescriptorSet out;
  out.region_id = set.region_id;
  out.label = set.label;
  out.scale = set.scale;
  out.extractor_id = baseline_extractor_id(grid);
  out.R = static_cast<std::uint32_t>(grid * grid);
  out.d = static_cast<std::uint32_t>(kernels::kCellDescriptorWidth);
  out.values = kernels::describe_patches(images, grid);
  return out;
}

std::vector<std::uint8_t> encode_feature_file(const DescriptorSet& set) {
  if (set.R == 0 || set.d == 0) {
    throw Error(ErrorCode::InconsistentShape, set.region_id + ": R and d must be positive");
  }
  const std::size_t block = static_cast<std::size_t>(set.R) * set.d;
  if (set.values.size() % block != 0) {
    throw Error(ErrorCode::InconsistentShape,
                set.region_id + ": value count is not a multiple of R*d");
  }
  for (float v : set.values) {
    if (!std::isfinite(v)) {
      throw Error(ErrorCode::NonFinite, set.region_id + ": descriptor values must be finite");
    }
  }
  ByteWriter w;
  w.raw(std::string_view(kMagic, 4));
  w.u16(kFeatureFileVersion);
  w.str16(set.extractor_id);
  w.u8(static_cast<std::uint8_t>(set.label));
  w.u8(static_cast<std::uint8_t>(set.scale));
  w.str16(set.region_id);
  w.u32(static_cast<std::uint32_t>(set.n_patches()));
  w.u32(set.R);
  w.u32(set.d);
  for (float v : set.values) w.f32(v);
  w.seal_crc();
  return w.take();
}

DescriptorSet decode_feature_file(std::span<const std::uint8_t> bytes) {
  if (bytes.size() >= 4 && std::memcmp(bytes.data(), kMagic, 4) != 0) {
    throw Error(ErrorCode::BadMagic, "not a PBFV feature file");
  }
  // Header fields are read before the CRC so a short file reports truncation
  // rather than a checksum failure.
  ByteReader header(bytes);
  header.raw(4);
  const std::uint16_t version = header.u16();
  if (version != kFeatureFileVersion) {
    throw Error(ErrorCode::VersionMismatch,
                "feature file version " + std::to_string(version) + ", expected " +
                    std::to_string(kFeatureFileVersion));
  }
  DescriptorSet set;
  set.extractor_id = header.str16();
  const auto label = label_from_code(header.u8());
  if (!label) throw Error(ErrorCode::InvalidLabel, "feature file has an unknown label code");
  set.label = *label;
  set.scale = header.u8();
  set.region_id = header.str16();
  const std::uint32_t n = header.u32();
  set.R = header.u32();
  set.d = header.u32();
  if (set.R == 0 || set.d == 0) {
    throw Error(ErrorCode::InconsistentShape, "feature file declares R or d = 0");
  }
  const std::uint64_t count = static_cast<std::uint64_t>(n) * set.R * set.d;
  const std::uint64_t expected = header.position() + count * 4 + 4;
  if (bytes.size() < expected) {
    throw Error(ErrorCode::Truncated, "feature file holds " + std::to_string(bytes.size()) +
                                          " bytes, header implies " + std::to_string(expected));
  }
  if (bytes.size() > expected) {
    throw Error(ErrorCode::InconsistentShape,
                "feature file has " + std::to_string(bytes.size() - expected) +
                    " bytes beyond the declared n_patches x R x d");
  }
  const auto payload = checked_payload(bytes);
  ByteReader body(payload);
  body.raw(header.position());
  set.values.resize(static_cast<std::size_t>(count));
  for (auto& v : set.values) {
    v = body.f32();
    if (!std::isfinite(v)) throw Error(ErrorCode::NonFinite, "feature file holds a non-finite value");
  }
  return set;
}

void write_feature_file(const DescriptorSet& set, const std::filesystem::path& path) {
  atomic_write_file(path, encode_feature_file(set));
}

DescriptorSet read_feature_file(const std::filesystem::path& path) {
  return decode_feature_file(read_file_bytes(path));
}

}  // namespace patchbag
