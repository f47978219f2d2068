#include "patchbag/tiler.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>

#include "patchbag/binary_io.hpp"
#include "patchbag/kernels.hpp"
#include "patchbag/png_io.hpp"

namespace patchbag {

std::string_view scan_order_name(ScanOrder order) {
  return order == ScanOrder::Raster ? "raster" : "serpentine";
}

ScanOrder parse_scan_order(std::string_view text) {
  const std::string key = to_lower(text);
  if (key == "raster") return ScanOrder::Raster;
  if (key == "serpentine") return ScanOrder::Serpentine;
  throw Error(ErrorCode::ConfigError, "unknown scan order '" + std::string(text) + "'");
}

std::vector<std::size_t> scan_permutation(int rows, int cols, ScanOrder order) {
  std::vector<std::size_t> perm;
  perm.reserve(static_cast<std::size_t>(rows) * cols);
  for (int r = 0; r < rows; ++r) {
    const bool reverse = order == ScanOrder::Serpentine && (r % 2 == 1);
    for (int i = 0; i < cols; ++i) {
      const int c = reverse ? cols - 1 - i : i;
      perm.push_back(static_cast<std::size_t>(r) * cols + c);
    }
  }
  return perm;
}

std::vector<Patch> tile_grid(const OrientedRegion& region) {
  const int rows = region.image.height / kPatchSize;
  const int cols = region.image.width / kPatchSize;
  if (rows == 0 || cols == 0) {
    throw Error(ErrorCode::EmptySet, region.region_id + ": region " +
                                         std::to_string(region.image.width) + "x" +
                                         std::to_string(region.image.height) +
                                         " is smaller than one 256x256 patch");
  }
  if (region.mask.width != region.image.width || region.mask.height != region.image.height) {
    throw Error(ErrorCode::DimensionError, region.region_id + ": mask and image sizes differ");
  }
  const auto counts = kernels::window_counts(region.mask.bitmap, region.mask.width,
                                             region.mask.height, kPatchSize);
  std::vector<Patch> out;
  out.reserve(counts.size());
  for (int r = 0; r < rows; ++r) {
    for (int c = 0; c < cols; ++c) {
      Patch p;
      p.row = r;
      p.col = c;
      p.seq_index = r * cols + c;
      p.pixels = crop(region.image, {static_cast<std::int64_t>(c) * kPatchSize,
                                     static_cast<std::int64_t>(r) * kPatchSize, kPatchSize,
                                     kPatchSize});
      p.mask_coverage = static_cast<double>(counts[static_cast<std::size_t>(p.seq_index)]) /
                        static_cast<double>(kPatchSize * kPatchSize);
      out.push_back(std::move(p));
    }
  }
  return out;
}

PatchSet tile_region(const OrientedRegion& region, ScanOrder order,
                     double background_threshold) {
  auto grid = tile_grid(region);
  const int rows = region.image.height / kPatchSize;
  const int cols = region.image.width / kPatchSize;
  PatchSet set;
  set.region_id = region.region_id;
  set.label = region.label;
  set.scale = region.scale;
  set.order = order;
  for (std::size_t index : scan_permutation(rows, cols, order)) {
    Patch& p = grid[index];
    if (1.0 - p.mask_coverage > background_threshold) continue;
    p.seq_index = static_cast<int>(set.patches.size());
    set.patches.push_back(std::move(p));
  }
  return set;
}

PatchSet tile_microscopy(const RgbImage& image, std::string region_id, ClassLabel label) {
  if (image.width != kMicroscopyWidth || image.height != kMicroscopyHeight) {
    throw Error(ErrorCode::DimensionError,
                region_id + ": microscopy image must be 2048x1536, got " +
                    std::to_string(image.width) + "x" + std::to_string(image.height));
  }
  OrientedRegion region;
  region.region_id = std::move(region_id);
  region.label = label;
  region.image = image;
  region.mask.width = image.width;
  region.mask.height = image.height;
  region.mask.bitmap.assign(static_cast<std::size_t>(image.width) * image.height, 1);
  region.bbox = {0, 0, image.width, image.height};
  return tile_region(region, ScanOrder::Raster, 1.0);
}

std::string patch_file_name(std::string_view region_id, int seq_index) {
  char seq[16];
  std::snprintf(seq, sizeof(seq), "%05d", seq_index);
  return std::string(region_id) + "_" + seq + ".png";
}

ManifestRecord emit_patches(const PatchSet& set, const std::filesystem::path& dir) {
  namespace fs = std::filesystem;
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw Error(ErrorCode::IoError, "cannot create " + dir.string());

  std::vector<fs::path> written;
  try {
    for (const Patch& p : set.patches) {
      const fs::path path = dir / patch_file_name(set.region_id, p.seq_index);
      write_png(path, p.pixels);
      written.push_back(path);
    }
    const fs::path manifest = dir / "sets.csv";
    const bool fresh = !fs::exists(manifest);
    std::ofstream out(manifest, std::ios::app);
    if (!out) throw Error(ErrorCode::IoError, "cannot append to " + manifest.string());
    if (fresh) out << kSetManifestHeader << "\n";
    out << set.region_id << "," << label_index(set.label) << "," << set.scale << ","
        << set.n_patches() << "," << scan_order_name(set.order) << "\n";
    if (!out) throw Error(ErrorCode::IoError, "write failed for " + manifest.string());
  } catch (...) {
    for (const auto& path : written) fs::remove(path, ec);
    throw;
  }
  return {set.region_id, set.label, set.scale, set.n_patches(), set.order};
}

std::vector<ManifestRecord> read_set_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::IoError, "cannot open " + path.string());
  std::string line;
  std::getline(in, line);
  if (line != kSetManifestHeader) {
    throw Error(ErrorCode::ParseError, path.string() + ": unexpected header '" + line + "'");
  }
  std::vector<ManifestRecord> out;
  int line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::vector<std::string> fields;
    std::stringstream ss(line);
    std::string f;
    while (std::getline(ss, f, ',')) fields.push_back(f);
    if (fields.size() != 5) {
      throw Error(ErrorCode::ParseError,
                  path.string() + ":" + std::to_string(line_no) + ": expected 5 fields");
    }
    ManifestRecord r;
    r.region_id = fields[0];
    const auto label = parse_label(fields[1]);
    if (!label) {
      throw Error(ErrorCode::InvalidLabel,
                  path.string() + ":" + std::to_string(line_no) + ": label '" + fields[1] + "'");
    }
    r.label = *label;
    r.scale = std::stoi(fields[2]);
    r.n_patches = std::stoul(fields[3]);
    r.order = parse_scan_order(fields[4]);
    out.push_back(std::move(r));
  }
  return out;
}

PatchSet load_patch_set(const std::filesystem::path& dir, const ManifestRecord& record) {
  PatchSet set;
  set.region_id = record.region_id;
  set.label = record.label;
  set.scale = record.scale;
  set.order = record.order;
  for (std::size_t i = 0; i < record.n_patches; ++i) {
    Patch p;
    p.seq_index = static_cast<int>(i);
    p.pixels = read_png(dir / patch_file_name(record.region_id, static_cast<int>(i)));
    if (p.pixels.width != kPatchSize || p.pixels.height != kPatchSize) {
      throw Error(ErrorCode::DimensionError, "patch " + std::to_string(i) + " of " +
                                                 record.region_id + " is not 256x256");
    }
    set.patches.push_back(std::move(p));
  }
  return set;
}

}  // namespace patchbag
