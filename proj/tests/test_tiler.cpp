#include <gtest/gtest.h>

#include <fstream>
#include <functional>

#include "oracles.hpp"
#include "patchbag/kernels.hpp"
#include "patchbag/tiler.hpp"

using namespace patchbag;

namespace {

OrientedRegion region_with_mask(int w, int h, const std::function<bool(int, int)>& inside,
                                unsigned seed = 1) {
  OrientedRegion r;
  r.region_id = "reg";
  r.label = ClassLabel::InSitu;
  r.image = oracle::random_image(w, h, seed);
  r.mask.width = w;
  r.mask.height = h;
  r.mask.bitmap.resize(static_cast<std::size_t>(w) * h);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) r.mask.bitmap[static_cast<std::size_t>(y) * w + x] = inside(x, y);
  r.bbox = {0, 0, w, h};
  return r;
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

}  // namespace

TEST(Tiler, FullMaskGivesAllWindows) {
  const auto set = tile_region(region_with_mask(512, 512, [](int, int) { return true; }));
  ASSERT_EQ(set.n_patches(), 4u);
  for (int i = 0; i < 4; ++i) EXPECT_EQ(set.patches[i].seq_index, i);
  EXPECT_EQ(set.patches[1].row, 0);
  EXPECT_EQ(set.patches[1].col, 1);
}

TEST(Tiler, LeftHalfMaskKeepsLeftColumn) {
  const auto set = tile_region(region_with_mask(512, 512, [](int x, int) { return x < 256; }));
  ASSERT_EQ(set.n_patches(), 2u);
  EXPECT_EQ(set.patches[0].col, 0);
  EXPECT_EQ(set.patches[1].col, 0);
}

TEST(Tiler, ThresholdBoundaryIsInclusive) {
  const auto region = region_with_mask(256, 256, [](int x, int) { return x < 192; });
  EXPECT_EQ(tile_region(region, ScanOrder::Raster, 0.25).n_patches(), 1u);
  EXPECT_EQ(tile_region(region, ScanOrder::Raster, 0.2499).n_patches(), 0u);
  EXPECT_DOUBLE_EQ(tile_region(region, ScanOrder::Raster, 0.25).patches[0].mask_coverage, 0.75);
}

TEST(Tiler, MatchesBruteForceOnRandomMask) {
  const RgbImage noise = oracle::random_image(1024, 768, 9);
  const auto region = region_with_mask(1024, 768, [&](int x, int y) {
    const int blob = (x / 128 + y / 96) % 3;
    return blob != 0 || (noise.at(x, y)[0] & 3) != 0;
  });
  for (double thr : {0.0, 0.1, 0.2, 0.35, 0.5, 1.0}) {
    const auto set = tile_region(region, ScanOrder::Raster, thr);
    std::vector<std::pair<int, int>> want;
    for (int r = 0; r < 3; ++r)
      for (int c = 0; c < 4; ++c) {
        int n = 0;
        for (int y = 0; y < 256; ++y)
          for (int x = 0; x < 256; ++x) n += region.mask.at(c * 256 + x, r * 256 + y);
        if (1.0 - n / 65536.0 <= thr) want.push_back({r, c});
      }
    ASSERT_EQ(set.n_patches(), want.size()) << thr;
    for (std::size_t i = 0; i < want.size(); ++i) {
      EXPECT_EQ(set.patches[i].row, want[i].first);
      EXPECT_EQ(set.patches[i].col, want[i].second);
      EXPECT_EQ(set.patches[i].pixels, crop(region.image, {want[i].second * 256,
                                                          want[i].first * 256, 256, 256}));
    }
  }
}

TEST(Tiler, ThresholdMonotone) {
  const RgbImage noise = oracle::random_image(1280, 1024, 2);
  const auto region =
      region_with_mask(1280, 1024, [&](int x, int y) { return noise.at(x / 64, y / 64)[1] > x / 6; });
  std::size_t prev = 0;
  for (double thr = 0.0; thr <= 1.0; thr += 0.05) {
    const std::size_t n = tile_region(region, ScanOrder::Raster, thr).n_patches();
    EXPECT_GE(n, prev);
    prev = n;
  }
  EXPECT_EQ(prev, 20u);
}

TEST(Tiler, SerpentineReversesOddRows) {
  const auto perm = scan_permutation(3, 4, ScanOrder::Serpentine);
  const std::vector<std::size_t> want = {0, 1, 2, 3, 7, 6, 5, 4, 8, 9, 10, 11};
  EXPECT_EQ(perm, want);
  std::vector<std::size_t> twice(12);
  for (std::size_t i = 0; i < 12; ++i) twice[i] = perm[perm[i]];
  EXPECT_EQ(twice, scan_permutation(3, 4, ScanOrder::Raster));
}

TEST(Tiler, SerpentineSetIsReorderedRaster) {
  const auto region = region_with_mask(1024, 768, [](int, int) { return true; });
  const auto raster = tile_region(region, ScanOrder::Raster);
  const auto serp = tile_region(region, ScanOrder::Serpentine);
  ASSERT_EQ(serp.n_patches(), 12u);
  EXPECT_EQ(serp.patches[4].row, 1);
  EXPECT_EQ(serp.patches[4].col, 3);
  EXPECT_EQ(serp.patches[4].pixels, raster.patches[7].pixels);
}

TEST(Tiler, PatchesReconstructRegion) {
  const auto region = region_with_mask(768, 512, [](int, int) { return true; }, 17);
  const auto set = tile_region(region);
  RgbImage rebuilt(768, 512, 0);
  for (const auto& p : set.patches)
    for (int y = 0; y < 256; ++y)
      std::copy_n(p.pixels.at(0, y), 256 * 3, rebuilt.at(p.col * 256, p.row * 256 + y));
  EXPECT_EQ(rebuilt, region.image);
}

TEST(Microscopy, FortyEightPatches) {
  const RgbImage img = oracle::random_image(kMicroscopyWidth, kMicroscopyHeight, 6);
  const auto set = tile_microscopy(img, "img", ClassLabel::Benign);
  ASSERT_EQ(set.n_patches(), 48u);
  EXPECT_EQ(set.patches[47].row, 5);
  EXPECT_EQ(set.patches[47].col, 7);
  EXPECT_EQ(set.patches[9].pixels, crop(img, {256, 256, 256, 256}));
}

TEST(Microscopy, ConstantImageGivesIdenticalPatches) {
  const auto set = tile_microscopy(RgbImage(kMicroscopyWidth, kMicroscopyHeight, 77), "c",
                                   ClassLabel::Normal);
  ASSERT_EQ(set.n_patches(), 48u);
  for (const auto& p : set.patches) EXPECT_EQ(p.pixels, set.patches[0].pixels);
}

TEST(Microscopy, WrongSizeIsDimensionError) {
  try {
    tile_microscopy(RgbImage(2048, 1535), "x", ClassLabel::Normal);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::DimensionError);
  }
}

TEST(Emit, DeterministicFilesAndManifest) {
  const auto set = tile_region(region_with_mask(512, 256, [](int, int) { return true; }, 3));
  oracle::TempDir a("emit_a"), b("emit_b");
  const auto rec = emit_patches(set, a.path());
  emit_patches(set, b.path());
  EXPECT_EQ(rec.n_patches, 2u);
  for (int i = 0; i < 2; ++i) {
    const auto name = patch_file_name("reg", i);
    EXPECT_EQ(slurp(a.path() / name), slurp(b.path() / name));
  }
  EXPECT_EQ(slurp(a.path() / "sets.csv"), slurp(b.path() / "sets.csv"));
  EXPECT_EQ(patch_file_name("reg", 1), "reg_00001.png");

  const auto recs = read_set_manifest(a.path() / "sets.csv");
  ASSERT_EQ(recs.size(), 1u);
  const auto back = load_patch_set(a.path(), recs[0]);
  ASSERT_EQ(back.n_patches(), 2u);
  EXPECT_EQ(back.patches[1].pixels, set.patches[1].pixels);
  EXPECT_EQ(back.label, ClassLabel::InSitu);
}

TEST(Emit, EmptySetStillRecorded) {
  PatchSet empty;
  empty.region_id = "none";
  oracle::TempDir d("emit_empty");
  emit_patches(empty, d.path());
  const std::string csv = slurp(d.path() / "sets.csv");
  EXPECT_EQ(csv, std::string(kSetManifestHeader) + "\nnone,1,0,0,raster\n");
}

TEST(ScanOrderNames, RoundTrip) {
  for (auto o : {ScanOrder::Raster, ScanOrder::Serpentine})
    EXPECT_EQ(parse_scan_order(scan_order_name(o)), o);
}
