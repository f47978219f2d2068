#include <gtest/gtest.h>

#include <set>

#include "oracles.hpp"
#include "patchbag/pipeline.hpp"
#include "patchbag/slide.hpp"
#include "patchbag/synthetic.hpp"

using namespace patchbag;

namespace {

PolygonAnnotation square(const std::string& id, double x, double y, double w, double h) {
  PolygonAnnotation a;
  a.region_id = id;
  a.label = ClassLabel::Benign;
  a.vertices = {{x, y}, {x + w, y}, {x + w, y + h}, {x, y + h}};
  return a;
}

RgbImage tissue(int w, int h) { return texture_image(ClassLabel::Normal, w, h, 5); }

}  // namespace

TEST(Slide, PyramidLevelsAreBoxMeans) {
  RgbImage img(8, 8, 0);
  for (int y = 0; y < 4; ++y)
    for (int x = 0; x < 4; ++x) img.at(x, y)[0] = static_cast<std::uint8_t>(x + 4 * y);
  const MemorySlide s(img);
  ASSERT_EQ(s.level_count(), 3);
  EXPECT_EQ(s.level_size(1).width, 2);
  EXPECT_EQ(s.level(1).at(0, 0)[0], 8);  // mean of 0..15 = 7.5 rounds up
  EXPECT_EQ(s.level(1).at(1, 0)[0], 0);
}

TEST(Slide, ExtractAtScaleDividesSize) {
  const MemorySlide s(tissue(2048, 2048));
  const RgbImage r = extract_region_at_scale(s, {512, 256, 1024, 1024}, 1);
  EXPECT_EQ(r.width, 256);
  EXPECT_EQ(r.height, 256);
  EXPECT_EQ(r, crop(s.level(1), {128, 64, 256, 256}));
  const RgbImage r0 = extract_region_at_scale(s, {10, 20, 30, 40}, 0);
  EXPECT_EQ(r0, crop(s.level(0), {10, 20, 30, 40}));
}

TEST(Slide, ExtractOutsideSlideIsRangeError) {
  const MemorySlide s(tissue(512, 512));
  try {
    extract_region_at_scale(s, {400, 0, 200, 100}, 0);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::RangeError);
  }
  try {
    extract_region_at_scale(s, {0, 0, 100, 100}, 3);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::ConfigError);
  }
}

TEST(Slide, DirectoryRoundTrip) {
  oracle::TempDir dir("slide");
  const MemorySlide mem(oracle::random_image(1300, 900, 3));
  write_slide_directory(mem, dir.path(), 512);
  const DirectorySlide disk(dir.path());
  ASSERT_EQ(disk.level_count(), mem.level_count());
  for (int l = 0; l < mem.level_count(); ++l) {
    EXPECT_EQ(disk.level_size(l).width, mem.level_size(l).width);
    EXPECT_EQ(disk.level_size(l).height, mem.level_size(l).height);
  }
  const Rect r{500, 400, 600, 300};
  EXPECT_EQ(disk.read_region(0, r), mem.read_region(0, r));
  EXPECT_EQ(disk.read_region(1, {10, 10, 200, 100}), mem.read_region(1, {10, 10, 200, 100}));
}

TEST(NormalSampling, FullyAnnotatedSlideGivesWarning) {
  const MemorySlide s(tissue(1024, 1024));
  const std::vector anns = {square("all", 0, 0, 1024, 1024)};
  NormalSamplingOptions opt;
  opt.count = 2;
  opt.region_size = 256;
  const auto out = sample_normal_regions(s, anns, opt, "full");
  EXPECT_TRUE(out.regions.empty());
  ASSERT_FALSE(out.warnings.empty());
  EXPECT_NE(out.warnings[0].find("full"), std::string::npos);
}

TEST(NormalSampling, BlankSlideHasNoTissue) {
  const MemorySlide s(RgbImage(1024, 1024));
  NormalSamplingOptions opt;
  opt.region_size = 256;
  const auto out = sample_normal_regions(s, std::vector{square("a", 0, 0, 10, 10)}, opt, "blank");
  EXPECT_TRUE(out.regions.empty());
  EXPECT_FALSE(out.warnings.empty());
}

TEST(NormalSampling, RegionsAvoidAnnotationsAndEachOther) {
  const MemorySlide s(tissue(2048, 2048));
  const std::vector anns = {square("a", 300, 300, 600, 400), square("b", 1200, 1100, 500, 700)};
  NormalSamplingOptions opt;
  opt.count = 4;
  opt.region_size = 256;
  opt.seed = 9;
  const auto out = sample_normal_regions(s, anns, opt, "s");
  ASSERT_EQ(out.regions.size(), 4u);
  for (std::size_t i = 0; i < out.regions.size(); ++i) {
    const Rect& r = out.regions[i].bbox;
    EXPECT_EQ(out.regions[i].label, ClassLabel::Normal);
    EXPECT_EQ(r.width, 256);
    for (const auto& a : anns) EXPECT_FALSE(rect_intersects_polygon(r, a.vertices));
    for (std::size_t j = 0; j < i; ++j) {
      const Rect& q = out.regions[j].bbox;
      const bool overlap = r.x < q.x + q.width && q.x < r.x + r.width && r.y < q.y + q.height &&
                           q.y < r.y + r.height;
      EXPECT_FALSE(overlap);
    }
  }
  const auto again = sample_normal_regions(s, anns, opt, "s");
  for (std::size_t i = 0; i < 4; ++i) EXPECT_EQ(again.regions[i].bbox, out.regions[i].bbox);
}

TEST(NormalSampling, BadSizeIsConfigError) {
  const MemorySlide s(tissue(512, 512));
  NormalSamplingOptions opt;
  opt.region_size = 300;
  try {
    sample_normal_regions(s, {}, opt, "s");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::ConfigError);
  }
}

TEST(RectPolygon, Intersection) {
  const auto a = square("a", 10, 10, 20, 20);
  EXPECT_TRUE(rect_intersects_polygon({0, 0, 15, 15}, a.vertices));
  EXPECT_TRUE(rect_intersects_polygon({12, 12, 2, 2}, a.vertices));
  EXPECT_TRUE(rect_intersects_polygon({0, 0, 100, 100}, a.vertices));
  EXPECT_FALSE(rect_intersects_polygon({40, 40, 5, 5}, a.vertices));
  EXPECT_TRUE(rect_intersects_polygon({0, 0, 10, 10}, a.vertices));
  EXPECT_FALSE(rect_intersects_polygon({0, 0, 9, 9}, a.vertices));
}

TEST(ExtractRegions, OversizedRegionsAreSkippedAndLogged) {
  const MemorySlide s(tissue(3520, 3200));
  std::vector<PolygonAnnotation> anns;
  std::set<std::string> big;
  for (int i = 0; i < 109; ++i) {
    const double x = 20 + 320.0 * (i % 11);
    const double y = 20 + 320.0 * (i / 11);
    const bool oversized = i % 16 == 3;
    auto a = square("r" + std::to_string(i), x, y, oversized ? 280 : 60, oversized ? 40 : 90);
    if (oversized) big.insert(a.region_id);
    anns.push_back(a);
  }
  ASSERT_EQ(big.size(), 7u);
  OrientOptions opt;
  opt.max_pixels = 256 * 256;
  const auto out = extract_regions(s, anns, 0, opt);
  EXPECT_EQ(out.regions.size(), 102u);
  ASSERT_EQ(out.skipped.size(), 7u);
  for (const auto& k : out.skipped) {
    EXPECT_EQ(k.reason, "region_too_large");
    EXPECT_TRUE(big.count(k.region_id)) << k.region_id << " " << k.reason << " " << k.pixel_count;
    EXPECT_GT(k.pixel_count, opt.max_pixels);
  }
  for (const auto& r : out.regions) {
    EXPECT_EQ(r.bbox.width, 256);
    EXPECT_EQ(r.label, ClassLabel::Benign);
  }
}

TEST(ExtractRegions, RegionOverSlideEdgeIsPaddedWhite) {
  const MemorySlide s(RgbImage(512, 512, 0));
  const std::vector anns = {square("edge", 400, 100, 200, 60)};
  const auto out = extract_regions(s, anns, 0);
  ASSERT_EQ(out.regions.size(), 1u);
  const auto& r = out.regions[0];
  bool saw_black = false, saw_white = false;
  for (int y = 0; y < r.mask.height; ++y)
    for (int x = 0; x < r.mask.width; ++x)
      if (r.mask.at(x, y)) {
        const auto v = r.image.at(x, y)[0];
        saw_black |= v == 0;
        saw_white |= v == 255;
      }
  EXPECT_TRUE(saw_black);
  EXPECT_TRUE(saw_white);
}
