#include <gtest/gtest.h>

#include <omp.h>

#include "oracles.hpp"
#include "patchbag/kernels.hpp"

using namespace patchbag;
namespace k = patchbag::kernels;

class Kernels : public ::testing::Test {
 protected:
  void SetUp() override {
    saved_ = omp_get_max_threads();
    omp_set_num_threads(4);
  }
  void TearDown() override { omp_set_num_threads(saved_); }

 private:
  int saved_ = 1;
};

TEST_F(Kernels, AssignNearestMatchesSerialAndOracle) {
  const auto pts = oracle::random_matrix(500, 16, 1);
  auto cen = oracle::random_matrix(20, 16, 2);
  for (std::size_t t = 0; t < 16; ++t) cen(7, t) = cen(3, t);  // exact tie
  std::vector<std::uint32_t> a(500), b(500);
  std::vector<double> da(500), db(500);
  k::assign_nearest(pts, cen, a, da);
  k::serial::assign_nearest(pts, cen, b, db);
  EXPECT_EQ(a, b);
  EXPECT_EQ(da, db);
  for (std::size_t i = 0; i < 500; ++i) {
    EXPECT_EQ(a[i], oracle::nearest(pts.row(i), cen));
    EXPECT_NE(a[i], 7u);
  }
}

TEST_F(Kernels, RotationIsBitIdentical) {
  const RgbImage img = oracle::random_image(300, 200, 3);
  const auto map = k::RotationMap::about(150, 100, 27.5);
  const Rect out{-40, -60, 380, 330};
  EXPECT_EQ(k::rotate_image(img, map, out), k::serial::rotate_image(img, map, out));
  std::vector<std::uint8_t> mask(300 * 200);
  for (std::size_t i = 0; i < mask.size(); ++i) mask[i] = img.pixels[3 * i] > 128;
  EXPECT_EQ(k::rotate_mask(mask, 300, 200, map, out),
            k::serial::rotate_mask(mask, 300, 200, map, out));
}

TEST_F(Kernels, ZeroRotationIsIdentity) {
  const RgbImage img = oracle::random_image(64, 48, 4);
  const auto map = k::RotationMap::about(32, 24, 0.0);
  EXPECT_EQ(k::rotate_image(img, map, {0, 0, 64, 48}), img);
}

TEST_F(Kernels, RotationMapInverse) {
  const auto map = k::RotationMap::about(10, 20, 33.0);
  double qx, qy, x, y;
  map.forward(3.5, 7.25, qx, qy);
  map.inverse(qx, qy, x, y);
  EXPECT_NEAR(x, 3.5, 1e-12);
  EXPECT_NEAR(y, 7.25, 1e-12);
}

TEST_F(Kernels, WindowCountsMatchBruteForce) {
  const int w = 700, h = 530;
  std::vector<std::uint8_t> mask(static_cast<std::size_t>(w) * h);
  const RgbImage noise = oracle::random_image(w, h, 5);
  for (std::size_t i = 0; i < mask.size(); ++i) mask[i] = noise.pixels[3 * i] & 1;
  const auto a = k::window_counts(mask, w, h, 256);
  EXPECT_EQ(a, k::serial::window_counts(mask, w, h, 256));
  ASSERT_EQ(a.size(), 4u);
  for (int r = 0; r < 2; ++r)
    for (int c = 0; c < 2; ++c) {
      std::uint32_t n = 0;
      for (int y = r * 256; y < (r + 1) * 256; ++y)
        for (int x = c * 256; x < (c + 1) * 256; ++x) n += mask[y * w + x];
      EXPECT_EQ(a[r * 2 + c], n);
    }
}

TEST_F(Kernels, DescriptorsMatchSerialAndOracle) {
  std::vector<RgbImage> imgs;
  for (unsigned s = 0; s < 5; ++s) imgs.push_back(oracle::random_image(256, 256, 10 + s));
  std::vector<const RgbImage*> ptrs;
  for (const auto& i : imgs) ptrs.push_back(&i);
  const auto a = k::describe_patches(ptrs, 4);
  EXPECT_EQ(a, k::serial::describe_patches(ptrs, 4));
  ASSERT_EQ(a.size(), 5u * 16 * 16);
  const auto want = oracle::cell_descriptor(imgs[2], 64, 128, 64);
  const std::size_t base = (2 * 16 + 2 * 4 + 1) * 16;
  for (int d = 0; d < 16; ++d) EXPECT_NEAR(a[base + d], want[d], 1e-5) << d;
}

TEST_F(Kernels, TissueCount) {
  RgbImage img(10, 10);
  for (int x = 0; x < 10; ++x) img.at(x, 3)[0] = img.at(x, 3)[1] = img.at(x, 3)[2] = 100;
  EXPECT_EQ(k::count_tissue_pixels(img, 230), 10u);
  EXPECT_EQ(k::serial::count_tissue_pixels(img, 230), 10u);
}
