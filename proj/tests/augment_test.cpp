#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <map>

#include "milbench/augment.hpp"
#include "milbench/binio.hpp"
#include "milbench/errors.hpp"
#include "test_support.hpp"

using namespace milbench;
using milbench::testing::random_image;
using milbench::testing::TempDir;

namespace {

AugmentSpec degenerate_spec(int tile) {
  AugmentSpec s;
  s.brightness_delta_range = {0, 0};
  s.contrast_factor_range = {1.0, 1.0};
  s.mask_fraction = 0.0;
  s.blur_radius = 0;
  s.cutout_size = 0;
  s.rotation_set = {0};
  s.shift_max = 0;
  s.crop_size = tile;
  s.apply_probability = 1.0;
  return s;
}

}  // namespace

TEST(AugmentSpec, DefaultsAndValidation) {
  AugmentSpec s;
  EXPECT_EQ(s.brightness_delta_range, (std::pair<int, int>{-32, 32}));
  EXPECT_DOUBLE_EQ(s.contrast_factor_range.first, 0.75);
  EXPECT_DOUBLE_EQ(s.contrast_factor_range.second, 1.333);
  EXPECT_EQ(s.crop_size, 320);
  EXPECT_EQ(s.fill_value, 255);
  EXPECT_NO_THROW(s.validate());
  s.mask_fraction = 1.0;
  EXPECT_THROW(s.validate(), ArgumentError);
  s = {};
  s.brightness_delta_range = {5, -5};
  EXPECT_THROW(s.validate(), ArgumentError);
  s = {};
  s.rotation_set = {45};
  EXPECT_THROW(s.validate(), ArgumentError);
}

TEST(AugmentSpec, JsonRoundTrip) {
  AugmentSpec s;
  s.brightness_delta_range = {-3, 9};
  s.rotation_set = {0, 180};
  s.fill_value = 7;
  const std::string text = augment_spec_to_json(s);
  EXPECT_EQ(augment_spec_to_json(augment_spec_from_json(text)), text);
  TempDir dir;
  binio::write_text(dir / "a.json", text);
  EXPECT_EQ(load_augment_spec(dir / "a.json").rotation_set, s.rotation_set);
  EXPECT_THROW(augment_spec_from_json("[1,2]"), ArgumentError);
  EXPECT_THROW(augment_spec_from_json("{\"mask_fraction\": 2}"), ArgumentError);
  EXPECT_EQ(augment_spec_from_json("{}").crop_size, 320);
}

TEST(RandomCrop, FullSizeIsIdentity) {
  SeededRng rng(1);
  const Image t = random_image(9, 9, 1);
  EXPECT_EQ(random_crop(t, 9, rng), t);
  EXPECT_THROW(random_crop(t, 10, rng), ArgumentError);
}

TEST(RandomCrop, DeterministicForSeed) {
  const Image t = random_image(20, 20, 2);
  SeededRng a(5), b(5);
  for (int i = 0; i < 10; ++i) EXPECT_EQ(random_crop(t, 7, a), random_crop(t, 7, b));
}

TEST(RandomCrop, OffsetsAreUniform) {
  // Encode x in the red channel and y in green so the crop reveals its offset.
  Image t(8, 8);
  for (int y = 0; y < 8; ++y) {
    for (int x = 0; x < 8; ++x) {
      t.at(x, y, 0) = static_cast<std::uint8_t>(x);
      t.at(x, y, 1) = static_cast<std::uint8_t>(y);
    }
  }
  SeededRng rng(3);
  std::map<std::pair<int, int>, int> hist;
  constexpr int kDraws = 10000;
  for (int i = 0; i < kDraws; ++i) {
    const Image c = random_crop(t, 5, rng);
    ++hist[{c.at(0, 0, 0), c.at(0, 0, 1)}];
  }
  ASSERT_EQ(hist.size(), 16u);
  const double expected = kDraws / 16.0;
  const double sigma = std::sqrt(kDraws * (1.0 / 16) * (15.0 / 16));
  double chi2 = 0.0;
  for (const auto& [offset, count] : hist) {
    EXPECT_LT(std::abs(count - expected), 3 * sigma);
    chi2 += (count - expected) * (count - expected) / expected;
  }
  // 15 degrees of freedom; 37.70 is the 0.999 quantile.
  EXPECT_LT(chi2, 37.70);
}

TEST(Brightness, IdentityAndOracle) {
  const Image t = random_image(8, 8, 4);
  EXPECT_EQ(adjust_brightness(t, 0), t);
  const Image out = adjust_brightness(t, 30);
  for (std::size_t i = 0; i < t.pixels.size(); ++i) EXPECT_EQ(out.pixels[i], std::min(255, t.pixels[i] + 30));
  const Image dark = adjust_brightness(t, -300);
  for (auto p : dark.pixels) EXPECT_EQ(p, 0);
}

TEST(Contrast, IdentityFixedPointAndOracle) {
  const Image t = random_image(8, 8, 5);
  EXPECT_EQ(adjust_contrast(t, 1.0), t);
  EXPECT_EQ(adjust_contrast(Image(4, 4, 128), 2.0), Image(4, 4, 128));
  const Image out = adjust_contrast(t, 1.3);
  for (std::size_t i = 0; i < t.pixels.size(); ++i) {
    const double v = std::floor(128.0 + 1.3 * (t.pixels[i] - 128.0) + 0.5);
    EXPECT_EQ(out.pixels[i], static_cast<std::uint8_t>(std::clamp(v, 0.0, 255.0)));
  }
}

TEST(RandomMask, ZeroIsIdentity) {
  SeededRng rng(1);
  const Image t = random_image(8, 8, 6);
  EXPECT_EQ(random_mask(t, 0.0, rng), t);
}

TEST(RandomMask, ExactCount) {
  SeededRng rng(2);
  const Image out = random_mask(Image(20, 10, 0), 0.25, rng, 255);
  std::size_t masked = 0;
  double sum = 0.0;
  for (int y = 0; y < 10; ++y) {
    for (int x = 0; x < 20; ++x) {
      if (out.at(x, y, 0) == 255) {
        ++masked;
        EXPECT_EQ(out.at(x, y, 1), 255);
        EXPECT_EQ(out.at(x, y, 2), 255);
      }
    }
  }
  for (auto p : out.pixels) sum += p;
  EXPECT_EQ(masked, 50u);
  EXPECT_DOUBLE_EQ(sum / static_cast<double>(out.pixels.size()), 63.75);
}

TEST(Cutout, FullSizeFillsTile) {
  SeededRng rng(3);
  EXPECT_EQ(cutout(random_image(6, 6, 7), 6, rng, 9), Image(6, 6, 9));
  const Image t = random_image(6, 6, 8);
  EXPECT_EQ(cutout(t, 0, rng), t);
}

TEST(Cutout, FillsExactlyOneSquare) {
  SeededRng rng(4);
  const Image out = cutout(Image(16, 16, 0), 5, rng, 255);
  int filled = 0, minx = 99, miny = 99, maxx = -1, maxy = -1;
  for (int y = 0; y < 16; ++y) {
    for (int x = 0; x < 16; ++x) {
      if (out.at(x, y, 0) == 255) {
        ++filled;
        minx = std::min(minx, x);
        maxx = std::max(maxx, x);
        miny = std::min(miny, y);
        maxy = std::max(maxy, y);
      }
    }
  }
  EXPECT_EQ(filled, 25);
  EXPECT_EQ(maxx - minx, 4);
  EXPECT_EQ(maxy - miny, 4);
}

TEST(BoxBlur, IdentityConstantAndOracle) {
  const Image t = random_image(8, 8, 9);
  EXPECT_EQ(box_blur(t, 0), t);
  EXPECT_EQ(box_blur(Image(5, 5, 33), 2), Image(5, 5, 33));
  EXPECT_THROW(box_blur(t, -1), ArgumentError);
  for (int r : {1, 2}) {
    const Image out = box_blur(t, r);
    for (int y = 0; y < 8; ++y) {
      for (int x = 0; x < 8; ++x) {
        for (int c = 0; c < 3; ++c) {
          long sum = 0;
          for (int dy = -r; dy <= r; ++dy) {
            for (int dx = -r; dx <= r; ++dx) sum += t.at(std::clamp(x + dx, 0, 7), std::clamp(y + dy, 0, 7), c);
          }
          const long n = (2 * r + 1) * (2 * r + 1);
          EXPECT_EQ(out.at(x, y, c), static_cast<std::uint8_t>(std::floor(static_cast<double>(sum) / n + 0.5)));
        }
      }
    }
  }
}

TEST(Rotate, QuarterTurnGroup) {
  const Image t = random_image(5, 3, 10);
  EXPECT_EQ(rotate_quarter(t, 0), t);
  Image r = t;
  for (int i = 0; i < 4; ++i) r = rotate_quarter(r, 1);
  EXPECT_EQ(r, t);
  for (int k = 0; k < 4; ++k) EXPECT_EQ(rotate_quarter(rotate_quarter(t, k), 4 - k), t);
  const Image q = rotate_quarter(t, 1);
  EXPECT_EQ(q.width, 3);
  EXPECT_EQ(q.height, 5);
  // Clockwise: top-left corner moves to top-right.
  EXPECT_EQ(q.at(2, 0, 0), t.at(0, 0, 0));
  EXPECT_EQ(rotate_quarter(t, 2).at(4, 2, 1), t.at(0, 0, 1));
}

TEST(Shift, IdentityAndInverseOnInterior) {
  const Image t = random_image(12, 12, 11);
  EXPECT_EQ(shift(t, 0, 0), t);
  const Image back = shift(shift(t, 3, -2, 255), -3, 2, 255);
  for (int y = 2; y < 10; ++y) {
    for (int x = 0; x < 9; ++x) {
      for (int c = 0; c < 3; ++c) EXPECT_EQ(back.at(x, y, c), t.at(x, y, c));
    }
  }
  const Image moved = shift(t, 2, 0, 7);
  EXPECT_EQ(moved.at(0, 5, 0), 7);
  EXPECT_EQ(moved.at(2, 5, 0), t.at(0, 5, 0));
}

TEST(TwoViews, DegenerateSpecGivesTile) {
  const Image t = random_image(10, 10, 12);
  SeededRng rng(1);
  const auto [a, b] = make_two_views(t, degenerate_spec(10), rng);
  EXPECT_EQ(a, t);
  EXPECT_EQ(b, t);
}

TEST(TwoViews, DeterministicForSeed) {
  AugmentSpec spec;
  spec.crop_size = 24;
  spec.cutout_size = 8;
  spec.shift_max = 4;
  const Image t = random_image(32, 32, 13);
  SeededRng a(77), b(77);
  EXPECT_EQ(make_two_views(t, spec, a), make_two_views(t, spec, b));
}

TEST(TwoViews, SeedsDiffer) {
  AugmentSpec spec;
  spec.crop_size = 24;
  spec.cutout_size = 8;
  spec.shift_max = 4;
  const Image t = random_image(32, 32, 14);
  SeededRng a(1), b(2);
  EXPECT_NE(make_two_views(t, spec, a), make_two_views(t, spec, b));
}

TEST(TwoViews, OutputsAreValidRasters) {
  AugmentSpec spec;
  spec.crop_size = 16;
  spec.cutout_size = 4;
  spec.shift_max = 3;
  spec.apply_probability = 0.8;
  SeededRng rng(5);
  for (int i = 0; i < 50; ++i) {
    const auto [a, b] = make_two_views(random_image(20, 20, rng), spec, rng);
    for (const Image* v : {&a, &b}) {
      EXPECT_TRUE(v->valid());
      EXPECT_EQ(v->width, 16);
      EXPECT_EQ(v->height, 16);
    }
  }
}
