#pragma once

#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "milbench/image.hpp"
#include "milbench/rng.hpp"

namespace milbench {

/// Augmentation strengths for contrastive view generation. Every field has
/// an identity setting (0, 1 or {0}) that turns the augmentation off.
struct AugmentSpec {
  /// Brightness delta drawn uniformly (integer intensity units).
  std::pair<int, int> brightness_delta_range = {-32, 32};
  /// Contrast factor drawn uniformly; the default is [1/c, c] with c = 1.333.
  std::pair<double, double> contrast_factor_range = {0.75, 1.333};
  double mask_fraction = 0.1;
  int blur_radius = 1;
  int cutout_size = 96;
  /// Allowed rotations in degrees, each a multiple of 90.
  std::vector<int> rotation_set = {0, 90, 180, 270};
  int shift_max = 32;
  int crop_size = 320;
  std::uint8_t fill_value = 255;
  /// Each non-crop augmentation is applied independently with this probability.
  double apply_probability = 0.5;

  void validate() const;
};

std::string augment_spec_to_json(const AugmentSpec& spec);
AugmentSpec augment_spec_from_json(const std::string& json);
AugmentSpec load_augment_spec(const std::filesystem::path& path);

Image crop(const Image& tile, int x, int y, int width, int height);
Image random_crop(const Image& tile, int crop_size, SeededRng& rng);

Image adjust_brightness(const Image& tile, int delta);
Image adjust_contrast(const Image& tile, double factor);

/// Sets exactly round(fraction * pixels) uniformly chosen pixels to `fill`.
Image random_mask(const Image& tile, double fraction, SeededRng& rng, std::uint8_t fill = 255);
/// Fills one uniformly placed square of side `size` (clamped to the tile).
Image cutout(const Image& tile, int size, SeededRng& rng, std::uint8_t fill = 255);

/// Mean over the (2r+1)^2 window with clamp-to-edge, rounded half-up.
Image box_blur(const Image& tile, int radius);

/// Clockwise rotation by k quarter turns (k taken mod 4).
Image rotate_quarter(const Image& tile, int k);
/// out(x, y) = in(x - dx, y - dy); vacated pixels take `fill`.
Image shift(const Image& tile, int dx, int dy, std::uint8_t fill = 255);

/// Two views of the same tile: mandatory random crop, then a random subset
/// of the remaining augmentations in random order, drawn independently per
/// view. Fully determined by (tile, spec, rng state).
std::pair<Image, Image> make_two_views(const Image& tile, const AugmentSpec& spec, SeededRng& rng);

}  // namespace milbench
