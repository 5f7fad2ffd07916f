#include "milbench/augment.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numeric>

#include <json.hpp>

#include "milbench/binio.hpp"
#include "milbench/errors.hpp"

namespace milbench {

namespace {

constexpr int C = Image::kChannels;

std::uint8_t clamp_u8(double v) { return static_cast<std::uint8_t>(std::clamp(v, 0.0, 255.0)); }

enum class AugOp { Brightness, Contrast, Mask, Blur, Cutout, Rotation, Shift };
constexpr std::array kAllOps = {AugOp::Brightness, AugOp::Contrast, AugOp::Mask, AugOp::Blur,
                                AugOp::Cutout, AugOp::Rotation, AugOp::Shift};

Image apply_op(AugOp op, const Image& view, const AugmentSpec& spec, SeededRng& rng) {
  switch (op) {
    case AugOp::Brightness:
      return adjust_brightness(
          view, static_cast<int>(rng.uniform_int(spec.brightness_delta_range.first, spec.brightness_delta_range.second)));
    case AugOp::Contrast:
      return adjust_contrast(view, rng.uniform(spec.contrast_factor_range.first, spec.contrast_factor_range.second));
    case AugOp::Mask:
      return random_mask(view, spec.mask_fraction, rng, spec.fill_value);
    case AugOp::Blur:
      return box_blur(view, spec.blur_radius);
    case AugOp::Cutout:
      return cutout(view, spec.cutout_size, rng, spec.fill_value);
    case AugOp::Rotation: {
      const auto pick = rng.uniform_int(0, static_cast<std::int64_t>(spec.rotation_set.size()) - 1);
      return rotate_quarter(view, spec.rotation_set[static_cast<std::size_t>(pick)] / 90);
    }
    case AugOp::Shift: {
      const int dx = static_cast<int>(rng.uniform_int(-spec.shift_max, spec.shift_max));
      const int dy = static_cast<int>(rng.uniform_int(-spec.shift_max, spec.shift_max));
      return shift(view, dx, dy, spec.fill_value);
    }
  }
  return view;
}

Image make_view(const Image& tile, const AugmentSpec& spec, SeededRng& rng) {
  Image view = random_crop(tile, spec.crop_size, rng);
  std::vector<AugOp> chosen;
  for (AugOp op : kAllOps) {
    if (rng.bernoulli(spec.apply_probability)) chosen.push_back(op);
  }
  rng.shuffle(std::span<AugOp>(chosen));
  for (AugOp op : chosen) view = apply_op(op, view, spec, rng);
  return view;
}

}  // namespace

void AugmentSpec::validate() const {
  if (brightness_delta_range.first > brightness_delta_range.second) {
    throw ArgumentError("brightness_delta_range must be ordered");
  }
  if (contrast_factor_range.first <= 0.0 || contrast_factor_range.first > contrast_factor_range.second) {
    throw ArgumentError("contrast_factor_range must be ordered and positive");
  }
  if (!(mask_fraction >= 0.0 && mask_fraction < 1.0)) throw ArgumentError("mask_fraction must be in [0, 1)");
  if (blur_radius < 0) throw ArgumentError("blur_radius must be >= 0");
  if (cutout_size < 0) throw ArgumentError("cutout_size must be >= 0");
  if (shift_max < 0) throw ArgumentError("shift_max must be >= 0");
  if (crop_size <= 0) throw ArgumentError("crop_size must be positive");
  if (rotation_set.empty()) throw ArgumentError("rotation_set must not be empty");
  for (int deg : rotation_set) {
    if (deg < 0 || deg >= 360 || deg % 90 != 0) throw ArgumentError("rotation_set holds quarter turns only");
  }
  if (!(apply_probability >= 0.0 && apply_probability <= 1.0)) {
    throw ArgumentError("apply_probability must be in [0, 1]");
  }
}

std::string augment_spec_to_json(const AugmentSpec& spec) {
  nlohmann::ordered_json j;
  j["brightness_delta_range"] = {spec.brightness_delta_range.first, spec.brightness_delta_range.second};
  j["contrast_factor_range"] = {spec.contrast_factor_range.first, spec.contrast_factor_range.second};
  j["mask_fraction"] = spec.mask_fraction;
  j["blur_radius"] = spec.blur_radius;
  j["cutout_size"] = spec.cutout_size;
  j["rotation_set"] = spec.rotation_set;
  j["shift_max"] = spec.shift_max;
  j["crop_size"] = spec.crop_size;
  j["fill_value"] = spec.fill_value;
  j["apply_probability"] = spec.apply_probability;
  return j.dump(2);
}

AugmentSpec augment_spec_from_json(const std::string& text) {
  AugmentSpec spec;
  try {
    const auto j = nlohmann::json::parse(text);
    if (!j.is_object()) throw ArgumentError("augment spec must be a JSON object");
    if (j.contains("brightness_delta_range")) {
      const auto& r = j.at("brightness_delta_range");
      spec.brightness_delta_range = {r.at(0).get<int>(), r.at(1).get<int>()};
    }
    if (j.contains("contrast_factor_range")) {
      const auto& r = j.at("contrast_factor_range");
      spec.contrast_factor_range = {r.at(0).get<double>(), r.at(1).get<double>()};
    }
    spec.mask_fraction = j.value("mask_fraction", spec.mask_fraction);
    spec.blur_radius = j.value("blur_radius", spec.blur_radius);
    spec.cutout_size = j.value("cutout_size", spec.cutout_size);
    spec.rotation_set = j.value("rotation_set", spec.rotation_set);
    spec.shift_max = j.value("shift_max", spec.shift_max);
    spec.crop_size = j.value("crop_size", spec.crop_size);
    spec.fill_value = j.value("fill_value", spec.fill_value);
    spec.apply_probability = j.value("apply_probability", spec.apply_probability);
  } catch (const nlohmann::json::exception& e) {
    throw ArgumentError(std::string("augment spec: ") + e.what());
  }
  spec.validate();
  return spec;
}

AugmentSpec load_augment_spec(const std::filesystem::path& path) {
  const auto bytes = binio::read_file(path);
  return augment_spec_from_json(std::string(bytes.begin(), bytes.end()));
}

Image crop(const Image& tile, int x, int y, int width, int height) {
  if (x < 0 || y < 0 || width <= 0 || height <= 0 || x + width > tile.width || y + height > tile.height) {
    throw ArgumentError("crop window outside tile");
  }
  Image out(width, height);
  for (int row = 0; row < height; ++row) {
    const auto* src = &tile.pixels[tile.index(x, y + row)];
    std::copy(src, src + static_cast<std::size_t>(width) * C, &out.pixels[out.index(0, row)]);
  }
  return out;
}

Image random_crop(const Image& tile, int crop_size, SeededRng& rng) {
  if (crop_size <= 0 || crop_size > tile.width || crop_size > tile.height) {
    throw ArgumentError("random_crop: crop_size " + std::to_string(crop_size) + " exceeds tile");
  }
  const int x = static_cast<int>(rng.uniform_int(0, tile.width - crop_size));
  const int y = static_cast<int>(rng.uniform_int(0, tile.height - crop_size));
  return crop(tile, x, y, crop_size, crop_size);
}

Image adjust_brightness(const Image& tile, int delta) {
  Image out = tile;
  for (auto& p : out.pixels) p = static_cast<std::uint8_t>(std::clamp(p + delta, 0, 255));
  return out;
}

Image adjust_contrast(const Image& tile, double factor) {
  std::array<std::uint8_t, 256> lut{};
  for (int v = 0; v < 256; ++v) lut[v] = clamp_u8(std::floor(128.0 + factor * (v - 128) + 0.5));
  Image out = tile;
  for (auto& p : out.pixels) p = lut[p];
  return out;
}

Image random_mask(const Image& tile, double fraction, SeededRng& rng, std::uint8_t fill) {
  const std::size_t n = tile.pixel_count();
  const auto count = static_cast<std::size_t>(std::floor(fraction * static_cast<double>(n) + 0.5));
  Image out = tile;
  if (count == 0) return out;
  std::vector<std::uint32_t> idx(n);
  std::iota(idx.begin(), idx.end(), 0u);
  // Partial Fisher-Yates: the first `count` slots become a uniform sample.
  for (std::size_t i = 0; i < count; ++i) {
    const auto j = static_cast<std::size_t>(rng.uniform_int(static_cast<std::int64_t>(i), static_cast<std::int64_t>(n - 1)));
    std::swap(idx[i], idx[j]);
    for (int c = 0; c < C; ++c) out.pixels[static_cast<std::size_t>(idx[i]) * C + c] = fill;
  }
  return out;
}

Image cutout(const Image& tile, int size, SeededRng& rng, std::uint8_t fill) {
  Image out = tile;
  const int w = std::min(size, tile.width);
  const int h = std::min(size, tile.height);
  if (w <= 0 || h <= 0) return out;
  const int x0 = static_cast<int>(rng.uniform_int(0, tile.width - w));
  const int y0 = static_cast<int>(rng.uniform_int(0, tile.height - h));
  for (int y = y0; y < y0 + h; ++y) {
    auto* row = &out.pixels[out.index(x0, y)];
    std::fill(row, row + static_cast<std::size_t>(w) * C, fill);
  }
  return out;
}

Image box_blur(const Image& tile, int radius) {
  if (radius < 0) throw ArgumentError("box_blur: radius must be >= 0");
  if (radius == 0) return tile;
  const int w = tile.width;
  const int h = tile.height;
  // Horizontal window sums with clamped indices, then vertical; the division
  // happens once at the end so rounding matches the direct 2D mean.
  std::vector<std::uint32_t> horiz(tile.pixels.size());
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      for (int c = 0; c < C; ++c) {
        std::uint32_t s = 0;
        for (int d = -radius; d <= radius; ++d) s += tile.at(std::clamp(x + d, 0, w - 1), y, c);
        horiz[tile.index(x, y, c)] = s;
      }
    }
  }
  const std::int64_t n = static_cast<std::int64_t>(2 * radius + 1) * (2 * radius + 1);
  Image out(w, h);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      for (int c = 0; c < C; ++c) {
        std::int64_t s = 0;
        for (int d = -radius; d <= radius; ++d) s += horiz[tile.index(x, std::clamp(y + d, 0, h - 1), c)];
        out.at(x, y, c) = static_cast<std::uint8_t>(round_half_up_div(s, n));
      }
    }
  }
  return out;
}

Image rotate_quarter(const Image& tile, int k) {
  k = ((k % 4) + 4) % 4;
  if (k == 0) return tile;
  const int w = tile.width;
  const int h = tile.height;
  Image out = (k == 2) ? Image(w, h) : Image(h, w);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      int nx = 0;
      int ny = 0;
      switch (k) {
        case 1: nx = h - 1 - y; ny = x; break;
        case 2: nx = w - 1 - x; ny = h - 1 - y; break;
        default: nx = y; ny = w - 1 - x; break;
      }
      for (int c = 0; c < C; ++c) out.at(nx, ny, c) = tile.at(x, y, c);
    }
  }
  return out;
}

Image shift(const Image& tile, int dx, int dy, std::uint8_t fill) {
  if (dx == 0 && dy == 0) return tile;
  Image out(tile.width, tile.height, fill);
  for (int y = 0; y < tile.height; ++y) {
    const int sy = y - dy;
    if (sy < 0 || sy >= tile.height) continue;
    for (int x = 0; x < tile.width; ++x) {
      const int sx = x - dx;
      if (sx < 0 || sx >= tile.width) continue;
      for (int c = 0; c < C; ++c) out.at(x, y, c) = tile.at(sx, sy, c);
    }
  }
  return out;
}

std::pair<Image, Image> make_two_views(const Image& tile, const AugmentSpec& spec, SeededRng& rng) {
  spec.validate();
  Image a = make_view(tile, spec, rng);
  Image b = make_view(tile, spec, rng);
  return {std::move(a), std::move(b)};
}

}  // namespace milbench
