#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

namespace milbench {

/// 8-bit interleaved RGB raster, row-major.
struct Image {
  static constexpr int kChannels = 3;

  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> pixels;

  Image() = default;
  Image(int w, int h, std::uint8_t fill = 0)
      : width(w), height(h), pixels(static_cast<std::size_t>(w) * h * kChannels, fill) {}

  std::size_t index(int x, int y, int c = 0) const {
    return (static_cast<std::size_t>(y) * width + x) * kChannels + c;
  }
  std::uint8_t& at(int x, int y, int c) { return pixels[index(x, y, c)]; }
  std::uint8_t at(int x, int y, int c) const { return pixels[index(x, y, c)]; }

  std::size_t pixel_count() const { return static_cast<std::size_t>(width) * height; }
  bool valid() const {
    return width >= 1 && height >= 1 && pixels.size() == pixel_count() * kChannels;
  }

  friend bool operator==(const Image&, const Image&) = default;
};

/// Rounds a non-negative ratio num/den half-up.
constexpr std::int64_t round_half_up_div(std::int64_t num, std::int64_t den) {
  return (2 * num + den) / (2 * den);
}

}  // namespace milbench
