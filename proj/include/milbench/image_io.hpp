#pragma once

#include <filesystem>
#include <span>
#include <vector>

#include "milbench/image.hpp"

namespace milbench {

/// Binary PPM (P6, maxval 255).
Image decode_ppm(std::span<const char> bytes);
std::vector<char> encode_ppm(const Image& image);

/// PNG of any bit depth / colour type; output is always 8-bit RGB.
/// Chunk framing (lengths, CRCs) is validated first so corrupt files report
/// the offset of the offending chunk.
Image decode_png(std::span<const char> bytes);
/// Deterministic 8-bit RGB PNG (fixed zlib level and filter).
std::vector<char> encode_png(const Image& image);

/// Sniffs the magic bytes and dispatches to the PNG or PPM decoder.
Image decode_image(std::span<const char> bytes);

Image read_image(const std::filesystem::path& path);
void write_png(const std::filesystem::path& path, const Image& image);

}  // namespace milbench
