#include "milbench/image_io.hpp"

#include <png.h>
#include <zlib.h>

#include <array>
#include <cctype>
#include <cstring>
#include <string>

#include "milbench/binio.hpp"
#include "milbench/errors.hpp"

namespace milbench {

namespace {

constexpr std::array<unsigned char, 8> kPngSignature = {0x89, 'P', 'N', 'G', '\r', '\n', 0x1A, '\n'};

bool is_ppm_space(char c) { return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v'; }

class PpmHeaderParser {
 public:
  explicit PpmHeaderParser(std::span<const char> bytes) : bytes_(bytes) {}

  std::size_t pos() const { return pos_; }

  void expect_magic() {
    if (bytes_.size() < 2) throw DecodeError("truncated PPM header", bytes_.size());
    if (bytes_[0] != 'P' || bytes_[1] != '6') throw DecodeError("not a binary PPM (P6)", 0);
    pos_ = 2;
  }

  long next_int() {
    skip_space_and_comments();
    if (pos_ >= bytes_.size()) throw DecodeError("truncated PPM header", pos_);
    const std::size_t start = pos_;
    long value = 0;
    while (pos_ < bytes_.size() && std::isdigit(static_cast<unsigned char>(bytes_[pos_]))) {
      value = value * 10 + (bytes_[pos_] - '0');
      if (value > (1L << 30)) throw DecodeError("PPM header value out of range", start);
      ++pos_;
    }
    if (pos_ == start) throw DecodeError("expected integer in PPM header", pos_);
    return value;
  }

  void single_whitespace() {
    if (pos_ >= bytes_.size()) throw DecodeError("truncated PPM header", pos_);
    if (!is_ppm_space(bytes_[pos_])) throw DecodeError("expected whitespace after PPM maxval", pos_);
    ++pos_;
  }

 private:
  void skip_space_and_comments() {
    while (pos_ < bytes_.size()) {
      if (is_ppm_space(bytes_[pos_])) {
        ++pos_;
      } else if (bytes_[pos_] == '#') {
        while (pos_ < bytes_.size() && bytes_[pos_] != '\n') ++pos_;
      } else {
        break;
      }
    }
  }

  std::span<const char> bytes_;
  std::size_t pos_ = 0;
};

std::uint32_t read_be32(const char* p) {
  const auto* u = reinterpret_cast<const unsigned char*>(p);
  return (std::uint32_t{u[0]} << 24) | (std::uint32_t{u[1]} << 16) | (std::uint32_t{u[2]} << 8) | u[3];
}

bool has_png_signature(std::span<const char> bytes) {
  return bytes.size() >= kPngSignature.size() &&
         std::memcmp(bytes.data(), kPngSignature.data(), kPngSignature.size()) == 0;
}

void validate_png_chunks(std::span<const char> bytes) {
  if (!has_png_signature(bytes)) throw DecodeError("missing PNG signature", 0);
  std::size_t pos = kPngSignature.size();
  bool first = true;
  while (true) {
    if (bytes.size() - pos < 12) throw DecodeError("truncated PNG chunk header", pos);
    const std::uint32_t length = read_be32(bytes.data() + pos);
    if (length > 0x7FFFFFFFu || bytes.size() - pos - 12 < length) {
      throw DecodeError("truncated PNG chunk", pos);
    }
    const char* type = bytes.data() + pos + 4;
    if (first && std::memcmp(type, "IHDR", 4) != 0) throw DecodeError("first PNG chunk is not IHDR", pos);
    first = false;
    const std::uint32_t stored_crc = read_be32(type + 4 + length);
    const auto crc = static_cast<std::uint32_t>(
        crc32(crc32(0L, Z_NULL, 0), reinterpret_cast<const Bytef*>(type), length + 4));
    if (crc != stored_crc) throw DecodeError("PNG chunk CRC mismatch", pos + 8 + length);
    const bool end = std::memcmp(type, "IEND", 4) == 0;
    pos += 12 + length;
    if (end) return;
  }
}

}  // namespace

Image decode_ppm(std::span<const char> bytes) {
  PpmHeaderParser parser(bytes);
  parser.expect_magic();
  const long width = parser.next_int();
  const long height = parser.next_int();
  const long maxval = parser.next_int();
  if (width < 1 || height < 1) throw DecodeError("PPM dimensions must be positive", parser.pos());
  if (maxval != 255) throw DecodeError("only 8-bit PPM (maxval 255) is supported", parser.pos());
  parser.single_whitespace();

  Image image(static_cast<int>(width), static_cast<int>(height));
  const std::size_t need = image.pixels.size();
  if (bytes.size() - parser.pos() < need) throw DecodeError("truncated PPM pixel data", bytes.size());
  std::memcpy(image.pixels.data(), bytes.data() + parser.pos(), need);
  return image;
}

std::vector<char> encode_ppm(const Image& image) {
  const std::string header =
      "P6\n" + std::to_string(image.width) + " " + std::to_string(image.height) + "\n255\n";
  std::vector<char> out(header.begin(), header.end());
  out.insert(out.end(), image.pixels.begin(), image.pixels.end());
  return out;
}

Image decode_png(std::span<const char> bytes) {
  validate_png_chunks(bytes);

  png_image png{};
  png.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_memory(&png, bytes.data(), bytes.size())) {
    const std::string msg = png.message;
    png_image_free(&png);
    throw DecodeError("PNG decode failed: " + msg, 0);
  }
  png.format = PNG_FORMAT_RGB;
  Image image(static_cast<int>(png.width), static_cast<int>(png.height));
  if (!png_image_finish_read(&png, nullptr, image.pixels.data(), 0, nullptr)) {
    const std::string msg = png.message;
    png_image_free(&png);
    throw DecodeError("PNG decode failed: " + msg, kPngSignature.size());
  }
  return image;
}

std::vector<char> encode_png(const Image& image) {
  if (!image.valid()) throw ArgumentError("encode_png: invalid image");
  png_image png{};
  png.version = PNG_IMAGE_VERSION;
  png.width = static_cast<png_uint_32>(image.width);
  png.height = static_cast<png_uint_32>(image.height);
  png.format = PNG_FORMAT_RGB;

  png_alloc_size_t size = 0;
  if (!png_image_write_get_memory_size(png, size, 0, image.pixels.data(), 0, nullptr)) {
    throw IoError(std::string("PNG encode failed: ") + png.message);
  }
  std::vector<char> out(size);
  if (!png_image_write_to_memory(&png, out.data(), &size, 0, image.pixels.data(), 0, nullptr)) {
    throw IoError(std::string("PNG encode failed: ") + png.message);
  }
  out.resize(size);
  return out;
}

Image decode_image(std::span<const char> bytes) {
  if (has_png_signature(bytes)) return decode_png(bytes);
  if (bytes.size() >= 1 && bytes[0] == 'P') return decode_ppm(bytes);
  throw DecodeError("unsupported raster format (expected PNG or binary PPM)", 0);
}

Image read_image(const std::filesystem::path& path) { return decode_image(binio::read_file(path)); }

void write_png(const std::filesystem::path& path, const Image& image) {
  binio::write_file(path, encode_png(image));
}

}  // namespace milbench
