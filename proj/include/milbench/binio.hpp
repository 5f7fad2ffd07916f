#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "milbench/errors.hpp"

namespace milbench::binio {

/// Little-endian byte sink for the MILE/MILW/MILP containers.
class Writer {
 public:
  void bytes(std::string_view s) { buf_.insert(buf_.end(), s.begin(), s.end()); }
  void u16(std::uint16_t v) { put(v, 2); }
  void u32(std::uint32_t v) { put(v, 4); }
  void f32(float v) { u32(std::bit_cast<std::uint32_t>(v)); }

  const std::vector<char>& buffer() const { return buf_; }

 private:
  void put(std::uint64_t v, int n) {
    for (int i = 0; i < n; ++i) buf_.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
  }
  std::vector<char> buf_;
};

/// Little-endian cursor over an in-memory file.
class Reader {
 public:
  explicit Reader(std::span<const char> data) : data_(data) {}

  std::size_t remaining() const { return data_.size() - pos_; }
  std::size_t position() const { return pos_; }

  std::string bytes(std::size_t n) {
    need(n);
    std::string out(data_.data() + pos_, n);
    pos_ += n;
    return out;
  }
  std::uint16_t u16() { return static_cast<std::uint16_t>(get(2)); }
  std::uint32_t u32() { return static_cast<std::uint32_t>(get(4)); }
  float f32() { return std::bit_cast<float>(u32()); }

 private:
  void need(std::size_t n) const {
    if (remaining() < n) throw ValidationError("unexpected end of data at byte " + std::to_string(pos_));
  }
  std::uint64_t get(int n) {
    need(static_cast<std::size_t>(n));
    std::uint64_t v = 0;
    for (int i = 0; i < n; ++i) {
      v |= static_cast<std::uint64_t>(static_cast<unsigned char>(data_[pos_ + i])) << (8 * i);
    }
    pos_ += static_cast<std::size_t>(n);
    return v;
  }

  std::span<const char> data_;
  std::size_t pos_ = 0;
};

std::vector<char> read_file(const std::filesystem::path& path);
/// Creates missing parent directories.
void write_file(const std::filesystem::path& path, std::span<const char> data);
void write_text(const std::filesystem::path& path, std::string_view text);

}  // namespace milbench::binio
