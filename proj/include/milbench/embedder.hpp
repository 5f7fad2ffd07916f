#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "milbench/image.hpp"
#include "milbench/rng.hpp"
#include "milbench/tiler.hpp"

namespace milbench {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// K x L x D token embeddings for one slide, float32, row-major.
struct EmbeddingBag {
  std::string slide_id;
  std::uint32_t K = 0;
  std::uint32_t L = 0;
  std::uint32_t D = 0;
  std::vector<float> data;

  EmbeddingBag() = default;
  EmbeddingBag(std::string id, std::uint32_t k, std::uint32_t l, std::uint32_t d)
      : slide_id(std::move(id)), K(k), L(l), D(d), data(static_cast<std::size_t>(k) * l * d, 0.0f) {}

  std::size_t tokens() const { return static_cast<std::size_t>(K) * L; }
  std::span<const float> token(std::size_t t) const { return {data.data() + t * D, D}; }
  std::span<float> token(std::size_t t) { return {data.data() + t * D, D}; }

  /// All K*L tokens as a (K*L) x D matrix in float64.
  RowMatrix token_matrix() const;

  /// Throws ValidationError on bad shape or non-finite values.
  void validate() const;

  friend bool operator==(const EmbeddingBag&, const EmbeddingBag&) = default;
};

/// Linear patch encoder: each non-overlapping patch (pixels scaled to
/// [0, 1], flattened as (py, px, channel)) maps to one D-dim token.
struct ToyEncoderParams {
  int patch_size = 96;
  /// (3 * patch_size^2) x D
  RowMatrix projection;
  Eigen::VectorXd bias;

  int input_dim() const { return Image::kChannels * patch_size * patch_size; }
  int embed_dim() const { return static_cast<int>(bias.size()); }

  static ToyEncoderParams zeros(int patch_size, int embed_dim);
  /// projection ~ U(-1/sqrt(fan_in), 1/sqrt(fan_in)), bias = 0.
  static ToyEncoderParams random(int patch_size, int embed_dim, SeededRng& rng);
};

/// Flattens a tile into an L x (3 * patch^2) matrix of [0, 1] patch vectors.
RowMatrix patch_matrix(const Image& tile, int patch_size);

/// L x D tokens, L = (side / patch_size)^2.
RowMatrix encode_tile(const Image& tile, const ToyEncoderParams& params);

/// Encodes each tile in bag order; parallel over tiles, output independent of `jobs`.
EmbeddingBag encode_bag(const TileBag& bag, const ToyEncoderParams& params, int jobs = 1);

/// MILE container:
///   "MILE" | u16 version = 1 | u32 K | u32 L | u32 D | K*L*D f32 |
///   optional (u16 byte length, UTF-8 slide_id)
/// All integers and floats little-endian.
std::vector<char> encode_mile(const EmbeddingBag& bag);
EmbeddingBag decode_mile(std::span<const char> bytes);

void save_embeddings(const std::filesystem::path& path, const EmbeddingBag& bag);
EmbeddingBag load_external_embeddings(const std::filesystem::path& path);

}  // namespace milbench
