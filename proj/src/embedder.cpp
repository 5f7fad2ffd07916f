#include "milbench/embedder.hpp"

#include <cmath>

#include "milbench/binio.hpp"
#include "milbench/errors.hpp"
#include "milbench/parallel.hpp"

namespace milbench {

namespace {

constexpr char kMileMagic[] = "MILE";
constexpr std::uint16_t kMileVersion = 1;

}  // namespace

RowMatrix EmbeddingBag::token_matrix() const {
  RowMatrix m(static_cast<Eigen::Index>(tokens()), static_cast<Eigen::Index>(D));
  for (std::size_t i = 0; i < data.size(); ++i) m.data()[i] = data[i];
  return m;
}

void EmbeddingBag::validate() const {
  if (K == 0 || L == 0 || D == 0) throw ValidationError("embedding bag dimensions must be >= 1");
  if (data.size() != static_cast<std::size_t>(K) * L * D) {
    throw ValidationError("embedding bag payload length does not match K*L*D");
  }
  for (float v : data) {
    if (!std::isfinite(v)) throw ValidationError("embedding bag '" + slide_id + "' holds a non-finite value");
  }
}

ToyEncoderParams ToyEncoderParams::zeros(int patch_size, int embed_dim) {
  if (patch_size <= 0 || embed_dim <= 0) throw ArgumentError("encoder dims must be positive");
  ToyEncoderParams p;
  p.patch_size = patch_size;
  p.projection = RowMatrix::Zero(p.input_dim(), embed_dim);
  p.bias = Eigen::VectorXd::Zero(embed_dim);
  return p;
}

ToyEncoderParams ToyEncoderParams::random(int patch_size, int embed_dim, SeededRng& rng) {
  ToyEncoderParams p = zeros(patch_size, embed_dim);
  const double bound = 1.0 / std::sqrt(static_cast<double>(p.input_dim()));
  for (Eigen::Index i = 0; i < p.projection.size(); ++i) p.projection.data()[i] = rng.uniform(-bound, bound);
  return p;
}

RowMatrix patch_matrix(const Image& tile, int patch_size) {
  if (patch_size <= 0 || tile.width % patch_size != 0 || tile.height % patch_size != 0) {
    throw ArgumentError("tile " + std::to_string(tile.width) + "x" + std::to_string(tile.height) +
                        " is not divisible by patch size " + std::to_string(patch_size));
  }
  const int px = tile.width / patch_size;
  const int py = tile.height / patch_size;
  const int dim = Image::kChannels * patch_size * patch_size;
  RowMatrix x(static_cast<Eigen::Index>(px) * py, dim);
  for (int pr = 0; pr < py; ++pr) {
    for (int pc = 0; pc < px; ++pc) {
      double* out = x.row(static_cast<Eigen::Index>(pr) * px + pc).data();
      for (int y = 0; y < patch_size; ++y) {
        const std::uint8_t* src = &tile.pixels[tile.index(pc * patch_size, pr * patch_size + y)];
        for (int k = 0; k < patch_size * Image::kChannels; ++k) *out++ = src[k] / 255.0;
      }
    }
  }
  return x;
}

RowMatrix encode_tile(const Image& tile, const ToyEncoderParams& params) {
  const RowMatrix x = patch_matrix(tile, params.patch_size);
  RowMatrix tokens = x * params.projection;
  tokens.rowwise() += params.bias.transpose();
  return tokens;
}

EmbeddingBag encode_bag(const TileBag& bag, const ToyEncoderParams& params, int jobs) {
  if (bag.tiles.empty()) throw ArgumentError("encode_bag: empty bag");
  const Image& first = bag.tiles.front();
  if (first.width % params.patch_size != 0 || first.height % params.patch_size != 0) {
    throw ArgumentError("encode_bag: tile side not divisible by patch size");
  }
  const auto L = static_cast<std::uint32_t>((first.width / params.patch_size) * (first.height / params.patch_size));
  const auto D = static_cast<std::uint32_t>(params.embed_dim());
  EmbeddingBag out(bag.slide_id, static_cast<std::uint32_t>(bag.tiles.size()), L, D);
  parallel_for(bag.tiles.size(), jobs, [&](std::size_t k) {
    if (bag.tiles[k].width != first.width || bag.tiles[k].height != first.height) {
      throw ArgumentError("encode_bag: tiles differ in size");
    }
    const RowMatrix tokens = encode_tile(bag.tiles[k], params);
    float* dst = out.data.data() + k * L * D;
    for (Eigen::Index i = 0; i < tokens.size(); ++i) dst[i] = static_cast<float>(tokens.data()[i]);
  });
  return out;
}

std::vector<char> encode_mile(const EmbeddingBag& bag) {
  bag.validate();
  if (bag.slide_id.size() > 0xFFFF) throw ArgumentError("slide_id longer than 65535 bytes");
  binio::Writer w;
  w.bytes(kMileMagic);
  w.u16(kMileVersion);
  w.u32(bag.K);
  w.u32(bag.L);
  w.u32(bag.D);
  for (float v : bag.data) w.f32(v);
  if (!bag.slide_id.empty()) {
    w.u16(static_cast<std::uint16_t>(bag.slide_id.size()));
    w.bytes(bag.slide_id);
  }
  return w.buffer();
}

EmbeddingBag decode_mile(std::span<const char> bytes) {
  binio::Reader r(bytes);
  if (bytes.size() < 6 || r.bytes(4) != kMileMagic) throw FormatError("not a MILE file (bad magic)");
  const std::uint16_t version = r.u16();
  if (version != kMileVersion) throw FormatError("unsupported MILE version " + std::to_string(version));
  if (r.remaining() < 12) throw ValidationError("MILE header truncated");
  EmbeddingBag bag;
  bag.K = r.u32();
  bag.L = r.u32();
  bag.D = r.u32();
  if (bag.K == 0 || bag.L == 0 || bag.D == 0) throw ValidationError("MILE dimensions must be >= 1");
  const std::uint64_t count = std::uint64_t{bag.K} * bag.L * bag.D;
  if (count * 4 > r.remaining()) {
    throw ValidationError("MILE payload shorter than K*L*D = " + std::to_string(count) + " floats");
  }
  bag.data.resize(count);
  for (auto& v : bag.data) v = r.f32();
  if (r.remaining() > 0) {
    if (r.remaining() < 2) throw ValidationError("MILE trailing bytes do not form a slide_id record");
    const std::uint16_t len = r.u16();
    if (r.remaining() != len) throw ValidationError("MILE payload length does not match K*L*D");
    bag.slide_id = r.bytes(len);
  }
  bag.validate();
  return bag;
}

void save_embeddings(const std::filesystem::path& path, const EmbeddingBag& bag) {
  binio::write_file(path, encode_mile(bag));
}

EmbeddingBag load_external_embeddings(const std::filesystem::path& path) {
  return decode_mile(binio::read_file(path));
}

}  // namespace milbench
