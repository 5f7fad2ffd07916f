#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "milbench/augment.hpp"
#include "milbench/embedder.hpp"

namespace milbench {

struct SSLConfig {
  double temperature = 0.2;
  double ema_momentum = 0.99;
  int batch_size = 16;
  int epochs = 10;
  std::uint64_t seed = 0;
  int proj_dim = 16;
  double learning_rate = 0.05;
  double sgd_momentum = 0.9;
  int jobs = 1;

  void validate() const;
};

/// Toy patch encoder followed by a linear projection head (D -> proj_dim).
struct SslEncoder {
  ToyEncoderParams encoder;
  RowMatrix head_weight;  // proj_dim x D
  Eigen::VectorXd head_bias;

  int proj_dim() const { return static_cast<int>(head_bias.size()); }

  static SslEncoder random(int patch_size, int embed_dim, int proj_dim, SeededRng& rng);

  /// Packs projection, bias, head_weight, head_bias into one vector.
  Eigen::VectorXd flat() const;
  void set_flat(const Eigen::VectorXd& values);
};

/// MoCo dual encoder. The key side only ever changes via momentum_update.
struct EncoderPair {
  SslEncoder query;
  SslEncoder key;
};

/// Query encoder gets a seeded random init; the key starts as an exact copy.
EncoderPair init_encoder_pair(int patch_size, int embed_dim, int proj_dim, std::uint64_t seed);

struct ViewEmbedding {
  /// L2-normalised projection, or the zero vector when `degenerate`.
  Eigen::VectorXd unit;
  bool degenerate = false;
  // Intermediates kept for the backward pass.
  Eigen::VectorXd mean_patch;
  Eigen::VectorXd token_mean;
  double norm = 0.0;
};

/// Mean of encode_tile's tokens, projected, then L2-normalised. The encoder
/// is linear, so the token mean equals encoding the mean patch.
ViewEmbedding embed_view(const Image& view, const SslEncoder& enc);

/// Symmetrised InfoNCE with positives on the diagonal:
///   0.5 * [CE_rows(Q K^T / tau) + CE_rows(K Q^T / tau)]
/// Rows of `queries` and `keys` must be unit-norm (tol 1e-6).
double info_nce_loss(const RowMatrix& queries, const RowMatrix& keys, double temperature);

/// d loss / d queries, keys treated as constants.
RowMatrix info_nce_query_grad(const RowMatrix& queries, const RowMatrix& keys, double temperature);

/// Gradient of a scalar loss w.r.t. the encoder's flat() parameters, given
/// d loss / d unit for one embedded view.
Eigen::VectorXd embed_view_backward(const ViewEmbedding& emb, const SslEncoder& enc, const Eigen::VectorXd& g_unit);

/// key <- m * key + (1 - m) * query, elementwise.
void momentum_update(EncoderPair& pair, double m);

struct PretrainResult {
  EncoderPair pair;
  /// Mean step loss per epoch.
  std::vector<double> loss_curve;
};

/// In-domain contrastive pretraining. Deterministic for a fixed seed and
/// any cfg.jobs: views for sample i of step s come from their own RNG stream.
PretrainResult pretrain(std::span<const Image> corpus, const AugmentSpec& aug, const SSLConfig& cfg,
                        EncoderPair init);

/// `epoch,mean_loss`
std::string render_loss_curve(const std::vector<double>& curve);

/// MILP container:
///   "MILP" | u16 version = 1 | u32 patch_size | u32 D | u32 proj_dim |
///   projection (3*patch^2 x D) | bias (D) | head_weight (proj_dim x D) |
///   head_bias (proj_dim), all f32 little-endian.
std::vector<char> encode_encoder(const SslEncoder& enc);
SslEncoder decode_encoder(std::span<const char> bytes);
void save_encoder(const std::filesystem::path& path, const SslEncoder& enc);
SslEncoder load_encoder(const std::filesystem::path& path);

}  // namespace milbench
