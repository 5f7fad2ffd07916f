#include "milbench/ssl_pretrain.hpp"

#include <cmath>
#include <cstdio>
#include <numeric>

#include "milbench/binio.hpp"
#include "milbench/errors.hpp"
#include "milbench/mil_head.hpp"
#include "milbench/parallel.hpp"

namespace milbench {

namespace {

constexpr char kEncoderMagic[] = "MILP";
constexpr std::uint16_t kEncoderVersion = 1;
constexpr double kUnitTolerance = 1e-6;

void check_unit_rows(const RowMatrix& m, const char* what) {
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    const double n = m.row(i).norm();
    if (!(std::abs(n - 1.0) <= kUnitTolerance)) {
      throw ValidationError(std::string("info_nce_loss: ") + what + " row " + std::to_string(i) +
                            " has norm " + std::to_string(n));
    }
  }
}

void check_batch(const RowMatrix& q, const RowMatrix& k, double temperature) {
  if (q.rows() < 2) throw ArgumentError("info_nce_loss: batch size must be >= 2");
  if (q.rows() != k.rows() || q.cols() != k.cols()) throw ArgumentError("info_nce_loss: shape mismatch");
  if (!(temperature > 0.0)) throw ArgumentError("info_nce_loss: temperature must be > 0");
  check_unit_rows(q, "query");
  check_unit_rows(k, "key");
}

// Row-wise softmax of a square matrix.
RowMatrix softmax_rows(const RowMatrix& s) {
  RowMatrix p(s.rows(), s.cols());
  for (Eigen::Index i = 0; i < s.rows(); ++i) {
    const double m = s.row(i).maxCoeff();
    p.row(i) = (s.row(i).array() - m).exp().matrix();
    p.row(i) /= p.row(i).sum();
  }
  return p;
}

double mean_row_cross_entropy(const RowMatrix& s) {
  double total = 0.0;
  for (Eigen::Index i = 0; i < s.rows(); ++i) {
    const double m = s.row(i).maxCoeff();
    const double lse = m + std::log((s.row(i).array() - m).exp().sum());
    total += lse - s(i, i);
  }
  return total / static_cast<double>(s.rows());
}

}  // namespace

void SSLConfig::validate() const {
  if (!(temperature > 0.0)) throw ArgumentError("temperature must be > 0");
  if (!(ema_momentum >= 0.0 && ema_momentum <= 1.0)) throw ArgumentError("ema_momentum must be in [0, 1]");
  if (batch_size < 2) throw ArgumentError("SSL batch_size must be >= 2");
  if (epochs < 0) throw ArgumentError("epochs must be >= 0");
  if (proj_dim < 1) throw ArgumentError("proj_dim must be >= 1");
  if (!(learning_rate >= 0.0)) throw ArgumentError("learning_rate must be >= 0");
  if (!(sgd_momentum >= 0.0 && sgd_momentum < 1.0)) throw ArgumentError("sgd_momentum must be in [0, 1)");
}

SslEncoder SslEncoder::random(int patch_size, int embed_dim, int proj_dim, SeededRng& rng) {
  if (proj_dim < 1) throw ArgumentError("proj_dim must be >= 1");
  SslEncoder e;
  e.encoder = ToyEncoderParams::random(patch_size, embed_dim, rng);
  e.head_weight = RowMatrix(proj_dim, embed_dim);
  const double bound = 1.0 / std::sqrt(static_cast<double>(embed_dim));
  for (Eigen::Index i = 0; i < e.head_weight.size(); ++i) e.head_weight.data()[i] = rng.uniform(-bound, bound);
  e.head_bias = Eigen::VectorXd::Zero(proj_dim);
  return e;
}

Eigen::VectorXd SslEncoder::flat() const {
  Eigen::VectorXd v(encoder.projection.size() + encoder.bias.size() + head_weight.size() + head_bias.size());
  v << Eigen::Map<const Eigen::VectorXd>(encoder.projection.data(), encoder.projection.size()), encoder.bias,
      Eigen::Map<const Eigen::VectorXd>(head_weight.data(), head_weight.size()), head_bias;
  return v;
}

void SslEncoder::set_flat(const Eigen::VectorXd& values) {
  Eigen::Index off = 0;
  auto take = [&](double* dst, Eigen::Index n) {
    if (off + n > values.size()) throw ContractError("flat encoder vector too short");
    std::copy(values.data() + off, values.data() + off + n, dst);
    off += n;
  };
  take(encoder.projection.data(), encoder.projection.size());
  take(encoder.bias.data(), encoder.bias.size());
  take(head_weight.data(), head_weight.size());
  take(head_bias.data(), head_bias.size());
  if (off != values.size()) throw ContractError("flat encoder vector too long");
}

EncoderPair init_encoder_pair(int patch_size, int embed_dim, int proj_dim, std::uint64_t seed) {
  SeededRng rng(seed);
  SslEncoder q = SslEncoder::random(patch_size, embed_dim, proj_dim, rng);
  return {q, q};
}

ViewEmbedding embed_view(const Image& view, const SslEncoder& enc) {
  ViewEmbedding out;
  const RowMatrix patches = patch_matrix(view, enc.encoder.patch_size);
  out.mean_patch = patches.colwise().mean().transpose();
  out.token_mean = enc.encoder.projection.transpose() * out.mean_patch + enc.encoder.bias;
  const Eigen::VectorXd y = enc.head_weight * out.token_mean + enc.head_bias;
  out.norm = y.norm();
  if (out.norm == 0.0) {
    out.degenerate = true;
    out.unit = Eigen::VectorXd::Zero(y.size());
  } else {
    out.unit = y / out.norm;
  }
  return out;
}

double info_nce_loss(const RowMatrix& queries, const RowMatrix& keys, double temperature) {
  check_batch(queries, keys, temperature);
  const RowMatrix s = (queries * keys.transpose()) / temperature;
  const RowMatrix st = s.transpose();
  return 0.5 * (mean_row_cross_entropy(s) + mean_row_cross_entropy(st));
}

RowMatrix info_nce_query_grad(const RowMatrix& queries, const RowMatrix& keys, double temperature) {
  check_batch(queries, keys, temperature);
  const RowMatrix s = (queries * keys.transpose()) / temperature;
  const auto b = static_cast<double>(s.rows());
  const RowMatrix eye = RowMatrix::Identity(s.rows(), s.cols());
  // Rows of S (query -> keys) and rows of S^T (key -> queries).
  const RowMatrix g_rows = softmax_rows(s) - eye;
  const RowMatrix st = s.transpose();
  const RowMatrix g_cols = (softmax_rows(st) - eye).transpose();
  const RowMatrix g_s = (0.5 / b) * (g_rows + g_cols);
  return g_s * keys / temperature;
}

Eigen::VectorXd embed_view_backward(const ViewEmbedding& emb, const SslEncoder& enc,
                                    const Eigen::VectorXd& g_unit) {
  const Eigen::Index in_dim = enc.encoder.projection.rows();
  const Eigen::Index d = enc.encoder.projection.cols();
  const Eigen::Index p = enc.head_weight.rows();
  Eigen::VectorXd grad = Eigen::VectorXd::Zero(in_dim * d + d + p * d + p);
  if (emb.degenerate) return grad;

  const Eigen::VectorXd g_y = (g_unit - emb.unit * emb.unit.dot(g_unit)) / emb.norm;
  const Eigen::VectorXd g_m = enc.head_weight.transpose() * g_y;

  RowMap(grad.data(), in_dim, d) = emb.mean_patch * g_m.transpose();
  grad.segment(in_dim * d, d) = g_m;
  RowMap(grad.data() + in_dim * d + d, p, d) = g_y * emb.token_mean.transpose();
  grad.segment(in_dim * d + d + p * d, p) = g_y;
  return grad;
}

void momentum_update(EncoderPair& pair, double m) {
  if (!(m >= 0.0 && m <= 1.0)) throw ArgumentError("ema momentum must be in [0, 1]");
  const Eigen::VectorXd q = pair.query.flat();
  Eigen::VectorXd k = pair.key.flat();
  if (q.size() != k.size()) throw ContractError("query and key encoders differ in shape");
  k = m * k + (1.0 - m) * q;
  pair.key.set_flat(k);
}

PretrainResult pretrain(std::span<const Image> corpus, const AugmentSpec& aug, const SSLConfig& cfg,
                        EncoderPair init) {
  cfg.validate();
  aug.validate();
  if (corpus.size() < static_cast<std::size_t>(cfg.batch_size)) {
    throw ArgumentError("pretrain: corpus of " + std::to_string(corpus.size()) + " tiles is smaller than batch " +
                        std::to_string(cfg.batch_size));
  }
  if (init.query.proj_dim() != cfg.proj_dim) throw ArgumentError("pretrain: encoder proj_dim differs from config");

  PretrainResult out{std::move(init), {}};
  EncoderPair& pair = out.pair;
  MomentumSgd opt{cfg.learning_rate, cfg.sgd_momentum, {}};
  SeededRng order_rng(mix_seed(cfg.seed, 2));

  const auto batch = static_cast<std::size_t>(cfg.batch_size);
  const std::size_t steps = corpus.size() / batch;
  std::vector<std::size_t> order(corpus.size());
  std::iota(order.begin(), order.end(), std::size_t{0});

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    order_rng.shuffle(std::span<std::size_t>(order));
    const std::uint64_t epoch_seed = mix_seed(cfg.seed, 0x100 + static_cast<std::uint64_t>(epoch));
    double epoch_loss = 0.0;
    for (std::size_t step = 0; step < steps; ++step) {
      std::vector<ViewEmbedding> q_emb(batch);
      std::vector<ViewEmbedding> k_emb(batch);
      parallel_for(batch, cfg.jobs, [&](std::size_t i) {
        const std::size_t pos = step * batch + i;
        SeededRng rng(mix_seed(epoch_seed, pos));
        const auto [view_a, view_b] = make_two_views(corpus[order[pos]], aug, rng);
        q_emb[i] = embed_view(view_a, pair.query);
        k_emb[i] = embed_view(view_b, pair.key);
      });

      RowMatrix q(static_cast<Eigen::Index>(batch), cfg.proj_dim);
      RowMatrix k(static_cast<Eigen::Index>(batch), cfg.proj_dim);
      for (std::size_t i = 0; i < batch; ++i) {
        if (q_emb[i].degenerate || k_emb[i].degenerate) {
          throw ValidationError("pretrain: a view embedded to the zero vector");
        }
        q.row(static_cast<Eigen::Index>(i)) = q_emb[i].unit.transpose();
        k.row(static_cast<Eigen::Index>(i)) = k_emb[i].unit.transpose();
      }
      epoch_loss += info_nce_loss(q, k, cfg.temperature);
      const RowMatrix g_q = info_nce_query_grad(q, k, cfg.temperature);

      std::vector<Eigen::VectorXd> grads(batch);
      parallel_for(batch, cfg.jobs, [&](std::size_t i) {
        grads[i] = embed_view_backward(q_emb[i], pair.query, g_q.row(static_cast<Eigen::Index>(i)).transpose());
      });
      Eigen::VectorXd total = Eigen::VectorXd::Zero(grads.front().size());
      for (const auto& g : grads) total += g;

      Eigen::VectorXd params = pair.query.flat();
      opt.step(params, total);
      pair.query.set_flat(params);
      momentum_update(pair, cfg.ema_momentum);
    }
    out.loss_curve.push_back(epoch_loss / static_cast<double>(steps));
  }
  return out;
}

std::string render_loss_curve(const std::vector<double>& curve) {
  std::string out = "epoch,mean_loss\n";
  char buf[64];
  for (std::size_t e = 0; e < curve.size(); ++e) {
    std::snprintf(buf, sizeof buf, "%zu,%.9f\n", e + 1, curve[e]);
    out += buf;
  }
  return out;
}

std::vector<char> encode_encoder(const SslEncoder& enc) {
  binio::Writer w;
  w.bytes(kEncoderMagic);
  w.u16(kEncoderVersion);
  w.u32(static_cast<std::uint32_t>(enc.encoder.patch_size));
  w.u32(static_cast<std::uint32_t>(enc.encoder.embed_dim()));
  w.u32(static_cast<std::uint32_t>(enc.proj_dim()));
  const Eigen::VectorXd v = enc.flat();
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    if (!std::isfinite(v[i])) throw ValidationError("encoder parameters hold a non-finite value");
    w.f32(static_cast<float>(v[i]));
  }
  return w.buffer();
}

SslEncoder decode_encoder(std::span<const char> bytes) {
  binio::Reader r(bytes);
  if (bytes.size() < 6 || r.bytes(4) != kEncoderMagic) throw FormatError("not a MILP file (bad magic)");
  const std::uint16_t version = r.u16();
  if (version != kEncoderVersion) throw FormatError("unsupported MILP version " + std::to_string(version));
  const std::uint32_t patch = r.u32();
  const std::uint32_t d = r.u32();
  const std::uint32_t p = r.u32();
  if (patch == 0 || d == 0 || p == 0 || patch > 4096 || d > (1u << 16) || p > (1u << 16)) {
    throw ValidationError("MILP: bad dimensions");
  }
  SslEncoder enc;
  enc.encoder = ToyEncoderParams::zeros(static_cast<int>(patch), static_cast<int>(d));
  enc.head_weight = RowMatrix::Zero(p, d);
  enc.head_bias = Eigen::VectorXd::Zero(p);
  Eigen::VectorXd v(enc.flat().size());
  if (r.remaining() != static_cast<std::size_t>(v.size()) * 4) {
    throw ValidationError("MILP payload length does not match its dimensions");
  }
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    const float f = r.f32();
    if (!std::isfinite(f)) throw ValidationError("MILP holds a non-finite value");
    v[i] = f;
  }
  enc.set_flat(v);
  return enc;
}

void save_encoder(const std::filesystem::path& path, const SslEncoder& enc) {
  binio::write_file(path, encode_encoder(enc));
}

SslEncoder load_encoder(const std::filesystem::path& path) { return decode_encoder(binio::read_file(path)); }

}  // namespace milbench
