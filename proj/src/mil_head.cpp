#include "milbench/mil_head.hpp"

#include <cmath>
#include <cstdio>
#include <limits>
#include <numeric>

#include "milbench/binio.hpp"
#include "milbench/errors.hpp"
#include "milbench/evalkit.hpp"
#include "milbench/manifest.hpp"
#include "milbench/parallel.hpp"

namespace milbench {

namespace {

constexpr char kWeightsMagic[] = "MILW";
constexpr std::uint16_t kWeightsVersion = 1;

void fill_uniform(double* data, Eigen::Index n, double bound, SeededRng& rng) {
  for (Eigen::Index i = 0; i < n; ++i) data[i] = rng.uniform(-bound, bound);
}

void check_tokens(const RowMatrix& tokens, const MilHeadParams& params) {
  if (tokens.rows() == 0) throw ContractError("bag has no tokens");
  if (tokens.cols() != params.embed_dim()) {
    throw ContractError("embedding dim " + std::to_string(tokens.cols()) + " does not match head dim " +
                        std::to_string(params.embed_dim()));
  }
}

RowMatrix checked_tokens(const EmbeddingBag& bag) {
  bag.validate();
  return bag.token_matrix();
}

Eigen::Vector2d softmax2(const Eigen::Vector2d& logits) {
  const double m = logits.maxCoeff();
  const Eigen::Vector2d e(std::exp(logits[0] - m), std::exp(logits[1] - m));
  return e / e.sum();
}

struct PreparedSample {
  RowMatrix tokens;
  ClassLabel label;
};

// Per-sample weights of the batch objective: each sample of class c carries
// w_c / (N_c * sum of weights over classes present), so the summed loss is
// the weighted log loss restricted to the batch.
std::vector<double> batch_sample_weights(const std::vector<PreparedSample>& samples,
                                         std::span<const std::size_t> batch, const TrainConfig& cfg) {
  std::array<std::size_t, kNumClasses> counts{};
  for (std::size_t i : batch) ++counts[static_cast<std::size_t>(class_index(samples[i].label))];
  double weight_sum = 0.0;
  for (std::size_t c = 0; c < kNumClasses; ++c) {
    if (counts[c] > 0) weight_sum += cfg.class_weights[c];
  }
  std::vector<double> out;
  out.reserve(batch.size());
  for (std::size_t i : batch) {
    const auto c = static_cast<std::size_t>(class_index(samples[i].label));
    out.push_back(cfg.class_weights[c] / (static_cast<double>(counts[c]) * weight_sum));
  }
  return out;
}

double split_loss(const std::vector<PreparedSample>& samples, const MilHeadParams& params,
                  const TrainConfig& cfg) {
  if (samples.empty()) return std::numeric_limits<double>::quiet_NaN();
  std::vector<double> p_ce(samples.size());
  std::vector<ClassLabel> labels(samples.size());
  parallel_for(samples.size(), cfg.jobs, [&](std::size_t i) {
    p_ce[i] = head_forward(samples[i].tokens, params).probs[0];
    labels[i] = samples[i].label;
  });
  try {
    return weighted_log_loss(binary_metric_input(p_ce, labels, cfg.class_weights), cfg.prob_clip);
  } catch (const DomainError&) {
    return std::numeric_limits<double>::quiet_NaN();
  }
}

std::vector<PreparedSample> prepare(const std::vector<LabeledBag>& bags, int jobs) {
  std::vector<PreparedSample> out(bags.size());
  parallel_for(bags.size(), jobs, [&](std::size_t i) {
    out[i] = {checked_tokens(*bags[i].bag), bags[i].label};
  });
  return out;
}

}  // namespace

MilHeadParams::MilHeadParams(int embed_dim, int att_dim) : d_(embed_dim), d_att_(att_dim) {
  if (embed_dim < 1 || att_dim < 1) throw ArgumentError("head dims must be >= 1");
  values_ = Eigen::VectorXd::Zero(off_bfc() + kNumClasses);
}

MilHeadParams MilHeadParams::random(int embed_dim, int att_dim, SeededRng& rng) {
  MilHeadParams p(embed_dim, att_dim);
  fill_uniform(p.V().data(), p.V().size(), 1.0 / std::sqrt(static_cast<double>(embed_dim)), rng);
  fill_uniform(p.w().data(), p.w().size(), 1.0 / std::sqrt(static_cast<double>(att_dim)), rng);
  fill_uniform(p.W_fc().data(), p.W_fc().size(), 1.0 / std::sqrt(static_cast<double>(embed_dim)), rng);
  return p;
}

PoolResult attention_pool(const RowMatrix& tokens, const MilHeadParams& params) {
  check_tokens(tokens, params);
  PoolResult out;
  out.hidden = tokens * params.V().transpose();
  out.hidden.rowwise() += params.b().transpose();
  out.hidden = out.hidden.array().tanh().matrix();
  const Eigen::VectorXd scores = out.hidden * params.w();
  const double m = scores.maxCoeff();
  out.alpha = (scores.array() - m).exp().matrix();
  out.alpha /= out.alpha.sum();
  out.z = tokens.transpose() * out.alpha;
  return out;
}

PoolResult attention_pool(const EmbeddingBag& bag, const MilHeadParams& params) {
  return attention_pool(checked_tokens(bag), params);
}

ForwardTrace head_forward(const RowMatrix& tokens, const MilHeadParams& params) {
  PoolResult pool = attention_pool(tokens, params);
  ForwardTrace t;
  t.logits = params.W_fc() * pool.z + params.b_fc();
  t.probs = softmax2(t.logits);
  t.alpha = std::move(pool.alpha);
  t.z = std::move(pool.z);
  t.hidden = std::move(pool.hidden);
  return t;
}

ForwardTrace head_forward(const EmbeddingBag& bag, const MilHeadParams& params) {
  return head_forward(checked_tokens(bag), params);
}

MilHeadParams head_backward(const RowMatrix& tokens, const MilHeadParams& params, const ForwardTrace& trace,
                            ClassLabel target, double weight) {
  check_tokens(tokens, params);
  if (trace.alpha.size() != tokens.rows() || trace.z.size() != tokens.cols() ||
      trace.hidden.rows() != tokens.rows() || trace.hidden.cols() != params.att_dim()) {
    throw ContractError("forward trace does not belong to this bag and head");
  }
  MilHeadParams grad(params.embed_dim(), params.att_dim());

  // d(-w ln p_y)/d logits = w (p - onehot(y))
  Eigen::Vector2d g_logits = trace.probs;
  g_logits[class_index(target)] -= 1.0;
  g_logits *= weight;

  grad.W_fc() = g_logits * trace.z.transpose();
  grad.b_fc() = g_logits;
  const Eigen::VectorXd g_z = params.W_fc().transpose() * g_logits;

  // z = E^T alpha; alpha = softmax(s)
  const Eigen::VectorXd g_alpha = tokens * g_z;
  const double mean_g = trace.alpha.dot(g_alpha);
  const Eigen::VectorXd g_s = trace.alpha.array() * (g_alpha.array() - mean_g);

  // s = H w; H = tanh(E V^T + 1 b^T)
  grad.w() = trace.hidden.transpose() * g_s;
  const RowMatrix g_pre =
      ((g_s * params.w().transpose()).array() * (1.0 - trace.hidden.array().square())).matrix();
  grad.V() = g_pre.transpose() * tokens;
  grad.b() = g_pre.colwise().sum().transpose();
  return grad;
}

MilHeadParams head_backward(const EmbeddingBag& bag, const MilHeadParams& params, const ForwardTrace& trace,
                            ClassLabel target, double weight) {
  return head_backward(checked_tokens(bag), params, trace, target, weight);
}

void MomentumSgd::step(Eigen::VectorXd& params, const Eigen::VectorXd& gradient) {
  if (gradient.size() != params.size()) throw ContractError("gradient and parameter sizes differ");
  if (velocity.size() != params.size()) velocity = Eigen::VectorXd::Zero(params.size());
  velocity = momentum * velocity + gradient;
  params -= learning_rate * velocity;
}

void TrainConfig::validate() const {
  if (!(learning_rate >= 0.0)) throw ArgumentError("learning_rate must be >= 0");
  if (!(momentum >= 0.0 && momentum < 1.0)) throw ArgumentError("momentum must be in [0, 1)");
  if (epochs < 0) throw ArgumentError("epochs must be >= 0");
  if (!(prob_clip > 0.0 && prob_clip < 0.5)) throw ArgumentError("prob_clip must be in (0, 0.5)");
  for (double w : class_weights) {
    if (!(w > 0.0)) throw ArgumentError("class weights must be positive");
  }
  if (att_dim < 1) throw ArgumentError("att_dim must be >= 1");
  if (batch_size < 0) throw ArgumentError("batch_size must be >= 0");
}

MilHeadParams init_head(int embed_dim, const TrainConfig& cfg) {
  if (cfg.init == HeadInit::Zero) return MilHeadParams::zeros(embed_dim, cfg.att_dim);
  SeededRng rng(cfg.seed);
  MilHeadParams p = MilHeadParams::random(embed_dim, cfg.att_dim, rng);
  if (cfg.pooling == Pooling::Mean) p.w().setZero();
  return p;
}

TrainResult train_fold(const std::vector<LabeledBag>& train, const std::vector<LabeledBag>& val,
                       const TrainConfig& cfg) {
  if (train.empty()) throw ArgumentError("train_fold: empty training set");
  return train_fold(train, val, cfg, init_head(static_cast<int>(train.front().bag->D), cfg));
}

TrainResult train_fold(const std::vector<LabeledBag>& train, const std::vector<LabeledBag>& val,
                       const TrainConfig& cfg, MilHeadParams init) {
  cfg.validate();
  std::array<std::size_t, kNumClasses> counts{};
  for (const LabeledBag& s : train) ++counts[static_cast<std::size_t>(class_index(s.label))];
  for (std::size_t c = 0; c < kNumClasses; ++c) {
    if (counts[c] == 0) {
      throw ArgumentError(std::string("train_fold: no training samples of class ") +
                          std::string(to_string(static_cast<ClassLabel>(c))));
    }
  }

  const std::vector<PreparedSample> train_set = prepare(train, cfg.jobs);
  const std::vector<PreparedSample> val_set = prepare(val, cfg.jobs);

  TrainResult out{std::move(init), {}, {}};
  MilHeadParams& params = out.params;
  if (!train.empty()) {
    params.trained_K = train.front().bag->K;
    params.trained_L = train.front().bag->L;
  }
  MomentumSgd opt{cfg.learning_rate, cfg.momentum, {}};
  // Shuffle stream is separate from the initialisation stream.
  SeededRng shuffle_rng(mix_seed(cfg.seed, 1));

  std::vector<std::size_t> order(train_set.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  const std::size_t batch = cfg.batch_size == 0 ? order.size() : static_cast<std::size_t>(cfg.batch_size);
  const std::size_t att = params.attention_size();

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    if (cfg.batch_size > 0) shuffle_rng.shuffle(std::span<std::size_t>(order));
    for (std::size_t start = 0; start < order.size(); start += batch) {
      const std::span<const std::size_t> idx(order.data() + start, std::min(batch, order.size() - start));
      const std::vector<double> weights = batch_sample_weights(train_set, idx, cfg);
      std::vector<Eigen::VectorXd> grads(idx.size());
      parallel_for(idx.size(), cfg.jobs, [&](std::size_t i) {
        const PreparedSample& s = train_set[idx[i]];
        const ForwardTrace trace = head_forward(s.tokens, params);
        grads[i] = head_backward(s.tokens, params, trace, s.label, weights[i]).flat();
      });
      // Fixed-order reduction keeps training independent of cfg.jobs.
      Eigen::VectorXd total = Eigen::VectorXd::Zero(params.flat().size());
      for (const auto& g : grads) total += g;
      if (cfg.pooling == Pooling::Mean) total.head(static_cast<Eigen::Index>(att)).setZero();
      opt.step(params.flat(), total);
    }
    out.train_loss.push_back(split_loss(train_set, params, cfg));
    out.val_loss.push_back(split_loss(val_set, params, cfg));
  }
  return out;
}

std::vector<Prediction> predict(const std::vector<EmbeddingBag>& bags, const MilHeadParams& params, int jobs) {
  std::vector<Prediction> out(bags.size());
  parallel_for(bags.size(), jobs, [&](std::size_t i) {
    const EmbeddingBag& bag = bags[i];
    if (static_cast<int>(bag.D) != params.embed_dim() || (params.trained_K != 0 && bag.K != params.trained_K) ||
        (params.trained_L != 0 && bag.L != params.trained_L)) {
      throw ContractError("bag '" + bag.slide_id + "' shape " + std::to_string(bag.K) + "x" +
                          std::to_string(bag.L) + "x" + std::to_string(bag.D) +
                          " does not match the trained head");
    }
    const ForwardTrace t = head_forward(bag, params);
    out[i] = {bag.slide_id, t.probs[0], t.probs[1]};
  });
  return out;
}

std::string render_predictions(const std::vector<Prediction>& preds) {
  std::string out = "slide_id,p_CE,p_LAA\n";
  char buf[96];
  for (const Prediction& p : preds) {
    if (p.slide_id.find_first_of(",\r\n") != std::string::npos) {
      throw ArgumentError("slide_id '" + p.slide_id + "' contains a CSV delimiter");
    }
    std::snprintf(buf, sizeof buf, ",%.9f,%.9f\n", p.p_ce, p.p_laa);
    out += p.slide_id + buf;
  }
  return out;
}

std::vector<Prediction> parse_predictions(const std::string& text) {
  const auto lines = split_lines(text);
  if (lines.empty() || lines[0] != "slide_id,p_CE,p_LAA") throw ValidationError("predictions CSV: bad header");
  std::vector<Prediction> out;
  for (std::size_t i = 1; i < lines.size(); ++i) {
    if (lines[i].empty()) continue;
    const auto f = split_csv_line(lines[i]);
    if (f.size() != 3) throw ValidationError("predictions CSV line " + std::to_string(i + 1) + ": expected 3 fields");
    try {
      out.push_back({f[0], std::stod(f[1]), std::stod(f[2])});
    } catch (const std::exception&) {
      throw ValidationError("predictions CSV line " + std::to_string(i + 1) + ": bad probability");
    }
  }
  return out;
}

void write_predictions(const std::filesystem::path& path, const std::vector<Prediction>& preds) {
  binio::write_text(path, render_predictions(preds));
}

std::vector<Prediction> read_predictions(const std::filesystem::path& path) {
  const auto bytes = binio::read_file(path);
  return parse_predictions(std::string(bytes.begin(), bytes.end()));
}

std::vector<char> encode_weights(const MilHeadParams& params) {
  binio::Writer w;
  w.bytes(kWeightsMagic);
  w.u16(kWeightsVersion);
  w.u32(static_cast<std::uint32_t>(params.embed_dim()));
  w.u32(static_cast<std::uint32_t>(params.att_dim()));
  w.u32(params.trained_K);
  w.u32(params.trained_L);
  for (Eigen::Index i = 0; i < params.flat().size(); ++i) {
    const double v = params.flat()[i];
    if (!std::isfinite(v)) throw ValidationError("head parameters hold a non-finite value");
    w.f32(static_cast<float>(v));
  }
  return w.buffer();
}

MilHeadParams decode_weights(std::span<const char> bytes) {
  binio::Reader r(bytes);
  if (bytes.size() < 6 || r.bytes(4) != kWeightsMagic) throw FormatError("not a MILW file (bad magic)");
  const std::uint16_t version = r.u16();
  if (version != kWeightsVersion) throw FormatError("unsupported MILW version " + std::to_string(version));
  const std::uint32_t d = r.u32();
  const std::uint32_t d_att = r.u32();
  if (d == 0 || d_att == 0 || d > (1u << 24) || d_att > (1u << 24)) throw ValidationError("MILW: bad dimensions");
  MilHeadParams params(static_cast<int>(d), static_cast<int>(d_att));
  params.trained_K = r.u32();
  params.trained_L = r.u32();
  if (r.remaining() != static_cast<std::size_t>(params.flat().size()) * 4) {
    throw ValidationError("MILW payload length does not match its dimensions");
  }
  for (Eigen::Index i = 0; i < params.flat().size(); ++i) {
    const float v = r.f32();
    if (!std::isfinite(v)) throw ValidationError("MILW holds a non-finite value");
    params.flat()[i] = v;
  }
  return params;
}

void save_weights(const std::filesystem::path& path, const MilHeadParams& params) {
  binio::write_file(path, encode_weights(params));
}

MilHeadParams load_weights(const std::filesystem::path& path) { return decode_weights(binio::read_file(path)); }

}  // namespace milbench
