#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "milbench/embedder.hpp"
#include "milbench/labels.hpp"
#include "milbench/rng.hpp"

namespace milbench {

using RowMap = Eigen::Map<RowMatrix>;
using ConstRowMap = Eigen::Map<const RowMatrix>;
using VecMap = Eigen::Map<Eigen::VectorXd>;
using ConstVecMap = Eigen::Map<const Eigen::VectorXd>;

/// Learnable parameters of the classification head, stored contiguously in
/// the order V, b, w, W_fc, b_fc so optimizers and gradient checks can treat
/// them as one flat vector.
///
/// Attention score of token e_t:  s_t = w . tanh(V e_t + b)
/// Pooled embedding:              z = sum_t softmax(s)_t e_t
/// Logits:                        W_fc z + b_fc      (class 0 = CE, 1 = LAA)
class MilHeadParams {
 public:
  MilHeadParams() = default;
  MilHeadParams(int embed_dim, int att_dim);

  static MilHeadParams zeros(int embed_dim, int att_dim) { return {embed_dim, att_dim}; }
  /// Weights ~ U(-1/sqrt(fan_in), 1/sqrt(fan_in)); biases zero.
  static MilHeadParams random(int embed_dim, int att_dim, SeededRng& rng);

  int embed_dim() const { return d_; }
  int att_dim() const { return d_att_; }

  RowMap V() { return RowMap(values_.data(), d_att_, d_); }
  ConstRowMap V() const { return ConstRowMap(values_.data(), d_att_, d_); }
  VecMap b() { return VecMap(values_.data() + off_b(), d_att_); }
  ConstVecMap b() const { return ConstVecMap(values_.data() + off_b(), d_att_); }
  VecMap w() { return VecMap(values_.data() + off_w(), d_att_); }
  ConstVecMap w() const { return ConstVecMap(values_.data() + off_w(), d_att_); }
  RowMap W_fc() { return RowMap(values_.data() + off_wfc(), kNumClasses, d_); }
  ConstRowMap W_fc() const { return ConstRowMap(values_.data() + off_wfc(), kNumClasses, d_); }
  VecMap b_fc() { return VecMap(values_.data() + off_bfc(), kNumClasses); }
  ConstVecMap b_fc() const { return ConstVecMap(values_.data() + off_bfc(), kNumClasses); }

  /// Range of the attention parameters (V, b, w) inside flat().
  std::size_t attention_size() const { return static_cast<std::size_t>(off_wfc()); }

  Eigen::VectorXd& flat() { return values_; }
  const Eigen::VectorXd& flat() const { return values_; }

  /// Bag geometry the head was trained on; 0 = unconstrained.
  std::uint32_t trained_K = 0;
  std::uint32_t trained_L = 0;

 private:
  Eigen::Index off_b() const { return static_cast<Eigen::Index>(d_att_) * d_; }
  Eigen::Index off_w() const { return off_b() + d_att_; }
  Eigen::Index off_wfc() const { return off_w() + d_att_; }
  Eigen::Index off_bfc() const { return off_wfc() + static_cast<Eigen::Index>(kNumClasses) * d_; }

  int d_ = 0;
  int d_att_ = 0;
  Eigen::VectorXd values_;
};

struct PoolResult {
  Eigen::VectorXd z;
  Eigen::VectorXd alpha;
  /// tanh(V e_t + b), one row per token.
  RowMatrix hidden;
};

struct ForwardTrace {
  Eigen::VectorXd alpha;
  Eigen::VectorXd z;
  Eigen::Vector2d logits;
  Eigen::Vector2d probs;
  RowMatrix hidden;
};

/// Softmax attention over all K*L tokens jointly (max-subtracted).
PoolResult attention_pool(const RowMatrix& tokens, const MilHeadParams& params);
PoolResult attention_pool(const EmbeddingBag& bag, const MilHeadParams& params);

ForwardTrace head_forward(const RowMatrix& tokens, const MilHeadParams& params);
ForwardTrace head_forward(const EmbeddingBag& bag, const MilHeadParams& params);

/// Gradient of weight * (-ln p_target) with respect to every parameter,
/// returned in the same layout as `params`.
MilHeadParams head_backward(const RowMatrix& tokens, const MilHeadParams& params, const ForwardTrace& trace,
                            ClassLabel target, double weight);
MilHeadParams head_backward(const EmbeddingBag& bag, const MilHeadParams& params, const ForwardTrace& trace,
                            ClassLabel target, double weight);

/// Classical momentum: v <- mu v + g; theta <- theta - lr v.
struct MomentumSgd {
  double learning_rate = 1e-3;
  double momentum = 0.9;
  Eigen::VectorXd velocity;

  void step(Eigen::VectorXd& params, const Eigen::VectorXd& gradient);
};

enum class Pooling { Attention, Mean };
enum class HeadInit { Uniform, Zero };

struct TrainConfig {
  double learning_rate = 1e-3;
  double momentum = 0.9;
  int epochs = 100;
  std::uint64_t seed = 0;
  std::array<double, kNumClasses> class_weights = {1.0, 1.0};
  double prob_clip = 1e-15;
  int att_dim = 64;
  /// 0 = full batch.
  int batch_size = 0;
  /// Mean pools with w fixed at 0 (the average-pooling baseline).
  Pooling pooling = Pooling::Attention;
  HeadInit init = HeadInit::Uniform;
  int jobs = 1;

  void validate() const;
};

struct LabeledBag {
  const EmbeddingBag* bag;
  ClassLabel label;
};

struct TrainResult {
  MilHeadParams params;
  /// Weighted log loss after each epoch; NaN when undefined for the split.
  std::vector<double> train_loss;
  std::vector<double> val_loss;
};

MilHeadParams init_head(int embed_dim, const TrainConfig& cfg);

/// Trains a fresh head (initialised from cfg.seed). Deterministic for a
/// fixed config regardless of cfg.jobs.
TrainResult train_fold(const std::vector<LabeledBag>& train, const std::vector<LabeledBag>& val,
                       const TrainConfig& cfg);
/// Continues training from `init`.
TrainResult train_fold(const std::vector<LabeledBag>& train, const std::vector<LabeledBag>& val,
                       const TrainConfig& cfg, MilHeadParams init);

struct Prediction {
  std::string slide_id;
  double p_ce = 0.5;
  double p_laa = 0.5;

  friend bool operator==(const Prediction&, const Prediction&) = default;
};

std::vector<Prediction> predict(const std::vector<EmbeddingBag>& bags, const MilHeadParams& params, int jobs = 1);

/// `slide_id,p_CE,p_LAA`, 9 decimals.
std::string render_predictions(const std::vector<Prediction>& preds);
std::vector<Prediction> parse_predictions(const std::string& text);
void write_predictions(const std::filesystem::path& path, const std::vector<Prediction>& preds);
std::vector<Prediction> read_predictions(const std::filesystem::path& path);

/// MILW container:
///   "MILW" | u16 version = 1 | u32 D | u32 D_att | u32 K | u32 L |
///   V, b, w, W_fc, b_fc as f32, little-endian.
std::vector<char> encode_weights(const MilHeadParams& params);
MilHeadParams decode_weights(std::span<const char> bytes);
void save_weights(const std::filesystem::path& path, const MilHeadParams& params);
MilHeadParams load_weights(const std::filesystem::path& path);

}  // namespace milbench
