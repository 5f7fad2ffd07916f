#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "milbench/augment.hpp"
#include "milbench/labels.hpp"
#include "milbench/mil_head.hpp"
#include "milbench/ssl_pretrain.hpp"
#include "milbench/tiler.hpp"

namespace milbench {

/// One row of the dataset CSV `slide_id,patient_id,label,image_path`.
struct DatasetEntry {
  std::string slide_id;
  std::string patient_id;
  std::optional<ClassLabel> label;
  /// Resolved against the dataset CSV's directory.
  std::filesystem::path image_path;
};

std::vector<DatasetEntry> read_dataset(const std::filesystem::path& path);

enum class EncoderSource { Auto, Random, Pretrained };

struct EncoderConfig {
  int patch_size = 64;
  int embed_dim = 32;
};

struct PipelineConfig {
  PipelineConfig() { override_seed(seed); }

  std::filesystem::path dataset;
  std::filesystem::path output_dir;
  std::uint64_t seed = 42;
  int k_folds = 5;
  int jobs = 1;
  TilerConfig tiler;
  AugmentSpec augment;
  SSLConfig ssl;
  TrainConfig train;
  EncoderConfig encoder;
  /// Auto uses pretrain/encoder.milp when present, else a seeded random encoder.
  EncoderSource encoder_source = EncoderSource::Auto;
  /// Directory of precomputed `<slide_id>.mile` bags; bypasses the toy encoder.
  std::optional<std::filesystem::path> embeddings_dir;
  /// Predictions file for `eval`; defaults to the out-of-fold predictions.
  std::optional<std::filesystem::path> predictions;

  /// Parses the JSON config; relative paths resolve against `base_dir`.
  static PipelineConfig from_json(const std::string& text, const std::filesystem::path& base_dir);
  static PipelineConfig load(const std::filesystem::path& path);

  /// Replaces the global seed and every per-section seed (MILBENCH_SEED).
  void override_seed(std::uint64_t global_seed);
};

/// Artifact locations under output_dir.
struct OutputLayout {
  std::filesystem::path root;

  std::filesystem::path tiles_dir(const std::string& slide_id) const { return root / "tiles" / slide_id; }
  std::filesystem::path tile_manifest(const std::string& slide_id) const {
    return tiles_dir(slide_id) / "manifest.csv";
  }
  std::filesystem::path folds() const { return root / "folds.csv"; }
  std::filesystem::path encoder() const { return root / "pretrain" / "encoder.milp"; }
  std::filesystem::path pretrain_curve() const { return root / "pretrain" / "loss.csv"; }
  std::filesystem::path embedding(const std::string& slide_id) const {
    return root / "embeddings" / (slide_id + ".mile");
  }
  std::filesystem::path fold_weights(int fold) const {
    return root / "train" / ("fold_" + std::to_string(fold) + ".milw");
  }
  std::filesystem::path fold_curve(int fold) const {
    return root / "train" / ("fold_" + std::to_string(fold) + "_loss.csv");
  }
  std::filesystem::path oof_predictions() const { return root / "train" / "oof_predictions.csv"; }
  std::filesystem::path cv_report() const { return root / "train" / "cv_report.txt"; }
  std::filesystem::path eval_curve() const { return root / "eval" / "curve.csv"; }
  std::filesystem::path eval_confusion() const { return root / "eval" / "confusion.csv"; }
  std::filesystem::path eval_report() const { return root / "eval" / "report.txt"; }
  std::filesystem::path predictions() const { return root / "predict" / "predictions.csv"; }
};

/// Exit codes shared by every subcommand.
inline constexpr int kExitOk = 0;
inline constexpr int kExitInternal = 1;
inline constexpr int kExitUsage = 2;

/// Missing prerequisite artifact; maps to exit code 2.
class MissingArtifact : public Error {
 public:
  using Error::Error;
};

/// Formats x with three decimals and trailing zeros dropped ("0.660" -> "0.66").
std::string format_short(double x);

/// Population mean and standard deviation.
std::pair<double, double> mean_std(const std::vector<double>& values);

int cmd_tile(const PipelineConfig& cfg, std::ostream& out, std::ostream& err);
int cmd_split(const PipelineConfig& cfg, std::ostream& out, std::ostream& err);
int cmd_pretrain(const PipelineConfig& cfg, std::ostream& out, std::ostream& err);
int cmd_train(const PipelineConfig& cfg, std::ostream& out, std::ostream& err);
int cmd_eval(const PipelineConfig& cfg, std::ostream& out, std::ostream& err);
int cmd_predict(const PipelineConfig& cfg, std::ostream& out, std::ostream& err);

/// Dispatches by subcommand name.
int run_command(const std::string& name, const PipelineConfig& cfg, std::ostream& out, std::ostream& err);

}  // namespace milbench
