#include <cstdlib>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "milbench/augment.hpp"
#include "milbench/errors.hpp"
#include "milbench/pipeline.hpp"

namespace {

struct Overrides {
  std::optional<std::string> dataset;
  std::optional<std::string> out;
  std::optional<int> tile_size;
  std::optional<int> bag_size;
  std::optional<int> input_size;
  std::optional<std::string> edge_policy;
  std::optional<int> jobs;
  std::optional<std::string> aug_spec;
  std::optional<int> k_folds;
  std::optional<int> epochs;
  std::optional<int> ssl_epochs;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> predictions;
  std::optional<std::string> embeddings;
  std::optional<std::string> encoder;
};

milbench::PipelineConfig build_config(const std::string& config_path, const Overrides& o) {
  using namespace milbench;
  PipelineConfig cfg = config_path.empty() ? PipelineConfig{} : PipelineConfig::load(config_path);

  if (const char* env = std::getenv("MILBENCH_SEED"); env != nullptr && *env != '\0') {
    try {
      std::size_t used = 0;
      const unsigned long long v = std::stoull(env, &used);
      if (used != std::string(env).size()) throw std::invalid_argument(env);
      cfg.override_seed(v);
    } catch (const std::exception&) {
      throw ArgumentError(std::string("MILBENCH_SEED must be a non-negative integer, got '") + env + "'");
    }
  }
  if (o.seed) cfg.override_seed(*o.seed);
  if (o.dataset) cfg.dataset = *o.dataset;
  if (o.out) cfg.output_dir = *o.out;
  if (o.tile_size) cfg.tiler.tile_size = *o.tile_size;
  if (o.bag_size) cfg.tiler.bag_size = *o.bag_size;
  if (o.input_size) cfg.tiler.model_input_size = *o.input_size;
  if (o.edge_policy) cfg.tiler.edge_policy = parse_edge_policy(*o.edge_policy);
  if (o.jobs) cfg.jobs = *o.jobs;
  if (o.aug_spec) cfg.augment = load_augment_spec(*o.aug_spec);
  if (o.k_folds) cfg.k_folds = *o.k_folds;
  if (o.epochs) cfg.train.epochs = *o.epochs;
  if (o.ssl_epochs) cfg.ssl.epochs = *o.ssl_epochs;
  if (o.predictions) cfg.predictions = *o.predictions;
  if (o.embeddings) cfg.embeddings_dir = *o.embeddings;
  if (o.encoder) {
    if (*o.encoder == "auto") cfg.encoder_source = EncoderSource::Auto;
    else if (*o.encoder == "random") cfg.encoder_source = EncoderSource::Random;
    else if (*o.encoder == "pretrained") cfg.encoder_source = EncoderSource::Pretrained;
    else throw ArgumentError("--encoder must be auto, random or pretrained");
  }
  if (cfg.jobs < 1) throw ArgumentError("--jobs must be >= 1");
  if (cfg.output_dir.empty()) cfg.output_dir = "milbench_out";
  return cfg;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"milbench: slide tiling, MIL training and evaluation"};
  app.require_subcommand(1);
  app.fallthrough();

  std::string config_path;
  Overrides o;
  app.add_option("-c,--config", config_path, "JSON pipeline config");
  app.add_option("--dataset", o.dataset, "dataset CSV (slide_id,patient_id,label,image_path)");
  app.add_option("-o,--out", o.out, "output directory");
  app.add_option("--tile-size", o.tile_size, "tile edge in pixels");
  app.add_option("--bag-size", o.bag_size, "tiles per bag (K)");
  app.add_option("--input-size", o.input_size, "model input edge in pixels");
  app.add_option("--edge-policy", o.edge_policy, "pad_white or discard_partial");
  app.add_option("-j,--jobs", o.jobs, "worker threads");
  app.add_option("--aug-spec", o.aug_spec, "augmentation JSON");
  app.add_option("--k-folds", o.k_folds, "cross-validation folds");
  app.add_option("--epochs", o.epochs, "MIL head training epochs");
  app.add_option("--ssl-epochs", o.ssl_epochs, "contrastive pretraining epochs");
  app.add_option("--seed", o.seed, "global seed (overrides MILBENCH_SEED)");
  app.add_option("--predictions", o.predictions, "predictions CSV for eval");
  app.add_option("--embeddings", o.embeddings, "directory of precomputed <slide_id>.mile bags");
  app.add_option("--encoder", o.encoder, "auto, random or pretrained");

  const char* commands[][2] = {
      {"tile", "select the darkest tiles of every slide"},
      {"split", "assign patients to stratified folds"},
      {"pretrain", "contrastive pretraining of the patch encoder"},
      {"train", "train one MIL head per fold"},
      {"eval", "threshold sweep and metrics over predictions"},
      {"predict", "fold-averaged predictions for every slide"},
  };
  for (const auto& c : commands) app.add_subcommand(c[0], c[1]);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return milbench::kExitUsage;
  }

  const std::string name = app.get_subcommands().front()->get_name();
  milbench::PipelineConfig cfg;
  try {
    cfg = build_config(config_path, o);
  } catch (const std::exception& e) {
    std::cerr << name << ": " << e.what() << "\n";
    return milbench::kExitUsage;
  }
  return milbench::run_command(name, cfg, std::cout, std::cerr);
}
