#include <gtest/gtest.h>

#include <cstdlib>
#include <map>
#include <regex>
#include <sstream>
#include <sys/wait.h>

#include "milbench/binio.hpp"
#include "milbench/evalkit.hpp"
#include "milbench/image_io.hpp"
#include "milbench/mil_head.hpp"
#include "milbench/pipeline.hpp"
#include "test_support.hpp"

using namespace milbench;
using namespace milbench::testing;
namespace fs = std::filesystem;

namespace {

struct Labeled {
  std::string slide;
  std::string patient;
  std::string label;
};

// White slides with a few dark rectangles; LAA slides are tinted red.
void write_dataset(const fs::path& dir, const std::vector<Labeled>& rows, int side = 256) {
  std::string csv = "slide_id,patient_id,label,image_path\n";
  SeededRng rng(99);
  for (const auto& r : rows) {
    Image img(side, side, 240);
    for (int b = 0; b < 6; ++b) {
      const int x0 = static_cast<int>(rng.uniform_int(0, side - 40));
      const int y0 = static_cast<int>(rng.uniform_int(0, side - 40));
      const int v = static_cast<int>(rng.uniform_int(20, 160));
      for (int y = y0; y < y0 + 40; ++y) {
        for (int x = x0; x < x0 + 40; ++x) {
          img.at(x, y, 0) = static_cast<std::uint8_t>(r.label == "LAA" ? std::min(255, v + 80) : v);
          img.at(x, y, 1) = static_cast<std::uint8_t>(v);
          img.at(x, y, 2) = static_cast<std::uint8_t>(v);
        }
      }
    }
    write_png(dir / "img" / (r.slide + ".png"), img);
    csv += r.slide + "," + r.patient + "," + r.label + ",img/" + r.slide + ".png\n";
  }
  binio::write_text(dir / "dataset.csv", csv);
}

std::vector<Labeled> balanced(int per_class) {
  std::vector<Labeled> rows;
  for (int i = 0; i < per_class; ++i) {
    rows.push_back({"ce" + std::to_string(i), "pce" + std::to_string(i), "CE"});
    rows.push_back({"laa" + std::to_string(i), "plaa" + std::to_string(i), "LAA"});
  }
  return rows;
}

PipelineConfig small_config(const TempDir& dir) {
  PipelineConfig cfg;
  cfg.dataset = dir / "dataset.csv";
  cfg.output_dir = dir / "out";
  cfg.tiler.tile_size = 64;
  cfg.tiler.bag_size = 16;
  cfg.tiler.model_input_size = 32;
  cfg.tiler.darkness_downsample = 1;
  cfg.encoder.patch_size = 16;
  cfg.encoder.embed_dim = 8;
  cfg.augment.crop_size = 32;
  cfg.augment.cutout_size = 8;
  cfg.augment.shift_max = 4;
  cfg.ssl.epochs = 2;
  cfg.ssl.batch_size = 8;
  cfg.ssl.proj_dim = 4;
  cfg.train.epochs = 20;
  cfg.train.att_dim = 4;
  return cfg;
}

struct CmdRun {
  int code;
  std::string out;
  std::string err;
};

CmdRun run(const std::string& cmd, const PipelineConfig& cfg) {
  std::ostringstream out, err;
  const int code = run_command(cmd, cfg, out, err);
  return {code, out.str(), err.str()};
}

std::map<std::string, std::string> snapshot(const fs::path& root) {
  std::map<std::string, std::string> files;
  for (const auto& e : fs::recursive_directory_iterator(root)) {
    if (!e.is_regular_file()) continue;
    const auto bytes = binio::read_file(e.path());
    files[fs::relative(e.path(), root).string()] = std::string(bytes.begin(), bytes.end());
  }
  return files;
}

std::size_t count_png(const fs::path& root) {
  std::size_t n = 0;
  for (const auto& e : fs::recursive_directory_iterator(root)) n += e.path().extension() == ".png";
  return n;
}

int shell(const std::string& cmd) {
  const int status = std::system((cmd + " >/dev/null 2>&1").c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

}  // namespace

TEST(Dataset, ParsesAndResolvesPaths) {
  TempDir dir;
  binio::write_text(dir / "d.csv", "slide_id,patient_id,label,image_path\na,p,CE,x.png\nb,q,,/abs/y.png\n");
  const auto rows = read_dataset(dir / "d.csv");
  ASSERT_EQ(rows.size(), 2u);
  EXPECT_EQ(rows[0].image_path, dir / "x.png");
  EXPECT_EQ(rows[0].label, ClassLabel::CE);
  EXPECT_FALSE(rows[1].label.has_value());
  EXPECT_EQ(rows[1].image_path, fs::path("/abs/y.png"));
}

TEST(Dataset, RejectsMalformed) {
  TempDir dir;
  binio::write_text(dir / "a.csv", "slide,patient,label,path\n");
  EXPECT_THROW(read_dataset(dir / "a.csv"), ValidationError);
  binio::write_text(dir / "b.csv", "slide_id,patient_id,label,image_path\na,p,CE\n");
  EXPECT_THROW(read_dataset(dir / "b.csv"), ValidationError);
  binio::write_text(dir / "c.csv", "slide_id,patient_id,label,image_path\na,p,CE,x\na,q,LAA,y\n");
  EXPECT_THROW(read_dataset(dir / "c.csv"), ValidationError);
  binio::write_text(dir / "d.csv", "slide_id,patient_id,label,image_path\na,p,XX,x\n");
  EXPECT_THROW(read_dataset(dir / "d.csv"), ArgumentError);
}

TEST(Config, JsonSectionsAndSeeds) {
  const PipelineConfig def;
  EXPECT_EQ(def.k_folds, 5);
  EXPECT_EQ(def.tiler.bag_size, 16);
  EXPECT_EQ(def.tiler.model_input_size, 384);
  EXPECT_EQ(def.ssl.seed, mix_seed(42, 1));

  const PipelineConfig cfg = PipelineConfig::from_json(
      R"({"dataset":"d.csv","seed":7,"k_folds":3,"tiler":{"tile_size":128,"edge_policy":"discard_partial"},
          "train":{"epochs":4,"pooling":"mean","class_weights":[2,1]},"encoder_source":"random"})",
      "/base");
  EXPECT_EQ(cfg.dataset, fs::path("/base/d.csv"));
  EXPECT_EQ(cfg.seed, 7u);
  EXPECT_EQ(cfg.train.seed, mix_seed(7, 2));
  EXPECT_EQ(cfg.k_folds, 3);
  EXPECT_EQ(cfg.tiler.tile_size, 128);
  EXPECT_EQ(cfg.tiler.edge_policy, EdgePolicy::DiscardPartial);
  EXPECT_EQ(cfg.train.pooling, Pooling::Mean);
  EXPECT_DOUBLE_EQ(cfg.train.class_weights[0], 2.0);
  EXPECT_EQ(cfg.encoder_source, EncoderSource::Random);
}

TEST(Config, OverrideSeedReplacesSectionSeeds) {
  PipelineConfig cfg;
  cfg.override_seed(5);
  EXPECT_EQ(cfg.seed, 5u);
  EXPECT_EQ(cfg.ssl.seed, mix_seed(5, 1));
  EXPECT_EQ(cfg.train.seed, mix_seed(5, 2));
}

TEST(Config, Errors) {
  EXPECT_THROW(PipelineConfig::from_json("{", "."), std::exception);
  EXPECT_THROW(PipelineConfig::from_json(R"({"tiler":{"edge_policy":"wrap"}})", "."), ArgumentError);
  EXPECT_THROW(PipelineConfig::load("/nonexistent/cfg.json"), ArgumentError);
}

TEST(Formatting, ShortStyle) {
  EXPECT_EQ(format_short(0.66), "0.66");
  EXPECT_EQ(format_short(0.015), "0.015");
  EXPECT_EQ(format_short(0.6624), "0.662");
  EXPECT_EQ(format_short(1.0), "1.0");
  EXPECT_EQ(format_short(0.0), "0.0");
  const auto [m, s] = mean_std({0.65, 0.67});
  EXPECT_EQ(format_short(m) + " (" + format_short(s) + ")", "0.66 (0.01)");
}

TEST(Formatting, MeanStdIsPopulation) {
  const auto [m, s] = mean_std({1.0, 2.0, 3.0, 4.0});
  EXPECT_DOUBLE_EQ(m, 2.5);
  EXPECT_NEAR(s, std::sqrt(1.25), 1e-15);
  EXPECT_TRUE(std::isnan(mean_std({}).first));
}

TEST(CmdTile, TwoSlidesGiveTwoManifestsAnd32Tiles) {
  TempDir dir;
  write_dataset(dir.path(), {{"s1", "p1", "CE"}, {"s2", "p2", "LAA"}});
  const PipelineConfig cfg = small_config(dir);
  const CmdRun r = run("tile", cfg);
  ASSERT_EQ(r.code, 0) << r.err;
  const OutputLayout layout{cfg.output_dir};
  EXPECT_TRUE(fs::exists(layout.tile_manifest("s1")));
  EXPECT_TRUE(fs::exists(layout.tile_manifest("s2")));
  EXPECT_EQ(count_png(cfg.output_dir / "tiles"), 32u);
  EXPECT_NE(r.out.find("s1: scanned 16 tiles, wrote bag of 16"), std::string::npos) << r.out;
}

TEST(CmdTile, MissingDatasetIsUsageError) {
  TempDir dir;
  PipelineConfig cfg = small_config(dir);
  cfg.dataset = dir / "nope.csv";
  const CmdRun r = run("tile", cfg);
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.err.find("nope.csv"), std::string::npos);
}

TEST(CmdTile, MissingImageRemovesPartialOutputs) {
  TempDir dir;
  write_dataset(dir.path(), {{"s1", "p1", "CE"}, {"s2", "p2", "LAA"}});
  fs::remove(dir / "img" / "s2.png");
  const PipelineConfig cfg = small_config(dir);
  const CmdRun r = run("tile", cfg);
  EXPECT_NE(r.code, 0);
  EXPECT_NE(r.err.find("s2"), std::string::npos);
  EXPECT_FALSE(fs::exists(OutputLayout{cfg.output_dir}.tiles_dir("s1")));
}

TEST(CmdTile, RerunsAndJobsAreByteIdentical) {
  TempDir dir;
  write_dataset(dir.path(), {{"s1", "p1", "CE"}, {"s2", "p2", "LAA"}}, 300);
  PipelineConfig cfg = small_config(dir);
  ASSERT_EQ(run("tile", cfg).code, 0);
  const auto first = snapshot(cfg.output_dir);
  ASSERT_EQ(run("tile", cfg).code, 0);
  EXPECT_EQ(snapshot(cfg.output_dir), first);
  cfg.jobs = 4;
  ASSERT_EQ(run("tile", cfg).code, 0);
  EXPECT_EQ(snapshot(cfg.output_dir), first);
}

TEST(CmdTile, DoesNotMutateInputs) {
  TempDir dir;
  write_dataset(dir.path(), balanced(1));
  const auto before = snapshot(dir.path());
  ASSERT_EQ(run("tile", small_config(dir)).code, 0);
  auto after = snapshot(dir.path());
  for (auto it = after.begin(); it != after.end();) it = it->first.rfind("out", 0) == 0 ? after.erase(it) : std::next(it);
  EXPECT_EQ(after, before);
}

TEST(CmdSplit, TenPatientsFiveFoldsOfTwo) {
  TempDir dir;
  write_dataset(dir.path(), balanced(5));
  const PipelineConfig cfg = small_config(dir);
  const CmdRun r = run("split", cfg);
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(r.out, "fold,patients,CE,LAA\n0,2,1,1\n1,2,1,1\n2,2,1,1\n3,2,1,1\n4,2,1,1\n");
  const auto first = snapshot(cfg.output_dir);
  ASSERT_EQ(run("split", cfg).code, 0);
  EXPECT_EQ(snapshot(cfg.output_dir), first);
}

TEST(CmdSplit, SingleFold) {
  TempDir dir;
  write_dataset(dir.path(), balanced(2));
  PipelineConfig cfg = small_config(dir);
  cfg.k_folds = 1;
  ASSERT_EQ(run("split", cfg).code, 0);
  const auto bytes = binio::read_file(OutputLayout{cfg.output_dir}.folds());
  const FoldAssignment f = parse_folds(std::string(bytes.begin(), bytes.end()));
  for (const auto& [p, fold] : f.fold_of) EXPECT_EQ(fold, 0);
}

TEST(CmdSplit, TooFewPatientsOrNoLabels) {
  TempDir dir;
  write_dataset(dir.path(), balanced(1));
  const PipelineConfig cfg = small_config(dir);
  EXPECT_EQ(run("split", cfg).code, 2);
  TempDir dir2;
  write_dataset(dir2.path(), {{"a", "p", ""}, {"b", "q", "CE"}});
  PipelineConfig c2 = small_config(dir2);
  c2.k_folds = 1;
  EXPECT_EQ(run("split", c2).code, 2);
}

TEST(CmdTrain, MissingFoldsNamesArtifact) {
  TempDir dir;
  write_dataset(dir.path(), balanced(2));
  const PipelineConfig cfg = small_config(dir);
  ASSERT_EQ(run("tile", cfg).code, 0);
  const CmdRun r = run("train", cfg);
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.err.find("folds.csv"), std::string::npos) << r.err;
}

TEST(CmdEval, MissingPredictionsIsUsageError) {
  TempDir dir;
  write_dataset(dir.path(), balanced(2));
  const CmdRun r = run("eval", small_config(dir));
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.err.find("oof_predictions.csv"), std::string::npos);
}

TEST(CmdPredict, MissingWeightsIsUsageError) {
  TempDir dir;
  write_dataset(dir.path(), balanced(2));
  EXPECT_EQ(run("predict", small_config(dir)).code, 2);
}

TEST(CmdPretrain, MissingTilesIsUsageError) {
  TempDir dir;
  write_dataset(dir.path(), balanced(2));
  EXPECT_EQ(run("pretrain", small_config(dir)).code, 2);
}

TEST(Pipeline, ZeroEpochsZeroInitPredictsHalf) {
  TempDir dir;
  write_dataset(dir.path(), balanced(3));
  PipelineConfig cfg = small_config(dir);
  cfg.k_folds = 3;
  cfg.train.epochs = 0;
  cfg.train.init = HeadInit::Zero;
  for (const char* c : {"tile", "split", "train"}) ASSERT_EQ(run(c, cfg).code, 0) << c;
  const auto preds = read_predictions(OutputLayout{cfg.output_dir}.oof_predictions());
  ASSERT_EQ(preds.size(), 6u);
  for (const auto& p : preds) {
    EXPECT_EQ(p.p_ce, 0.5);
    EXPECT_EQ(p.p_laa, 0.5);
  }
}

TEST(Pipeline, EndToEndReportsAndIsReproducible) {
  TempDir dir;
  write_dataset(dir.path(), balanced(5));
  PipelineConfig cfg = small_config(dir);
  CmdRun train;
  for (const char* c : {"tile", "split", "pretrain", "train", "eval", "predict"}) {
    const CmdRun r = run(c, cfg);
    ASSERT_EQ(r.code, 0) << c << ": " << r.err;
    if (std::string(c) == "train") train = r;
  }
  EXPECT_TRUE(std::regex_search(train.out, std::regex(R"(cv logloss mean=\d+\.\d+, std=\d+\.\d+\n)"))) << train.out;
  EXPECT_TRUE(std::regex_search(train.out, std::regex(R"(logloss \(CV\): \d+\.\d{1,3} \(\d+\.\d{1,3}\)\n)")));
  const OutputLayout layout{cfg.output_dir};
  for (int f = 0; f < 5; ++f) EXPECT_TRUE(fs::exists(layout.fold_weights(f)));
  EXPECT_EQ(read_predictions(layout.oof_predictions()).size(), 10u);
  EXPECT_EQ(read_predictions(layout.predictions()).size(), 10u);
  const auto report = binio::read_file(layout.eval_report());
  EXPECT_NE(std::string(report.begin(), report.end()).find("best threshold: "), std::string::npos);

  const auto first = snapshot(cfg.output_dir);
  for (const char* c : {"tile", "split", "pretrain", "train", "eval", "predict"}) ASSERT_EQ(run(c, cfg).code, 0);
  EXPECT_EQ(snapshot(cfg.output_dir), first);
}

TEST(Pipeline, ExternalEmbeddingsBypassEncoder) {
  TempDir dir;
  write_dataset(dir.path(), balanced(2));
  PipelineConfig cfg = small_config(dir);
  cfg.k_folds = 2;
  ASSERT_EQ(run("split", cfg).code, 0);
  SeededRng rng(4);
  for (const char* id : {"ce0", "ce1", "laa0", "laa1"}) {
    EmbeddingBag bag(id, 2, 1, 3);
    for (float& v : bag.data) v = static_cast<float>(rng.normal());
    save_embeddings(dir / "emb" / (std::string(id) + ".mile"), bag);
  }
  cfg.embeddings_dir = dir / "emb";
  const CmdRun r = run("train", cfg);
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(load_weights(OutputLayout{cfg.output_dir}.fold_weights(0)).embed_dim(), 3);
}

TEST(CmdEval, HandBuiltPredictionsMatchEvalkit) {
  TempDir dir;
  write_dataset(dir.path(), {{"a", "p1", "CE"}, {"b", "p2", "CE"}, {"c", "p3", "LAA"}, {"d", "p4", "LAA"}});
  binio::write_text(dir / "preds.csv",
                    "slide_id,p_CE,p_LAA\na,0.9,0.1\nb,0.55,0.45\nc,0.45,0.55\nd,0.2,0.8\n");
  PipelineConfig cfg = small_config(dir);
  cfg.predictions = dir / "preds.csv";
  const CmdRun r = run("eval", cfg);
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_NE(r.out.find("best threshold: 0.45, best weighted f1: 1.0000"), std::string::npos) << r.out;
  EXPECT_NE(r.out.find("tp=2 fp=0 fn=0 tn=2"), std::string::npos);

  const std::vector<ScoredLabel> scored = {
      {0.9, ClassLabel::CE}, {0.55, ClassLabel::CE}, {0.45, ClassLabel::LAA}, {0.2, ClassLabel::LAA}};
  const OutputLayout layout{cfg.output_dir};
  const auto curve = binio::read_file(layout.eval_curve());
  EXPECT_EQ(std::string(curve.begin(), curve.end()), render_curve(sweep_threshold(scored)));
  const auto cm = binio::read_file(layout.eval_confusion());
  EXPECT_EQ(std::string(cm.begin(), cm.end()), "tp,fp,fn,tn\n2,0,0,2\n");
}

TEST(CmdEval, UnknownSlideIsUsageError) {
  TempDir dir;
  write_dataset(dir.path(), balanced(1));
  binio::write_text(dir / "preds.csv", "slide_id,p_CE,p_LAA\nzzz,0.5,0.5\n");
  PipelineConfig cfg = small_config(dir);
  cfg.predictions = dir / "preds.csv";
  EXPECT_EQ(run("eval", cfg).code, 2);
}

TEST(RunCommand, UnknownName) {
  EXPECT_EQ(run("frobnicate", PipelineConfig{}).code, 2);
}

TEST(Cli, ExitCodesAndSeedPrecedence) {
  const std::string exe = MILBENCH_CLI_PATH;
  TempDir dir;
  write_dataset(dir.path(), balanced(2));
  EXPECT_EQ(shell(exe + " --help"), 0);
  EXPECT_EQ(shell(exe), 2);
  EXPECT_EQ(shell(exe + " tile --no-such-flag"), 2);
  EXPECT_EQ(shell(exe + " --dataset " + (dir / "missing.csv").string() + " tile"), 2);

  const std::string base = exe + " --dataset " + (dir / "dataset.csv").string() +
                           " --tile-size 128 --input-size 64 --epochs 3 --k-folds 2 --encoder random";
  const auto trained = [&](const std::string& prefix, const std::string& out, const std::string& extra) {
    for (const char* c : {"tile", "split", "train"}) {
      if (shell(prefix + base + " -o " + (dir / out).string() + extra + " " + c) != 0) return std::string();
    }
    const auto bytes = binio::read_file(dir / out / "train" / "fold_0.milw");
    return std::string(bytes.begin(), bytes.end());
  };
  const std::string env7 = trained("MILBENCH_SEED=7 ", "a", "");
  const std::string flag7 = trained("MILBENCH_SEED=8 ", "b", " --seed 7");
  const std::string env8 = trained("MILBENCH_SEED=8 ", "c", "");
  ASSERT_FALSE(env7.empty());
  EXPECT_EQ(env7, flag7);
  EXPECT_NE(env7, env8);
  EXPECT_EQ(shell("MILBENCH_SEED=abc " + base + " -o " + (dir / "d").string() + " split"), 2);
}
