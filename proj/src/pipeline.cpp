#include "milbench/pipeline.hpp"

#include <cmath>
#include <cstdio>
#include <map>
#include <ostream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "milbench/binio.hpp"
#include "milbench/embedder.hpp"
#include "milbench/errors.hpp"
#include "milbench/evalkit.hpp"
#include "milbench/manifest.hpp"
#include "milbench/rng.hpp"

namespace milbench {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr const char* kDatasetHeader = "slide_id,patient_id,label,image_path";

std::string weights_label(const std::array<double, kNumClasses>& w) {
  std::ostringstream s;
  s << "w=[" << w[0] << "," << w[1] << "]";
  return s.str();
}

std::string fixed(double x, int digits) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, x);
  return buf;
}

void require(const fs::path& p, const std::string& what) {
  if (!fs::exists(p)) throw MissingArtifact("missing " + what + ": " + p.string());
}

fs::path resolve(const fs::path& base, const std::string& p) {
  const fs::path path(p);
  return path.is_absolute() ? path : base / path;
}

template <class T>
void read_opt(const json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

std::vector<DatasetEntry> checked_dataset(const PipelineConfig& cfg) {
  if (cfg.dataset.empty()) throw ArgumentError("no dataset manifest given");
  if (!fs::exists(cfg.dataset)) throw ArgumentError("dataset manifest not found: " + cfg.dataset.string());
  return read_dataset(cfg.dataset);
}

std::vector<Image> pretrain_corpus(const std::vector<DatasetEntry>& entries, const OutputLayout& layout) {
  std::vector<Image> corpus;
  for (const DatasetEntry& e : entries) {
    const fs::path manifest = layout.tile_manifest(e.slide_id);
    require(manifest, "tile manifest (run `tile` first)");
    for (const TileBag& bag : load_bags(manifest)) {
      std::set<std::pair<int, int>> seen;
      for (std::size_t i = 0; i < bag.tiles.size(); ++i) {
        if (seen.insert({bag.records[i].row, bag.records[i].col}).second) corpus.push_back(bag.tiles[i]);
      }
    }
  }
  return corpus;
}

std::vector<EmbeddingBag> slide_embeddings(const PipelineConfig& cfg, const std::vector<DatasetEntry>& entries,
                                           const OutputLayout& layout, std::ostream& out) {
  std::vector<EmbeddingBag> bags;
  if (cfg.embeddings_dir) {
    for (const DatasetEntry& e : entries) {
      const fs::path p = *cfg.embeddings_dir / (e.slide_id + ".mile");
      require(p, "embedding bag");
      EmbeddingBag bag = load_external_embeddings(p);
      if (!bag.slide_id.empty() && bag.slide_id != e.slide_id) {
        throw ValidationError(p.string() + ": slide id '" + bag.slide_id + "' does not match '" + e.slide_id + "'");
      }
      bag.slide_id = e.slide_id;
      bags.push_back(std::move(bag));
    }
    out << "embeddings: external (" << cfg.embeddings_dir->string() << ")\n";
    return bags;
  }

  ToyEncoderParams encoder;
  const bool have_pretrained = fs::exists(layout.encoder());
  if (cfg.encoder_source == EncoderSource::Pretrained ||
      (cfg.encoder_source == EncoderSource::Auto && have_pretrained)) {
    require(layout.encoder(), "pretrained encoder (run `pretrain` first)");
    encoder = load_encoder(layout.encoder()).encoder;
    out << "encoder: pretrained\n";
  } else {
    SeededRng rng(mix_seed(cfg.seed, 3));
    encoder = ToyEncoderParams::random(cfg.encoder.patch_size, cfg.encoder.embed_dim, rng);
    out << "encoder: random\n";
  }

  for (const DatasetEntry& e : entries) {
    const fs::path manifest = layout.tile_manifest(e.slide_id);
    require(manifest, "tile manifest (run `tile` first)");
    const std::vector<TileBag> tile_bags = load_bags(manifest);
    if (tile_bags.size() != 1 || tile_bags[0].slide_id != e.slide_id) {
      throw ValidationError(manifest.string() + ": expected exactly the tiles of slide '" + e.slide_id + "'");
    }
    EmbeddingBag bag = encode_bag(tile_bags[0], encoder, cfg.jobs);
    save_embeddings(layout.embedding(e.slide_id), bag);
    bags.push_back(std::move(bag));
  }
  return bags;
}

FoldAssignment load_folds(const OutputLayout& layout) {
  require(layout.folds(), "fold assignment (run `split` first)");
  const auto bytes = binio::read_file(layout.folds());
  FoldAssignment folds = parse_folds(std::string(bytes.begin(), bytes.end()));
  int k = 0;
  for (const auto& [patient, fold] : folds.fold_of) k = std::max(k, fold + 1);
  folds.k = k;
  return folds;
}

double fold_loss(const std::vector<Prediction>& preds, const std::vector<ClassLabel>& labels,
                 const TrainConfig& tc) {
  std::vector<double> p_ce;
  for (const Prediction& p : preds) p_ce.push_back(p.p_ce);
  try {
    return weighted_log_loss(binary_metric_input(p_ce, labels, tc.class_weights), tc.prob_clip);
  } catch (const DomainError&) {
    return std::nan("");
  }
}

int do_tile(const PipelineConfig& cfg, std::ostream& out, std::ostream& err) {
  const auto entries = checked_dataset(cfg);
  const OutputLayout layout{cfg.output_dir};
  std::vector<std::string> failures;
  std::vector<fs::path> written;
  for (const DatasetEntry& e : entries) {
    const fs::path dir = layout.tiles_dir(e.slide_id);
    try {
      const SlideImage slide = load_slide(e.image_path, e.slide_id, e.patient_id, e.label);
      const TileBag bag = build_bag(slide, cfg.tiler, cfg.jobs);
      fs::remove_all(dir);
      fs::create_directories(dir);
      written.push_back(dir);
      write_manifest({bag}, layout.tile_manifest(e.slide_id));
      out << e.slide_id << ": scanned " << bag.grid_cells << " tiles, wrote bag of " << bag.tiles.size() << " ("
          << cfg.tiler.model_input_size << "px) to " << dir.string() << "\n";
    } catch (const Error& ex) {
      failures.push_back(e.slide_id + ": " + ex.what());
    }
  }
  if (!failures.empty()) {
    for (const fs::path& d : written) fs::remove_all(d);
    for (const std::string& f : failures) err << "tile failed for " << f << "\n";
    err << failures.size() << " of " << entries.size() << " slides failed; partial outputs removed\n";
    return kExitUsage;
  }
  return kExitOk;
}

int do_split(const PipelineConfig& cfg, std::ostream& out, std::ostream&) {
  const auto entries = checked_dataset(cfg);
  const OutputLayout layout{cfg.output_dir};
  std::vector<GroupSample> samples;
  for (const DatasetEntry& e : entries) {
    if (!e.label) throw ArgumentError("slide '" + e.slide_id + "' has no label; split needs labels");
    samples.push_back({e.patient_id, *e.label});
  }
  const FoldAssignment folds = stratified_group_kfold(samples, cfg.k_folds, cfg.seed);
  binio::write_text(layout.folds(), render_folds(folds));

  std::vector<std::array<int, kNumClasses>> slides(static_cast<std::size_t>(folds.k), {0, 0});
  std::vector<std::set<std::string>> patients(static_cast<std::size_t>(folds.k));
  for (const DatasetEntry& e : entries) {
    const int f = folds.fold_of.at(e.patient_id);
    ++slides[f][class_index(*e.label)];
    patients[f].insert(e.patient_id);
  }
  out << "fold,patients,CE,LAA\n";
  for (int f = 0; f < folds.k; ++f) {
    out << f << "," << patients[f].size() << "," << slides[f][0] << "," << slides[f][1] << "\n";
  }
  return kExitOk;
}

int do_pretrain(const PipelineConfig& cfg, std::ostream& out, std::ostream&) {
  const auto entries = checked_dataset(cfg);
  const OutputLayout layout{cfg.output_dir};
  const std::vector<Image> corpus = pretrain_corpus(entries, layout);
  SSLConfig ssl = cfg.ssl;
  ssl.jobs = cfg.jobs;
  EncoderPair init = init_encoder_pair(cfg.encoder.patch_size, cfg.encoder.embed_dim, ssl.proj_dim, ssl.seed);
  const PretrainResult result = pretrain(corpus, cfg.augment, ssl, std::move(init));
  save_encoder(layout.encoder(), result.pair.query);
  binio::write_text(layout.pretrain_curve(), render_loss_curve(result.loss_curve));
  out << "pretrained on " << corpus.size() << " tiles\n";
  for (std::size_t e = 0; e < result.loss_curve.size(); ++e) {
    out << "epoch " << e << ": infonce=" << fixed(result.loss_curve[e], 6) << "\n";
  }
  return kExitOk;
}

int do_train(const PipelineConfig& cfg, std::ostream& out, std::ostream&) {
  const auto entries = checked_dataset(cfg);
  const OutputLayout layout{cfg.output_dir};
  const FoldAssignment folds = load_folds(layout);
  const std::vector<EmbeddingBag> bags = slide_embeddings(cfg, entries, layout, out);

  std::vector<int> fold_of(entries.size(), -1);
  for (std::size_t i = 0; i < entries.size(); ++i) {
    if (!entries[i].label) continue;
    const auto it = folds.fold_of.find(entries[i].patient_id);
    if (it == folds.fold_of.end()) {
      throw ValidationError("patient '" + entries[i].patient_id + "' is missing from " + layout.folds().string());
    }
    fold_of[i] = it->second;
  }

  std::vector<std::optional<Prediction>> oof(entries.size());
  std::vector<double> losses;
  std::ostringstream report;
  report << "class weights " << weights_label(cfg.train.class_weights) << "\n";
  for (int f = 0; f < folds.k; ++f) {
    std::vector<LabeledBag> train, val;
    std::vector<std::size_t> val_index;
    for (std::size_t i = 0; i < entries.size(); ++i) {
      if (fold_of[i] < 0) continue;
      LabeledBag lb{&bags[i], *entries[i].label};
      if (fold_of[i] == f) {
        val.push_back(lb);
        val_index.push_back(i);
      } else {
        train.push_back(lb);
      }
    }
    if (train.empty()) throw ArgumentError("fold " + std::to_string(f) + " leaves no training slides");
    TrainConfig tc = cfg.train;
    tc.seed = mix_seed(cfg.train.seed, static_cast<std::uint64_t>(f));
    tc.jobs = cfg.jobs;
    const TrainResult result = train_fold(train, val, tc);
    save_weights(layout.fold_weights(f), result.params);
    std::string curve = "epoch,train_loss,val_loss\n";
    for (std::size_t e = 0; e < result.train_loss.size(); ++e) {
      curve += std::to_string(e + 1) + "," + fixed(result.train_loss[e], 9) + "," + fixed(result.val_loss[e], 9) + "\n";
    }
    binio::write_text(layout.fold_curve(f), curve);

    std::vector<EmbeddingBag> val_bags;
    std::vector<ClassLabel> val_labels;
    for (std::size_t i : val_index) {
      val_bags.push_back(bags[i]);
      val_labels.push_back(*entries[i].label);
    }
    const std::vector<Prediction> preds = predict(val_bags, result.params, cfg.jobs);
    for (std::size_t j = 0; j < val_index.size(); ++j) oof[val_index[j]] = preds[j];
    const double loss = fold_loss(preds, val_labels, cfg.train);
    if (std::isfinite(loss)) losses.push_back(loss);
    report << "fold " << f << ": n=" << val_index.size() << " val logloss=" << fixed(loss, 6) << "\n";
  }

  std::vector<Prediction> oof_preds;
  std::vector<ClassLabel> oof_labels;
  for (std::size_t i = 0; i < entries.size(); ++i) {
    if (!oof[i]) continue;
    oof_preds.push_back(*oof[i]);
    oof_labels.push_back(*entries[i].label);
  }
  write_predictions(layout.oof_predictions(), oof_preds);

  const auto [mean, sd] = mean_std(losses);
  report << "cv logloss mean=" << format_short(mean) << ", std=" << format_short(sd) << "\n";
  report << "logloss (CV): " << format_short(mean) << " (" << format_short(sd) << ")\n";
  report << "out-of-fold logloss=" << fixed(fold_loss(oof_preds, oof_labels, cfg.train), 6) << "\n";
  binio::write_text(layout.cv_report(), report.str());
  out << report.str();
  return kExitOk;
}

int do_eval(const PipelineConfig& cfg, std::ostream& out, std::ostream&) {
  const auto entries = checked_dataset(cfg);
  const OutputLayout layout{cfg.output_dir};
  const fs::path pred_path = cfg.predictions.value_or(layout.oof_predictions());
  require(pred_path, "predictions (run `train` first)");
  const std::vector<Prediction> preds = read_predictions(pred_path);

  std::map<std::string, std::optional<ClassLabel>> label_of;
  for (const DatasetEntry& e : entries) label_of[e.slide_id] = e.label;
  std::vector<ScoredLabel> scored;
  std::vector<double> p_ce;
  std::vector<ClassLabel> labels;
  for (const Prediction& p : preds) {
    const auto it = label_of.find(p.slide_id);
    if (it == label_of.end()) throw ValidationError("prediction for unknown slide '" + p.slide_id + "'");
    if (!it->second) continue;
    scored.push_back({p.p_ce, *it->second});
    p_ce.push_back(p.p_ce);
    labels.push_back(*it->second);
  }
  if (scored.empty()) throw ArgumentError("no labelled slides among the predictions");

  const SweepResult sweep = sweep_threshold(scored, 0.01, cfg.jobs);
  const ConfusionMatrix cm = confusion_at_threshold(scored, sweep.best_threshold);
  const WeightedPrf best = weighted_prf(cm);
  binio::write_text(layout.eval_curve(), render_curve(sweep));
  binio::write_text(layout.eval_confusion(), render_confusion(cm));

  std::ostringstream report;
  report << "evaluated " << scored.size() << " slides, class weights " << weights_label(cfg.train.class_weights)
         << "\n";
  try {
    const double loss =
        weighted_log_loss(binary_metric_input(p_ce, labels, cfg.train.class_weights), cfg.train.prob_clip);
    report << "weighted logloss=" << fixed(loss, 6) << "\n";
  } catch (const DomainError& ex) {
    report << "weighted logloss undefined: " << ex.what() << "\n";
  }
  report << "best threshold: " << fixed(sweep.best_threshold, 2) << ", best weighted f1: "
         << fixed(sweep.best_weighted_f1, 4) << "\n";
  report << "weighted precision=" << fixed(best.precision, 4) << ", weighted recall=" << fixed(best.recall, 4) << "\n";
  report << "confusion (CE positive): tp=" << cm.tp << " fp=" << cm.fp << " fn=" << cm.fn << " tn=" << cm.tn << "\n";
  binio::write_text(layout.eval_report(), report.str());
  out << report.str();
  return kExitOk;
}

int do_predict(const PipelineConfig& cfg, std::ostream& out, std::ostream&) {
  const auto entries = checked_dataset(cfg);
  const OutputLayout layout{cfg.output_dir};
  require(layout.fold_weights(0), "fold weights (run `train` first)");
  std::vector<MilHeadParams> models;
  for (int f = 0; fs::exists(layout.fold_weights(f)); ++f) models.push_back(load_weights(layout.fold_weights(f)));
  const std::vector<EmbeddingBag> bags = slide_embeddings(cfg, entries, layout, out);

  std::vector<Prediction> avg;
  for (const EmbeddingBag& b : bags) avg.push_back({b.slide_id, 0.0, 0.0});
  for (const MilHeadParams& m : models) {
    const std::vector<Prediction> preds = predict(bags, m, cfg.jobs);
    for (std::size_t i = 0; i < preds.size(); ++i) {
      avg[i].p_ce += preds[i].p_ce;
      avg[i].p_laa += preds[i].p_laa;
    }
  }
  for (Prediction& p : avg) {
    p.p_ce /= static_cast<double>(models.size());
    p.p_laa /= static_cast<double>(models.size());
  }
  write_predictions(layout.predictions(), avg);
  out << "wrote " << avg.size() << " predictions averaged over " << models.size() << " fold models to "
      << layout.predictions().string() << "\n";
  return kExitOk;
}

template <class F>
int guarded(const char* name, const PipelineConfig& cfg, std::ostream& out, std::ostream& err, F&& body) {
  try {
    return body(cfg, out, err);
  } catch (const MissingArtifact& ex) {
    err << name << ": " << ex.what() << "\n";
    return kExitUsage;
  } catch (const Error& ex) {
    err << name << ": " << ex.what() << "\n";
    return kExitUsage;
  } catch (const json::exception& ex) {
    err << name << ": " << ex.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& ex) {
    err << name << ": internal error: " << ex.what() << "\n";
    return kExitInternal;
  }
}

}  // namespace

std::vector<DatasetEntry> read_dataset(const fs::path& path) {
  const auto bytes = binio::read_file(path);
  const std::vector<std::string> lines = split_lines(std::string(bytes.begin(), bytes.end()));
  if (lines.empty() || lines[0] != kDatasetHeader) {
    throw ValidationError(path.string() + ": expected header '" + kDatasetHeader + "'");
  }
  const fs::path base = path.has_parent_path() ? path.parent_path() : ".";
  std::vector<DatasetEntry> entries;
  std::set<std::string> ids;
  for (std::size_t i = 1; i < lines.size(); ++i) {
    if (lines[i].empty()) continue;
    const auto f = split_csv_line(lines[i]);
    const std::string where = path.string() + " line " + std::to_string(i + 1);
    if (f.size() != 4) throw ValidationError(where + ": expected 4 fields");
    if (f[0].empty() || f[1].empty() || f[3].empty()) throw ValidationError(where + ": empty field");
    if (!ids.insert(f[0]).second) throw ValidationError(where + ": duplicate slide_id '" + f[0] + "'");
    entries.push_back({f[0], f[1], parse_label(f[2]), resolve(base, f[3])});
  }
  if (entries.empty()) throw ValidationError(path.string() + ": no slides");
  return entries;
}

PipelineConfig PipelineConfig::from_json(const std::string& text, const fs::path& base_dir) {
  const json j = json::parse(text);
  PipelineConfig cfg;
  if (j.contains("dataset")) cfg.dataset = resolve(base_dir, j.at("dataset").get<std::string>());
  if (j.contains("output_dir")) cfg.output_dir = resolve(base_dir, j.at("output_dir").get<std::string>());
  if (j.contains("embeddings_dir")) cfg.embeddings_dir = resolve(base_dir, j.at("embeddings_dir").get<std::string>());
  if (j.contains("predictions")) cfg.predictions = resolve(base_dir, j.at("predictions").get<std::string>());
  read_opt(j, "k_folds", cfg.k_folds);
  read_opt(j, "jobs", cfg.jobs);
  if (j.contains("encoder_source")) {
    const std::string s = j.at("encoder_source").get<std::string>();
    if (s == "auto") cfg.encoder_source = EncoderSource::Auto;
    else if (s == "random") cfg.encoder_source = EncoderSource::Random;
    else if (s == "pretrained") cfg.encoder_source = EncoderSource::Pretrained;
    else throw ArgumentError("encoder_source must be auto, random or pretrained");
  }
  cfg.override_seed(j.contains("seed") ? j.at("seed").get<std::uint64_t>() : cfg.seed);

  if (j.contains("tiler")) {
    const json& t = j.at("tiler");
    read_opt(t, "tile_size", cfg.tiler.tile_size);
    read_opt(t, "bag_size", cfg.tiler.bag_size);
    read_opt(t, "model_input_size", cfg.tiler.model_input_size);
    read_opt(t, "darkness_downsample", cfg.tiler.darkness_downsample);
    if (t.contains("edge_policy")) cfg.tiler.edge_policy = parse_edge_policy(t.at("edge_policy").get<std::string>());
  }
  if (j.contains("augment")) {
    const json& a = j.at("augment");
    cfg.augment = a.is_string() ? load_augment_spec(resolve(base_dir, a.get<std::string>()))
                                : augment_spec_from_json(a.dump());
  }
  if (j.contains("encoder")) {
    const json& e = j.at("encoder");
    read_opt(e, "patch_size", cfg.encoder.patch_size);
    read_opt(e, "embed_dim", cfg.encoder.embed_dim);
  }
  if (j.contains("ssl")) {
    const json& s = j.at("ssl");
    read_opt(s, "temperature", cfg.ssl.temperature);
    read_opt(s, "ema_momentum", cfg.ssl.ema_momentum);
    read_opt(s, "batch_size", cfg.ssl.batch_size);
    read_opt(s, "epochs", cfg.ssl.epochs);
    read_opt(s, "seed", cfg.ssl.seed);
    read_opt(s, "proj_dim", cfg.ssl.proj_dim);
    read_opt(s, "learning_rate", cfg.ssl.learning_rate);
    read_opt(s, "sgd_momentum", cfg.ssl.sgd_momentum);
  }
  if (j.contains("train")) {
    const json& t = j.at("train");
    read_opt(t, "learning_rate", cfg.train.learning_rate);
    read_opt(t, "momentum", cfg.train.momentum);
    read_opt(t, "epochs", cfg.train.epochs);
    read_opt(t, "seed", cfg.train.seed);
    read_opt(t, "prob_clip", cfg.train.prob_clip);
    read_opt(t, "att_dim", cfg.train.att_dim);
    read_opt(t, "batch_size", cfg.train.batch_size);
    if (t.contains("class_weights")) {
      const auto w = t.at("class_weights").get<std::vector<double>>();
      if (w.size() != kNumClasses) throw ArgumentError("train.class_weights needs 2 values");
      cfg.train.class_weights = {w[0], w[1]};
    }
    if (t.contains("pooling")) {
      const std::string p = t.at("pooling").get<std::string>();
      if (p == "attention") cfg.train.pooling = Pooling::Attention;
      else if (p == "mean") cfg.train.pooling = Pooling::Mean;
      else throw ArgumentError("train.pooling must be attention or mean");
    }
    if (t.contains("init")) {
      const std::string p = t.at("init").get<std::string>();
      if (p == "uniform") cfg.train.init = HeadInit::Uniform;
      else if (p == "zero") cfg.train.init = HeadInit::Zero;
      else throw ArgumentError("train.init must be uniform or zero");
    }
  }
  return cfg;
}

PipelineConfig PipelineConfig::load(const fs::path& path) {
  if (!fs::exists(path)) throw ArgumentError("config not found: " + path.string());
  const auto bytes = binio::read_file(path);
  const fs::path base = path.has_parent_path() ? path.parent_path() : ".";
  return from_json(std::string(bytes.begin(), bytes.end()), base);
}

void PipelineConfig::override_seed(std::uint64_t global_seed) {
  seed = global_seed;
  ssl.seed = mix_seed(global_seed, 1);
  train.seed = mix_seed(global_seed, 2);
}

std::string format_short(double x) {
  if (!std::isfinite(x)) return "nan";
  std::string s = fixed(x, 3);
  while (s.size() > 1 && s.back() == '0' && s[s.size() - 2] != '.') s.pop_back();
  return s;
}

std::pair<double, double> mean_std(const std::vector<double>& values) {
  if (values.empty()) return {std::nan(""), std::nan("")};
  double mean = 0.0;
  for (double v : values) mean += v;
  mean /= static_cast<double>(values.size());
  double var = 0.0;
  for (double v : values) var += (v - mean) * (v - mean);
  return {mean, std::sqrt(var / static_cast<double>(values.size()))};
}

int cmd_tile(const PipelineConfig& cfg, std::ostream& out, std::ostream& err) {
  return guarded("tile", cfg, out, err, do_tile);
}
int cmd_split(const PipelineConfig& cfg, std::ostream& out, std::ostream& err) {
  return guarded("split", cfg, out, err, do_split);
}
int cmd_pretrain(const PipelineConfig& cfg, std::ostream& out, std::ostream& err) {
  return guarded("pretrain", cfg, out, err, do_pretrain);
}
int cmd_train(const PipelineConfig& cfg, std::ostream& out, std::ostream& err) {
  return guarded("train", cfg, out, err, do_train);
}
int cmd_eval(const PipelineConfig& cfg, std::ostream& out, std::ostream& err) {
  return guarded("eval", cfg, out, err, do_eval);
}
int cmd_predict(const PipelineConfig& cfg, std::ostream& out, std::ostream& err) {
  return guarded("predict", cfg, out, err, do_predict);
}

int run_command(const std::string& name, const PipelineConfig& cfg, std::ostream& out, std::ostream& err) {
  if (name == "tile") return cmd_tile(cfg, out, err);
  if (name == "split") return cmd_split(cfg, out, err);
  if (name == "pretrain") return cmd_pretrain(cfg, out, err);
  if (name == "train") return cmd_train(cfg, out, err);
  if (name == "eval") return cmd_eval(cfg, out, err);
  if (name == "predict") return cmd_predict(cfg, out, err);
  err << "unknown subcommand '" << name << "'\n";
  return kExitUsage;
}

}  // namespace milbench
