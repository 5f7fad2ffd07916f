#include "milbench/evalkit.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <limits>

#include "milbench/errors.hpp"
#include "milbench/manifest.hpp"
#include "milbench/parallel.hpp"
#include "milbench/rng.hpp"

namespace milbench {

namespace {

constexpr double kF1TieTolerance = 1e-12;

}  // namespace

std::vector<std::size_t> MetricInput::class_counts() const {
  std::vector<std::size_t> counts(static_cast<std::size_t>(num_classes), 0);
  for (int y : labels) {
    if (y < 0 || y >= num_classes) throw ArgumentError("label index out of range");
    ++counts[static_cast<std::size_t>(y)];
  }
  return counts;
}

double weighted_log_loss(const MetricInput& input, double eps) {
  if (!(eps > 0.0 && eps < 0.5)) throw ArgumentError("prob_clip must be in (0, 0.5)");
  const auto m = static_cast<std::size_t>(input.num_classes);
  if (input.class_weights.size() != m) throw ArgumentError("need one class weight per class");
  if (input.probs.size() != input.size() * m) throw ArgumentError("probability matrix has the wrong shape");
  for (double w : input.class_weights) {
    if (!(w > 0.0)) throw ArgumentError("class weights must be positive");
  }
  const std::vector<std::size_t> counts = input.class_counts();
  for (std::size_t i = 0; i < m; ++i) {
    if (counts[i] == 0) {
      throw DomainError("weighted log loss undefined: class " + std::to_string(i) + " has no observations");
    }
  }

  std::vector<double> class_sum(m, 0.0);
  for (std::size_t j = 0; j < input.size(); ++j) {
    const double* row = &input.probs[j * m];
    double row_sum = 0.0;
    for (std::size_t c = 0; c < m; ++c) {
      if (!std::isfinite(row[c])) throw ArgumentError("non-finite probability");
      row_sum += std::clamp(row[c], eps, 1.0 - eps);
    }
    const auto y = static_cast<std::size_t>(input.labels[j]);
    const double p = std::clamp(row[y], eps, 1.0 - eps) / row_sum;
    class_sum[y] += std::log(p);
  }

  double numerator = 0.0;
  double weight_sum = 0.0;
  for (std::size_t i = 0; i < m; ++i) {
    numerator += input.class_weights[i] * class_sum[i] / static_cast<double>(counts[i]);
    weight_sum += input.class_weights[i];
  }
  return -numerator / weight_sum;
}

MetricInput binary_metric_input(std::span<const double> p_ce, std::span<const ClassLabel> labels,
                                std::span<const double> class_weights) {
  if (p_ce.size() != labels.size()) throw ArgumentError("predictions and labels differ in length");
  MetricInput in;
  in.class_weights.assign(class_weights.begin(), class_weights.end());
  in.labels.reserve(labels.size());
  in.probs.reserve(labels.size() * 2);
  for (std::size_t j = 0; j < labels.size(); ++j) {
    in.labels.push_back(class_index(labels[j]));
    in.probs.push_back(p_ce[j]);
    in.probs.push_back(1.0 - p_ce[j]);
  }
  return in;
}

FoldAssignment stratified_group_kfold(std::span<const GroupSample> samples, int k, std::uint64_t seed,
                                      bool shuffle_equal_groups) {
  if (k < 1) throw ArgumentError("k must be >= 1");

  struct Group {
    std::string patient_id;
    std::array<std::int64_t, kNumClasses> per_class{};
    std::int64_t size = 0;
    int strat_class = 0;
  };
  std::map<std::string, Group> by_patient;
  for (const GroupSample& s : samples) {
    if (s.patient_id.empty()) throw ArgumentError("empty patient_id");
    Group& g = by_patient[s.patient_id];
    g.patient_id = s.patient_id;
    ++g.per_class[static_cast<std::size_t>(class_index(s.label))];
    ++g.size;
  }
  if (by_patient.size() < static_cast<std::size_t>(k)) {
    throw ArgumentError("stratified_group_kfold: " + std::to_string(by_patient.size()) + " patients for " +
                        std::to_string(k) + " folds");
  }

  std::vector<Group> groups;
  std::array<std::int64_t, kNumClasses> totals{};
  for (auto& [id, g] : by_patient) {
    g.strat_class = g.per_class[0] >= g.per_class[1] ? 0 : 1;
    totals[static_cast<std::size_t>(g.strat_class)] += g.size;
    groups.push_back(g);
  }
  std::stable_sort(groups.begin(), groups.end(), [](const Group& a, const Group& b) {
    if (a.size != b.size) return a.size > b.size;
    return a.patient_id < b.patient_id;
  });
  if (shuffle_equal_groups) {
    SeededRng rng(seed);
    for (std::size_t lo = 0; lo < groups.size();) {
      std::size_t hi = lo;
      while (hi < groups.size() && groups[hi].size == groups[lo].size) ++hi;
      rng.shuffle(std::span<Group>(groups.data() + lo, hi - lo));
      lo = hi;
    }
  }

  // Deviations are scaled by k so targets (total / k) stay integral:
  // k * |count - total / k| = |k * count - total|.
  const auto ku = static_cast<std::size_t>(k);
  std::vector<std::array<std::int64_t, kNumClasses>> counts(ku);
  std::vector<std::size_t> members(ku, 0);
  auto deviation = [&](std::int64_t count, std::size_t c) { return std::llabs(k * count - totals[c]); };

  FoldAssignment out;
  out.k = k;
  for (std::size_t gi = 0; gi < groups.size(); ++gi) {
    const Group& g = groups[gi];
    const auto empty_folds = static_cast<std::size_t>(std::count(members.begin(), members.end(), 0u));
    const bool force_empty = groups.size() - gi <= empty_folds;

    int best = -1;
    std::int64_t best_delta = std::numeric_limits<std::int64_t>::max();
    for (std::size_t f = 0; f < ku; ++f) {
      if (force_empty && members[f] != 0) continue;
      const auto c = static_cast<std::size_t>(g.strat_class);
      const std::int64_t delta = deviation(counts[f][c] + g.size, c) - deviation(counts[f][c], c);
      if (delta < best_delta) {
        best_delta = delta;
        best = static_cast<int>(f);
      }
    }
    const auto fb = static_cast<std::size_t>(best);
    counts[fb][static_cast<std::size_t>(g.strat_class)] += g.size;
    ++members[fb];
    out.fold_of[g.patient_id] = best;
  }
  return out;
}

std::string render_folds(const FoldAssignment& folds) {
  std::string out = "patient_id,fold\n";
  for (const auto& [patient, fold] : folds.fold_of) out += patient + "," + std::to_string(fold) + "\n";
  return out;
}

FoldAssignment parse_folds(const std::string& text) {
  const auto lines = split_lines(text);
  if (lines.empty() || lines[0] != "patient_id,fold") throw ValidationError("fold CSV: missing header");
  FoldAssignment out;
  for (std::size_t i = 1; i < lines.size(); ++i) {
    if (lines[i].empty()) continue;
    const auto f = split_csv_line(lines[i]);
    if (f.size() != 2) throw ValidationError("fold CSV line " + std::to_string(i + 1) + ": expected 2 fields");
    int fold = 0;
    try {
      fold = std::stoi(f[1]);
    } catch (const std::exception&) {
      throw ValidationError("fold CSV line " + std::to_string(i + 1) + ": bad fold index");
    }
    if (fold < 0) throw ValidationError("fold CSV: negative fold index");
    if (!out.fold_of.emplace(f[0], fold).second) throw ValidationError("fold CSV: duplicate patient " + f[0]);
    out.k = std::max(out.k, fold + 1);
  }
  return out;
}

ConfusionMatrix confusion_at_threshold(std::span<const ScoredLabel> predictions, double t) {
  ConfusionMatrix cm;
  for (const ScoredLabel& p : predictions) {
    const bool predicted_ce = p.p_ce > t;
    const bool is_ce = p.label == ClassLabel::CE;
    if (predicted_ce && is_ce) ++cm.tp;
    else if (predicted_ce) ++cm.fp;
    else if (is_ce) ++cm.fn;
    else ++cm.tn;
  }
  return cm;
}

WeightedPrf weighted_prf(const ConfusionMatrix& cm) {
  auto ratio = [](double num, double den) { return den > 0.0 ? num / den : 0.0; };
  struct Prf {
    double precision, recall, f1;
  };
  auto per_class = [&](double tp, double fp, double fn) {
    const double p = ratio(tp, tp + fp);
    const double r = ratio(tp, tp + fn);
    return Prf{p, r, ratio(2.0 * p * r, p + r)};
  };
  const auto tp = static_cast<double>(cm.tp);
  const auto fp = static_cast<double>(cm.fp);
  const auto tn = static_cast<double>(cm.tn);
  const auto fn = static_cast<double>(cm.fn);
  const Prf ce = per_class(tp, fp, fn);
  const Prf laa = per_class(tn, fn, fp);
  const double support_ce = tp + fn;
  const double support_laa = tn + fp;
  const double total = support_ce + support_laa;
  if (total == 0.0) return {};
  return {(support_ce * ce.f1 + support_laa * laa.f1) / total,
          (support_ce * ce.precision + support_laa * laa.precision) / total,
          (support_ce * ce.recall + support_laa * laa.recall) / total};
}

SweepResult sweep_threshold(std::span<const ScoredLabel> predictions, double step, int jobs) {
  if (predictions.empty()) throw ArgumentError("sweep_threshold: no predictions");
  if (!(step > 0.0 && step <= 1.0)) throw ArgumentError("sweep_threshold: step must be in (0, 1]");
  const auto n = static_cast<std::size_t>(std::llround(1.0 / step));
  SweepResult out;
  out.thresholds.resize(n + 1);
  out.curve.resize(n + 1);
  parallel_for(n + 1, jobs, [&](std::size_t i) {
    out.thresholds[i] = static_cast<double>(i) / static_cast<double>(n);
    out.curve[i] = weighted_prf(confusion_at_threshold(predictions, out.thresholds[i]));
  });
  double max_f1 = out.curve[0].f1;
  for (const WeightedPrf& c : out.curve) max_f1 = std::max(max_f1, c.f1);
  for (std::size_t i = 0; i <= n; ++i) {
    if (out.curve[i].f1 >= max_f1 - kF1TieTolerance) {
      out.best_weighted_f1 = out.curve[i].f1;
      out.best_threshold = out.thresholds[i];
      break;
    }
  }
  return out;
}

std::string render_curve(const SweepResult& sweep) {
  int digits = 0;
  for (std::size_t n = sweep.thresholds.size() > 1 ? sweep.thresholds.size() - 1 : 1; n > 1; n = (n + 9) / 10) {
    ++digits;
  }
  std::string out = "threshold,weighted_f1,weighted_precision,weighted_recall\n";
  char buf[160];
  for (std::size_t i = 0; i < sweep.thresholds.size(); ++i) {
    std::snprintf(buf, sizeof buf, "%.*f,%.6f,%.6f,%.6f\n", digits, sweep.thresholds[i], sweep.curve[i].f1,
                  sweep.curve[i].precision, sweep.curve[i].recall);
    out += buf;
  }
  return out;
}

std::string render_confusion(const ConfusionMatrix& cm) {
  return "tp,fp,fn,tn\n" + std::to_string(cm.tp) + "," + std::to_string(cm.fp) + "," + std::to_string(cm.fn) +
         "," + std::to_string(cm.tn) + "\n";
}

}  // namespace milbench
