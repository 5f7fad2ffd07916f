#pragma once

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "milbench/labels.hpp"

namespace milbench {

/// Inputs of the class-weighted multi-class log loss
///
///   L = -( sum_i w_i * sum_j (y_ij / N_i) ln p_ij ) / sum_i w_i
///
/// where i runs over classes, j over observations, N_i is the number of
/// observations labelled i and p_ij the predicted probability of the
/// observation's own class.
struct MetricInput {
  int num_classes = kNumClasses;
  std::vector<double> class_weights = {1.0, 1.0};
  /// Class index per observation.
  std::vector<int> labels;
  /// Row-major (observations x num_classes), each row a probability simplex.
  std::vector<double> probs;

  std::size_t size() const { return labels.size(); }
  std::vector<std::size_t> class_counts() const;
};

/// Clips probabilities to [eps, 1 - eps], renormalises rows, then evaluates
/// the weighted log loss. Throws DomainError when a class has no observations.
double weighted_log_loss(const MetricInput& input, double eps = 1e-15);

/// Binary convenience: p_ce per observation plus labels.
MetricInput binary_metric_input(std::span<const double> p_ce, std::span<const ClassLabel> labels,
                                std::span<const double> class_weights);

struct GroupSample {
  std::string patient_id;
  ClassLabel label;
};

struct FoldAssignment {
  int k = 0;
  std::map<std::string, int> fold_of;
};

/// Patient-grouped, class-stratified K-fold. Groups are visited by
/// (slide count desc, patient_id asc); each goes to the fold that minimises
/// the total deviation of per-fold class counts from their proportional
/// targets, ties to the lowest index. A group is forced into an empty fold
/// when otherwise some fold would stay empty. Patients whose slides span both
/// classes stratify by majority class, ties to CE. `shuffle_equal_groups`
/// shuffles groups of equal slide count with `seed` before assignment.
FoldAssignment stratified_group_kfold(std::span<const GroupSample> samples, int k, std::uint64_t seed = 0,
                                      bool shuffle_equal_groups = false);

std::string render_folds(const FoldAssignment& folds);
FoldAssignment parse_folds(const std::string& text);

/// CE is the positive class.
struct ConfusionMatrix {
  std::size_t tp = 0;
  std::size_t fp = 0;
  std::size_t tn = 0;
  std::size_t fn = 0;

  std::size_t total() const { return tp + fp + tn + fn; }
  friend bool operator==(const ConfusionMatrix&, const ConfusionMatrix&) = default;
};

struct ScoredLabel {
  double p_ce;
  ClassLabel label;
};

/// Predicts CE iff p_ce > t (strictly).
ConfusionMatrix confusion_at_threshold(std::span<const ScoredLabel> predictions, double t);

struct WeightedPrf {
  double f1 = 0.0;
  double precision = 0.0;
  double recall = 0.0;
};

/// Per-class precision/recall/F1 with CE and then LAA as the positive class,
/// averaged with support weights. 0/0 evaluates to 0.
WeightedPrf weighted_prf(const ConfusionMatrix& cm);

struct SweepResult {
  std::vector<double> thresholds;
  std::vector<WeightedPrf> curve;
  double best_threshold = 0.0;
  double best_weighted_f1 = 0.0;
};

/// Evaluates thresholds i * step for i = 0 .. round(1 / step). The best
/// threshold is the smallest one reaching the maximum weighted F1; scores
/// within 1e-12 of the maximum count as reaching it.
SweepResult sweep_threshold(std::span<const ScoredLabel> predictions, double step = 0.01, int jobs = 1);

/// `threshold,weighted_f1,weighted_precision,weighted_recall`
std::string render_curve(const SweepResult& sweep);
/// `tp,fp,fn,tn`
std::string render_confusion(const ConfusionMatrix& cm);

}  // namespace milbench
