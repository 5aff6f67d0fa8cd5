#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "morphoprobe/conllu.hpp"
#include "morphoprobe/json_io.hpp"
#include "morphoprobe/sampler.hpp"

namespace morphoprobe {

// E = 1 - acc_perturbed / acc_unperturbed. Negative when the perturbation helps.
// Throws UndefinedError when acc_unperturbed <= 0.
double effect(double acc_unperturbed, double acc_perturbed);

struct EffectRecord {
  std::string model_id;
  std::string task;
  std::string perturbation;
  double effect = 0.0;
};

// ---- significance -----------------------------------------------------------

// P(T <= t) for Student's t with `df` degrees of freedom.
double student_t_cdf(double t, double df);

struct TTestResult {
  std::size_t n = 0;
  double mean_difference = 0.0;
  double t = 0.0;
  double df = 0.0;
  double p = 1.0;  // two-sided
};

// Paired t-test on a[i] - b[i]. With zero variance of the differences p is 1
// when they are all 0 and 0 otherwise (t infinite).
TTestResult paired_t_test(std::span<const double> a, std::span<const double> b);

// min(1, m p)
double bonferroni(double p, std::size_t family_size);

// Exact two-sided binomial test of k successes in n trials against 1/2:
// min(1, 2 P(X <= min(k, n - k))).
double sign_test(std::uint64_t k, std::uint64_t n);

// ---- correlations -------------------------------------------------------------

// Pearson correlation; nullopt when either column has zero variance or n < 2.
std::optional<double> pearson(std::span<const double> x, std::span<const double> y);

struct CorrelationMatrix {
  std::vector<std::string> rows;
  std::vector<std::string> cols;
  std::vector<std::vector<double>> r;  // NaN where undefined
  std::vector<std::vector<std::size_t>> n;
  std::vector<std::vector<bool>> defined;

  Json to_json() const;
  std::string to_csv() const;
};

// Rows are the perturbations of model_a, columns those of model_b; each cell
// correlates effects over the tasks both share. Cells with fewer than
// `min_common` tasks or a constant column are flagged undefined. With
// model_a == model_b this is the within-model perturbation matrix.
CorrelationMatrix pearson_matrix(std::span<const EffectRecord> records, const std::string& model_a,
                                 const std::string& model_b, std::size_t min_common = 3);

// ---- layer weights -------------------------------------------------------------

struct LayerWeightDiagnostics {
  double entropy = 0.0;        // natural log
  double entropy_bits = 0.0;   // base 2; 3.70 for 13 uniform layers
  double max_min_ratio = 0.0;  // +inf when the smallest weight is 0
};

LayerWeightDiagnostics layer_weight_diagnostics(std::span<const double> weights);

// ---- external analyzers ----------------------------------------------------------

// 1 when the predicted values reduce to the gold value alone, 1/d when gold is one
// of d distinct values, 0 otherwise.
double partial_credit_score(std::span<const std::string> predicted, const std::string& gold);

struct ExternalScore {
  double mean = 0.0;
  std::size_t instances = 0;
  std::size_t exact = 0;    // score 1
  std::size_t partial = 0;  // 0 < score < 1
  std::size_t missed = 0;   // score 0
};

// Scores an analyzer's CoNLL-U output against a task's test split. Predicted
// sentences align with test instances by order; every predicted token whose
// character span overlaps the target word contributes its value of the task's
// feature.
ExternalScore score_external(const TaskDataset& dataset, std::span<const SentenceRecord> predicted);

// Accuracy on test of always predicting the most frequent training label (ties
// go to the label that sorts first).
double majority_baseline(const TaskDataset& dataset);

}  // namespace morphoprobe
