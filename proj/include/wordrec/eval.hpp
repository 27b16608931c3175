#pragma once

#include "wordrec/corpus.hpp"
#include "wordrec/likelihood.hpp"
#include "wordrec/numeric.hpp"
#include "wordrec/phon.hpp"
#include "wordrec/recognizer.hpp"

#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace wordrec {

// --- intelligibility classification ---------------------------------------------------

struct RocResult {
  std::vector<double> thresholds;  ///< distinct entropy values, ascending
  std::vector<double> tpr;         ///< starts at 0, ends at 1
  std::vector<double> fpr;
  double auc = 0.5;
  std::size_t n_pos = 0;
  std::size_t n_neg = 0;
};

/// ROC for "entropy <= threshold predicts intelligible". AUC by the
/// trapezoidal rule, which gives tied pairs half credit. Throws
/// std::invalid_argument when either group is empty.
RocResult intelligibility_auc(const std::vector<double>& entropies_pos, const std::vector<double>& entropies_neg);

/// P(score_pos > score_neg) + P(tie)/2 by direct pair counting.
double mann_whitney_auc(const std::vector<double>& scores_pos, const std::vector<double>& scores_neg);

// --- model comparison -----------------------------------------------------------------

enum class ComparisonMethod { delong, paired_t, monte_carlo };
std::string_view to_string(ComparisonMethod m);

struct ModelComparison {
  std::string model_a;
  std::string model_b;
  double statistic = 0.0;
  double p_value = 1.0;
  ComparisonMethod method = ComparisonMethod::delong;
  double estimate_a = 0.0;  ///< AUC or mean for model a
  double estimate_b = 0.0;
  std::size_t n = 0;
  std::size_t excluded = 0;
  /// paired t: the differences have zero variance but non-zero mean, so
  /// the statistic is infinite and p is reported as 0.
  bool degenerate = false;
};

/// Paired DeLong test on the AUCs of two scorers of the same items. Higher
/// scores predict label `true`. Two-sided p from the normal approximation.
/// Throws std::domain_error when the variance estimate is zero while the
/// AUCs differ.
ModelComparison delong_test(const std::vector<double>& scores_a, const std::vector<double>& scores_b,
                            const std::vector<bool>& labels, std::string model_a = "a", std::string model_b = "b");

/// Paired t-tests between every pair of models (map order), Bonferroni
/// adjusted by `m_comparisons` (0 = number of pairs). Tokens with a non-finite
/// value in either vector are dropped from that pair and counted.
std::vector<ModelComparison> paired_t_bonferroni(const std::map<std::string, std::vector<double>>& surprisals_by_model,
                                                 std::size_t m_comparisons = 0);

// --- aggregate metrics ------------------------------------------------------------------

struct AggregateMetrics {
  double mean_surprisal = 0.0;  ///< over finite surprisals only
  double mean_rank = 0.0;
  double top1_rate = 0.0;       ///< fraction in [0, 1]
  std::size_t n = 0;
  std::size_t n_infinite = 0;
};

/// Throws std::invalid_argument on empty input or a result without gold.
AggregateMetrics aggregate_metrics(const std::vector<PosteriorResult>& results);

enum class StrataKey { edit_distance, length_diff, age_bin, child };

struct Stratum {
  std::string label;
  double order = 0.0;
  std::size_t n = 0;
  std::size_t n_infinite = 0;
  double mean_surprisal = 0.0;
  double sem = 0.0;  ///< sample sd / sqrt(n_finite); 0 for a single value
};

struct StratifiedReport {
  StrataKey key = StrataKey::edit_distance;
  std::vector<Stratum> strata;  ///< ascending `order`, then label
  std::size_t total = 0;
};

/// Groups glossed results by the chosen key. Edit distance and length
/// difference are measured against the gold citation form closest to the
/// child form.
StratifiedReport stratify(const std::vector<PosteriorResult>& results, const std::vector<VocalizationToken>& tokens,
                          const Lexicon& lexicon, StrataKey key, int age_bin_months = 6);

std::string length_diff_label(int child_minus_citation);

// --- per-partition models ----------------------------------------------------------------

struct CrossfitOptions {
  unsigned threads = 1;
  /// When set, each cell's likelihood scale is re-fitted on the test
  /// partition's validation tokens before scoring.
  const std::map<std::string, std::vector<VocalizationToken>>* validation = nullptr;
  std::optional<ScaleGrid> grid;
};

struct CrossfitResult {
  std::vector<std::string> labels;
  /// rows: test partitions, columns: models. Entry = mean finite gold surprisal.
  Matrix mean_surprisal;
  Matrix fitted_scale;
  std::vector<std::string> warnings;
};

/// Scores every partition's test tokens with every partition's recognizer.
/// Partitions without test tokens (or without a model) are excluded with a
/// warning. Deterministic for any thread count.
CrossfitResult crossfit_matrix(const std::map<std::string, std::shared_ptr<const Recognizer>>& models,
                               const std::map<std::string, std::vector<VocalizationToken>>& tests,
                               const CrossfitOptions& options = {});

/// Number of rows whose strict minimum lies on the diagonal.
std::size_t diagonal_best_count(const Matrix& m);

/// Test statistic = diagonal_best_count; the null permutes each row
/// independently and uniformly. p = (hits + 1) / (n_sims + 1) where hits
/// counts simulations with statistic >= observed.
ModelComparison monte_carlo_best_match(const Matrix& m, std::size_t n_sims, std::uint64_t seed);

}  // namespace wordrec
