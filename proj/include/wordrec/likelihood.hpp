#pragma once

#include "wordrec/numeric.hpp"
#include "wordrec/pair_model.hpp"
#include "wordrec/phon.hpp"

#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace wordrec {

/// Unit-cost Levenshtein distance over phoneme ids.
int edit_distance(const PhonemeString& a, const PhonemeString& b);
/// Smallest distance from `d` to any of the given pronunciations.
int min_edit_distance(const std::vector<PhonemeString>& citations, const PhonemeString& d);

/// P(d|w) proportional to exp(-beta * distance).
struct EditDistanceLikelihood {
  double beta = 1.0;
  explicit EditDistanceLikelihood(double b);
};

/// exp(-beta * min distance over the word's citation forms). Throws
/// std::out_of_range for a word outside the lexicon.
double edit_likelihood(const EditDistanceLikelihood& model, std::string_view word, const PhonemeString& d,
                       const Lexicon& lexicon);

enum class PathAccumulation {
  sum,   ///< log semiring: -log of the total probability of all alignments
  best,  ///< tropical semiring: cost of the single cheapest alignment
};

/// Accumulated cost over the (|citation|+1) x (|child|+1) edit lattice.
/// Substitutions move (i,j)->(i+1,j+1), deletions (i,j)->(i+1,j),
/// insertions (i,j)->(i,j+1). Returns +inf when no path has finite cost.
double lattice_cost(const ArcCosts& arcs, const PhonemeString& citation, const PhonemeString& child,
                    PathAccumulation acc = PathAccumulation::sum);

/// theta = -log sum over alignments of the product of conditional arc
/// probabilities; +inf when every alignment has probability zero.
double path_sum(const PairModel& pm, const PhonemeString& citation, const PhonemeString& child);

/// P(d|w) proportional to exp(-lambda * theta), using the citation form with
/// the smallest theta.
struct WfstLikelihood {
  ArcCosts arcs;
  double lambda = 1.0;
  PathAccumulation accumulation = PathAccumulation::sum;

  WfstLikelihood(const PairModel& pm, double lambda);
  WfstLikelihood(ArcCosts arcs, double lambda, PathAccumulation acc);
};

double min_path_cost(const WfstLikelihood& model, const std::vector<PhonemeString>& citations,
                     const PhonemeString& d);
/// Returns 0 when every citation form is unreachable.
double wfst_likelihood(const WfstLikelihood& model, std::string_view word, const PhonemeString& d,
                       const Lexicon& lexicon);

// --- EM training ---------------------------------------------------------------

struct EmTrainConfig {
  int max_iters = 100;
  double tol = 1e-6;
  double learning_rate = 1.0;  ///< fixed; any other value is rejected
  double floor = 0.0;          ///< additive pseudo-count per permitted event in the M-step
};

struct EmResult {
  PairModel model;
  /// Corpus log-likelihood (nats) under the parameters entering each iteration.
  std::vector<double> log_likelihood;
  int iterations = 0;
  bool converged = false;
  std::size_t skipped_pairs = 0;
  std::vector<std::string> warnings;
};

using AlignmentPair = std::pair<PhonemeString, PhonemeString>;  // (citation, child)

/// Expected edit-event counts for one pair under joint log weights, added
/// into `counts`. Returns the pair's log-likelihood.
double accumulate_expected_counts(const Matrix& log_joint, const PhonemeString& citation,
                                  const PhonemeString& child, Matrix& counts);

/// Baum-Welch training of the joint unigram pair model, starting from the
/// uniform model. Stops when the per-pair mean log-likelihood improves by less
/// than `tol` or after `max_iters` iterations.
EmResult em_train_pair_model(const std::vector<AlignmentPair>& pairs, std::size_t symbols,
                             const EmTrainConfig& cfg = {});

// --- scale parameter search --------------------------------------------------------

struct ScaleGrid {
  double lo = 0.0;
  double hi = 0.0;
  double step = 0.1;

  std::vector<double> values() const;
  /// "lo:hi:step"
  static ScaleGrid parse(std::string_view spec);
};

/// A development token reduced to what the scale search needs: the log prior
/// over V, the per-candidate cost (edit distance or theta) and the gold index.
struct ScoredToken {
  Vector log_prior;
  Vector cost;
  std::size_t gold = 0;
};

enum class ScaleObjective {
  mean_log_posterior,  ///< probability of the whole dev sample (minimum mean surprisal)
  mean_posterior,      ///< arithmetic mean of gold posterior probabilities
};

struct ScaleFit {
  double best = 0.0;
  std::vector<double> grid;
  std::vector<double> scores;
  bool on_boundary = false;
  bool unimodal = true;
  std::vector<std::string> warnings;
};

/// Grid search for the scale maximizing the dev objective. Ties go to the
/// smallest value. Warns when the argmax is on the grid edge or the score
/// sequence is not unimodal.
ScaleFit fit_scale_parameter(const std::vector<ScoredToken>& dev, const ScaleGrid& grid,
                             ScaleObjective objective = ScaleObjective::mean_log_posterior);

}  // namespace wordrec
