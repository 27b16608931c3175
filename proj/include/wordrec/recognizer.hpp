#pragma once

#include "wordrec/corpus.hpp"
#include "wordrec/likelihood.hpp"
#include "wordrec/numeric.hpp"
#include "wordrec/phon.hpp"
#include "wordrec/prior.hpp"

#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace wordrec {

/// prior .* likelihood, normalized. Throws std::domain_error ("no
/// interpretable candidate") when every product is zero.
Vector posterior(const Vector& prior, const Vector& likelihood);
/// Same in log space; -inf entries are allowed.
Vector posterior_from_logs(const Vector& log_prior, const Vector& log_likelihood);

/// -log2 p[gold]; +inf when p[gold] == 0. Throws std::out_of_range if gold is not in V.
double surprisal_bits(const Vector& p, const std::vector<std::string>& vocab, std::string_view gold);

struct RankedCandidates {
  std::optional<std::size_t> gold_rank;  ///< 1-based
  std::vector<std::pair<std::string, double>> top_k;
};

/// Descending probability, ties broken by ascending orthographic form.
RankedCandidates rank_and_topk(const Vector& p, const std::vector<std::string>& vocab,
                               const std::optional<std::string>& gold, std::size_t k);

struct PosteriorResult {
  std::string token_id;
  Vector probs;
  double entropy_bits = 0.0;
  std::optional<double> gold_surprisal_bits;
  std::optional<std::size_t> gold_rank;
  std::vector<std::pair<std::string, double>> top_k;
};

/// Pronunciation likelihood used by a recognizer: a per-candidate cost (edit
/// distance or path cost theta) scaled into log P(d|w) = -scale * cost.
class Likelihood {
 public:
  enum class Kind { none, edit, wfst };

  static Likelihood none();
  static Likelihood edit(double beta);
  static Likelihood wfst(ArcCosts arcs, double lambda, PathAccumulation acc = PathAccumulation::sum);
  static Likelihood wfst(const PairModel& pm, double lambda);

  Kind kind() const { return kind_; }
  double scale() const { return scale_; }
  Likelihood with_scale(double scale) const;

  /// Per-candidate cost over lexicon.words(), minimized over pronunciations.
  Vector costs(const Lexicon& lexicon, const PhonemeString& d) const;
  /// -scale * cost, with 0 * inf treated as 0.
  Vector log_likelihood(const Vector& costs) const;

 private:
  Kind kind_ = Kind::none;
  double scale_ = 0.0;
  std::shared_ptr<const ArcCosts> arcs_;
  PathAccumulation acc_ = PathAccumulation::sum;
};

/// Noisy-channel recognizer over the lexicon's candidate list.
class Recognizer {
 public:
  Recognizer(std::shared_ptr<const Lexicon> lexicon, std::shared_ptr<const PriorModel> prior, Likelihood likelihood);

  const Lexicon& lexicon() const { return *lexicon_; }
  const PriorModel& prior() const { return *prior_; }
  const Likelihood& likelihood() const { return likelihood_; }
  /// Same lexicon and prior with a different likelihood.
  Recognizer with_likelihood(Likelihood likelihood) const { return {lexicon_, prior_, std::move(likelihood)}; }

  PosteriorResult recognize(const VocalizationToken& token, std::size_t k = 5) const;
  /// Uses precomputed candidate costs (see Likelihood::costs).
  PosteriorResult recognize(const VocalizationToken& token, const Vector& costs, std::size_t k = 5) const;

  std::vector<PosteriorResult> recognize_all(const std::vector<VocalizationToken>& tokens, unsigned threads,
                                             std::size_t k = 5) const;

 private:
  std::shared_ptr<const Lexicon> lexicon_;
  std::shared_ptr<const PriorModel> prior_;
  Likelihood likelihood_;
};

/// Candidate costs for every token, computed in parallel.
std::vector<Vector> candidate_costs(const Likelihood& likelihood, const Lexicon& lexicon,
                                    const std::vector<VocalizationToken>& tokens, unsigned threads);

/// Reduces glossed tokens to scale-search inputs. Tokens whose gloss is not
/// in the lexicon are skipped.
std::vector<ScoredToken> scored_tokens(const PriorModel& prior, const Lexicon& lexicon,
                                       const std::vector<VocalizationToken>& tokens,
                                       const std::vector<Vector>& costs);

/// Grid search of beta (edit) or lambda (wfst) for `likelihood` on glossed dev
/// tokens under `prior`. Throws std::invalid_argument on an empty dev set or
/// an unglossed token.
ScaleFit fit_scale(const Likelihood& likelihood, const ScaleGrid& grid, const std::vector<VocalizationToken>& dev,
                   const PriorModel& prior, const Lexicon& lexicon, unsigned threads = 1,
                   ScaleObjective objective = ScaleObjective::mean_log_posterior);

inline constexpr std::string_view kResultCsvHeader =
    "token_id,child_id,age_months,model_id,entropy_bits,gold,gold_surprisal_bits,gold_rank,top1,top1_prob";

std::string result_csv_row(const PosteriorResult& r, const VocalizationToken& token, std::string_view model_id);

}  // namespace wordrec
