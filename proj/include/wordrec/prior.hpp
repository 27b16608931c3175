#pragma once

#include "wordrec/corpus.hpp"
#include "wordrec/kneser_ney.hpp"
#include "wordrec/numeric.hpp"

#include <map>
#include <memory>
#include <string>
#include <string_view>
#include <vector>

namespace wordrec {

/// What a prior may condition on for one token.
struct PriorContext {
  std::string token_id;
  std::vector<std::string> preceding;  ///< same-utterance tokens before the gap, speaker token first
  std::vector<std::string> following;  ///< same-utterance tokens after the gap
};

PriorContext prior_context(const VocalizationToken& token);

/// Source of P(w|c) over a fixed candidate vocabulary V. Implementations are
/// immutable after construction and safe to query concurrently.
class PriorModel {
 public:
  virtual ~PriorModel() = default;

  const std::vector<std::string>& vocab() const { return vocab_; }
  /// Distribution over vocab(); non-negative and summing to 1.
  virtual Vector distribution(const PriorContext& ctx) const = 0;
  virtual std::string name() const = 0;

 protected:
  explicit PriorModel(std::vector<std::string> vocab);

 private:
  std::vector<std::string> vocab_;
};

/// 1/|V| everywhere. Throws std::invalid_argument for an empty vocabulary.
Vector uniform_prior(const std::vector<std::string>& vocab);

class UniformPrior final : public PriorModel {
 public:
  explicit UniformPrior(std::vector<std::string> vocab);
  Vector distribution(const PriorContext&) const override { return dist_; }
  std::string name() const override { return "uniform"; }

 private:
  Vector dist_;
};

/// Context-free frequency prior: (count + pseudocount) normalized over V.
class UnigramPrior final : public PriorModel {
 public:
  UnigramPrior(std::vector<std::string> vocab, std::map<std::string, double> counts, double pseudocount = 0.001);
  Vector distribution(const PriorContext&) const override { return dist_; }
  std::string name() const override { return "unigram"; }
  const std::map<std::string, double>& counts() const { return counts_; }
  double pseudocount() const { return pseudocount_; }

 private:
  std::map<std::string, double> counts_;
  double pseudocount_;
  Vector dist_;
};

/// Counts occurrences of V words in `words` (other words are ignored).
UnigramPrior fit_unigram(const std::vector<std::string>& words, const std::vector<std::string>& vocab,
                         double pseudocount = 0.001);

enum class TrigramMode {
  continuation,  ///< P(w | two preceding tokens)
  in_context,    ///< whole-utterance probability with w at the gap, normalized over V
};

class TrigramKNPrior final : public PriorModel {
 public:
  TrigramKNPrior(std::vector<std::string> vocab, std::shared_ptr<const KneserNeyTrigram> lm, TrigramMode mode);
  Vector distribution(const PriorContext& ctx) const override;
  std::string name() const override {
    return mode_ == TrigramMode::continuation ? "trigram-continuation" : "trigram-context";
  }
  const KneserNeyTrigram& model() const { return *lm_; }
  TrigramMode mode() const { return mode_; }

 private:
  std::shared_ptr<const KneserNeyTrigram> lm_;
  TrigramMode mode_;
  std::vector<int> lm_ids_;  // V index -> model id
};

/// Trains the n-gram on speaker-tagged utterance strings ("CHI: ..." /
/// "MOT: ..."), adding V to the model vocabulary.
std::shared_ptr<const KneserNeyTrigram> fit_trigram_kn(const std::vector<std::string>& utterances,
                                                       const std::vector<std::string>& vocab,
                                                       std::vector<std::string>* warnings = nullptr);

/// Continuation distribution over V given the two preceding tokens (use
/// "<s>" for missing history).
Vector prior_continuation(const KneserNeyTrigram& lm, const std::vector<std::string>& vocab,
                          std::string_view w2, std::string_view w1);
/// In-context distribution over V for an utterance with one gap.
Vector prior_in_context(const KneserNeyTrigram& lm, const std::vector<std::string>& vocab, const PriorContext& ctx);

/// Per-token distributions supplied by an outside model (e.g. a masked
/// language model), densified over V.
class ExternalPrior final : public PriorModel {
 public:
  ExternalPrior(std::vector<std::string> vocab, std::map<std::string, Vector> by_token, double floor);
  /// Throws std::out_of_range for a token id without a record.
  Vector distribution(const PriorContext& ctx) const override;
  std::string name() const override { return "external"; }
  const std::map<std::string, Vector>& table() const { return by_token_; }
  double floor() const { return floor_; }

  /// One `{"token_id": ..., "probs": {word: p, ...}}` record per line.
  std::string serialize() const;

 private:
  std::map<std::string, Vector> by_token_;
  double floor_;
};

/// Listed V words keep their mass, unlisted V words get `floor`, then each
/// record is renormalized over V. Words outside V are ignored.
ExternalPrior parse_external_priors(std::string_view text, const std::vector<std::string>& vocab,
                                    double floor = 1e-10);
ExternalPrior load_external_priors(const std::string& path, const std::vector<std::string>& vocab,
                                   double floor = 1e-10);

}  // namespace wordrec
