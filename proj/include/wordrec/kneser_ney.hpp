#pragma once

#include "wordrec/numeric.hpp"

#include <array>
#include <cstdint>
#include <map>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace wordrec {

/// Interpolated Kneser-Ney trigram model with one absolute discount per
/// order, D = n1 / (n1 + 2 n2) over that order's (continuation) counts. The
/// unigram level interpolates with the uniform distribution over the model
/// vocabulary, so every vocabulary word has non-zero probability.
class KneserNeyTrigram {
 public:
  static constexpr std::string_view kBos = "<s>";
  static constexpr std::string_view kEos = "</s>";
  static constexpr std::string_view kUnk = "<unk>";
  static constexpr double kFallbackDiscount = 0.75;

  KneserNeyTrigram() = default;

  /// Sentences are token sequences without boundary markers; each is padded
  /// as <s> <s> ... </s>. `extra_vocab` words join the model vocabulary even if
  /// unseen. Warnings (discount fallback) are appended to `warnings`.
  static KneserNeyTrigram fit(const std::vector<std::vector<std::string>>& sentences,
                              const std::vector<std::string>& extra_vocab,
                              std::vector<std::string>* warnings = nullptr);

  /// Predictable vocabulary: every word except <s>, including </s> and <unk>.
  const std::vector<std::string>& vocab() const { return words_; }
  int id(std::string_view word) const;  ///< <unk> id for unknown words
  const std::array<double, 3>& discounts() const { return discounts_; }

  double prob(int w, int u, int v) const;  ///< P(w | u v)
  double prob(std::string_view w, std::string_view u, std::string_view v) const;
  /// P(. | u v) over vocab(); sums to 1.
  Vector distribution(int u, int v) const;

  std::string serialize() const;
  static KneserNeyTrigram parse(std::string_view text);

  friend bool operator==(const KneserNeyTrigram& a, const KneserNeyTrigram& b) {
    return a.words_ == b.words_ && a.trigrams_ == b.trigrams_ && a.discounts_ == b.discounts_;
  }

 private:
  using Key2 = std::uint64_t;
  static Key2 key(int a, int b) { return (static_cast<std::uint64_t>(a) << 21) | static_cast<std::uint64_t>(b); }
  static Key2 key(int a, int b, int c) { return (key(a, b) << 21) | static_cast<std::uint64_t>(c); }

  struct Context {
    double total = 0;   // sum of counts following the context
    double types = 0;   // distinct followers
  };

  void build(std::vector<std::string>* warnings, bool estimate_discounts);
  double p1(int w) const;
  double p2(int w, int v) const;

  std::vector<std::string> words_;  // index = id; <s> is id words_.size()
  std::unordered_map<std::string, int> ids_;
  int bos_ = -1, eos_ = -1, unk_ = -1;
  std::map<std::array<int, 3>, long> trigrams_;
  std::array<double, 3> discounts_{0, 0, 0};  // unigram, bigram, trigram

  std::unordered_map<Key2, double> tri_count_;
  std::unordered_map<Key2, Context> tri_ctx_;
  std::unordered_map<Key2, double> bi_cont_;
  std::unordered_map<int, Context> bi_ctx_;
  std::vector<double> uni_cont_;
  double uni_total_ = 0, uni_types_ = 0;
};

}  // namespace wordrec
