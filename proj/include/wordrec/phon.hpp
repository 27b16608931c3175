#pragma once

#include <compare>
#include <cstddef>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

namespace wordrec {

/// Spelling of the empty symbol in every text format.
inline constexpr std::string_view kEpsilonSymbol = "<eps>";

/// Ordered phoneme symbol set with vowel flags. Symbols are addressed by
/// dense ids 0..size()-1; id size() is reserved for epsilon so that edit
/// tables can be indexed as (size()+1) x (size()+1).
class PhonemeInventory {
 public:
  PhonemeInventory() = default;
  explicit PhonemeInventory(std::vector<std::pair<std::string, bool>> symbols);

  /// One `symbol<TAB>V|C` line per symbol; blank and `#` lines skipped.
  static PhonemeInventory parse(std::string_view text);
  static PhonemeInventory load(const std::string& path);
  std::string serialize() const;

  std::size_t size() const { return symbols_.size(); }
  int epsilon() const { return static_cast<int>(symbols_.size()); }

  std::optional<int> find(std::string_view symbol) const;
  const std::string& symbol(int id) const;
  bool is_vowel(int id) const { return vowel_.at(static_cast<std::size_t>(id)); }

  friend bool operator==(const PhonemeInventory&, const PhonemeInventory&) = default;

 private:
  std::vector<std::string> symbols_;
  std::vector<bool> vowel_;
  std::map<std::string, int, std::less<>> index_;
  std::string eps_{kEpsilonSymbol};
};

/// Sequence of inventory ids. Validity is established at parse time.
struct PhonemeString {
  std::vector<int> syms;

  std::size_t size() const { return syms.size(); }
  bool empty() const { return syms.empty(); }
  int operator[](std::size_t i) const { return syms[i]; }

  friend auto operator<=>(const PhonemeString&, const PhonemeString&) = default;
};

/// Parses whitespace-separated symbols. Throws ValidationError naming the
/// first unknown symbol.
PhonemeString parse_phonemes(std::string_view text, const PhonemeInventory& inv);
PhonemeString to_phonemes(const std::vector<std::string>& symbols, const PhonemeInventory& inv);
std::string render(const PhonemeString& s, const PhonemeInventory& inv);
std::vector<std::string> symbols_of(const PhonemeString& s, const PhonemeInventory& inv);

/// Orthographic word -> citation pronunciations. Words are kept in byte
/// order, which is the candidate order V used everywhere downstream.
class Lexicon {
 public:
  using Entries = std::map<std::string, std::vector<PhonemeString>>;

  Lexicon() = default;
  /// Drops duplicate pronunciations, keeping first occurrence order.
  /// Throws std::invalid_argument if a word has no pronunciation or one is empty.
  explicit Lexicon(Entries entries);

  std::size_t size() const { return words_.size(); }
  bool empty() const { return words_.empty(); }
  const std::vector<std::string>& words() const { return words_; }
  Entries entries() const;
  bool contains(std::string_view word) const;
  std::optional<std::size_t> index_of(std::string_view word) const;
  /// Throws std::out_of_range for a word outside the lexicon.
  const std::vector<PhonemeString>& pronunciations(std::string_view word) const;
  const std::vector<PhonemeString>& pronunciations(std::size_t index) const;
  std::size_t pronunciation_count() const;

  std::string serialize(const PhonemeInventory& inv) const;

  friend bool operator==(const Lexicon& a, const Lexicon& b) {
    return a.words_ == b.words_ && a.prons_ == b.prons_;
  }

 private:
  std::vector<std::string> words_;
  std::vector<std::vector<PhonemeString>> prons_;
  std::unordered_map<std::string, std::size_t> index_;
};

Lexicon parse_lexicon(std::string_view text, const PhonemeInventory& inv);
Lexicon load_lexicon(const std::string& path, const PhonemeInventory& inv);

/// Number of maximal runs of vowel-flagged symbols.
int syllable_count(const PhonemeString& s, const PhonemeInventory& inv);

/// Keeps words with corpus count >= min_count, retaining only their one- and
/// two-syllable pronunciations; words left with none are dropped. Words absent
/// from `corpus_counts` count as zero.
Lexicon filter_candidate_vocabulary(const Lexicon& lexicon,
                                    const std::map<std::string, long>& corpus_counts,
                                    long min_count, const PhonemeInventory& inv);

}  // namespace wordrec
