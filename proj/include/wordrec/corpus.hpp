#pragma once

#include "wordrec/phon.hpp"

#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace wordrec {

/// Marks the target position inside `same_utterance`.
inline constexpr std::string_view kGapMarker = "⟨GAP⟩";
inline constexpr std::size_t kMaxContextUtterances = 20;

/// One child vocalization with its transcriber gloss (absent when the
/// transcriber could not interpret it) and surrounding conversation.
/// Context utterances are stored as "CHI: text" or "CGV: text".
struct VocalizationToken {
  std::string token_id;
  std::string child_id;
  std::string session_id;
  int age_months = 0;
  PhonemeString actual_phonemes;
  std::optional<std::string> gloss;
  std::vector<std::string> context_before;
  std::string same_utterance;
  std::vector<std::string> context_after;

  bool intelligible() const { return gloss.has_value(); }
  friend bool operator==(const VocalizationToken&, const VocalizationToken&) = default;
};

/// Collapses any speaker tag to CHI (the target child) or CGV (everyone else)
/// and normalizes whitespace. An utterance without a tag is attributed to CGV.
std::string normalize_speaker(std::string_view utterance);

/// Lower-cased word tokens of a context utterance, led by a `[CHI]`/`[CGV]`
/// speaker token. The gap marker, if present, is kept verbatim.
std::vector<std::string> utterance_tokens(std::string_view utterance);

/// Words before and after the gap in `same_utterance`, speaker token first.
struct GapContext {
  std::vector<std::string> before;
  std::vector<std::string> after;
};
GapContext split_at_gap(std::string_view same_utterance);

struct IngestResult {
  std::vector<VocalizationToken> tokens;
  std::size_t excluded_syllables = 0;
  std::size_t excluded_gloss = 0;
  std::size_t excluded_unintelligible_context = 0;
};

/// Parses line-delimited JSON records and applies the inclusion rules:
/// one or two syllables, gloss (if any) in the lexicon, no other
/// unintelligible material in the same utterance. Malformed records throw
/// ValidationError carrying the line number.
IngestResult ingest_text(std::string_view text, const Lexicon& lexicon, const PhonemeInventory& inv);
IngestResult ingest(const std::string& path, const Lexicon& lexicon, const PhonemeInventory& inv);

std::string serialize_token(const VocalizationToken& t, const PhonemeInventory& inv);
std::string serialize_tokens(const std::vector<VocalizationToken>& tokens, const PhonemeInventory& inv);

struct SplitFractions {
  double train = 0.8;
  double validation = 0.1;
  double test = 0.1;
};

enum class SplitPart : int { train = 0, validation = 1, test = 2 };

struct CorpusSplit {
  std::vector<std::string> train;
  std::vector<std::string> validation;
  std::vector<std::string> test;
  /// (child_id, age bin start in months) -> token counts per split.
  std::map<std::pair<std::string, int>, std::array<std::size_t, 3>> stratification;
  std::vector<std::string> warnings;
};

inline constexpr int kSplitAgeBinMonths = 6;

/// Session-level, per-child, age-stratified split. Sessions of each child are
/// ordered by (age, session_id); held-out sessions are drawn from the centre
/// of equal-size age strata, with the seed breaking ties between the two
/// central sessions of even-sized strata. Deterministic for a given seed.
CorpusSplit make_split(const std::vector<VocalizationToken>& tokens, std::uint64_t seed,
                       SplitFractions fractions);

/// Per-session assignment used by make_split, exposed for inspection.
std::map<std::pair<std::string, std::string>, SplitPart> assign_sessions(
    const std::vector<VocalizationToken>& tokens, std::uint64_t seed, SplitFractions fractions,
    std::vector<std::string>* warnings = nullptr);

struct PartitionKey {
  enum class Kind { child, age_threshold } kind = Kind::child;
  int threshold_months = 30;

  static PartitionKey by_child() { return {Kind::child, 0}; }
  static PartitionKey by_age(int months) { return {Kind::age_threshold, months}; }
};

/// Age partitions are labelled "younger" (<= threshold) and "older".
std::map<std::string, std::vector<VocalizationToken>> partition(const std::vector<VocalizationToken>& tokens,
                                                                PartitionKey key);

}  // namespace wordrec
