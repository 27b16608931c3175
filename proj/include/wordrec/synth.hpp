#pragma once

#include "wordrec/corpus.hpp"
#include "wordrec/pair_model.hpp"
#include "wordrec/phon.hpp"

#include <cstdint>
#include <map>
#include <random>
#include <string>
#include <vector>

namespace wordrec {

/// Samples a child form from a citation form by walking the pair model's
/// conditional edit events. Before each citation symbol and at the end, an
/// insertion occurs with probability noise * insertion_mass (repeatable);
/// each citation symbol is then kept with probability 1 - noise, otherwise
/// rewritten by its conditional row (substitution or deletion).
PhonemeString sample_child_form(const PairModel& pm, const PhonemeString& citation, double noise, std::mt19937_64& rng);

/// Uniform random symbols, length in [min_len, max_len], resampled until it
/// has one or two syllables.
PhonemeString random_phoneme_string(const PhonemeInventory& inv, std::size_t min_len, std::size_t max_len,
                                    std::mt19937_64& rng);

/// Pair model with mostly-faithful rows: identity mass `keep`, planted
/// substitutions, a per-symbol deletion rate, and the remainder spread over
/// all other outputs. Insertions carry `insertion_mass` of the joint table.
struct PairModelRecipe {
  double keep = 0.8;
  double deletion = 0.05;
  double insertion_mass = 0.03;
  std::map<int, std::pair<int, double>> substitutions;  ///< x -> (y, probability)
  std::map<int, double> deletion_overrides;             ///< x -> deletion probability
  std::vector<double> insertion_weights;                ///< over symbols; empty = uniform
};
PairModel make_pair_model(std::size_t symbols, const PairModelRecipe& recipe);

/// Sparse first-order word chain used to generate utterances. Row |V| is the
/// utterance-start state.
struct WordChain {
  Matrix transition;  ///< (|V|+1) x |V|, rows sum to 1
  static WordChain random(std::size_t vocab, std::size_t branching, std::mt19937_64& rng);
};

struct SyntheticChild {
  std::string id;
  PairModel pair_model;
  std::vector<double> word_weights;  ///< per-V multiplicative preference; empty = none
};

struct SyntheticSpec {
  PhonemeInventory inventory;
  Lexicon lexicon;
  WordChain chain;
  std::vector<SyntheticChild> children;
  int sessions_per_child = 10;
  int tokens_per_session = 40;
  int age_min = 12;
  int age_max = 48;
  double unintelligible_fraction = 0.3;
  double noise = 1.0;
  int utterance_min = 2;
  int utterance_max = 6;
  int context_utterances = 3;
};

struct SyntheticCorpus {
  std::vector<VocalizationToken> tokens;
  /// Speaker-tagged utterances from the same source, for fitting priors.
  std::vector<std::string> training_utterances;
  /// (citation, child) pairs underlying the intelligible tokens.
  std::vector<std::pair<PhonemeString, PhonemeString>> pairs;
};

/// Deterministic for a given spec and seed.
SyntheticCorpus generate_synthetic_corpus(const SyntheticSpec& spec, std::size_t training_utterances, std::uint64_t seed);

/// A small self-contained world: inventory, random one/two-syllable lexicon,
/// word chain, and `n_children` children with distinct planted pair models
/// and disjoint preferred-word blocks.
SyntheticSpec demo_spec(std::size_t vocab_size, std::size_t n_children, std::uint64_t seed);

}  // namespace wordrec
