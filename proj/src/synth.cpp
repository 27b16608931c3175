#include "wordrec/synth.hpp"

#include "wordrec/text.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <set>
#include <stdexcept>

namespace wordrec {
namespace {

double uniform01(std::mt19937_64& rng) { return std::uniform_real_distribution<double>(0.0, 1.0)(rng); }

template <typename Derived>
Eigen::Index sample_index(const Eigen::DenseBase<Derived>& weights, std::mt19937_64& rng) {
  const double total = weights.sum();
  double u = uniform01(rng) * total;
  Eigen::Index last = 0;
  for (Eigen::Index i = 0; i < weights.size(); ++i) {
    if (weights.derived().coeff(i) <= 0) continue;
    last = i;
    if (u < weights.derived().coeff(i)) return i;
    u -= weights.derived().coeff(i);
  }
  return last;
}

std::string pad(std::size_t v, int width) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%0*zu", width, v);
  return buf;
}

}  // namespace

PhonemeString sample_child_form(const PairModel& pm, const PhonemeString& citation, double noise, std::mt19937_64& rng) {
  if (noise < 0 || noise > 1) throw std::invalid_argument("sample_child_form: noise must be in [0, 1]");
  const int eps = pm.epsilon();
  const double p_ins = noise * pm.insertion_mass();
  if (p_ins >= 1.0) throw std::invalid_argument("sample_child_form: insertion probability must be < 1");
  PhonemeString out;
  for (std::size_t i = 0; i <= citation.size(); ++i) {
    while (p_ins > 0 && uniform01(rng) < p_ins) out.syms.push_back(static_cast<int>(sample_index(pm.conditional().row(eps), rng)));
    if (i == citation.size()) break;
    const int x = citation[i];
    if (noise == 0.0 || uniform01(rng) >= noise) {
      out.syms.push_back(x);
      continue;
    }
    const auto y = static_cast<int>(sample_index(pm.conditional().row(x), rng));
    if (y != eps) out.syms.push_back(y);
  }
  return out;
}

PhonemeString random_phoneme_string(const PhonemeInventory& inv, std::size_t min_len, std::size_t max_len,
                                    std::mt19937_64& rng) {
  if (inv.size() == 0 || min_len > max_len || max_len == 0) throw std::invalid_argument("random_phoneme_string: bad arguments");
  std::uniform_int_distribution<std::size_t> len(min_len, max_len);
  std::uniform_int_distribution<int> sym(0, static_cast<int>(inv.size()) - 1);
  for (int attempt = 0; attempt < 10000; ++attempt) {
    PhonemeString s;
    const auto n = len(rng);
    for (std::size_t i = 0; i < n; ++i) s.syms.push_back(sym(rng));
    const int syl = syllable_count(s, inv);
    if (syl == 1 || syl == 2) return s;
  }
  throw std::runtime_error("random_phoneme_string: inventory cannot produce 1-2 syllable strings");
}

PairModel make_pair_model(std::size_t symbols, const PairModelRecipe& r) {
  const auto n = static_cast<Eigen::Index>(symbols);
  const Eigen::Index eps = n;
  Matrix cond = Matrix::Zero(n + 1, n + 1);
  for (Eigen::Index x = 0; x < n; ++x) {
    auto del_it = r.deletion_overrides.find(static_cast<int>(x));
    const double del = del_it == r.deletion_overrides.end() ? r.deletion : del_it->second;
    double sub = 0.0;
    auto sub_it = r.substitutions.find(static_cast<int>(x));
    if (sub_it != r.substitutions.end()) sub = sub_it->second.second;
    // Planted events take their mass from the identity arc first.
    const double keep = std::min(r.keep, 1.0 - del - sub);
    const double rest = 1.0 - keep - del - sub;
    if (keep < 0) throw std::invalid_argument("make_pair_model: row probabilities exceed 1");
    cond(x, x) += keep;
    cond(x, eps) += del;
    if (sub_it != r.substitutions.end()) cond(x, sub_it->second.first) += sub;
    if (n > 1)
      for (Eigen::Index y = 0; y < n; ++y)
        if (y != x) cond(x, y) += rest / static_cast<double>(n - 1);
  }
  if (r.insertion_weights.empty()) {
    cond.row(eps).head(n).setConstant(1.0 / static_cast<double>(n));
  } else {
    if (r.insertion_weights.size() != symbols) throw std::invalid_argument("make_pair_model: insertion weights size");
    double z = 0;
    for (double w : r.insertion_weights) z += w;
    for (Eigen::Index y = 0; y < n; ++y) cond(eps, y) = r.insertion_weights[static_cast<std::size_t>(y)] / z;
  }
  Vector mass = Vector::Constant(n + 1, (1.0 - r.insertion_mass) / static_cast<double>(n));
  mass[eps] = r.insertion_mass;
  return PairModel::from_conditional(cond, mass);
}

WordChain WordChain::random(std::size_t vocab, std::size_t branching, std::mt19937_64& rng) {
  if (vocab == 0) throw std::invalid_argument("WordChain: empty vocabulary");
  const auto v = static_cast<Eigen::Index>(vocab);
  WordChain chain;
  chain.transition = Matrix::Zero(v + 1, v);
  std::gamma_distribution<double> gamma(1.0, 1.0);
  std::uniform_int_distribution<Eigen::Index> pick(0, v - 1);
  for (Eigen::Index row = 0; row <= v; ++row) {
    const std::size_t k = row == v ? vocab : std::min(branching, vocab);
    std::set<Eigen::Index> succ;
    while (succ.size() < k) succ.insert(pick(rng));
    for (auto s : succ) chain.transition(row, s) = gamma(rng) + 1e-3;
    chain.transition.row(row) /= chain.transition.row(row).sum();
    // A little leakage so every word can follow every word.
    chain.transition.row(row) = 0.98 * chain.transition.row(row).array() + 0.02 / static_cast<double>(vocab);
  }
  return chain;
}

namespace {

std::vector<std::size_t> sample_utterance(const WordChain& chain, const std::vector<double>& weights, int len,
                                          std::mt19937_64& rng) {
  const auto v = chain.transition.cols();
  std::vector<std::size_t> words;
  Eigen::Index prev = v;
  for (int i = 0; i < len; ++i) {
    Vector row = chain.transition.row(prev).transpose();
    if (!weights.empty()) row.array() *= Eigen::Map<const Vector>(weights.data(), v).array();
    prev = sample_index(row, rng);
    words.push_back(static_cast<std::size_t>(prev));
  }
  return words;
}

std::string utterance_text(std::string_view tag, const std::vector<std::size_t>& words, const Lexicon& lex,
                           std::ptrdiff_t gap = -1) {
  std::string s(tag);
  s += ':';
  for (std::size_t i = 0; i < words.size(); ++i) {
    s += ' ';
    s += static_cast<std::ptrdiff_t>(i) == gap ? std::string(kGapMarker) : lex.words()[words[i]];
  }
  return s;
}

}  // namespace

SyntheticCorpus generate_synthetic_corpus(const SyntheticSpec& spec, std::size_t n_training, std::uint64_t seed) {
  if (spec.children.empty()) throw std::invalid_argument("synthetic corpus: no children");
  if (spec.lexicon.empty()) throw std::invalid_argument("synthetic corpus: empty lexicon");
  if (static_cast<std::size_t>(spec.chain.transition.cols()) != spec.lexicon.size())
    throw std::invalid_argument("synthetic corpus: word chain does not match the lexicon");
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<int> ulen(spec.utterance_min, spec.utterance_max);
  const auto& inv = spec.inventory;
  SyntheticCorpus out;

  for (const auto& child : spec.children) {
    for (int s = 0; s < spec.sessions_per_child; ++s) {
      const int age = spec.sessions_per_child == 1
                          ? spec.age_min
                          : spec.age_min + (spec.age_max - spec.age_min) * s / (spec.sessions_per_child - 1);
      const std::string session = child.id + "-s" + pad(static_cast<std::size_t>(s), 3);
      for (int k = 0; k < spec.tokens_per_session; ++k) {
        VocalizationToken t;
        t.token_id = session + "-t" + pad(static_cast<std::size_t>(k), 4);
        t.child_id = child.id;
        t.session_id = session;
        t.age_months = age;
        for (int c = 0; c < spec.context_utterances; ++c) {
          const char* tag = c % 2 == 0 ? "MOT" : "CHI";
          t.context_before.push_back(normalize_speaker(utterance_text(tag, sample_utterance(spec.chain, {}, ulen(rng), rng), spec.lexicon)));
        }
        const auto words = sample_utterance(spec.chain, child.word_weights, ulen(rng), rng);
        const auto gap = std::uniform_int_distribution<std::size_t>(0, words.size() - 1)(rng);
        t.same_utterance = normalize_speaker(utterance_text("CHI", words, spec.lexicon, static_cast<std::ptrdiff_t>(gap)));
        for (int c = 0; c < spec.context_utterances; ++c) {
          const char* tag = c % 2 == 0 ? "MOT" : "CHI";
          t.context_after.push_back(normalize_speaker(utterance_text(tag, sample_utterance(spec.chain, {}, ulen(rng), rng), spec.lexicon)));
        }

        if (uniform01(rng) < spec.unintelligible_fraction) {
          t.actual_phonemes = random_phoneme_string(inv, 2, 5, rng);
        } else {
          const auto w = words[gap];
          const auto& prons = spec.lexicon.pronunciations(w);
          const auto& citation = prons[std::uniform_int_distribution<std::size_t>(0, prons.size() - 1)(rng)];
          PhonemeString form = citation;
          for (int attempt = 0; attempt < 20; ++attempt) {
            auto cand = sample_child_form(child.pair_model, citation, spec.noise, rng);
            const int syl = syllable_count(cand, inv);
            if (syl == 1 || syl == 2) {
              form = std::move(cand);
              break;
            }
          }
          t.actual_phonemes = form;
          t.gloss = spec.lexicon.words()[w];
          out.pairs.emplace_back(citation, form);
        }
        out.tokens.push_back(std::move(t));
      }
    }
  }

  std::uniform_int_distribution<std::size_t> which(0, spec.children.size() - 1);
  for (std::size_t i = 0; i < n_training; ++i) {
    const auto& child = spec.children[which(rng)];
    const bool child_turn = uniform01(rng) < 0.5;
    const auto words = sample_utterance(spec.chain, child_turn ? child.word_weights : std::vector<double>{}, ulen(rng), rng);
    out.training_utterances.push_back(utterance_text(child_turn ? "CHI" : "MOT", words, spec.lexicon));
  }
  return out;
}

SyntheticSpec demo_spec(std::size_t vocab_size, std::size_t n_children, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  const std::vector<std::string> vowels{"a", "e", "i", "o", "u", "æ", "ɛ", "ɪ", "ʊ", "ə"};
  const std::vector<std::string> consonants{"p", "b", "t", "d", "k", "g", "m", "n", "s",
                                            "z", "f", "v", "l", "ɹ", "w", "j", "h", "ʃ"};
  std::vector<std::pair<std::string, bool>> syms;
  for (const auto& c : consonants) syms.emplace_back(c, false);
  for (const auto& v : vowels) syms.emplace_back(v, true);
  SyntheticSpec spec;
  spec.inventory = PhonemeInventory(syms);
  const auto& inv = spec.inventory;
  const int nc = static_cast<int>(consonants.size()), nv = static_cast<int>(vowels.size());

  const std::vector<std::string> templates{"CV", "CVC", "CVC", "VC", "CVCV", "CVCVC", "CCVC", "VCV"};
  std::uniform_int_distribution<std::size_t> tpl(0, templates.size() - 1);
  std::uniform_int_distribution<int> pc(0, nc - 1), pv(nc, nc + nv - 1);
  Lexicon::Entries entries;
  std::set<PhonemeString> used;
  while (entries.size() < vocab_size) {
    PhonemeString p;
    for (char slot : templates[tpl(rng)]) p.syms.push_back(slot == 'C' ? pc(rng) : pv(rng));
    if (!used.insert(p).second) continue;
    std::string word;
    for (int id : p.syms) word += inv.symbol(id);
    if (entries.count(word)) continue;
    std::vector<PhonemeString> prons{p};
    if (uniform01(rng) < 0.1) {
      PhonemeString alt = p;
      for (auto& id : alt.syms)
        if (inv.is_vowel(id)) {
          id = pv(rng);
          break;
        }
      if (alt != p) {
        prons.push_back(alt);
        used.insert(alt);
      }
    }
    entries.emplace(word, std::move(prons));
  }
  spec.lexicon = Lexicon(std::move(entries));
  spec.chain = WordChain::random(spec.lexicon.size(), 4, rng);

  const std::size_t v = spec.lexicon.size();
  // Substitutions every child shares, as in common developmental patterns,
  // plus a few of each child's own.
  std::map<int, std::pair<int, double>> shared;
  std::set<int> touched;
  auto plant = [&](std::map<int, std::pair<int, double>>& into, double p) {
    for (;;) {
      const int x = pc(rng);
      if (!touched.insert(x).second) continue;
      int y = pc(rng);
      while (y == x) y = pc(rng);
      into[x] = {y, p};
      return;
    }
  };
  for (int k = 0; k < 3; ++k) plant(shared, 0.5);
  for (std::size_t c = 0; c < n_children; ++c) {
    PairModelRecipe r;
    r.keep = 0.8;
    r.deletion = 0.04;
    r.insertion_mass = 0.03;
    r.substitutions = shared;
    std::set<int> own = touched;
    std::swap(own, touched);
    for (int k = 0; k < 3; ++k) plant(r.substitutions, 0.5);
    while (r.deletion_overrides.size() < 2) {
      const int x = pc(rng);
      if (touched.insert(x).second) r.deletion_overrides[x] = 0.4;
    }
    std::swap(own, touched);
    r.insertion_weights.assign(inv.size(), 0.05);
    r.insertion_weights[static_cast<std::size_t>(pv(rng))] = 1.0;
    r.insertion_weights[static_cast<std::size_t>(pc(rng))] = 1.0;

    SyntheticChild child;
    child.id = "child" + std::string(1, static_cast<char>('A' + c % 26)) + (c >= 26 ? std::to_string(c / 26) : "");
    child.pair_model = make_pair_model(inv.size(), r);
    child.word_weights.assign(v, 1.0);
    for (std::size_t w = c * v / n_children; w < (c + 1) * v / n_children; ++w) child.word_weights[w] = 8.0;
    spec.children.push_back(std::move(child));
  }
  return spec;
}

}  // namespace wordrec
