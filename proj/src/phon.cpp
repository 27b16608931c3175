#include "wordrec/phon.hpp"

#include "wordrec/error.hpp"
#include "wordrec/text.hpp"

#include <algorithm>
#include <set>
#include <stdexcept>

namespace wordrec {

PhonemeInventory::PhonemeInventory(std::vector<std::pair<std::string, bool>> symbols) {
  for (auto& [sym, vowel] : symbols) {
    if (sym.empty()) throw ValidationError("inventory: empty symbol");
    if (sym == kEpsilonSymbol) throw ValidationError("inventory: '<eps>' is reserved");
    if (split_ws(sym).size() != 1) throw ValidationError("inventory: symbol contains whitespace: '" + sym + "'");
    if (!index_.emplace(sym, static_cast<int>(symbols_.size())).second)
      throw ValidationError("inventory: duplicate symbol '" + sym + "'");
    symbols_.push_back(std::move(sym));
    vowel_.push_back(vowel);
  }
}

PhonemeInventory PhonemeInventory::parse(std::string_view text) {
  std::vector<std::pair<std::string, bool>> syms;
  std::size_t lineno = 0;
  for (const auto& raw : split_on(text, '\n')) {
    ++lineno;
    const auto line = trim(raw);
    if (line.empty() || line.front() == '#') continue;
    const auto fields = split_ws(line);
    if (fields.size() != 2 || (fields[1] != "V" && fields[1] != "C"))
      throw ValidationError("inventory line " + std::to_string(lineno) + ": expected 'symbol<TAB>V|C'");
    syms.emplace_back(fields[0], fields[1] == "V");
  }
  return PhonemeInventory(std::move(syms));
}

PhonemeInventory PhonemeInventory::load(const std::string& path) { return parse(read_file(path)); }

std::string PhonemeInventory::serialize() const {
  std::string out;
  for (std::size_t i = 0; i < symbols_.size(); ++i)
    out += symbols_[i] + '\t' + (vowel_[i] ? "V" : "C") + '\n';
  return out;
}

std::optional<int> PhonemeInventory::find(std::string_view symbol) const {
  auto it = index_.find(symbol);
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

const std::string& PhonemeInventory::symbol(int id) const {
  if (id == epsilon()) return eps_;
  return symbols_.at(static_cast<std::size_t>(id));
}

PhonemeString to_phonemes(const std::vector<std::string>& symbols, const PhonemeInventory& inv) {
  PhonemeString out;
  out.syms.reserve(symbols.size());
  for (const auto& s : symbols) {
    auto id = inv.find(s);
    if (!id) throw ValidationError("unknown phoneme symbol '" + s + "'");
    out.syms.push_back(*id);
  }
  return out;
}

PhonemeString parse_phonemes(std::string_view text, const PhonemeInventory& inv) {
  return to_phonemes(split_ws(text), inv);
}

std::vector<std::string> symbols_of(const PhonemeString& s, const PhonemeInventory& inv) {
  std::vector<std::string> out;
  out.reserve(s.size());
  for (int id : s.syms) out.push_back(inv.symbol(id));
  return out;
}

std::string render(const PhonemeString& s, const PhonemeInventory& inv) {
  std::string out;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (i) out += ' ';
    out += inv.symbol(s[i]);
  }
  return out;
}

// --- Lexicon ---------------------------------------------------------------

Lexicon::Lexicon(Entries entries) {
  words_.reserve(entries.size());
  prons_.reserve(entries.size());
  for (auto& [word, prons] : entries) {
    if (prons.empty()) throw std::invalid_argument("lexicon: word '" + word + "' has no pronunciation");
    std::vector<PhonemeString> unique;
    std::set<PhonemeString> seen;
    for (auto& p : prons) {
      if (p.empty()) throw std::invalid_argument("lexicon: empty pronunciation for '" + word + "'");
      if (seen.insert(p).second) unique.push_back(std::move(p));
    }
    index_.emplace(word, words_.size());
    words_.push_back(word);
    prons_.push_back(std::move(unique));
  }
}

Lexicon::Entries Lexicon::entries() const {
  Entries out;
  for (std::size_t i = 0; i < words_.size(); ++i) out.emplace(words_[i], prons_[i]);
  return out;
}

bool Lexicon::contains(std::string_view word) const { return index_.count(std::string(word)) != 0; }

std::optional<std::size_t> Lexicon::index_of(std::string_view word) const {
  auto it = index_.find(std::string(word));
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

const std::vector<PhonemeString>& Lexicon::pronunciations(std::string_view word) const {
  auto idx = index_of(word);
  if (!idx) throw std::out_of_range("word not in lexicon: '" + std::string(word) + "'");
  return prons_[*idx];
}

const std::vector<PhonemeString>& Lexicon::pronunciations(std::size_t index) const { return prons_.at(index); }

std::size_t Lexicon::pronunciation_count() const {
  std::size_t n = 0;
  for (const auto& p : prons_) n += p.size();
  return n;
}

std::string Lexicon::serialize(const PhonemeInventory& inv) const {
  std::string out;
  for (std::size_t i = 0; i < words_.size(); ++i)
    for (const auto& p : prons_[i]) out += words_[i] + '\t' + render(p, inv) + '\n';
  return out;
}

Lexicon parse_lexicon(std::string_view text, const PhonemeInventory& inv) {
  Lexicon::Entries entries;
  std::size_t lineno = 0;
  for (const auto& raw : split_on(text, '\n')) {
    ++lineno;
    std::string_view line = raw;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (trim(line).empty() || trim(line).front() == '#') continue;
    const auto tab = line.find('\t');
    if (tab == std::string_view::npos)
      throw ValidationError("lexicon line " + std::to_string(lineno) + ": expected 'word<TAB>phonemes'");
    const auto word = std::string(trim(line.substr(0, tab)));
    if (word.empty()) throw ValidationError("lexicon line " + std::to_string(lineno) + ": empty word");
    const auto syms = split_ws(line.substr(tab + 1));
    if (syms.empty())
      throw ValidationError("lexicon line " + std::to_string(lineno) + ": empty pronunciation for '" + word + "'");
    PhonemeString pron;
    for (const auto& s : syms) {
      auto id = inv.find(s);
      if (!id)
        throw ValidationError("lexicon line " + std::to_string(lineno) + ": unknown phoneme symbol '" + s + "'");
      pron.syms.push_back(*id);
    }
    entries[word].push_back(std::move(pron));
  }
  return Lexicon(std::move(entries));
}

Lexicon load_lexicon(const std::string& path, const PhonemeInventory& inv) {
  return parse_lexicon(read_file(path), inv);
}

int syllable_count(const PhonemeString& s, const PhonemeInventory& inv) {
  int n = 0;
  bool in_nucleus = false;
  for (int id : s.syms) {
    const bool v = inv.is_vowel(id);
    if (v && !in_nucleus) ++n;
    in_nucleus = v;
  }
  return n;
}

Lexicon filter_candidate_vocabulary(const Lexicon& lexicon,
                                    const std::map<std::string, long>& corpus_counts,
                                    long min_count, const PhonemeInventory& inv) {
  if (min_count < 0) throw std::invalid_argument("min_count must be >= 0");
  Lexicon::Entries kept;
  for (std::size_t i = 0; i < lexicon.size(); ++i) {
    const auto& word = lexicon.words()[i];
    auto it = corpus_counts.find(word);
    const long count = it == corpus_counts.end() ? 0 : it->second;
    if (count < min_count) continue;
    std::vector<PhonemeString> prons;
    for (const auto& p : lexicon.pronunciations(i)) {
      const int syl = syllable_count(p, inv);
      if (syl == 1 || syl == 2) prons.push_back(p);
    }
    if (!prons.empty()) kept.emplace(word, std::move(prons));
  }
  return Lexicon(std::move(kept));
}

}  // namespace wordrec
