#include "wordrec/corpus.hpp"

#include "wordrec/error.hpp"
#include "wordrec/text.hpp"

#include <json.hpp>

#include <algorithm>
#include <cctype>
#include <random>
#include <set>

namespace wordrec {
namespace {

using nlohmann::json;

constexpr std::string_view kAsciiGap = "<GAP>";

bool is_tag(std::string_view s) {
  while (!s.empty() && (s.front() == '*' || s.front() == '[')) s.remove_prefix(1);
  while (!s.empty() && s.back() == ']') s.remove_suffix(1);
  if (s.empty()) return false;
  return std::all_of(s.begin(), s.end(), [](unsigned char c) { return std::isupper(c) || std::isdigit(c); });
}

std::string canonical_tag(std::string_view s) {
  while (!s.empty() && (s.front() == '*' || s.front() == '[')) s.remove_prefix(1);
  while (!s.empty() && s.back() == ']') s.remove_suffix(1);
  return s == "CHI" ? "CHI" : "CGV";
}

std::string strip_punct(std::string_view w) {
  auto punct = [](char c) { return c == '.' || c == ',' || c == '!' || c == '?' || c == ';' || c == '"'; };
  while (!w.empty() && punct(w.front())) w.remove_prefix(1);
  while (!w.empty() && punct(w.back())) w.remove_suffix(1);
  return std::string(w);
}

bool is_unintelligible_code(std::string_view w) { return w == "xxx" || w == "yyy" || w == "www"; }

[[noreturn]] void bad_record(std::size_t lineno, const std::string& what) {
  throw ValidationError("corpus line " + std::to_string(lineno) + ": " + what);
}

std::vector<std::string> string_array(const json& rec, const char* field, std::size_t lineno) {
  if (!rec.contains(field) || !rec[field].is_array()) bad_record(lineno, std::string("field '") + field + "' must be an array");
  std::vector<std::string> out;
  for (const auto& v : rec[field]) {
    if (!v.is_string()) bad_record(lineno, std::string("field '") + field + "' must hold strings");
    out.push_back(v.get<std::string>());
  }
  return out;
}

std::string string_field(const json& rec, const char* field, std::size_t lineno) {
  if (!rec.contains(field) || !rec[field].is_string()) bad_record(lineno, std::string("field '") + field + "' must be a string");
  return rec[field].get<std::string>();
}

}  // namespace

std::string normalize_speaker(std::string_view utterance) {
  auto u = trim(utterance);
  std::string tag = "CGV";
  const auto colon = u.find(':');
  if (colon != std::string_view::npos && is_tag(trim(u.substr(0, colon)))) {
    tag = canonical_tag(trim(u.substr(0, colon)));
    u = trim(u.substr(colon + 1));
  }
  std::string body;
  for (const auto& w : split_ws(u)) {
    if (!body.empty()) body += ' ';
    body += (w == kAsciiGap) ? std::string(kGapMarker) : w;
  }
  return body.empty() ? tag + ":" : tag + ": " + body;
}

std::vector<std::string> utterance_tokens(std::string_view utterance) {
  const auto norm = normalize_speaker(utterance);
  std::vector<std::string> out{"[" + norm.substr(0, 3) + "]"};
  for (const auto& w : split_ws(std::string_view(norm).substr(4))) {
    if (w == kGapMarker) {
      out.push_back(w);
      continue;
    }
    auto clean = strip_punct(to_lower(w));
    if (!clean.empty()) out.push_back(std::move(clean));
  }
  return out;
}

GapContext split_at_gap(std::string_view same_utterance) {
  GapContext ctx;
  bool seen = false;
  for (auto& tok : utterance_tokens(same_utterance)) {
    if (tok == kGapMarker && !seen) {
      seen = true;
      continue;
    }
    (seen ? ctx.after : ctx.before).push_back(std::move(tok));
  }
  return ctx;
}

IngestResult ingest_text(std::string_view text, const Lexicon& lexicon, const PhonemeInventory& inv) {
  IngestResult result;
  std::set<std::string> ids;
  std::size_t lineno = 0;
  for (const auto& raw : split_on(text, '\n')) {
    ++lineno;
    if (trim(raw).empty()) continue;
    json rec;
    try {
      rec = json::parse(raw);
    } catch (const json::parse_error& e) {
      bad_record(lineno, std::string("unparseable record: ") + e.what());
    }
    if (!rec.is_object()) bad_record(lineno, "record must be an object");

    VocalizationToken t;
    t.token_id = string_field(rec, "token_id", lineno);
    t.child_id = string_field(rec, "child_id", lineno);
    t.session_id = string_field(rec, "session_id", lineno);
    if (!rec.contains("age_months") || !rec["age_months"].is_number_integer() || rec["age_months"].get<long>() < 0)
      bad_record(lineno, "field 'age_months' must be a non-negative integer");
    t.age_months = rec["age_months"].get<int>();
    try {
      t.actual_phonemes = to_phonemes(string_array(rec, "actual_phonemes", lineno), inv);
    } catch (const ValidationError& e) {
      if (std::string_view(e.what()).starts_with("corpus line")) throw;
      bad_record(lineno, e.what());
    }
    if (!rec.contains("gloss")) bad_record(lineno, "missing field 'gloss'");
    if (rec["gloss"].is_string()) {
      auto g = rec["gloss"].get<std::string>();
      if (g.empty()) bad_record(lineno, "empty gloss (use null)");
      if (g == "xxx") {
        ++result.excluded_unintelligible_context;
        continue;
      }
      if (g != "yyy") t.gloss = std::move(g);
    } else if (!rec["gloss"].is_null()) {
      bad_record(lineno, "field 'gloss' must be a string or null");
    }

    auto before = string_array(rec, "context_before", lineno);
    auto after = string_array(rec, "context_after", lineno);
    if (before.size() > kMaxContextUtterances)
      before.erase(before.begin(), before.end() - static_cast<std::ptrdiff_t>(kMaxContextUtterances));
    if (after.size() > kMaxContextUtterances) after.resize(kMaxContextUtterances);
    for (auto& u : before) t.context_before.push_back(normalize_speaker(u));
    for (auto& u : after) t.context_after.push_back(normalize_speaker(u));
    t.same_utterance = normalize_speaker(string_field(rec, "same_utterance", lineno));
    if (t.same_utterance.find(kGapMarker) == std::string::npos)
      bad_record(lineno, "same_utterance has no gap marker");

    if (!ids.insert(t.token_id).second) bad_record(lineno, "duplicate token_id '" + t.token_id + "'");

    const int syl = syllable_count(t.actual_phonemes, inv);
    if (syl < 1 || syl > 2) {
      ++result.excluded_syllables;
      continue;
    }
    if (t.gloss && !lexicon.contains(*t.gloss)) {
      ++result.excluded_gloss;
      continue;
    }
    bool flagged = rec.contains("other_unintelligible") && rec["other_unintelligible"].is_boolean() &&
                   rec["other_unintelligible"].get<bool>();
    const auto gap = split_at_gap(t.same_utterance);
    for (const auto* side : {&gap.before, &gap.after})
      for (const auto& w : *side) flagged = flagged || is_unintelligible_code(w);
    if (flagged) {
      ++result.excluded_unintelligible_context;
      continue;
    }
    result.tokens.push_back(std::move(t));
  }
  return result;
}

IngestResult ingest(const std::string& path, const Lexicon& lexicon, const PhonemeInventory& inv) {
  return ingest_text(read_file(path), lexicon, inv);
}

std::string serialize_token(const VocalizationToken& t, const PhonemeInventory& inv) {
  json rec = json::object();
  rec["token_id"] = t.token_id;
  rec["child_id"] = t.child_id;
  rec["session_id"] = t.session_id;
  rec["age_months"] = t.age_months;
  rec["actual_phonemes"] = symbols_of(t.actual_phonemes, inv);
  rec["gloss"] = t.gloss ? json(*t.gloss) : json(nullptr);
  rec["context_before"] = t.context_before;
  rec["same_utterance"] = t.same_utterance;
  rec["context_after"] = t.context_after;
  return rec.dump();
}

std::string serialize_tokens(const std::vector<VocalizationToken>& tokens, const PhonemeInventory& inv) {
  std::string out;
  for (const auto& t : tokens) out += serialize_token(t, inv) + '\n';
  return out;
}

// --- splitting ---------------------------------------------------------------

namespace {

struct Session {
  std::string id;
  int age;
};

// Picks k sessions from an age-sorted list: one per contiguous stratum,
// taking the stratum centre.
std::vector<std::size_t> stratified_centres(std::size_t n, std::size_t k, std::mt19937_64& rng) {
  std::vector<std::size_t> picks;
  for (std::size_t s = 0; s < k; ++s) {
    const std::size_t lo = s * n / k;
    const std::size_t hi = (s + 1) * n / k;
    const std::size_t m = hi - lo;
    std::size_t c = m / 2;
    if (m % 2 == 0 && (rng() & 1U)) c = m / 2 - 1;
    picks.push_back(lo + c);
  }
  return picks;
}

}  // namespace

std::map<std::pair<std::string, std::string>, SplitPart> assign_sessions(
    const std::vector<VocalizationToken>& tokens, std::uint64_t seed, SplitFractions f,
    std::vector<std::string>* warnings) {
  if (tokens.empty()) throw std::invalid_argument("make_split: no tokens");
  if (f.train < 0 || f.validation < 0 || f.test < 0 || std::abs(f.train + f.validation + f.test - 1.0) > 1e-9)
    throw std::invalid_argument("make_split: fractions must be non-negative and sum to 1");

  std::map<std::string, std::map<std::string, int>> sessions;  // child -> session -> min age
  for (const auto& t : tokens) {
    auto [it, fresh] = sessions[t.child_id].emplace(t.session_id, t.age_months);
    if (!fresh) it->second = std::min(it->second, t.age_months);
  }

  const std::size_t nonzero = (f.train > 0) + (f.validation > 0) + (f.test > 0);
  std::map<std::pair<std::string, std::string>, SplitPart> out;
  for (const auto& [child, by_id] : sessions) {
    std::vector<Session> ordered;
    for (const auto& [id, age] : by_id) ordered.push_back({id, age});
    std::stable_sort(ordered.begin(), ordered.end(), [](const Session& a, const Session& b) {
      return a.age != b.age ? a.age < b.age : a.id < b.id;
    });
    const std::size_t n = ordered.size();
    for (const auto& s : ordered) out[{child, s.id}] = SplitPart::train;
    if (n < nonzero) {
      if (warnings)
        warnings->push_back("child '" + child + "' has " + std::to_string(n) + " session(s); assigned to train only");
      continue;
    }

    auto quota = [n](double frac) -> std::size_t {
      if (frac <= 0) return 0;
      return std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(frac * static_cast<double>(n))));
    };
    std::size_t k_test = quota(f.test), k_val = quota(f.validation);
    const std::size_t reserve = f.train > 0 ? 1 : 0;
    while (k_test + k_val + reserve > n) {
      if (k_test >= k_val && k_test > 1) --k_test;
      else if (k_val > 1) --k_val;
      else break;
    }
    if (f.train <= 0) {
      if (f.validation > 0) k_val = n - k_test;
      else k_test = n;
    }

    std::mt19937_64 rng(seed ^ fnv1a64(child));
    std::vector<std::size_t> remaining(n);
    for (std::size_t i = 0; i < n; ++i) remaining[i] = i;
    for (auto [part, k] : {std::pair{SplitPart::test, k_test}, std::pair{SplitPart::validation, k_val}}) {
      if (k == 0) continue;
      std::vector<std::size_t> chosen;
      for (std::size_t pos : stratified_centres(remaining.size(), k, rng)) chosen.push_back(remaining[pos]);
      for (std::size_t idx : chosen) out[{child, ordered[idx].id}] = part;
      std::erase_if(remaining, [&](std::size_t i) { return std::find(chosen.begin(), chosen.end(), i) != chosen.end(); });
    }
  }
  return out;
}

CorpusSplit make_split(const std::vector<VocalizationToken>& tokens, std::uint64_t seed, SplitFractions fractions) {
  CorpusSplit split;
  const auto parts = assign_sessions(tokens, seed, fractions, &split.warnings);
  for (const auto& t : tokens) {
    const auto part = parts.at({t.child_id, t.session_id});
    switch (part) {
      case SplitPart::train: split.train.push_back(t.token_id); break;
      case SplitPart::validation: split.validation.push_back(t.token_id); break;
      case SplitPart::test: split.test.push_back(t.token_id); break;
    }
    const int bin = t.age_months / kSplitAgeBinMonths * kSplitAgeBinMonths;
    split.stratification[{t.child_id, bin}][static_cast<int>(part)]++;
  }
  return split;
}

std::map<std::string, std::vector<VocalizationToken>> partition(const std::vector<VocalizationToken>& tokens,
                                                                PartitionKey key) {
  std::map<std::string, std::vector<VocalizationToken>> out;
  for (const auto& t : tokens) {
    if (key.kind == PartitionKey::Kind::child) out[t.child_id].push_back(t);
    else out[t.age_months <= key.threshold_months ? "younger" : "older"].push_back(t);
  }
  return out;
}

}  // namespace wordrec
