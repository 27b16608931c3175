#include "wordrec/kneser_ney.hpp"

#include "wordrec/error.hpp"
#include "wordrec/text.hpp"

#include <algorithm>
#include <set>
#include <stdexcept>

namespace wordrec {
namespace {

constexpr int kMaxVocab = 1 << 21;

// n1 / (n1 + 2 n2) from a collection of counts.
template <typename Range>
double count_of_counts_discount(const Range& counts, const char* order, std::vector<std::string>* warnings) {
  double n1 = 0, n2 = 0;
  for (double c : counts) {
    if (c == 1) ++n1;
    else if (c == 2) ++n2;
  }
  if (n1 + 2 * n2 == 0) {
    if (warnings)
      warnings->push_back(std::string("kneser-ney: no singleton/doubleton ") + order +
                          " counts; using fixed discount 0.75");
    return KneserNeyTrigram::kFallbackDiscount;
  }
  return n1 / (n1 + 2 * n2);
}

}  // namespace

KneserNeyTrigram KneserNeyTrigram::fit(const std::vector<std::vector<std::string>>& sentences,
                                       const std::vector<std::string>& extra_vocab,
                                       std::vector<std::string>* warnings) {
  if (sentences.empty()) throw std::invalid_argument("kneser-ney: no training utterances");
  std::set<std::string> vocab{std::string(kEos), std::string(kUnk)};
  for (const auto& s : sentences)
    for (const auto& w : s) vocab.insert(w);
  for (const auto& w : extra_vocab) vocab.insert(w);
  vocab.erase(std::string(kBos));

  KneserNeyTrigram m;
  m.words_.assign(vocab.begin(), vocab.end());
  if (m.words_.size() + 1 >= static_cast<std::size_t>(kMaxVocab)) throw std::invalid_argument("kneser-ney: vocabulary too large");
  for (std::size_t i = 0; i < m.words_.size(); ++i) m.ids_.emplace(m.words_[i], static_cast<int>(i));
  m.bos_ = static_cast<int>(m.words_.size());
  m.eos_ = m.ids_.at(std::string(kEos));
  m.unk_ = m.ids_.at(std::string(kUnk));

  for (const auto& s : sentences) {
    int u = m.bos_, v = m.bos_;
    for (const auto& w : s) {
      const int id = w == kBos ? m.unk_ : m.ids_.at(w);
      ++m.trigrams_[{u, v, id}];
      u = v;
      v = id;
    }
    ++m.trigrams_[{u, v, m.eos_}];
  }
  m.build(warnings, true);
  return m;
}

void KneserNeyTrigram::build(std::vector<std::string>* warnings, bool estimate_discounts) {
  tri_count_.clear();
  tri_ctx_.clear();
  bi_cont_.clear();
  bi_ctx_.clear();
  uni_cont_.assign(words_.size(), 0.0);

  for (const auto& [k, c] : trigrams_) {
    const auto [u, v, w] = k;
    tri_count_[key(u, v, w)] = static_cast<double>(c);
    auto& ctx = tri_ctx_[key(u, v)];
    ctx.total += static_cast<double>(c);
    ctx.types += 1;
    bi_cont_[key(v, w)] += 1;  // distinct u preceding (v, w)
  }
  for (const auto& [k, c] : bi_cont_) {
    const int v = static_cast<int>(k >> 21);
    const int w = static_cast<int>(k & ((1u << 21) - 1));
    auto& ctx = bi_ctx_[v];
    ctx.total += c;
    ctx.types += 1;
    uni_cont_[static_cast<std::size_t>(w)] += 1;  // distinct v preceding w
  }
  uni_total_ = 0;
  uni_types_ = 0;
  for (double c : uni_cont_) {
    uni_total_ += c;
    if (c > 0) uni_types_ += 1;
  }

  if (estimate_discounts) {
    std::vector<double> tri, bi;
    tri.reserve(tri_count_.size());
    for (const auto& [k, c] : tri_count_) tri.push_back(c);
    for (const auto& [k, c] : bi_cont_) bi.push_back(c);
    discounts_[2] = count_of_counts_discount(tri, "trigram", warnings);
    discounts_[1] = count_of_counts_discount(bi, "bigram", warnings);
    discounts_[0] = count_of_counts_discount(uni_cont_, "unigram", warnings);
  }
}

int KneserNeyTrigram::id(std::string_view word) const {
  if (word == kBos) return bos_;
  auto it = ids_.find(std::string(word));
  return it == ids_.end() ? unk_ : it->second;
}

double KneserNeyTrigram::p1(int w) const {
  const double uniform = 1.0 / static_cast<double>(words_.size());
  if (uni_total_ == 0) return uniform;
  const double d = discounts_[0];
  return std::max(uni_cont_[static_cast<std::size_t>(w)] - d, 0.0) / uni_total_ + d * uni_types_ / uni_total_ * uniform;
}

double KneserNeyTrigram::p2(int w, int v) const {
  auto ctx = bi_ctx_.find(v);
  if (ctx == bi_ctx_.end() || ctx->second.total == 0) return p1(w);
  const double d = discounts_[1];
  auto it = bi_cont_.find(key(v, w));
  const double c = it == bi_cont_.end() ? 0.0 : it->second;
  return std::max(c - d, 0.0) / ctx->second.total + d * ctx->second.types / ctx->second.total * p1(w);
}

double KneserNeyTrigram::prob(int w, int u, int v) const {
  if (w < 0 || w >= bos_) throw std::out_of_range("kneser-ney: cannot predict word id " + std::to_string(w));
  auto ctx = tri_ctx_.find(key(u, v));
  if (ctx == tri_ctx_.end() || ctx->second.total == 0) return p2(w, v);
  const double d = discounts_[2];
  auto it = tri_count_.find(key(u, v, w));
  const double c = it == tri_count_.end() ? 0.0 : it->second;
  return std::max(c - d, 0.0) / ctx->second.total + d * ctx->second.types / ctx->second.total * p2(w, v);
}

double KneserNeyTrigram::prob(std::string_view w, std::string_view u, std::string_view v) const {
  return prob(id(w), id(u), id(v));
}

Vector KneserNeyTrigram::distribution(int u, int v) const {
  Vector p(static_cast<Eigen::Index>(words_.size()));
  for (int w = 0; w < bos_; ++w) p[w] = prob(w, u, v);
  return p;
}

std::string KneserNeyTrigram::serialize() const {
  std::string out = "# kneser-ney trigram\nvocab\t" + std::to_string(words_.size()) + '\n';
  for (const auto& w : words_) out += w + '\n';
  out += "discounts\t" + format_double(discounts_[0]) + '\t' + format_double(discounts_[1]) + '\t' +
         format_double(discounts_[2]) + '\n';
  // Sorted by surface form for a stable, readable table.
  std::vector<std::pair<std::array<std::string, 3>, long>> rows;
  auto name = [this](int i) { return i == bos_ ? std::string(kBos) : words_[static_cast<std::size_t>(i)]; };
  for (const auto& [k, c] : trigrams_) rows.push_back({{name(k[0]), name(k[1]), name(k[2])}, c});
  std::sort(rows.begin(), rows.end());
  out += "trigrams\t" + std::to_string(rows.size()) + '\n';
  for (const auto& [k, c] : rows) out += k[0] + '\t' + k[1] + '\t' + k[2] + '\t' + std::to_string(c) + '\n';
  return out;
}

KneserNeyTrigram KneserNeyTrigram::parse(std::string_view text) {
  auto lines = split_on(text, '\n');
  std::size_t i = 0;
  auto next = [&]() -> std::string {
    while (i < lines.size() && (lines[i].empty() || lines[i].front() == '#')) ++i;
    if (i == lines.size()) throw ValidationError("kneser-ney model: truncated file");
    return lines[i++];
  };
  auto header = split_on(next(), '\t');
  if (header.size() != 2 || header[0] != "vocab") throw ValidationError("kneser-ney model: expected vocab header");
  const auto nvocab = std::stoul(header[1]);
  KneserNeyTrigram m;
  for (std::size_t k = 0; k < nvocab; ++k) {
    if (i == lines.size()) throw ValidationError("kneser-ney model: truncated vocabulary");
    m.words_.push_back(lines[i++]);
  }
  for (std::size_t k = 0; k < m.words_.size(); ++k) m.ids_.emplace(m.words_[k], static_cast<int>(k));
  if (!m.ids_.count(std::string(kEos)) || !m.ids_.count(std::string(kUnk)))
    throw ValidationError("kneser-ney model: vocabulary lacks </s> or <unk>");
  m.bos_ = static_cast<int>(m.words_.size());
  m.eos_ = m.ids_.at(std::string(kEos));
  m.unk_ = m.ids_.at(std::string(kUnk));
  auto d = split_on(next(), '\t');
  if (d.size() != 4 || d[0] != "discounts") throw ValidationError("kneser-ney model: expected discounts");
  for (int k = 0; k < 3; ++k) m.discounts_[static_cast<std::size_t>(k)] = std::stod(d[static_cast<std::size_t>(k) + 1]);
  auto t = split_on(next(), '\t');
  if (t.size() != 2 || t[0] != "trigrams") throw ValidationError("kneser-ney model: expected trigrams header");
  const auto ntri = std::stoul(t[1]);
  for (std::size_t k = 0; k < ntri; ++k) {
    auto f = split_on(next(), '\t');
    if (f.size() != 4) throw ValidationError("kneser-ney model: bad trigram row");
    auto lookup = [&](const std::string& w) {
      if (w == kBos) return m.bos_;
      auto it = m.ids_.find(w);
      if (it == m.ids_.end()) throw ValidationError("kneser-ney model: unknown word '" + w + "'");
      return it->second;
    };
    m.trigrams_[{lookup(f[0]), lookup(f[1]), lookup(f[2])}] = std::stol(f[3]);
  }
  m.build(nullptr, false);
  return m;
}

}  // namespace wordrec
