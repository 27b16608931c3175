#include "wordrec/prior.hpp"

#include "wordrec/error.hpp"
#include "wordrec/text.hpp"

#include <json.hpp>

#include <cmath>
#include <stdexcept>

namespace wordrec {

PriorContext prior_context(const VocalizationToken& token) {
  auto gap = split_at_gap(token.same_utterance);
  return {token.token_id, std::move(gap.before), std::move(gap.after)};
}

PriorModel::PriorModel(std::vector<std::string> vocab) : vocab_(std::move(vocab)) {
  if (vocab_.empty()) throw std::invalid_argument("prior: empty candidate vocabulary");
}

Vector uniform_prior(const std::vector<std::string>& vocab) {
  if (vocab.empty()) throw std::invalid_argument("uniform prior: empty candidate vocabulary");
  const auto n = static_cast<Eigen::Index>(vocab.size());
  return Vector::Constant(n, 1.0 / static_cast<double>(n));
}

UniformPrior::UniformPrior(std::vector<std::string> vocab) : PriorModel(std::move(vocab)), dist_(uniform_prior(this->vocab())) {}

UnigramPrior::UnigramPrior(std::vector<std::string> vocab, std::map<std::string, double> counts, double pseudocount)
    : PriorModel(std::move(vocab)), counts_(std::move(counts)), pseudocount_(pseudocount) {
  if (!(pseudocount > 0)) throw std::invalid_argument("unigram prior: pseudocount must be positive");
  const auto& v = this->vocab();
  dist_.resize(static_cast<Eigen::Index>(v.size()));
  for (std::size_t i = 0; i < v.size(); ++i) {
    auto it = counts_.find(v[i]);
    const double c = it == counts_.end() ? 0.0 : it->second;
    if (c < 0) throw std::invalid_argument("unigram prior: negative count for '" + v[i] + "'");
    dist_[static_cast<Eigen::Index>(i)] = c + pseudocount_;
  }
  dist_ /= dist_.sum();
}

UnigramPrior fit_unigram(const std::vector<std::string>& words, const std::vector<std::string>& vocab,
                         double pseudocount) {
  std::map<std::string, double> counts;
  for (const auto& w : vocab) counts[w] = 0.0;
  for (const auto& w : words) {
    auto it = counts.find(w);
    if (it != counts.end()) it->second += 1.0;
  }
  return UnigramPrior(vocab, std::move(counts), pseudocount);
}

// --- trigram -------------------------------------------------------------------

std::shared_ptr<const KneserNeyTrigram> fit_trigram_kn(const std::vector<std::string>& utterances,
                                                       const std::vector<std::string>& vocab,
                                                       std::vector<std::string>* warnings) {
  std::vector<std::vector<std::string>> sentences;
  sentences.reserve(utterances.size());
  for (const auto& u : utterances) sentences.push_back(utterance_tokens(u));
  std::vector<std::string> lowered;
  for (const auto& w : vocab) lowered.push_back(to_lower(w));
  return std::make_shared<const KneserNeyTrigram>(KneserNeyTrigram::fit(sentences, lowered, warnings));
}

namespace {

std::vector<int> model_ids(const KneserNeyTrigram& lm, const std::vector<std::string>& vocab) {
  std::vector<int> ids;
  ids.reserve(vocab.size());
  for (const auto& w : vocab) ids.push_back(lm.id(to_lower(w)));
  return ids;
}

std::pair<int, int> history(const KneserNeyTrigram& lm, const std::vector<std::string>& preceding) {
  const int bos = lm.id(KneserNeyTrigram::kBos);
  const std::size_t n = preceding.size();
  const int h1 = n >= 1 ? lm.id(preceding[n - 1]) : bos;
  const int h2 = n >= 2 ? lm.id(preceding[n - 2]) : bos;
  return {h2, h1};
}

Vector continuation_over(const KneserNeyTrigram& lm, const std::vector<int>& ids, int u, int v) {
  Vector p(static_cast<Eigen::Index>(ids.size()));
  for (std::size_t i = 0; i < ids.size(); ++i) p[static_cast<Eigen::Index>(i)] = lm.prob(ids[i], u, v);
  return p / p.sum();
}

Vector in_context_over(const KneserNeyTrigram& lm, const std::vector<int>& ids, const PriorContext& ctx) {
  const auto [h2, h1] = history(lm, ctx.preceding);
  std::vector<int> following;
  for (const auto& w : ctx.following) following.push_back(lm.id(w));
  Vector score(static_cast<Eigen::Index>(ids.size()));
  for (std::size_t i = 0; i < ids.size(); ++i) {
    double s = std::log(lm.prob(ids[i], h2, h1));
    int u = h1, v = ids[i];
    for (int f : following) {
      s += std::log(lm.prob(f, u, v));
      u = v;
      v = f;
    }
    score[static_cast<Eigen::Index>(i)] = s;
  }
  return softmax(score);
}

}  // namespace

Vector prior_continuation(const KneserNeyTrigram& lm, const std::vector<std::string>& vocab, std::string_view w2,
                          std::string_view w1) {
  return continuation_over(lm, model_ids(lm, vocab), lm.id(w2), lm.id(w1));
}

Vector prior_in_context(const KneserNeyTrigram& lm, const std::vector<std::string>& vocab, const PriorContext& ctx) {
  return in_context_over(lm, model_ids(lm, vocab), ctx);
}

TrigramKNPrior::TrigramKNPrior(std::vector<std::string> vocab, std::shared_ptr<const KneserNeyTrigram> lm,
                               TrigramMode mode)
    : PriorModel(std::move(vocab)), lm_(std::move(lm)), mode_(mode) {
  if (!lm_) throw std::invalid_argument("trigram prior: no model");
  lm_ids_ = model_ids(*lm_, this->vocab());
}

Vector TrigramKNPrior::distribution(const PriorContext& ctx) const {
  if (mode_ == TrigramMode::in_context) return in_context_over(*lm_, lm_ids_, ctx);
  const auto [h2, h1] = history(*lm_, ctx.preceding);
  return continuation_over(*lm_, lm_ids_, h2, h1);
}

// --- external -------------------------------------------------------------------

ExternalPrior::ExternalPrior(std::vector<std::string> vocab, std::map<std::string, Vector> by_token, double floor)
    : PriorModel(std::move(vocab)), by_token_(std::move(by_token)), floor_(floor) {
  for (const auto& [id, p] : by_token_)
    if (p.size() != static_cast<Eigen::Index>(this->vocab().size()))
      throw std::invalid_argument("external prior: distribution size mismatch for '" + id + "'");
}

Vector ExternalPrior::distribution(const PriorContext& ctx) const {
  auto it = by_token_.find(ctx.token_id);
  if (it == by_token_.end()) throw std::out_of_range("external prior: no distribution for token '" + ctx.token_id + "'");
  return it->second;
}

std::string ExternalPrior::serialize() const {
  std::string out;
  for (const auto& [id, p] : by_token_) {
    nlohmann::ordered_json probs = nlohmann::ordered_json::object();
    for (std::size_t i = 0; i < vocab().size(); ++i) probs[vocab()[i]] = p[static_cast<Eigen::Index>(i)];
    nlohmann::ordered_json rec = {{"token_id", id}, {"probs", probs}};
    out += rec.dump() + '\n';
  }
  return out;
}

ExternalPrior parse_external_priors(std::string_view text, const std::vector<std::string>& vocab, double floor) {
  if (floor < 0) throw std::invalid_argument("external prior: floor must be >= 0");
  std::map<std::string, Eigen::Index> index;
  for (std::size_t i = 0; i < vocab.size(); ++i) index.emplace(vocab[i], static_cast<Eigen::Index>(i));
  std::map<std::string, Vector> table;
  std::size_t lineno = 0;
  for (const auto& raw : split_on(text, '\n')) {
    ++lineno;
    if (trim(raw).empty()) continue;
    const auto where = "external prior line " + std::to_string(lineno) + ": ";
    nlohmann::json rec;
    try {
      rec = nlohmann::json::parse(raw);
    } catch (const nlohmann::json::parse_error& e) {
      throw ValidationError(where + e.what());
    }
    if (!rec.contains("token_id") || !rec["token_id"].is_string() || !rec.contains("probs") || !rec["probs"].is_object())
      throw ValidationError(where + "expected {token_id, probs}");
    const auto id = rec["token_id"].get<std::string>();
    Vector p = Vector::Constant(static_cast<Eigen::Index>(vocab.size()), floor);
    for (const auto& [word, val] : rec["probs"].items()) {
      if (!val.is_number()) throw ValidationError(where + "probability for '" + word + "' is not a number");
      const double v = val.get<double>();
      if (v < 0 || !std::isfinite(v)) throw ValidationError(where + "invalid probability for '" + word + "' in token '" + id + "'");
      auto it = index.find(word);
      if (it != index.end()) p[it->second] = v;
    }
    const double z = p.sum();
    if (!(z > 0)) throw ValidationError("external prior: token '" + id + "' has no probability mass over the vocabulary");
    if (!table.emplace(id, p / z).second) throw ValidationError(where + "duplicate token_id '" + id + "'");
  }
  return ExternalPrior(vocab, std::move(table), floor);
}

ExternalPrior load_external_priors(const std::string& path, const std::vector<std::string>& vocab, double floor) {
  return parse_external_priors(read_file(path), vocab, floor);
}

}  // namespace wordrec
