#include "wordrec/recognizer.hpp"

#include "wordrec/parallel.hpp"
#include "wordrec/text.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace wordrec {

Vector posterior_from_logs(const Vector& log_prior, const Vector& log_likelihood) {
  if (log_prior.size() != log_likelihood.size()) throw std::invalid_argument("posterior: size mismatch");
  Vector p = softmax(log_prior + log_likelihood);
  if (p.size() == 0) throw std::domain_error("posterior: no interpretable candidate");
  return p;
}

Vector posterior(const Vector& prior, const Vector& likelihood) {
  if ((likelihood.array() < 0).any()) throw std::invalid_argument("posterior: negative likelihood");
  return posterior_from_logs(prior.array().log().matrix(), likelihood.array().log().matrix());
}

double surprisal_bits(const Vector& p, const std::vector<std::string>& vocab, std::string_view gold) {
  auto it = std::find(vocab.begin(), vocab.end(), gold);
  if (it == vocab.end()) throw std::out_of_range("surprisal: gold word '" + std::string(gold) + "' not in vocabulary");
  const double g = p[it - vocab.begin()];
  return g > 0 ? -std::log2(g) : kInf;
}

RankedCandidates rank_and_topk(const Vector& p, const std::vector<std::string>& vocab,
                               const std::optional<std::string>& gold, std::size_t k) {
  if (k < 1) throw std::invalid_argument("rank_and_topk: k must be >= 1");
  if (static_cast<std::size_t>(p.size()) != vocab.size()) throw std::invalid_argument("rank_and_topk: size mismatch");
  auto before = [&](std::size_t a, std::size_t b) {
    const double pa = p[static_cast<Eigen::Index>(a)], pb = p[static_cast<Eigen::Index>(b)];
    return pa != pb ? pa > pb : vocab[a] < vocab[b];
  };
  RankedCandidates out;
  if (gold) {
    auto it = std::find(vocab.begin(), vocab.end(), *gold);
    if (it != vocab.end()) {
      const auto g = static_cast<std::size_t>(it - vocab.begin());
      std::size_t ahead = 0;
      for (std::size_t i = 0; i < vocab.size(); ++i)
        if (i != g && before(i, g)) ++ahead;
      out.gold_rank = ahead + 1;
    }
  }
  std::vector<std::size_t> order(vocab.size());
  std::iota(order.begin(), order.end(), 0);
  const std::size_t kk = std::min(k, order.size());
  std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(kk), order.end(), before);
  for (std::size_t i = 0; i < kk; ++i) out.top_k.emplace_back(vocab[order[i]], p[static_cast<Eigen::Index>(order[i])]);
  return out;
}

// --- Likelihood ----------------------------------------------------------------

Likelihood Likelihood::none() { return {}; }

Likelihood Likelihood::edit(double beta) {
  if (!(beta >= 0) || !std::isfinite(beta)) throw std::invalid_argument("edit likelihood: beta must be >= 0");
  Likelihood l;
  l.kind_ = Kind::edit;
  l.scale_ = beta;
  return l;
}

Likelihood Likelihood::wfst(ArcCosts arcs, double lambda, PathAccumulation acc) {
  if (!(lambda >= 0) || !std::isfinite(lambda)) throw std::invalid_argument("wfst likelihood: lambda must be >= 0");
  Likelihood l;
  l.kind_ = Kind::wfst;
  l.scale_ = lambda;
  l.arcs_ = std::make_shared<const ArcCosts>(std::move(arcs));
  l.acc_ = acc;
  return l;
}

Likelihood Likelihood::wfst(const PairModel& pm, double lambda) {
  return wfst(ArcCosts::from_pair_model(pm), lambda, PathAccumulation::sum);
}

Likelihood Likelihood::with_scale(double scale) const {
  if (!(scale >= 0) || !std::isfinite(scale)) throw std::invalid_argument("likelihood: scale must be >= 0");
  Likelihood l = *this;
  l.scale_ = scale;
  return l;
}

Vector Likelihood::costs(const Lexicon& lexicon, const PhonemeString& d) const {
  Vector c = Vector::Zero(static_cast<Eigen::Index>(lexicon.size()));
  if (kind_ == Kind::none) return c;
  for (std::size_t i = 0; i < lexicon.size(); ++i) {
    const auto& prons = lexicon.pronunciations(i);
    double best = kInf;
    for (const auto& pr : prons)
      best = std::min(best, kind_ == Kind::edit ? static_cast<double>(edit_distance(pr, d))
                                                : lattice_cost(*arcs_, pr, d, acc_));
    c[static_cast<Eigen::Index>(i)] = best;
  }
  return c;
}

Vector Likelihood::log_likelihood(const Vector& costs) const {
  if (kind_ == Kind::none || scale_ == 0.0) return Vector::Zero(costs.size());
  return costs.unaryExpr([s = scale_](double c) { return c == kInf ? -kInf : -s * c; });
}

// --- Recognizer ------------------------------------------------------------------

Recognizer::Recognizer(std::shared_ptr<const Lexicon> lexicon, std::shared_ptr<const PriorModel> prior,
                       Likelihood likelihood)
    : lexicon_(std::move(lexicon)), prior_(std::move(prior)), likelihood_(std::move(likelihood)) {
  if (!lexicon_ || !prior_) throw std::invalid_argument("recognizer: missing lexicon or prior");
  if (prior_->vocab() != lexicon_->words()) throw std::invalid_argument("recognizer: prior vocabulary differs from lexicon");
}

PosteriorResult Recognizer::recognize(const VocalizationToken& token, std::size_t k) const {
  return recognize(token, likelihood_.costs(*lexicon_, token.actual_phonemes), k);
}

PosteriorResult Recognizer::recognize(const VocalizationToken& token, const Vector& costs, std::size_t k) const {
  const Vector prior = prior_->distribution(prior_context(token));
  PosteriorResult r;
  r.token_id = token.token_id;
  try {
    r.probs = posterior_from_logs(prior.array().log().matrix(), likelihood_.log_likelihood(costs));
  } catch (const std::domain_error&) {
    throw std::domain_error("token '" + token.token_id + "': no interpretable candidate");
  }
  r.entropy_bits = entropy_bits(r.probs);
  const auto& vocab = lexicon_->words();
  if (token.gloss) r.gold_surprisal_bits = surprisal_bits(r.probs, vocab, *token.gloss);
  auto ranked = rank_and_topk(r.probs, vocab, token.gloss, k);
  r.gold_rank = ranked.gold_rank;
  r.top_k = std::move(ranked.top_k);
  return r;
}

std::vector<PosteriorResult> Recognizer::recognize_all(const std::vector<VocalizationToken>& tokens, unsigned threads,
                                                       std::size_t k) const {
  std::vector<PosteriorResult> out(tokens.size());
  parallel_for(tokens.size(), threads, [&](std::size_t i) { out[i] = recognize(tokens[i], k); });
  return out;
}

std::vector<Vector> candidate_costs(const Likelihood& likelihood, const Lexicon& lexicon,
                                    const std::vector<VocalizationToken>& tokens, unsigned threads) {
  std::vector<Vector> out(tokens.size());
  parallel_for(tokens.size(), threads,
               [&](std::size_t i) { out[i] = likelihood.costs(lexicon, tokens[i].actual_phonemes); });
  return out;
}

std::vector<ScoredToken> scored_tokens(const PriorModel& prior, const Lexicon& lexicon,
                                       const std::vector<VocalizationToken>& tokens, const std::vector<Vector>& costs) {
  std::vector<ScoredToken> out;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    if (!tokens[i].gloss) throw std::invalid_argument("scale fit: token '" + tokens[i].token_id + "' has no gloss");
    auto g = lexicon.index_of(*tokens[i].gloss);
    if (!g) continue;
    out.push_back({prior.distribution(prior_context(tokens[i])).array().log().matrix(), costs[i], *g});
  }
  return out;
}

ScaleFit fit_scale(const Likelihood& likelihood, const ScaleGrid& grid, const std::vector<VocalizationToken>& dev,
                   const PriorModel& prior, const Lexicon& lexicon, unsigned threads, ScaleObjective objective) {
  if (dev.empty()) throw std::invalid_argument("fit_scale: empty dev set");
  const auto costs = candidate_costs(likelihood, lexicon, dev, threads);
  return fit_scale_parameter(scored_tokens(prior, lexicon, dev, costs), grid, objective);
}

namespace {

std::string csv_field(std::string_view s) {
  if (s.find_first_of(",\"\n") == std::string_view::npos) return std::string(s);
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + '"';
}

std::string csv_double(double v) {
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  return format_double(v);
}

}  // namespace

std::string result_csv_row(const PosteriorResult& r, const VocalizationToken& token, std::string_view model_id) {
  std::string row = csv_field(r.token_id) + ',' + csv_field(token.child_id) + ',' + std::to_string(token.age_months) +
                    ',' + csv_field(model_id) + ',' + csv_double(r.entropy_bits) + ',';
  row += (token.gloss ? csv_field(*token.gloss) : "") + ',';
  row += (r.gold_surprisal_bits ? csv_double(*r.gold_surprisal_bits) : "") + ',';
  row += (r.gold_rank ? std::to_string(*r.gold_rank) : "") + ',';
  if (!r.top_k.empty()) row += csv_field(r.top_k.front().first) + ',' + csv_double(r.top_k.front().second);
  else row += ',';
  return row;
}

}  // namespace wordrec
