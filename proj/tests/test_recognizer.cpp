#include "support.hpp"

#include "wordrec/likelihood.hpp"
#include "wordrec/numeric.hpp"
#include "wordrec/prior.hpp"
#include "wordrec/recognizer.hpp"
#include "wordrec/synth.hpp"

#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

using namespace wordrec;
using testsupport::ph;

namespace {

VocalizationToken make_token(const std::string& id, PhonemeString d, std::optional<std::string> gloss,
                             std::string same = "CHI: ah wan du ⟨GAP⟩") {
  VocalizationToken t;
  t.token_id = id;
  t.child_id = "c";
  t.session_id = "s";
  t.age_months = 24;
  t.actual_phonemes = std::move(d);
  t.gloss = std::move(gloss);
  t.same_utterance = std::move(same);
  return t;
}

Vector random_simplex(Eigen::Index n, std::mt19937_64& rng) {
  std::gamma_distribution<double> g(0.5, 1.0);
  Vector p(n);
  for (Eigen::Index i = 0; i < n; ++i) p[i] = g(rng) + 1e-300;
  return p / p.sum();
}

}  // namespace

TEST_SUITE_BEGIN("recognizer");

TEST_CASE("posterior examples") {
  const Vector uniform = Vector::Constant(4, 0.25);
  Vector lik(4);
  lik << 0.1, 0.3, 0.0, 0.6;
  const auto p = posterior(uniform, lik);
  CHECK((p - lik / lik.sum()).cwiseAbs().maxCoeff() < 1e-15);

  Vector prior(3);
  prior << 0.2, 0.5, 0.3;
  CHECK((posterior(prior, Vector::Ones(3)) - prior).cwiseAbs().maxCoeff() < 1e-15);

  Vector zero_overlap(3);
  zero_overlap << 0.0, 0.0, 1.0;
  Vector lik2(3);
  lik2 << 1.0, 1.0, 0.0;
  CHECK_THROWS_AS(posterior(zero_overlap, lik2), std::domain_error);
  CHECK_THROWS_AS(posterior(prior, -Vector::Ones(3)), std::invalid_argument);
}

TEST_CASE("entropy examples") {
  CHECK(entropy_bits(Vector::Constant(4, 0.25)) == doctest::Approx(2.0).epsilon(1e-15));
  Vector point = Vector::Zero(5);
  point[3] = 1.0;
  CHECK(entropy_bits(point) == 0.0);
  Vector half(4);
  half << 0.5, 0.5, 0.0, 0.0;
  CHECK(entropy_bits(half) == 1.0);
}

TEST_CASE("surprisal examples") {
  const std::vector<std::string> v{"a", "b", "c", "d"};
  Vector p(4);
  p << 0.25, 0.75, 0.0, 0.0;
  CHECK(surprisal_bits(p, v, "a") == 2.0);
  CHECK(std::isinf(surprisal_bits(p, v, "c")));
  Vector one = Vector::Zero(4);
  one[1] = 1.0;
  CHECK(surprisal_bits(one, v, "b") == 0.0);
  Vector tiny(4);
  tiny << std::ldexp(1.0, -10), 1.0 - std::ldexp(1.0, -10), 0.0, 0.0;
  CHECK(surprisal_bits(tiny, v, "a") == doctest::Approx(10.0).epsilon(1e-15));
  CHECK_THROWS_AS(surprisal_bits(p, v, "zebra"), std::out_of_range);
}

TEST_CASE("rank and top-k examples") {
  const std::vector<std::string> v{"cherry", "apple", "banana", "date"};
  Vector p(4);
  p << 0.1, 0.6, 0.2, 0.1;
  const auto r = rank_and_topk(p, v, std::string("apple"), 2);
  CHECK(*r.gold_rank == 1);
  REQUIRE(r.top_k.size() == 2);
  CHECK(r.top_k[0].first == "apple");
  CHECK(r.top_k[1].first == "banana");

  const Vector flat = Vector::Constant(4, 0.25);
  CHECK(*rank_and_topk(flat, v, std::string("apple"), 1).gold_rank == 1);
  CHECK(*rank_and_topk(flat, v, std::string("cherry"), 1).gold_rank == 3);
  CHECK(*rank_and_topk(flat, v, std::string("date"), 1).gold_rank == 4);

  const auto all = rank_and_topk(p, v, std::nullopt, 10);
  CHECK(all.top_k.size() == 4);
  CHECK_FALSE(all.gold_rank.has_value());
  CHECK(all.top_k[2].first == "cherry");
  CHECK(all.top_k[3].first == "date");
  CHECK_THROWS_AS(rank_and_topk(p, v, std::nullopt, 0), std::invalid_argument);
}

TEST_CASE("property: scaling the likelihood leaves the posterior unchanged") {
  std::mt19937_64 rng(51);
  for (int trial = 0; trial < 1000; ++trial) {
    const Eigen::Index n = 2 + static_cast<Eigen::Index>(rng() % 40);
    const auto prior = random_simplex(n, rng);
    const Vector lik = random_simplex(n, rng);
    const double c = std::exp(static_cast<double>(rng() % 40) - 20.0);
    const auto a = posterior(prior, lik), b = posterior(prior, lik * c);
    CHECK((a - b).cwiseAbs().maxCoeff() < 1e-12);
    CHECK(std::abs(a.sum() - 1.0) < 1e-9);
  }
}

TEST_CASE("property: posterior argmax follows the candidates under reindexing") {
  std::mt19937_64 rng(52);
  for (int trial = 0; trial < 500; ++trial) {
    const Eigen::Index n = 2 + static_cast<Eigen::Index>(rng() % 30);
    const auto prior = random_simplex(n, rng);
    const auto lik = random_simplex(n, rng);
    std::vector<Eigen::Index> perm(static_cast<std::size_t>(n));
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), rng);
    Vector pp(n), pl(n);
    for (Eigen::Index i = 0; i < n; ++i) {
      pp[i] = prior[perm[static_cast<std::size_t>(i)]];
      pl[i] = lik[perm[static_cast<std::size_t>(i)]];
    }
    Eigen::Index a = 0, b = 0;
    posterior(prior, lik).maxCoeff(&a);
    posterior(pp, pl).maxCoeff(&b);
    CHECK(perm[static_cast<std::size_t>(b)] == a);
  }
}

TEST_CASE("a zero scale returns the prior") {
  const auto inv = testsupport::toy_inventory();
  auto lex = std::make_shared<const Lexicon>(Lexicon(
      {{"read", {ph("ɹ i d", inv)}}, {"weed", {ph("w i d", inv)}}, {"see", {ph("s i", inv)}}, {"go", {ph("g oʊ", inv)}}}));
  auto prior = std::make_shared<const UnigramPrior>(lex->words(), std::map<std::string, double>{{"read", 5}, {"go", 2}});
  const auto pm = PairModel::uniform(inv.size());
  for (const auto& lik : {Likelihood::wfst(pm, 0.0), Likelihood::edit(0.0), Likelihood::none()}) {
    const Recognizer rec(lex, prior, lik);
    const auto r = rec.recognize(make_token("t", ph("f æ t", inv), std::nullopt));
    CHECK((r.probs - prior->distribution({})).cwiseAbs().maxCoeff() < 1e-12);
  }
}

TEST_CASE("an informative prior recovers read from [w i d]") {
  const auto inv = testsupport::toy_inventory();
  const int r = *inv.find("ɹ"), w = *inv.find("w");
  std::vector<AlignmentPair> pairs;
  std::mt19937_64 rng(53);
  for (int i = 0; i < 400; ++i) {
    auto cit = testsupport::random_string(inv.size(), 1, 4, rng);
    auto child = cit;
    if (i % 4 == 0) {
      cit.syms.insert(cit.syms.begin(), r);
      child.syms.insert(child.syms.begin(), w);
    } else if (i % 4 == 1) {
      cit.syms.insert(cit.syms.begin(), r);
      child.syms.insert(child.syms.begin(), r);
    }
    pairs.push_back({cit, child});
  }
  EmTrainConfig cfg;
  cfg.floor = 0.1;
  const auto pm = em_train_pair_model(pairs, inv.size(), cfg).model;
  CHECK(pm.conditional(r, w) > 0.2);

  auto lex = std::make_shared<const Lexicon>(Lexicon({{"read", {ph("ɹ i d", inv), ph("ɹ ɛ d", inv)}},
                                                      {"weed", {ph("w i d", inv)}},
                                                      {"see", {ph("s i", inv)}},
                                                      {"do", {ph("d u", inv)}}}));
  auto informative = std::make_shared<const UnigramPrior>(
      lex->words(), std::map<std::string, double>{{"read", 71}, {"see", 15}, {"do", 12}, {"weed", 2}});
  auto flat = std::make_shared<const UniformPrior>(lex->words());
  const auto token = make_token("t", ph("w i d", inv), std::string("read"));
  const auto idx_read = *lex->index_of("read"), idx_weed = *lex->index_of("weed");

  const auto with_prior = Recognizer(lex, informative, Likelihood::wfst(pm, 1.0)).recognize(token);
  CHECK(with_prior.probs[static_cast<Eigen::Index>(idx_read)] > with_prior.probs[static_cast<Eigen::Index>(idx_weed)]);
  CHECK(*with_prior.gold_rank == 1);
  const auto without = Recognizer(lex, flat, Likelihood::wfst(pm, 1.0)).recognize(token);
  CHECK(without.probs[static_cast<Eigen::Index>(idx_weed)] > without.probs[static_cast<Eigen::Index>(idx_read)]);
  CHECK(without.top_k.front().first == "weed");
}

TEST_CASE("property: recognizer outputs respect entropy and normalization bounds") {
  const auto spec = demo_spec(60, 2, 5);
  auto s = spec;
  s.sessions_per_child = 2;
  s.tokens_per_session = 40;
  const auto corpus = generate_synthetic_corpus(s, 200, 5);
  auto lex = std::make_shared<const Lexicon>(s.lexicon);
  auto lm = fit_trigram_kn(corpus.training_utterances, lex->words());
  auto prior = std::make_shared<const TrigramKNPrior>(lex->words(), lm, TrigramMode::in_context);
  const Recognizer rec(lex, prior, Likelihood::wfst(s.children[0].pair_model, 1.0));
  const auto results = rec.recognize_all(corpus.tokens, 1);
  const double hmax = std::log2(static_cast<double>(lex->size()));
  for (std::size_t i = 0; i < results.size(); ++i) {
    const auto& r = results[i];
    CHECK(std::abs(r.probs.sum() - 1.0) < 1e-9);
    CHECK(r.entropy_bits >= 0.0);
    CHECK(r.entropy_bits <= hmax + 1e-9);
    CHECK(r.gold_surprisal_bits.has_value() == corpus.tokens[i].intelligible());
    if (r.gold_surprisal_bits) CHECK(*r.gold_surprisal_bits >= 0.0);
  }
  const auto threaded = rec.recognize_all(corpus.tokens, 4);
  for (std::size_t i = 0; i < results.size(); ++i) CHECK(threaded[i].probs == results[i].probs);
}

TEST_CASE("unreachable candidates are reported as uninterpretable") {
  Matrix cond = Matrix::Zero(3, 3);
  cond(0, 0) = 1.0;
  cond(1, 1) = 1.0;
  cond(2, 0) = 1.0;
  const auto pm = PairModel::from_conditional(cond, Vector::Constant(3, 1.0 / 3));
  const PhonemeInventory inv({{"a", true}, {"b", false}});
  auto lex = std::make_shared<const Lexicon>(Lexicon({{"ab", {ph("a b", inv)}}}));
  const Recognizer rec(lex, std::make_shared<const UniformPrior>(lex->words()), Likelihood::wfst(pm, 1.0));
  CHECK_THROWS_AS(rec.recognize(make_token("t", ph("b b", inv), std::nullopt)), std::domain_error);
}

TEST_CASE("result rows follow the CSV header") {
  const auto inv = testsupport::toy_inventory();
  auto lex = std::make_shared<const Lexicon>(Lexicon({{"read", {ph("ɹ i d", inv)}}, {"weed", {ph("w i d", inv)}}}));
  const Recognizer rec(lex, std::make_shared<const UniformPrior>(lex->words()), Likelihood::edit(2.0));
  const auto tok = make_token("t,1", ph("w i d", inv), std::string("read"));
  const auto row = result_csv_row(rec.recognize(tok), tok, "uniform+edit");
  CHECK(row.rfind("\"t,1\",c,24,uniform+edit,", 0) == 0);
  CHECK(row.find(",read,") != std::string::npos);
  CHECK(row.find(",2,weed,") != std::string::npos);
}

TEST_SUITE_END();
