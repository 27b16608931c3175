#include "wordrec/corpus.hpp"
#include "wordrec/error.hpp"
#include "wordrec/kneser_ney.hpp"
#include "wordrec/numeric.hpp"
#include "wordrec/prior.hpp"

#include <doctest.h>

#include <cmath>
#include <map>
#include <random>
#include <set>

using namespace wordrec;

namespace {

// Interpolated Kneser-Ney over string keys, following the textbook recursion.
class KnOracle {
 public:
  explicit KnOracle(const std::vector<std::vector<std::string>>& sentences, std::set<std::string> vocab) {
    vocab.insert("</s>");
    vocab.insert("<unk>");
    vocab_ = vocab;
    for (const auto& s : sentences) {
      std::vector<std::string> padded{"<s>", "<s>"};
      padded.insert(padded.end(), s.begin(), s.end());
      padded.push_back("</s>");
      for (std::size_t i = 2; i < padded.size(); ++i) ++tri_[{padded[i - 2], padded[i - 1], padded[i]}];
    }
    for (const auto& [k, c] : tri_) bi_preceders_[{k[1], k[2]}].insert(k[0]);
    for (const auto& [k, us] : bi_preceders_) uni_preceders_[k.second].insert(k.first);
    d3_ = discount([&] {
      std::vector<double> v;
      for (const auto& [k, c] : tri_) v.push_back(c);
      return v;
    }());
    d2_ = discount([&] {
      std::vector<double> v;
      for (const auto& [k, us] : bi_preceders_) v.push_back(static_cast<double>(us.size()));
      return v;
    }());
    d1_ = discount([&] {
      std::vector<double> v;
      for (const auto& w : vocab_) v.push_back(uni_preceders_.count(w) ? static_cast<double>(uni_preceders_.at(w).size()) : 0.0);
      return v;
    }());
  }

  double p1(const std::string& w) const {
    double total = 0, types = 0;
    for (const auto& [x, vs] : uni_preceders_) {
      total += static_cast<double>(vs.size());
      types += 1;
    }
    const double c = uni_preceders_.count(w) ? static_cast<double>(uni_preceders_.at(w).size()) : 0.0;
    return std::max(c - d1_, 0.0) / total + d1_ * types / total / static_cast<double>(vocab_.size());
  }

  double p2(const std::string& w, const std::string& v) const {
    double total = 0, types = 0, c = 0;
    for (const auto& [k, us] : bi_preceders_) {
      if (k.first != v) continue;
      total += static_cast<double>(us.size());
      types += 1;
      if (k.second == w) c = static_cast<double>(us.size());
    }
    if (total == 0) return p1(w);
    return std::max(c - d2_, 0.0) / total + d2_ * types / total * p1(w);
  }

  double p3(const std::string& w, const std::string& u, const std::string& v) const {
    double total = 0, types = 0, c = 0;
    for (const auto& [k, n] : tri_) {
      if (k[0] != u || k[1] != v) continue;
      total += n;
      types += 1;
      if (k[2] == w) c = n;
    }
    if (total == 0) return p2(w, v);
    return std::max(c - d3_, 0.0) / total + d3_ * types / total * p2(w, v);
  }

  double d1() const { return d1_; }
  double d2() const { return d2_; }
  double d3() const { return d3_; }
  const std::set<std::string>& vocab() const { return vocab_; }

 private:
  static double discount(const std::vector<double>& counts) {
    double n1 = 0, n2 = 0;
    for (double c : counts) {
      n1 += c == 1;
      n2 += c == 2;
    }
    return n1 + 2 * n2 == 0 ? 0.75 : n1 / (n1 + 2 * n2);
  }

  std::set<std::string> vocab_;
  std::map<std::array<std::string, 3>, double> tri_;
  std::map<std::pair<std::string, std::string>, std::set<std::string>> bi_preceders_;
  std::map<std::string, std::set<std::string>> uni_preceders_;
  double d1_ = 0, d2_ = 0, d3_ = 0;
};

const std::vector<std::string> kToyUtterances{
    "MOT: do you want to read", "CHI: want read", "MOT: you want the dog", "CHI: read book",
    "MOT: see the dog",         "CHI: dog go",    "MOT: do you see it",     "MOT: the dog wants to go"};

std::vector<std::string> random_words(std::mt19937_64& rng, const std::vector<std::string>& pool, std::size_t n) {
  std::vector<std::string> out;
  for (std::size_t i = 0; i < n; ++i) out.push_back(pool[rng() % pool.size()]);
  return out;
}

}  // namespace

TEST_SUITE_BEGIN("prior");

TEST_CASE("unigram examples") {
  const std::vector<std::string> v{"cat", "dog", "go"};
  const UnigramPrior p(v, {{"cat", 3}, {"dog", 1}}, 0.001);
  const auto d = p.distribution({});
  CHECK(std::abs(d[0] - 3.001 / 4.003) < 1e-15);
  CHECK(std::abs(d[1] - 1.001 / 4.003) < 1e-15);
  CHECK(std::abs(d[2] - 0.001 / 4.003) < 1e-15);

  const auto zero = UnigramPrior(v, {}, 0.001).distribution({});
  for (Eigen::Index i = 0; i < 3; ++i) CHECK(zero[i] == doctest::Approx(1.0 / 3).epsilon(1e-15));
  CHECK(UnigramPrior({"cat"}, {{"cat", 17}}).distribution({})[0] == 1.0);
  CHECK_THROWS_AS(UnigramPrior(v, {}, 0.0), std::invalid_argument);

  const auto fitted = fit_unigram({"cat", "cat", "dog", "cat", "mouse"}, v);
  CHECK(fitted.counts().at("cat") == 3);
  CHECK(fitted.distribution({})[0] == doctest::Approx(3.001 / 4.003));
}

TEST_CASE("unigram ignores context") {
  const UnigramPrior p({"a", "b", "c"}, {{"a", 2}, {"c", 5}});
  const PriorContext c1{"t1", {"[CHI]", "a"}, {"b"}}, c2{"t2", {"b", "c", "a"}, {}};
  CHECK(p.distribution(c1) == p.distribution(c2));
}

TEST_CASE("uniform prior examples") {
  std::vector<std::string> big;
  for (int i = 0; i < 7997; ++i) big.push_back("w" + std::to_string(i));
  const auto u = uniform_prior(big);
  CHECK(u.size() == 7997);
  CHECK(u[123] == 1.0 / 7997);
  CHECK(std::abs(entropy_bits(u) - std::log2(7997.0)) < 1e-9);
  CHECK(uniform_prior({"only"})[0] == 1.0);
  CHECK_THROWS_AS(uniform_prior({}), std::invalid_argument);
}

TEST_CASE("Kneser-Ney on 'a b a b' matches a hand-run oracle") {
  const std::vector<std::vector<std::string>> corpus{{"a", "b", "a", "b"}};
  const auto lm = KneserNeyTrigram::fit(corpus, {});
  const KnOracle oracle(corpus, {"a", "b"});
  CHECK(lm.discounts()[0] == doctest::Approx(oracle.d1()));
  CHECK(lm.discounts()[1] == doctest::Approx(oracle.d2()));
  CHECK(lm.discounts()[2] == doctest::Approx(oracle.d3()));
  CHECK(oracle.d1() == 0.5);
  CHECK(oracle.d2() == doctest::Approx(0.6));
  CHECK(oracle.d3() == 1.0);

  const std::vector<std::string> hist{"<s>", "a", "b", "</s>", "zzz"};
  for (const auto& u : hist)
    for (const auto& v : hist)
      for (const auto& w : oracle.vocab()) {
        const auto uu = u == "zzz" ? "<unk>" : u, vv = v == "zzz" ? "<unk>" : v;
        CHECK(std::abs(lm.prob(w, u, v) - oracle.p3(w, uu, vv)) < 1e-12);
      }

  const std::vector<std::string> vocab{"a", "b"};
  const auto after_a = prior_continuation(lm, vocab, "<s>", "a");
  CHECK(after_a[1] > after_a[0]);
  CHECK(std::abs(after_a.sum() - 1.0) < 1e-12);
}

TEST_CASE("Kneser-Ney normalizes under every context, seen or not") {
  const auto lm = fit_trigram_kn(kToyUtterances, {"read", "dog", "zebra"});
  for (const std::string u : {"<s>", "[CHI]", "want", "qqq"})
    for (const std::string v : {"<s>", "you", "the", "xyzzy"})
      CHECK(std::abs(lm->distribution(lm->id(u), lm->id(v)).sum() - 1.0) < 1e-12);
  CHECK(lm->prob("zebra", "the", "dog") > 0.0);
  CHECK(lm->prob("zebra", "qqq", "xyzzy") > 0.0);
}

TEST_CASE("Kneser-Ney falls back to a fixed discount with a warning") {
  std::vector<std::string> warnings;
  const auto lm = KneserNeyTrigram::fit({{"a"}, {"a"}, {"a"}}, {}, &warnings);
  CHECK(lm.discounts()[2] == 0.75);
  REQUIRE_FALSE(warnings.empty());
  CHECK(warnings[0].find("trigram") != std::string::npos);
}

TEST_CASE("Kneser-Ney serialization round-trips") {
  const auto lm = fit_trigram_kn(kToyUtterances, {"read", "dog", "zebra"});
  const auto text = lm->serialize();
  const auto again = KneserNeyTrigram::parse(text);
  CHECK(again == *lm);
  CHECK(again.serialize() == text);
  CHECK(again.prob("dog", "see", "the") == lm->prob("dog", "see", "the"));
}

TEST_CASE("continuation at utterance start conditions on boundaries") {
  const auto lm = fit_trigram_kn(kToyUtterances, {});
  const std::vector<std::string> v{"want", "dog", "see"};
  const TrigramKNPrior p(v, lm, TrigramMode::continuation);
  const auto d = p.distribution({"t", {}, {}});
  const auto direct = prior_continuation(*lm, v, "<s>", "<s>");
  CHECK((d - direct).cwiseAbs().maxCoeff() < 1e-15);
  for (std::size_t i = 0; i < v.size(); ++i)
    CHECK(d[static_cast<Eigen::Index>(i)] ==
          doctest::Approx(lm->prob(v[i], "<s>", "<s>") /
                          (lm->prob("want", "<s>", "<s>") + lm->prob("dog", "<s>", "<s>") + lm->prob("see", "<s>", "<s>"))));
}

TEST_CASE("in-context with nothing after the gap equals continuation") {
  const auto lm = fit_trigram_kn(kToyUtterances, {});
  const std::vector<std::string> v{"read", "dog", "go", "see", "book", "the"};
  for (const auto& before : std::vector<std::vector<std::string>>{{"[CHI]"}, {"[CGV]", "you", "want"}, {}}) {
    const PriorContext ctx{"t", before, {}};
    const auto h1 = before.empty() ? std::string("<s>") : before.back();
    const auto h2 = before.size() < 2 ? std::string("<s>") : before[before.size() - 2];
    const auto ic = prior_in_context(*lm, v, ctx);
    const auto cont = prior_continuation(*lm, v, h2, h1);
    CHECK((ic - cont).cwiseAbs().maxCoeff() < 1e-12);
  }
}

TEST_CASE("in-context distribution matches direct whole-utterance scoring") {
  const auto lm = fit_trigram_kn(kToyUtterances, {});
  const std::vector<std::string> v{"read", "dog", "go", "see", "book", "the", "want"};
  const PriorContext ctx{"t", {"[CGV]", "you"}, {"the", "dog"}};
  const auto got = prior_in_context(*lm, v, ctx);
  Vector direct(static_cast<Eigen::Index>(v.size()));
  for (std::size_t i = 0; i < v.size(); ++i)
    direct[static_cast<Eigen::Index>(i)] =
        lm->prob(v[i], "[CGV]", "you") * lm->prob("the", "you", v[i]) * lm->prob("dog", v[i], "the");
  direct /= direct.sum();
  CHECK((got - direct).cwiseAbs().maxCoeff() < 1e-12);
  CHECK(std::abs(got.sum() - 1.0) < 1e-12);
}

TEST_CASE("single-gap utterance reduces to the boundary continuation") {
  const auto lm = fit_trigram_kn(kToyUtterances, {});
  const std::vector<std::string> v{"read", "dog", "go"};
  const auto ic = prior_in_context(*lm, v, {"t", {}, {}});
  const auto cont = prior_continuation(*lm, v, "<s>", "<s>");
  CHECK((ic - cont).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("restriction to the candidates preserves relative order") {
  const auto lm = fit_trigram_kn(kToyUtterances, {});
  const std::vector<std::string> v{"read", "dog", "go", "see", "book"};
  for (const std::string h1 : {"the", "want", "you", "<s>"}) {
    const auto restricted = prior_continuation(*lm, v, "<s>", h1);
    for (std::size_t i = 0; i < v.size(); ++i)
      for (std::size_t j = 0; j < v.size(); ++j) {
        const double a = lm->prob(v[i], "<s>", h1), b = lm->prob(v[j], "<s>", h1);
        if (a > b) CHECK(restricted[static_cast<Eigen::Index>(i)] > restricted[static_cast<Eigen::Index>(j)]);
      }
  }
}

TEST_CASE("external prior flooring and lookup") {
  const std::vector<std::string> v{"read", "see", "go"};
  const auto ext = parse_external_priors(R"({"token_id": "t1", "probs": {"read": 0.7, "see": 0.3, "elephant": 0.5}})",
                                         v, 1e-10);
  const auto d = ext.distribution({"t1", {}, {}});
  CHECK(std::abs(d[2] - 1e-10 / (1 + 1e-10)) < 1e-20);
  CHECK(std::abs(d[0] - 0.7 / (1 + 1e-10)) < 1e-15);
  CHECK_THROWS_AS(ext.distribution({"t2", {}, {}}), std::out_of_range);
}

TEST_CASE("external prior errors") {
  const std::vector<std::string> v{"read", "see"};
  CHECK_THROWS_AS(parse_external_priors(R"({"token_id": "t9", "probs": {"go": 1.0}})", v, 0.0), ValidationError);
  try {
    parse_external_priors(R"({"token_id": "t9", "probs": {"read": 0.0}})", v, 0.0);
    FAIL("expected a validation error");
  } catch (const ValidationError& e) {
    CHECK(std::string(e.what()).find("t9") != std::string::npos);
  }
  CHECK_THROWS_AS(parse_external_priors(R"({"token_id": "t1", "probs": {"read": -0.1}})", v), ValidationError);
  CHECK_THROWS_AS(parse_external_priors("{broken", v), ValidationError);
}

TEST_CASE("external prior round-trips through its file format") {
  const std::vector<std::string> v{"read", "see", "go", "dog"};
  std::mt19937_64 rng(41);
  std::map<std::string, Vector> table;
  for (int t = 0; t < 30; ++t) {
    Vector p = Vector::Random(4).cwiseAbs().array() + 1e-3;
    table["t" + std::to_string(t)] = p / p.sum();
  }
  const ExternalPrior ext(v, table, 1e-10);
  const auto again = parse_external_priors(ext.serialize(), v, 1e-10);
  REQUIRE(again.table().size() == table.size());
  for (const auto& [id, p] : table) CHECK((again.table().at(id) - p).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("property: every prior sums to one on random contexts") {
  std::mt19937_64 rng(42);
  const std::vector<std::string> pool{"read", "dog", "go", "see", "book", "the", "want", "you", "zebra", "[CHI]", "[CGV]"};
  const std::vector<std::string> v{"read", "dog", "go", "see", "book", "zebra"};
  const auto lm = fit_trigram_kn(kToyUtterances, v);
  std::vector<std::shared_ptr<const PriorModel>> priors{
      std::make_shared<UniformPrior>(v),
      std::make_shared<UnigramPrior>(fit_unigram(random_words(rng, pool, 40), v)),
      std::make_shared<TrigramKNPrior>(v, lm, TrigramMode::continuation),
      std::make_shared<TrigramKNPrior>(v, lm, TrigramMode::in_context)};
  std::map<std::string, Vector> table;
  for (int t = 0; t < 50; ++t) {
    Vector p = Vector::Random(6).cwiseAbs();
    p[t % 6] = 0.0;
    table["t" + std::to_string(t)] = p;
  }
  std::string text;
  for (const auto& [id, p] : table) {
    text += R"({"token_id": ")" + id + R"(", "probs": {)";
    for (std::size_t i = 0; i < v.size(); ++i)
      text += (i ? ", " : "") + std::string("\"") + v[i] + "\": " + std::to_string(p[static_cast<Eigen::Index>(i)]);
    text += "}}\n";
  }
  priors.push_back(std::make_shared<ExternalPrior>(parse_external_priors(text, v, 1e-10)));

  for (int trial = 0; trial < 500; ++trial) {
    PriorContext ctx{"t" + std::to_string(trial % 50), random_words(rng, pool, rng() % 4),
                     random_words(rng, pool, rng() % 4)};
    for (const auto& p : priors) {
      const auto d = p->distribution(ctx);
      REQUIRE(d.size() == static_cast<Eigen::Index>(v.size()));
      CHECK(std::abs(d.sum() - 1.0) < 1e-9);
      CHECK(d.minCoeff() >= 0.0);
    }
  }
}

TEST_SUITE_END();
