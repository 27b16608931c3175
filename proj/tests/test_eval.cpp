#include "support.hpp"

#include "wordrec/eval.hpp"
#include "wordrec/prior.hpp"
#include "wordrec/recognizer.hpp"

#include <doctest.h>

#include <cmath>
#include <random>

using namespace wordrec;
using testsupport::ph;

namespace {

double pair_count_auc(const std::vector<double>& pos, const std::vector<double>& neg) {
  double s = 0;
  for (double p : pos)
    for (double n : neg) s += p > n ? 1.0 : (p == n ? 0.5 : 0.0);
  return s / static_cast<double>(pos.size() * neg.size());
}

// DeLong's structural components, computed by direct pair loops.
double delong_z_oracle(const std::vector<double>& a, const std::vector<double>& b, const std::vector<bool>& y) {
  std::vector<std::size_t> P, N;
  for (std::size_t i = 0; i < y.size(); ++i) (y[i] ? P : N).push_back(i);
  const double m = static_cast<double>(P.size()), n = static_cast<double>(N.size());
  auto psi = [](double x, double z) { return x > z ? 1.0 : (x == z ? 0.5 : 0.0); };
  std::vector<double> va10, vb10, va01, vb01;
  for (auto i : P) {
    double sa = 0, sb = 0;
    for (auto j : N) {
      sa += psi(a[i], a[j]);
      sb += psi(b[i], b[j]);
    }
    va10.push_back(sa / n);
    vb10.push_back(sb / n);
  }
  for (auto j : N) {
    double sa = 0, sb = 0;
    for (auto i : P) {
      sa += psi(a[i], a[j]);
      sb += psi(b[i], b[j]);
    }
    va01.push_back(sa / m);
    vb01.push_back(sb / m);
  }
  auto mean = [](const std::vector<double>& v) {
    double s = 0;
    for (double x : v) s += x;
    return s / static_cast<double>(v.size());
  };
  auto cov = [&](const std::vector<double>& u, const std::vector<double>& v) {
    const double mu = mean(u), mv = mean(v);
    double s = 0;
    for (std::size_t k = 0; k < u.size(); ++k) s += (u[k] - mu) * (v[k] - mv);
    return s / static_cast<double>(u.size() - 1);
  };
  const double var = (cov(va10, va10) + cov(vb10, vb10) - 2 * cov(va10, vb10)) / m +
                     (cov(va01, va01) + cov(vb01, vb01) - 2 * cov(va01, vb01)) / n;
  return (mean(va10) - mean(vb10)) / std::sqrt(var);
}

PosteriorResult result(double p_gold, std::size_t rank) {
  PosteriorResult r;
  r.token_id = "t";
  r.gold_surprisal_bits = -std::log2(p_gold);
  r.gold_rank = rank;
  return r;
}

VocalizationToken tok(const std::string& id, const std::string& child, int age, PhonemeString d,
                      std::optional<std::string> gloss) {
  VocalizationToken t;
  t.token_id = id;
  t.child_id = child;
  t.session_id = "s";
  t.age_months = age;
  t.actual_phonemes = std::move(d);
  t.gloss = std::move(gloss);
  t.same_utterance = "CHI: ⟨GAP⟩";
  return t;
}

}  // namespace

TEST_SUITE_BEGIN("eval");

TEST_CASE("AUC examples") {
  CHECK(intelligibility_auc({0.1, 0.2}, {5.0, 6.0}).auc == 1.0);
  CHECK(intelligibility_auc({1.0, 2.0, 2.0}, {2.0, 1.0, 2.0}).auc == 0.5);
  CHECK(intelligibility_auc({1.0, 3.0}, {2.0, 4.0}).auc == 0.75);
  CHECK_THROWS_AS(intelligibility_auc({}, {1.0}), std::invalid_argument);
  CHECK_THROWS_AS(intelligibility_auc({1.0}, {}), std::invalid_argument);
}

TEST_CASE("property: AUC equals pair counting on small inputs") {
  std::mt19937_64 rng(61);
  for (int trial = 0; trial < 3000; ++trial) {
    const std::size_t total = 2 + rng() % 19;
    const std::size_t np = 1 + rng() % (total - 1);
    std::vector<double> pos, neg;
    const int levels = 1 + static_cast<int>(rng() % 8);
    for (std::size_t i = 0; i < total; ++i) (i < np ? pos : neg).push_back(static_cast<double>(rng() % levels));
    const auto roc = intelligibility_auc(pos, neg);
    std::vector<double> npos, nneg;
    for (double x : pos) npos.push_back(-x);
    for (double x : neg) nneg.push_back(-x);
    CHECK(std::abs(roc.auc - pair_count_auc(npos, nneg)) < 1e-12);
    CHECK(std::abs(mann_whitney_auc(npos, nneg) - pair_count_auc(npos, nneg)) < 1e-12);
    CHECK(roc.tpr.front() == 0.0);
    CHECK(roc.fpr.front() == 0.0);
    CHECK(roc.tpr.back() == 1.0);
    CHECK(roc.fpr.back() == 1.0);
    for (std::size_t k = 1; k < roc.tpr.size(); ++k) {
      CHECK(roc.tpr[k] >= roc.tpr[k - 1]);
      CHECK(roc.fpr[k] >= roc.fpr[k - 1]);
    }
  }
}

TEST_CASE("DeLong on identical and swapped scorers") {
  std::mt19937_64 rng(62);
  std::normal_distribution<double> g;
  std::vector<double> a, b;
  std::vector<bool> y;
  for (int i = 0; i < 200; ++i) {
    const bool label = i % 3 == 0;
    y.push_back(label);
    a.push_back(g(rng) + (label ? 1.0 : 0.0));
    b.push_back(g(rng) + (label ? 0.5 : 0.0));
  }
  const auto same = delong_test(a, a, y);
  CHECK(same.statistic == 0.0);
  CHECK(same.p_value == 1.0);

  const auto ab = delong_test(a, b, y), ba = delong_test(b, a, y);
  CHECK(ab.statistic == doctest::Approx(-ba.statistic).epsilon(1e-12));
  CHECK(ab.p_value == doctest::Approx(ba.p_value).epsilon(1e-12));
  CHECK(std::abs(ab.statistic - delong_z_oracle(a, b, y)) < 1e-9);
  std::vector<double> pos, neg;
  for (std::size_t i = 0; i < y.size(); ++i) (y[i] ? pos : neg).push_back(a[i]);
  CHECK(ab.estimate_a == doctest::Approx(pair_count_auc(pos, neg)).epsilon(1e-12));
}

TEST_CASE("property: DeLong statistic matches the pair-loop oracle") {
  std::mt19937_64 rng(63);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t n = 6 + rng() % 40;
    std::vector<double> a, b;
    std::vector<bool> y;
    for (std::size_t i = 0; i < n; ++i) {
      y.push_back(i < 6 ? i < 3 : (rng() & 1U) != 0);
      a.push_back(static_cast<double>(rng() % 7));
      b.push_back(static_cast<double>(rng() % 7));
    }
    try {
      const auto r = delong_test(a, b, y);
      if (r.statistic != 0.0) CHECK(std::abs(r.statistic - delong_z_oracle(a, b, y)) < 1e-9);
      CHECK(r.p_value >= 0.0);
      CHECK(r.p_value <= 1.0);
    } catch (const std::domain_error&) {
      CHECK(!std::isfinite(delong_z_oracle(a, b, y)));
    }
  }
}

TEST_CASE("DeLong reports degenerate inputs") {
  const std::vector<bool> y{true, true, false, false};
  CHECK_THROWS_AS(delong_test({3, 4, 1, 2}, {1, 1, 1, 1}, y), std::domain_error);
  CHECK_THROWS_AS(delong_test({1, 2}, {1, 2}, {true, true}), std::invalid_argument);
}

TEST_CASE("paired t examples") {
  const std::vector<double> a{1, 2, 3, 4, 5};
  const auto same = paired_t_bonferroni({{"a", a}, {"b", a}});
  REQUIRE(same.size() == 1);
  CHECK(same[0].statistic == 0.0);
  CHECK(same[0].p_value == 1.0);

  const auto shift = paired_t_bonferroni({{"a", a}, {"b", {2, 3, 4, 5, 6}}});
  CHECK(shift[0].degenerate);
  CHECK(shift[0].p_value == 0.0);
  CHECK(std::isinf(shift[0].statistic));

  // d = a - b = (-1, -2, -2, 0, -2): mean -1.4, sd sqrt(0.8), t = -1.4 / (sqrt(0.8) / sqrt(5)) = -3.5.
  const auto hand = paired_t_bonferroni({{"a", a}, {"b", {2, 4, 5, 4, 7}}});
  CHECK(std::abs(hand[0].statistic - (-3.5)) < 1e-9);
  // Student t with 4 degrees of freedom has the closed-form CDF below.
  const double t = 3.5, s = t / std::sqrt(1 + t * t / 4);
  const double cdf = 0.5 + 0.375 * s * (1 - t * t / (12 * (1 + t * t / 4)));
  CHECK(std::abs(hand[0].p_value - 2 * (1 - cdf)) < 1e-9);
  CHECK(hand[0].estimate_a == 3.0);
  CHECK(hand[0].estimate_b == 4.4);
}

TEST_CASE("Bonferroni adjustment and exclusions") {
  const double inf = std::numeric_limits<double>::infinity();
  const std::map<std::string, std::vector<double>> m{
      {"a", {1, 2, 3, 4, 5, inf}}, {"b", {1.5, 2.1, 3.9, 4.2, 5.3, 1}}, {"c", {1.1, 2.4, 2.9, 4.8, 5.0, 2}}};
  const auto three = paired_t_bonferroni(m);
  const auto one = paired_t_bonferroni(m, 1);
  REQUIRE(three.size() == 3);
  for (std::size_t i = 0; i < 3; ++i) {
    CHECK(three[i].p_value == doctest::Approx(std::min(1.0, one[i].p_value * 3)));
    CHECK(three[i].p_value <= 1.0);
  }
  CHECK(three[0].excluded == 1);
  CHECK(three[2].excluded == 0);
  CHECK_THROWS_AS(paired_t_bonferroni({{"a", {1, inf}}, {"b", {2, 3}}}), std::invalid_argument);
}

TEST_CASE("aggregate examples") {
  const auto one = aggregate_metrics({result(0.25, 3)});
  CHECK(one.mean_surprisal == 2.0);
  CHECK(one.mean_rank == 3.0);
  CHECK(one.top1_rate == 0.0);

  const auto perfect = aggregate_metrics({result(1.0, 1), result(1.0, 1)});
  CHECK(perfect.mean_surprisal == 0.0);
  CHECK(perfect.mean_rank == 1.0);
  CHECK(perfect.top1_rate == 1.0);

  const std::vector<std::string> v{"apple", "bear", "cat", "dog"};
  const Vector flat = Vector::Constant(4, 0.25);
  PosteriorResult r;
  r.gold_surprisal_bits = surprisal_bits(flat, v, "bear");
  r.gold_rank = rank_and_topk(flat, v, std::string("bear"), 1).gold_rank;
  const auto uni = aggregate_metrics({r});
  CHECK(uni.mean_surprisal == 2.0);
  CHECK(uni.mean_rank == 2.0);
  CHECK(uni.top1_rate == 0.0);

  auto zero = result(0.5, 2);
  zero.gold_surprisal_bits = std::numeric_limits<double>::infinity();
  const auto mixed = aggregate_metrics({result(0.5, 1), zero});
  CHECK(mixed.mean_surprisal == 1.0);
  CHECK(mixed.n_infinite == 1);

  CHECK_THROWS_AS(aggregate_metrics({}), std::invalid_argument);
  CHECK_THROWS_AS(aggregate_metrics({PosteriorResult{}}), std::invalid_argument);
}

TEST_CASE("stratify examples") {
  const auto inv = testsupport::toy_inventory();
  const Lexicon lex({{"cat", {ph("k æ t", inv)}}, {"dog", {ph("d oʊ g", inv)}}});

  std::vector<VocalizationToken> toks{tok("1", "a", 24, ph("k æ t", inv), "cat"),
                                      tok("2", "a", 24, ph("d oʊ g", inv), "dog")};
  std::vector<PosteriorResult> res{result(0.5, 1), result(0.25, 2)};
  const auto ed = stratify(res, toks, lex, StrataKey::edit_distance);
  REQUIRE(ed.strata.size() == 1);
  CHECK(ed.strata[0].label == "0");
  CHECK(ed.strata[0].n == 2);
  CHECK(ed.total == 2);

  CHECK(length_diff_label(-1) == "shorter by 1");
  const auto ld = stratify({result(0.5, 1)}, {tok("3", "a", 24, ph("k æ", inv), "cat")}, lex, StrataKey::length_diff);
  REQUIRE(ld.strata.size() == 1);
  CHECK(ld.strata[0].label == "shorter by 1");

  std::vector<VocalizationToken> aged;
  std::vector<PosteriorResult> aged_res;
  const std::vector<double> probs{0.5, 0.25, 0.125, 0.5, 0.5, 0.25, 0.0625, 1.0};
  for (std::size_t i = 0; i < probs.size(); ++i) {
    aged.push_back(tok("a" + std::to_string(i), "a", i < 3 ? 13 : 20, ph("k æ t", inv), "cat"));
    aged_res.push_back(result(probs[i], 1));
  }
  const auto ages = stratify(aged_res, aged, lex, StrataKey::age_bin, 6);
  REQUIRE(ages.strata.size() == 2);
  CHECK(ages.strata[0].label == "12-17");
  CHECK(ages.strata[0].n == 3);
  CHECK(ages.strata[1].n == 5);
  CHECK(ages.strata[0].mean_surprisal == doctest::Approx((1.0 + 2.0 + 3.0) / 3));
  CHECK(ages.strata[1].mean_surprisal == doctest::Approx((1.0 + 1.0 + 2.0 + 4.0 + 0.0) / 5));
  // Sample sd of {1, 2, 3} is 1.
  CHECK(ages.strata[0].sem == doctest::Approx(1.0 / std::sqrt(3.0)));
}

TEST_CASE("property: strata counts sum to the total") {
  const auto inv = testsupport::toy_inventory();
  std::mt19937_64 rng(64);
  Lexicon::Entries e;
  for (int w = 0; w < 8; ++w) e["w" + std::to_string(w)] = {testsupport::random_string(inv.size(), 1, 4, rng)};
  const Lexicon lex(e);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<VocalizationToken> toks;
    std::vector<PosteriorResult> res;
    const auto n = 1 + rng() % 40;
    for (std::size_t i = 0; i < n; ++i) {
      toks.push_back(tok("t" + std::to_string(i), "c" + std::to_string(rng() % 3), static_cast<int>(12 + rng() % 36),
                         testsupport::random_string(inv.size(), 1, 5, rng), lex.words()[rng() % lex.size()]));
      res.push_back(result(1.0 / static_cast<double>(1 + rng() % 10), 1 + rng() % 5));
    }
    for (auto key : {StrataKey::edit_distance, StrataKey::length_diff, StrataKey::age_bin, StrataKey::child}) {
      const auto rep = stratify(res, toks, lex, key);
      std::size_t sum = 0;
      for (const auto& s : rep.strata) sum += s.n;
      CHECK(sum == n);
      CHECK(rep.total == n);
      for (std::size_t k = 1; k < rep.strata.size(); ++k) CHECK(rep.strata[k - 1].order <= rep.strata[k].order);
    }
  }
}

TEST_CASE("crossfit on one partition and on interchangeable models") {
  const auto inv = testsupport::toy_inventory();
  auto lex = std::make_shared<const Lexicon>(
      Lexicon({{"cat", {ph("k æ t", inv)}}, {"dog", {ph("d oʊ g", inv)}}, {"go", {ph("g oʊ", inv)}}}));
  auto prior = std::make_shared<const UniformPrior>(lex->words());
  auto rec = std::make_shared<const Recognizer>(lex, prior, Likelihood::edit(2.0));
  const std::vector<VocalizationToken> test{tok("1", "a", 20, ph("k æ", inv), "cat"),
                                            tok("2", "a", 20, ph("g oʊ", inv), "go"),
                                            tok("3", "a", 20, ph("d æ g", inv), std::string("dog"))};
  const auto single = crossfit_matrix({{"a", rec}}, {{"a", test}});
  CHECK(single.mean_surprisal.rows() == 1);
  CHECK(single.mean_surprisal.cols() == 1);

  const auto twin = crossfit_matrix({{"a", rec}, {"b", rec}, {"c", rec}}, {{"a", test}, {"b", test}});
  REQUIRE(twin.labels == std::vector<std::string>{"a", "b"});
  CHECK_FALSE(twin.warnings.empty());
  CHECK(twin.mean_surprisal(0, 0) == twin.mean_surprisal(0, 1));
  CHECK(diagonal_best_count(twin.mean_surprisal) == 0);

  CrossfitOptions threaded;
  threaded.threads = 4;
  CHECK(crossfit_matrix({{"a", rec}, {"b", rec}}, {{"a", test}, {"b", test}}, threaded).mean_surprisal ==
        crossfit_matrix({{"a", rec}, {"b", rec}}, {{"a", test}, {"b", test}}).mean_surprisal);
}

TEST_CASE("diagonal counting requires a strict minimum") {
  Matrix m(3, 3);
  m << 1, 2, 3,  //
      2, 2, 3,   //
      3, 2, 1;
  CHECK(diagonal_best_count(m) == 2);
}

TEST_CASE("Monte Carlo best match") {
  Matrix six = Matrix::Constant(6, 6, 5.0);
  six.diagonal().setConstant(1.0);
  const auto r = monte_carlo_best_match(six, 10000, 7);
  CHECK(r.statistic == 6.0);
  const double hits = r.p_value * 10001 - 1;
  // (1/6)^6 * 10000 is about 0.21 expected hits.
  CHECK(hits >= -1e-9);
  CHECK(hits <= 2.0 + 1e-9);

  Matrix three = Matrix::Constant(3, 3, 5.0);
  three.diagonal().setConstant(1.0);
  const auto r3 = monte_carlo_best_match(three, 20000, 8);
  CHECK(std::abs(r3.p_value - 1.0 / 27) < 4 * std::sqrt((1.0 / 27) * (26.0 / 27) / 20000));

  Matrix none = Matrix::Constant(3, 3, 1.0);
  none.diagonal().setConstant(5.0);
  CHECK(monte_carlo_best_match(none, 1000, 9).p_value == 1.0);
  CHECK(monte_carlo_best_match(six, 500, 11).p_value == monte_carlo_best_match(six, 500, 11).p_value);
  CHECK(r.method == ComparisonMethod::monte_carlo);
}

TEST_SUITE_END();
