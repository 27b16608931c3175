#include "wordrec/eval.hpp"

#include "wordrec/parallel.hpp"

#include <boost/math/distributions/students_t.hpp>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <stdexcept>

namespace wordrec {

// --- ROC ---------------------------------------------------------------------------------

RocResult intelligibility_auc(const std::vector<double>& pos, const std::vector<double>& neg) {
  if (pos.empty() || neg.empty()) throw std::invalid_argument("intelligibility_auc: both classes must be non-empty");
  RocResult roc;
  roc.n_pos = pos.size();
  roc.n_neg = neg.size();
  std::vector<double> sp = pos, sn = neg;
  std::sort(sp.begin(), sp.end());
  std::sort(sn.begin(), sn.end());
  std::vector<double> all = sp;
  all.insert(all.end(), sn.begin(), sn.end());
  std::sort(all.begin(), all.end());
  all.erase(std::unique(all.begin(), all.end()), all.end());

  roc.tpr.push_back(0.0);
  roc.fpr.push_back(0.0);
  for (double t : all) {
    const auto tp = std::upper_bound(sp.begin(), sp.end(), t) - sp.begin();
    const auto fp = std::upper_bound(sn.begin(), sn.end(), t) - sn.begin();
    roc.thresholds.push_back(t);
    roc.tpr.push_back(static_cast<double>(tp) / static_cast<double>(sp.size()));
    roc.fpr.push_back(static_cast<double>(fp) / static_cast<double>(sn.size()));
  }
  double auc = 0.0;
  for (std::size_t i = 1; i < roc.tpr.size(); ++i)
    auc += (roc.fpr[i] - roc.fpr[i - 1]) * (roc.tpr[i] + roc.tpr[i - 1]) / 2.0;
  roc.auc = std::clamp(auc, 0.0, 1.0);
  return roc;
}

double mann_whitney_auc(const std::vector<double>& pos, const std::vector<double>& neg) {
  if (pos.empty() || neg.empty()) throw std::invalid_argument("mann_whitney_auc: both classes must be non-empty");
  double s = 0.0;
  for (double x : pos)
    for (double y : neg) s += x > y ? 1.0 : (x == y ? 0.5 : 0.0);
  return s / (static_cast<double>(pos.size()) * static_cast<double>(neg.size()));
}

// --- comparisons --------------------------------------------------------------------------

std::string_view to_string(ComparisonMethod m) {
  switch (m) {
    case ComparisonMethod::delong: return "delong";
    case ComparisonMethod::paired_t: return "paired_t";
    case ComparisonMethod::monte_carlo: return "monte_carlo";
  }
  return "unknown";
}

namespace {

struct Placements {
  Vector v10;  // per positive
  Vector v01;  // per negative
  double auc = 0.0;
};

Placements placements(const std::vector<double>& pos, const std::vector<double>& neg) {
  std::vector<double> sp = pos, sn = neg;
  std::sort(sp.begin(), sp.end());
  std::sort(sn.begin(), sn.end());
  const double m = static_cast<double>(pos.size()), n = static_cast<double>(neg.size());
  Placements out;
  out.v10.resize(static_cast<Eigen::Index>(pos.size()));
  out.v01.resize(static_cast<Eigen::Index>(neg.size()));
  for (std::size_t i = 0; i < pos.size(); ++i) {
    auto [lo, hi] = std::equal_range(sn.begin(), sn.end(), pos[i]);
    out.v10[static_cast<Eigen::Index>(i)] = (static_cast<double>(lo - sn.begin()) + 0.5 * static_cast<double>(hi - lo)) / n;
  }
  for (std::size_t j = 0; j < neg.size(); ++j) {
    auto [lo, hi] = std::equal_range(sp.begin(), sp.end(), neg[j]);
    out.v01[static_cast<Eigen::Index>(j)] = (static_cast<double>(sp.end() - hi) + 0.5 * static_cast<double>(hi - lo)) / m;
  }
  out.auc = out.v10.mean();
  return out;
}

double sample_cov(const Vector& a, const Vector& b) {
  const auto k = a.size();
  if (k < 2) return 0.0;
  return ((a.array() - a.mean()) * (b.array() - b.mean())).sum() / static_cast<double>(k - 1);
}

double two_sided_normal_p(double z) { return std::erfc(std::abs(z) / std::sqrt(2.0)); }

}  // namespace

ModelComparison delong_test(const std::vector<double>& scores_a, const std::vector<double>& scores_b,
                            const std::vector<bool>& labels, std::string model_a, std::string model_b) {
  if (scores_a.size() != labels.size() || scores_b.size() != labels.size())
    throw std::invalid_argument("delong_test: scores and labels must be aligned");
  std::vector<double> pa, na, pb, nb;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    (labels[i] ? pa : na).push_back(scores_a[i]);
    (labels[i] ? pb : nb).push_back(scores_b[i]);
  }
  if (pa.empty() || na.empty()) throw std::invalid_argument("delong_test: both classes must be present");
  const auto a = placements(pa, na), b = placements(pb, nb);
  const double m = static_cast<double>(pa.size()), n = static_cast<double>(na.size());
  const double var = (sample_cov(a.v10, a.v10) + sample_cov(b.v10, b.v10) - 2 * sample_cov(a.v10, b.v10)) / m +
                     (sample_cov(a.v01, a.v01) + sample_cov(b.v01, b.v01) - 2 * sample_cov(a.v01, b.v01)) / n;
  ModelComparison out;
  out.model_a = std::move(model_a);
  out.model_b = std::move(model_b);
  out.method = ComparisonMethod::delong;
  out.estimate_a = a.auc;
  out.estimate_b = b.auc;
  out.n = labels.size();
  const double diff = a.auc - b.auc;
  if (!(var > 1e-300)) {
    if (std::abs(diff) < 1e-15) {
      out.statistic = 0.0;
      out.p_value = 1.0;
      return out;
    }
    throw std::domain_error("delong_test: zero variance estimate with AUC difference " + std::to_string(diff) +
                            " (perfectly separated or constant scores)");
  }
  out.statistic = diff / std::sqrt(var);
  out.p_value = std::clamp(two_sided_normal_p(out.statistic), 0.0, 1.0);
  return out;
}

std::vector<ModelComparison> paired_t_bonferroni(const std::map<std::string, std::vector<double>>& by_model,
                                                 std::size_t m_comparisons) {
  std::vector<std::pair<std::string, const std::vector<double>*>> models;
  for (const auto& [k, v] : by_model) models.emplace_back(k, &v);
  const std::size_t pairs = models.size() * (models.size() - (models.empty() ? 0 : 1)) / 2;
  const double m = static_cast<double>(m_comparisons == 0 ? std::max<std::size_t>(pairs, 1) : m_comparisons);

  std::vector<ModelComparison> out;
  for (std::size_t i = 0; i < models.size(); ++i)
    for (std::size_t j = i + 1; j < models.size(); ++j) {
      const auto& a = *models[i].second;
      const auto& b = *models[j].second;
      if (a.size() != b.size()) throw std::invalid_argument("paired_t: vectors are not aligned");
      std::vector<double> d;
      double sa = 0, sb = 0;
      for (std::size_t k = 0; k < a.size(); ++k) {
        if (!std::isfinite(a[k]) || !std::isfinite(b[k])) continue;
        d.push_back(a[k] - b[k]);
        sa += a[k];
        sb += b[k];
      }
      if (d.size() < 2) throw std::invalid_argument("paired_t: fewer than 2 tokens after exclusions");
      ModelComparison c;
      c.model_a = models[i].first;
      c.model_b = models[j].first;
      c.method = ComparisonMethod::paired_t;
      c.n = d.size();
      c.excluded = a.size() - d.size();
      const double nn = static_cast<double>(d.size());
      c.estimate_a = sa / nn;
      c.estimate_b = sb / nn;
      const double mean = std::accumulate(d.begin(), d.end(), 0.0) / nn;
      double ss = 0;
      for (double x : d) ss += (x - mean) * (x - mean);
      const double sd = std::sqrt(ss / (nn - 1));
      // Relative threshold so floating-point noise in a constant shift counts as zero variance.
      const double scale = std::max(std::abs(mean), 1.0);
      if (sd <= 1e-14 * scale) {
        if (std::abs(mean) <= 1e-14 * scale) {
          c.statistic = 0.0;
          c.p_value = 1.0;
        } else {
          c.statistic = mean > 0 ? kInf : -kInf;
          c.p_value = 0.0;
          c.degenerate = true;
        }
      } else {
        c.statistic = mean / (sd / std::sqrt(nn));
        boost::math::students_t dist(nn - 1);
        const double p = 2.0 * boost::math::cdf(boost::math::complement(dist, std::abs(c.statistic)));
        c.p_value = std::min(1.0, p * m);
      }
      out.push_back(std::move(c));
    }
  return out;
}

// --- aggregates ------------------------------------------------------------------------------

AggregateMetrics aggregate_metrics(const std::vector<PosteriorResult>& results) {
  if (results.empty()) throw std::invalid_argument("aggregate_metrics: no results");
  AggregateMetrics m;
  double s = 0, r = 0;
  std::size_t finite = 0, top1 = 0;
  for (const auto& res : results) {
    if (!res.gold_surprisal_bits || !res.gold_rank)
      throw std::invalid_argument("aggregate_metrics: result '" + res.token_id + "' has no gold word");
    if (std::isfinite(*res.gold_surprisal_bits)) {
      s += *res.gold_surprisal_bits;
      ++finite;
    } else {
      ++m.n_infinite;
    }
    r += static_cast<double>(*res.gold_rank);
    if (*res.gold_rank == 1) ++top1;
  }
  m.n = results.size();
  m.mean_surprisal = finite ? s / static_cast<double>(finite) : kInf;
  m.mean_rank = r / static_cast<double>(m.n);
  m.top1_rate = static_cast<double>(top1) / static_cast<double>(m.n);
  return m;
}

std::string length_diff_label(int diff) {
  if (diff == 0) return "same length";
  return (diff < 0 ? "shorter by " : "longer by ") + std::to_string(std::abs(diff));
}

StratifiedReport stratify(const std::vector<PosteriorResult>& results, const std::vector<VocalizationToken>& tokens,
                          const Lexicon& lexicon, StrataKey key, int age_bin_months) {
  if (results.size() != tokens.size()) throw std::invalid_argument("stratify: results and tokens must be aligned");
  if (age_bin_months < 1) throw std::invalid_argument("stratify: age bin must be >= 1 month");
  struct Acc {
    double order;
    std::vector<double> values;
    std::size_t n = 0, n_inf = 0;
  };
  std::map<std::string, Acc> groups;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    const auto& t = tokens[i];
    if (!t.gloss || !results[i].gold_surprisal_bits)
      throw std::invalid_argument("stratify: token '" + t.token_id + "' has no gold word");
    std::string label;
    double order = 0;
    switch (key) {
      case StrataKey::edit_distance:
      case StrataKey::length_diff: {
        const auto& prons = lexicon.pronunciations(*t.gloss);
        std::size_t best = 0;
        int dist = edit_distance(prons[0], t.actual_phonemes);
        for (std::size_t p = 1; p < prons.size(); ++p) {
          const int dd = edit_distance(prons[p], t.actual_phonemes);
          if (dd < dist) {
            dist = dd;
            best = p;
          }
        }
        if (key == StrataKey::edit_distance) {
          label = std::to_string(dist);
          order = dist;
        } else {
          const int diff = static_cast<int>(t.actual_phonemes.size()) - static_cast<int>(prons[best].size());
          label = length_diff_label(diff);
          order = diff;
        }
        break;
      }
      case StrataKey::age_bin: {
        const int lo = t.age_months / age_bin_months * age_bin_months;
        label = std::to_string(lo) + "-" + std::to_string(lo + age_bin_months - 1);
        order = lo;
        break;
      }
      case StrataKey::child:
        label = t.child_id;
        break;
    }
    auto& g = groups.try_emplace(label, Acc{order, {}}).first->second;
    ++g.n;
    const double s = *results[i].gold_surprisal_bits;
    if (std::isfinite(s)) g.values.push_back(s);
    else ++g.n_inf;
  }
  StratifiedReport rep;
  rep.key = key;
  rep.total = tokens.size();
  for (auto& [label, g] : groups) {
    Stratum s;
    s.label = label;
    s.order = g.order;
    s.n = g.n;
    s.n_infinite = g.n_inf;
    const double k = static_cast<double>(g.values.size());
    if (k > 0) {
      s.mean_surprisal = std::accumulate(g.values.begin(), g.values.end(), 0.0) / k;
      if (k > 1) {
        double ss = 0;
        for (double v : g.values) ss += (v - s.mean_surprisal) * (v - s.mean_surprisal);
        s.sem = std::sqrt(ss / (k - 1)) / std::sqrt(k);
      }
    } else {
      s.mean_surprisal = kInf;
    }
    rep.strata.push_back(std::move(s));
  }
  std::stable_sort(rep.strata.begin(), rep.strata.end(), [](const Stratum& a, const Stratum& b) {
    return a.order != b.order ? a.order < b.order : a.label < b.label;
  });
  return rep;
}

// --- crossfit ----------------------------------------------------------------------------------

CrossfitResult crossfit_matrix(const std::map<std::string, std::shared_ptr<const Recognizer>>& models,
                               const std::map<std::string, std::vector<VocalizationToken>>& tests,
                               const CrossfitOptions& options) {
  CrossfitResult out;
  for (const auto& [label, model] : models) {
    auto it = tests.find(label);
    if (it == tests.end() || it->second.empty()) {
      out.warnings.push_back("partition '" + label + "' has no test tokens; excluded");
      continue;
    }
    out.labels.push_back(label);
  }
  for (const auto& [label, toks] : tests)
    if (!models.count(label)) out.warnings.push_back("partition '" + label + "' has no model; excluded");

  const auto k = static_cast<Eigen::Index>(out.labels.size());
  out.mean_surprisal = Matrix::Zero(k, k);
  out.fitted_scale = Matrix::Zero(k, k);
  for (Eigen::Index col = 0; col < k; ++col) {
    const auto& rec = *models.at(out.labels[static_cast<std::size_t>(col)]);
    for (Eigen::Index row = 0; row < k; ++row) {
      const auto& label = out.labels[static_cast<std::size_t>(row)];
      const auto& test = tests.at(label);
      Likelihood lik = rec.likelihood();
      if (options.validation && options.grid && lik.kind() != Likelihood::Kind::none) {
        auto v = options.validation->find(label);
        if (v != options.validation->end() && !v->second.empty()) {
          const auto fit = fit_scale(lik, *options.grid, v->second, rec.prior(), rec.lexicon(), options.threads);
          lik = lik.with_scale(fit.best);
        }
      }
      out.fitted_scale(row, col) = lik.scale();
      const Recognizer cell = rec.with_likelihood(lik);
      const auto results = cell.recognize_all(test, options.threads);
      double s = 0;
      std::size_t finite = 0;
      for (const auto& r : results) {
        if (!r.gold_surprisal_bits) throw std::invalid_argument("crossfit: test token '" + r.token_id + "' has no gloss");
        if (std::isfinite(*r.gold_surprisal_bits)) {
          s += *r.gold_surprisal_bits;
          ++finite;
        }
      }
      out.mean_surprisal(row, col) = finite ? s / static_cast<double>(finite) : kInf;
    }
  }
  return out;
}

std::size_t diagonal_best_count(const Matrix& m) {
  std::size_t count = 0;
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    bool best = true;
    for (Eigen::Index c = 0; c < m.cols(); ++c)
      if (c != r && m(r, c) <= m(r, r)) best = false;
    if (best) ++count;
  }
  return count;
}

ModelComparison monte_carlo_best_match(const Matrix& m, std::size_t n_sims, std::uint64_t seed) {
  if (m.rows() != m.cols()) throw std::invalid_argument("monte_carlo_best_match: matrix must be square");
  if (n_sims < 1) throw std::invalid_argument("monte_carlo_best_match: n_sims must be >= 1");
  const auto k = m.rows();
  // Under a uniform row permutation the entry landing on the diagonal is a
  // uniformly chosen entry of the row, so only its rank matters.
  std::vector<std::vector<char>> is_strict_min(static_cast<std::size_t>(k));
  for (Eigen::Index r = 0; r < k; ++r) {
    auto& flags = is_strict_min[static_cast<std::size_t>(r)];
    flags.assign(static_cast<std::size_t>(k), 0);
    for (Eigen::Index c = 0; c < k; ++c) {
      bool strict = true;
      for (Eigen::Index o = 0; o < k; ++o)
        if (o != c && m(r, o) <= m(r, c)) strict = false;
      flags[static_cast<std::size_t>(c)] = strict;
    }
  }
  const std::size_t observed = diagonal_best_count(m);
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<Eigen::Index> pick(0, std::max<Eigen::Index>(k - 1, 0));
  std::size_t hits = 0;
  for (std::size_t s = 0; s < n_sims; ++s) {
    std::size_t stat = 0;
    for (Eigen::Index r = 0; r < k; ++r) stat += is_strict_min[static_cast<std::size_t>(r)][static_cast<std::size_t>(pick(rng))];
    if (stat >= observed) ++hits;
  }
  ModelComparison out;
  out.model_a = "diagonal";
  out.model_b = "permuted";
  out.method = ComparisonMethod::monte_carlo;
  out.statistic = static_cast<double>(observed);
  out.p_value = static_cast<double>(hits + 1) / static_cast<double>(n_sims + 1);
  out.n = n_sims;
  out.estimate_a = static_cast<double>(observed);
  out.estimate_b = static_cast<double>(hits) / static_cast<double>(n_sims);
  return out;
}

}  // namespace wordrec
