#include "wordrec/likelihood.hpp"

#include "wordrec/text.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace wordrec {

int edit_distance(const PhonemeString& a, const PhonemeString& b) {
  const std::size_t m = a.size(), n = b.size();
  std::vector<int> prev(n + 1), cur(n + 1);
  for (std::size_t j = 0; j <= n; ++j) prev[j] = static_cast<int>(j);
  for (std::size_t i = 1; i <= m; ++i) {
    cur[0] = static_cast<int>(i);
    for (std::size_t j = 1; j <= n; ++j) {
      const int sub = prev[j - 1] + (a[i - 1] == b[j - 1] ? 0 : 1);
      cur[j] = std::min({sub, prev[j] + 1, cur[j - 1] + 1});
    }
    std::swap(prev, cur);
  }
  return prev[n];
}

int min_edit_distance(const std::vector<PhonemeString>& citations, const PhonemeString& d) {
  if (citations.empty()) throw std::invalid_argument("min_edit_distance: no citation forms");
  int best = edit_distance(citations.front(), d);
  for (std::size_t i = 1; i < citations.size() && best > 0; ++i) best = std::min(best, edit_distance(citations[i], d));
  return best;
}

EditDistanceLikelihood::EditDistanceLikelihood(double b) : beta(b) {
  if (!(b > 0) || !std::isfinite(b)) throw std::invalid_argument("EditDistanceLikelihood: beta must be positive");
}

double edit_likelihood(const EditDistanceLikelihood& model, std::string_view word, const PhonemeString& d,
                       const Lexicon& lexicon) {
  return std::exp(-model.beta * min_edit_distance(lexicon.pronunciations(word), d));
}

double lattice_cost(const ArcCosts& arcs, const PhonemeString& citation, const PhonemeString& child,
                    PathAccumulation acc) {
  const std::size_t m = citation.size(), n = child.size();
  const int eps = arcs.epsilon();
  // Log weights (= -cost) so both semirings share the -inf zero.
  Matrix lw = Matrix::Constant(static_cast<Eigen::Index>(m + 1), static_cast<Eigen::Index>(n + 1), -kInf);
  lw(0, 0) = 0.0;
  auto plus = [acc](double a, double b) { return acc == PathAccumulation::sum ? log_add(a, b) : std::max(a, b); };
  for (std::size_t i = 0; i <= m; ++i) {
    for (std::size_t j = 0; j <= n; ++j) {
      if (i == 0 && j == 0) continue;
      double v = -kInf;
      if (i > 0 && j > 0) v = plus(v, lw(i - 1, j - 1) - arcs.cost(citation[i - 1], child[j - 1]));
      if (i > 0) v = plus(v, lw(i - 1, j) - arcs.cost(citation[i - 1], eps));
      if (j > 0) v = plus(v, lw(i, j - 1) - arcs.cost(eps, child[j - 1]));
      lw(i, j) = v;
    }
  }
  const double total = lw(m, n);
  return total == -kInf ? kInf : -total;
}

double path_sum(const PairModel& pm, const PhonemeString& citation, const PhonemeString& child) {
  return lattice_cost(ArcCosts::from_pair_model(pm), citation, child, PathAccumulation::sum);
}

WfstLikelihood::WfstLikelihood(const PairModel& pm, double lam)
    : WfstLikelihood(ArcCosts::from_pair_model(pm), lam, PathAccumulation::sum) {}

WfstLikelihood::WfstLikelihood(ArcCosts a, double lam, PathAccumulation acc)
    : arcs(std::move(a)), lambda(lam), accumulation(acc) {
  if (!(lam >= 0) || !std::isfinite(lam)) throw std::invalid_argument("WfstLikelihood: lambda must be >= 0");
}

double min_path_cost(const WfstLikelihood& model, const std::vector<PhonemeString>& citations,
                     const PhonemeString& d) {
  double best = kInf;
  for (const auto& c : citations) best = std::min(best, lattice_cost(model.arcs, c, d, model.accumulation));
  return best;
}

double wfst_likelihood(const WfstLikelihood& model, std::string_view word, const PhonemeString& d,
                       const Lexicon& lexicon) {
  const double theta = min_path_cost(model, lexicon.pronunciations(word), d);
  if (theta == kInf) return 0.0;
  if (model.lambda == 0.0) return 1.0;
  return std::exp(-model.lambda * theta);
}

// --- EM ----------------------------------------------------------------------------

double accumulate_expected_counts(const Matrix& log_joint, const PhonemeString& c, const PhonemeString& d,
                                  Matrix& counts) {
  const auto m = static_cast<Eigen::Index>(c.size()), n = static_cast<Eigen::Index>(d.size());
  const int eps = static_cast<int>(log_joint.rows() - 1);
  Matrix fwd = Matrix::Constant(m + 1, n + 1, -kInf);
  Matrix bwd = Matrix::Constant(m + 1, n + 1, -kInf);
  fwd(0, 0) = 0.0;
  for (Eigen::Index i = 0; i <= m; ++i)
    for (Eigen::Index j = 0; j <= n; ++j) {
      if (i == 0 && j == 0) continue;
      double v = -kInf;
      if (i > 0 && j > 0) v = log_add(v, fwd(i - 1, j - 1) + log_joint(c[i - 1], d[j - 1]));
      if (i > 0) v = log_add(v, fwd(i - 1, j) + log_joint(c[i - 1], eps));
      if (j > 0) v = log_add(v, fwd(i, j - 1) + log_joint(eps, d[j - 1]));
      fwd(i, j) = v;
    }
  bwd(m, n) = 0.0;
  for (Eigen::Index i = m; i >= 0; --i)
    for (Eigen::Index j = n; j >= 0; --j) {
      if (i == m && j == n) continue;
      double v = -kInf;
      if (i < m && j < n) v = log_add(v, bwd(i + 1, j + 1) + log_joint(c[i], d[j]));
      if (i < m) v = log_add(v, bwd(i + 1, j) + log_joint(c[i], eps));
      if (j < n) v = log_add(v, bwd(i, j + 1) + log_joint(eps, d[j]));
      bwd(i, j) = v;
    }
  const double z = fwd(m, n);
  if (z == -kInf) return z;
  for (Eigen::Index i = 0; i <= m; ++i)
    for (Eigen::Index j = 0; j <= n; ++j) {
      if (fwd(i, j) == -kInf) continue;
      if (i < m && j < n) counts(c[i], d[j]) += std::exp(fwd(i, j) + log_joint(c[i], d[j]) + bwd(i + 1, j + 1) - z);
      if (i < m) counts(c[i], eps) += std::exp(fwd(i, j) + log_joint(c[i], eps) + bwd(i + 1, j) - z);
      if (j < n) counts(eps, d[j]) += std::exp(fwd(i, j) + log_joint(eps, d[j]) + bwd(i, j + 1) - z);
    }
  return z;
}

EmResult em_train_pair_model(const std::vector<AlignmentPair>& pairs, std::size_t symbols, const EmTrainConfig& cfg) {
  if (cfg.max_iters < 1) throw std::invalid_argument("em: max_iters must be >= 1");
  if (!(cfg.tol > 0)) throw std::invalid_argument("em: tol must be positive");
  if (cfg.learning_rate != 1.0) throw std::invalid_argument("em: learning rate is fixed at 1.0");
  if (cfg.floor < 0) throw std::invalid_argument("em: floor must be >= 0");
  if (pairs.empty()) throw std::invalid_argument("em: no training pairs");

  EmResult result;
  std::vector<const AlignmentPair*> used;
  for (const auto& p : pairs) {
    for (const auto* s : {&p.first, &p.second})
      for (int id : s->syms)
        if (id < 0 || static_cast<std::size_t>(id) >= symbols) throw std::invalid_argument("em: symbol id out of range");
    if (p.first.empty() && p.second.empty()) {
      ++result.skipped_pairs;
      continue;
    }
    used.push_back(&p);
  }
  if (result.skipped_pairs)
    result.warnings.push_back("skipped " + std::to_string(result.skipped_pairs) + " pair(s) with both strings empty");
  if (used.empty()) throw std::invalid_argument("em: no usable training pairs");

  const auto n = static_cast<Eigen::Index>(symbols + 1);
  Matrix permitted = Matrix::Ones(n, n);
  permitted(n - 1, n - 1) = 0.0;

  PairModel model = PairModel::uniform(symbols);
  const double npairs = static_cast<double>(used.size());
  for (int it = 0; it < cfg.max_iters; ++it) {
    const Matrix log_joint = model.joint().array().log().matrix();
    Matrix counts = Matrix::Zero(n, n);
    double ll = 0.0;
    for (const auto* p : used) ll += accumulate_expected_counts(log_joint, p->first, p->second, counts);
    if (!result.log_likelihood.empty() && (ll - result.log_likelihood.back()) / npairs < cfg.tol) {
      result.log_likelihood.push_back(ll);
      result.converged = true;
      break;
    }
    result.log_likelihood.push_back(ll);
    counts += cfg.floor * permitted;
    counts(n - 1, n - 1) = 0.0;
    model = PairModel(counts / counts.sum());
    result.iterations = it + 1;
  }
  result.model = std::move(model);
  return result;
}

// --- scale search --------------------------------------------------------------------

std::vector<double> ScaleGrid::values() const {
  if (!(step > 0) || hi < lo || !std::isfinite(lo) || !std::isfinite(hi))
    throw std::invalid_argument("scale grid: need lo <= hi and step > 0");
  const auto k = std::llround((hi - lo) / step);
  std::vector<double> out;
  // Snapped so that 0:2:0.1 yields 1.2 rather than 1.2000000000000002.
  for (long long i = 0; i <= k; ++i) out.push_back(std::round((lo + static_cast<double>(i) * step) * 1e12) / 1e12);
  return out;
}

ScaleGrid ScaleGrid::parse(std::string_view spec) {
  const auto f = split_on(spec, ':');
  if (f.size() != 3) throw std::invalid_argument("scale grid must be lo:hi:step");
  ScaleGrid g{std::stod(f[0]), std::stod(f[1]), std::stod(f[2])};
  (void)g.values();
  return g;
}

namespace {

double gold_log_posterior(const ScoredToken& t, double scale) {
  Vector lw = t.log_prior;
  if (scale != 0.0)
    for (Eigen::Index i = 0; i < lw.size(); ++i) lw[i] -= t.cost[i] == kInf ? kInf : scale * t.cost[i];
  const double z = log_sum_exp(lw);
  if (!std::isfinite(z)) return -kInf;
  return lw[static_cast<Eigen::Index>(t.gold)] - z;
}

}  // namespace

ScaleFit fit_scale_parameter(const std::vector<ScoredToken>& dev, const ScaleGrid& grid, ScaleObjective objective) {
  if (dev.empty()) throw std::invalid_argument("fit_scale_parameter: empty dev set");
  ScaleFit fit;
  fit.grid = grid.values();
  for (double s : fit.grid) {
    double acc = 0.0;
    for (const auto& t : dev) {
      const double lp = gold_log_posterior(t, s);
      acc += objective == ScaleObjective::mean_log_posterior ? lp : std::exp(lp);
    }
    fit.scores.push_back(acc / static_cast<double>(dev.size()));
  }
  std::size_t arg = 0;
  for (std::size_t i = 1; i < fit.scores.size(); ++i)
    if (fit.scores[i] > fit.scores[arg]) arg = i;
  fit.best = fit.grid[arg];

  fit.on_boundary = fit.grid.size() > 1 && (arg == 0 || arg + 1 == fit.grid.size());
  constexpr double slack = 1e-12;
  for (std::size_t i = 1; i <= arg; ++i)
    if (fit.scores[i] < fit.scores[i - 1] - slack) fit.unimodal = false;
  for (std::size_t i = arg + 1; i < fit.scores.size(); ++i)
    if (fit.scores[i] > fit.scores[i - 1] + slack) fit.unimodal = false;
  if (fit.on_boundary)
    fit.warnings.push_back("best scale " + format_double(fit.best) + " lies on the grid boundary");
  if (!fit.unimodal) fit.warnings.push_back("dev scores are not unimodal over the grid");
  return fit;
}

}  // namespace wordrec
