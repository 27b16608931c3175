#include "wordrec/corpus.hpp"
#include "wordrec/error.hpp"
#include "wordrec/eval.hpp"
#include "wordrec/likelihood.hpp"
#include "wordrec/pipeline.hpp"
#include "wordrec/prior.hpp"
#include "wordrec/text.hpp"

#include <CLI11.hpp>

#include <charconv>
#include <cmath>
#include <filesystem>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <thread>

using namespace wordrec;
namespace fs = std::filesystem;

namespace {

struct Globals {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<unsigned> threads;
  std::string out;
};

struct Inputs {
  std::string inventory;
  std::string lexicon;
};

void add_inputs(CLI::App* app, Inputs& in, bool lexicon = true) {
  app->add_option("--inventory", in.inventory, "Phoneme inventory (symbol<TAB>V|C)")->required();
  if (lexicon) app->add_option("--lexicon", in.lexicon, "Pronunciation lexicon (word<TAB>phonemes)")->required();
}

unsigned thread_count(const Globals& g) { return g.threads.value_or(1); }

std::vector<std::string> read_lines(const std::string& path) {
  std::istringstream in(read_file(path));
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line))
    if (!trim(line).empty()) lines.emplace_back(trim(line));
  return lines;
}

void emit(const std::string& path, const std::string& content) {
  if (path.empty() || path == "-") std::cout << content;
  else write_file(path, content);
}

RunConfig config_with_overrides(const Globals& g) {
  if (g.config.empty()) throw ValidationError("--config is required");
  auto cfg = RunConfig::load(g.config);
  if (g.seed) cfg.seed = *g.seed;
  if (g.threads) cfg.threads = *g.threads;
  if (!g.out.empty()) cfg.out = fs::absolute(g.out).string();
  return cfg;
}

// Result rows grouped by model, in the order the files were given.
std::vector<std::pair<std::string, std::vector<ResultRow>>> load_results(const std::vector<std::string>& paths) {
  std::vector<std::pair<std::string, std::vector<ResultRow>>> out;
  for (const auto& p : paths) {
    auto rows = read_results_csv(p);
    if (rows.empty()) throw ValidationError(p + ": no rows");
    const auto id = rows.front().model_id;
    out.emplace_back(id, std::move(rows));
  }
  return out;
}

// Token ids present in every model's rows.
std::vector<std::string> shared_tokens(const std::vector<std::pair<std::string, std::vector<ResultRow>>>& models,
                                       bool glossed_only) {
  std::map<std::string, std::size_t> seen;
  for (const auto& [id, rows] : models)
    for (const auto& r : rows)
      if (!glossed_only || r.gold) ++seen[r.token_id];
  std::vector<std::string> ids;
  for (const auto& [tok, n] : seen)
    if (n == models.size()) ids.push_back(tok);
  return ids;
}

int eval_experiment1(const std::vector<std::string>& paths, std::ostream& out) {
  const auto models = load_results(paths);
  const auto ids = shared_tokens(models, false);
  std::vector<std::map<std::string, const ResultRow*>> by_id(models.size());
  for (std::size_t m = 0; m < models.size(); ++m)
    for (const auto& r : models[m].second) by_id[m][r.token_id] = &r;
  std::vector<bool> labels;
  for (const auto& id : ids) labels.push_back(by_id[0][id]->gold.has_value());
  std::vector<std::vector<double>> scores(models.size());
  out << "label,auc,n_pos,n_neg\n";
  for (std::size_t m = 0; m < models.size(); ++m) {
    std::vector<double> pos, neg;
    for (const auto& id : ids) {
      const auto* r = by_id[m][id];
      (r->gold ? pos : neg).push_back(r->entropy_bits);
      scores[m].push_back(-r->entropy_bits);
    }
    const auto roc = intelligibility_auc(pos, neg);
    out << models[m].first << ',' << format_double(roc.auc) << ',' << roc.n_pos << ',' << roc.n_neg << '\n';
  }
  if (models.size() > 1) {
    out << "\nmodel_a,model_b,z,p_value\n";
    for (std::size_t a = 0; a < models.size(); ++a)
      for (std::size_t b = a + 1; b < models.size(); ++b) {
        const auto c = delong_test(scores[a], scores[b], labels, models[a].first, models[b].first);
        out << c.model_a << ',' << c.model_b << ',' << format_double(c.statistic) << ','
            << format_double(c.p_value) << '\n';
      }
  }
  return 0;
}

int eval_experiment2(const std::vector<std::string>& paths, std::ostream& out) {
  const auto models = load_results(paths);
  const auto ids = shared_tokens(models, true);
  std::map<std::string, std::vector<double>> surprisals;
  out << "label,mean_surprisal,mean_rank,top1_rate,n,n_infinite\n";
  for (const auto& [name, rows] : models) {
    std::map<std::string, const ResultRow*> idx;
    for (const auto& r : rows) idx[r.token_id] = &r;
    double s = 0, rank = 0, top1 = 0;
    std::size_t finite = 0, inf = 0;
    auto& v = surprisals[name];
    for (const auto& id : ids) {
      const auto* r = idx.at(id);
      v.push_back(r->gold_surprisal_bits);
      if (std::isfinite(r->gold_surprisal_bits)) {
        s += r->gold_surprisal_bits;
        ++finite;
      } else {
        ++inf;
      }
      rank += static_cast<double>(r->gold_rank);
      top1 += r->gold_rank == 1 ? 1.0 : 0.0;
    }
    const double n = static_cast<double>(ids.size());
    out << name << ',' << format_double(finite ? s / static_cast<double>(finite) : NAN) << ','
        << format_double(rank / n) << ',' << format_double(top1 / n) << ',' << ids.size() << ',' << inf << '\n';
  }
  if (surprisals.size() > 1) {
    out << "\nmodel_a,model_b,t,p_bonferroni,n\n";
    for (const auto& c : paired_t_bonferroni(surprisals))
      out << c.model_a << ',' << c.model_b << ',' << format_double(c.statistic) << ','
          << format_double(c.p_value) << ',' << c.n << '\n';
  }
  return 0;
}

int eval_experiment3(const std::string& path, std::size_t sims, std::uint64_t seed, std::ostream& out) {
  std::istringstream in(read_file(path));
  std::string line;
  std::vector<std::vector<double>> rows;
  std::getline(in, line);
  while (std::getline(in, line)) {
    if (trim(line).empty()) continue;
    auto f = parse_csv_line(line);
    std::vector<double> r;
    for (std::size_t i = 1; i < f.size(); ++i) r.push_back(f[i] == "inf" ? kInf : std::stod(f[i]));
    rows.push_back(std::move(r));
  }
  if (rows.empty() || rows.size() != rows.front().size()) throw ValidationError(path + ": expected a square matrix");
  Matrix m(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(rows.size()));
  for (std::size_t r = 0; r < rows.size(); ++r) {
    if (rows[r].size() != rows.size()) throw ValidationError(path + ": ragged matrix");
    for (std::size_t c = 0; c < rows.size(); ++c) m(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = rows[r][c];
  }
  const auto mc = monte_carlo_best_match(m, sims, seed);
  out << "diagonal_best," << format_double(mc.statistic) << "\np_value," << format_double(mc.p_value)
      << "\nn_sims," << sims << '\n';
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Noisy-channel word recognition over phoneme strings"};
  app.require_subcommand(1);
  app.fallthrough();
  Globals g;
  app.add_option("--config", g.config, "Run configuration (JSON)");
  app.add_option("--seed", g.seed, "Override the configured seed");
  app.add_option("--threads", g.threads, "Worker threads")->check(CLI::PositiveNumber);
  app.add_option("--out", g.out, "Output directory (score, demo)");

  // lexicon
  auto* lex = app.add_subcommand("lexicon", "Validate a pronunciation lexicon and build the candidate vocabulary");
  Inputs lex_in;
  add_inputs(lex, lex_in);
  std::string counts_path;
  long min_count = 0;
  std::string lex_out;
  lex->add_option("--counts", counts_path, "word<TAB>count file for the frequency filter");
  lex->add_option("--min-count", min_count, "Minimum corpus count")->check(CLI::NonNegativeNumber);
  lex->add_option("--out", lex_out, "Write the candidate vocabulary here");

  // corpus
  auto* corpus = app.add_subcommand("corpus", "Ingest and split vocalization records");
  corpus->require_subcommand(1);
  Inputs cor_in;
  std::string corpus_path, corpus_out;
  std::vector<double> fractions{0.8, 0.1, 0.1};
  auto* ingest_cmd = corpus->add_subcommand("ingest", "Validate records and apply inclusion rules");
  auto* split_cmd = corpus->add_subcommand("split", "Session-level age-stratified split");
  for (auto* c : {ingest_cmd, split_cmd}) {
    add_inputs(c, cor_in);
    c->add_option("--in", corpus_path, "Corpus (JSON lines)")->required();
    c->add_option("--out", corpus_out, "Output file (default stdout)");
  }
  split_cmd->add_option("--fractions", fractions, "train,validation,test")->delimiter(',')->expected(3);

  // likelihood
  auto* lik = app.add_subcommand("likelihood", "Pair-model training, path costs and scale fitting");
  lik->require_subcommand(1);
  Inputs lik_in;
  std::string pairs_path, model_path, lik_out, citation, child, kind = "wfst", grid_spec, dev_path, prior_kind = "uniform",
                                                                   utt_for_scale;
  EmTrainConfig em;
  auto* train_cmd = lik->add_subcommand("train-wfst", "EM-train a pair model on citation<TAB>child pairs");
  add_inputs(train_cmd, lik_in, false);
  train_cmd->add_option("--pairs", pairs_path, "citation<TAB>child lines, phonemes space-separated")->required();
  train_cmd->add_option("--out", lik_out, "Write the pair model here (default stdout)");
  train_cmd->add_option("--max-iters", em.max_iters);
  train_cmd->add_option("--tol", em.tol);
  train_cmd->add_option("--floor", em.floor);
  auto* cost_cmd = lik->add_subcommand("path-sum", "Path cost of one citation/child pair");
  add_inputs(cost_cmd, lik_in, false);
  cost_cmd->add_option("--model", model_path, "Pair model (omit for unit edit costs)");
  cost_cmd->add_option("--citation", citation)->required();
  cost_cmd->add_option("--child", child)->required();
  auto* scale_cmd = lik->add_subcommand("fit-scale", "Grid-search beta or lambda on glossed dev tokens");
  add_inputs(scale_cmd, lik_in);
  scale_cmd->add_option("--kind", kind)->check(CLI::IsMember({"edit", "wfst"}))->required();
  scale_cmd->add_option("--grid", grid_spec, "lo:hi:step")->required();
  scale_cmd->add_option("--in", dev_path, "Dev tokens (JSON lines)")->required();
  scale_cmd->add_option("--model", model_path, "Pair model (wfst)");
  scale_cmd->add_option("--prior", prior_kind)
      ->check(CLI::IsMember({"uniform", "unigram", "trigram-continuation", "trigram-context"}));
  scale_cmd->add_option("--utterances", utt_for_scale, "Language-model text for non-uniform priors");

  // prior
  auto* prior = app.add_subcommand("prior", "Fit and check priors");
  prior->require_subcommand(1);
  Inputs pr_in;
  std::string utt_path, ext_path, prior_out, tokens_path;
  double pseudocount = 0.001, floor = 1e-10;
  bool check_sums = false;
  auto* uni_cmd = prior->add_subcommand("fit-unigram", "Unigram prior over the candidate vocabulary");
  auto* tri_cmd = prior->add_subcommand("fit-trigram", "Kneser-Ney trigram model");
  for (auto* c : {uni_cmd, tri_cmd}) {
    add_inputs(c, pr_in);
    c->add_option("--utterances", utt_path, "Speaker-tagged utterances, one per line")->required();
    c->add_option("--out", prior_out, "Output file (default stdout)");
  }
  uni_cmd->add_option("--pseudocount", pseudocount)->check(CLI::PositiveNumber);
  auto* check_cmd = prior->add_subcommand("check", "Validate prior distributions");
  add_inputs(check_cmd, pr_in);
  check_cmd->add_option("--external", ext_path, "External prior file");
  check_cmd->add_option("--utterances", utt_path, "Check trigram priors fitted on this text");
  check_cmd->add_option("--in", tokens_path, "Tokens to query the trigram priors with");
  check_cmd->add_option("--floor", floor);
  check_cmd->add_flag("--sums", check_sums, "Verify every distribution sums to 1 within 1e-9");

  // score
  auto* score = app.add_subcommand("score", "Run the configured pipeline: train, score and evaluate");

  // eval
  auto* ev = app.add_subcommand("eval", "Recompute experiment reports from result files");
  ev->require_subcommand(1);
  std::vector<std::string> result_paths;
  std::string matrix_path, eval_out;
  std::size_t sims = 10000;
  auto* e1 = ev->add_subcommand("experiment1", "Intelligibility AUC and DeLong comparisons");
  auto* e2 = ev->add_subcommand("experiment2", "Surprisal, rank and top-1 with paired t-tests");
  auto* e3 = ev->add_subcommand("experiment3", "Monte Carlo best-match test on a crossfit matrix");
  for (auto* c : {e1, e2}) c->add_option("--results", result_paths, "Per-model result CSVs")->required();
  e3->add_option("--results", matrix_path, "Crossfit surprisal matrix CSV")->required();
  e3->add_option("--sims", sims)->check(CLI::PositiveNumber);
  for (auto* c : {e1, e2, e3}) c->add_option("--out", eval_out, "Report file (default stdout)");

  // demo
  auto* demo = app.add_subcommand("demo", "Generate the synthetic demo corpus and run the pipeline on it");
  DemoOptions demo_opts;
  bool generate_only = false;
  demo->add_option("--vocab", demo_opts.vocab);
  demo->add_option("--children", demo_opts.children);
  demo->add_option("--sessions", demo_opts.sessions_per_child);
  demo->add_option("--tokens-per-session", demo_opts.tokens_per_session);
  demo->add_option("--unintelligible", demo_opts.unintelligible_fraction);
  demo->add_option("--noise", demo_opts.noise);
  demo->add_flag("--generate-only", generate_only, "Only write the data files and config");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  try {
    if (lex->parsed()) {
      const auto inv = PhonemeInventory::load(lex_in.inventory);
      const auto lexicon = load_lexicon(lex_in.lexicon, inv);
      std::map<std::string, long> counts;
      if (!counts_path.empty()) {
        for (const auto& l : read_lines(counts_path)) {
          const auto f = split_on(l, '\t');
          long n = 0;
          if (f.size() != 2 || std::from_chars(f[1].data(), f[1].data() + f[1].size(), n).ec != std::errc{})
            throw ValidationError(counts_path + ": expected word<TAB>count, got '" + l + "'");
          counts[f[0]] = n;
        }
      } else {
        for (const auto& w : lexicon.words()) counts[w] = min_count;
      }
      const auto filtered = filter_candidate_vocabulary(lexicon, counts, min_count, inv);
      std::cerr << "words " << lexicon.size() << ", pronunciations " << lexicon.pronunciation_count()
                << "; candidates " << filtered.size() << ", pronunciations " << filtered.pronunciation_count() << '\n';
      if (!lex_out.empty()) emit(lex_out, filtered.serialize(inv));
      return 0;
    }
    if (corpus->parsed()) {
      const auto inv = PhonemeInventory::load(cor_in.inventory);
      const auto lexicon = load_lexicon(cor_in.lexicon, inv);
      const auto res = ingest(corpus_path, lexicon, inv);
      std::cerr << "kept " << res.tokens.size() << "; excluded: syllables " << res.excluded_syllables << ", gloss "
                << res.excluded_gloss << ", unintelligible context " << res.excluded_unintelligible_context << '\n';
      if (ingest_cmd->parsed()) {
        emit(corpus_out, serialize_tokens(res.tokens, inv));
        return 0;
      }
      const SplitFractions fr{fractions[0], fractions[1], fractions[2]};
      if (fr.train < 0 || fr.validation < 0 || fr.test < 0 || std::abs(fr.train + fr.validation + fr.test - 1.0) > 1e-9)
        throw ValidationError("--fractions must be non-negative and sum to 1");
      const auto sp = make_split(res.tokens, g.seed.value_or(1), fr);
      for (const auto& w : sp.warnings) std::cerr << "warning: " << w << '\n';
      std::string csv = "token_id,split\n";
      for (const auto& id : sp.train) csv += id + ",train\n";
      for (const auto& id : sp.validation) csv += id + ",validation\n";
      for (const auto& id : sp.test) csv += id + ",test\n";
      emit(corpus_out, csv);
      return 0;
    }
    if (lik->parsed()) {
      const auto inv = PhonemeInventory::load(lik_in.inventory);
      if (train_cmd->parsed()) {
        std::vector<AlignmentPair> pairs;
        for (const auto& l : read_lines(pairs_path)) {
          const auto f = split_on(l, '\t');
          if (f.size() != 2) throw ValidationError(pairs_path + ": expected citation<TAB>child, got '" + l + "'");
          pairs.emplace_back(parse_phonemes(f[0], inv), parse_phonemes(f[1], inv));
        }
        if (pairs.empty()) throw ValidationError(pairs_path + ": no pairs");
        const auto res = em_train_pair_model(pairs, inv.size(), em);
        for (const auto& w : res.warnings) std::cerr << "warning: " << w << '\n';
        std::cerr << "iterations " << res.iterations << (res.converged ? " (converged)" : " (not converged)")
                  << ", final log-likelihood " << format_double(res.log_likelihood.back()) << '\n';
        emit(lik_out, res.model.serialize(inv));
        return 0;
      }
      if (cost_cmd->parsed()) {
        const auto arcs = model_path.empty() ? ArcCosts::unit_edit(inv.size())
                                             : ArcCosts::from_pair_model(PairModel::load(model_path, inv));
        const auto c = parse_phonemes(citation, inv), d = parse_phonemes(child, inv);
        std::cout << "edit_distance," << edit_distance(c, d) << "\npath_sum,"
                  << format_double(lattice_cost(arcs, c, d, PathAccumulation::sum)) << "\nbest_path,"
                  << format_double(lattice_cost(arcs, c, d, PathAccumulation::best)) << '\n';
        return 0;
      }
      const auto lexicon = std::make_shared<const Lexicon>(load_lexicon(lik_in.lexicon, inv));
      std::vector<VocalizationToken> dev;
      for (auto& t : ingest(dev_path, *lexicon, inv).tokens)
        if (t.gloss) dev.push_back(std::move(t));
      std::shared_ptr<const PriorModel> p;
      if (prior_kind == "uniform") {
        p = std::make_shared<UniformPrior>(lexicon->words());
      } else {
        if (utt_for_scale.empty()) throw ValidationError("--prior " + prior_kind + " needs --utterances");
        std::vector<std::string> utts;
        for (const auto& l : read_lines(utt_for_scale)) utts.push_back(normalize_speaker(l));
        if (prior_kind == "unigram") {
          std::vector<std::string> words;
          for (const auto& u : utts)
            for (auto& w : utterance_tokens(u)) words.push_back(std::move(w));
          p = std::make_shared<UnigramPrior>(fit_unigram(words, lexicon->words()));
        } else {
          p = std::make_shared<TrigramKNPrior>(lexicon->words(), fit_trigram_kn(utts, lexicon->words()),
                                               prior_kind == "trigram-context" ? TrigramMode::in_context
                                                                               : TrigramMode::continuation);
        }
      }
      Likelihood l = Likelihood::edit(1.0);
      if (kind == "wfst") {
        if (model_path.empty()) throw ValidationError("--kind wfst needs --model");
        l = Likelihood::wfst(PairModel::load(model_path, inv), 1.0);
      }
      const auto fit = fit_scale(l, ScaleGrid::parse(grid_spec), dev, *p, *lexicon, thread_count(g));
      for (const auto& w : fit.warnings) std::cerr << "warning: " << w << '\n';
      std::cout << "scale,score\n";
      for (std::size_t i = 0; i < fit.grid.size(); ++i)
        std::cout << format_double(fit.grid[i]) << ',' << format_double(fit.scores[i]) << '\n';
      std::cout << "best," << format_double(fit.best) << '\n';
      return 0;
    }
    if (prior->parsed()) {
      const auto inv = PhonemeInventory::load(pr_in.inventory);
      const auto lexicon = load_lexicon(pr_in.lexicon, inv);
      std::vector<std::string> utts;
      if (!utt_path.empty())
        for (const auto& l : read_lines(utt_path)) utts.push_back(normalize_speaker(l));
      if (check_cmd->parsed()) {
        if (ext_path.empty() && utt_path.empty()) throw ValidationError("prior check needs --external or --utterances");
        double worst = 0.0;
        std::size_t checked = 0;
        auto track = [&](const Vector& v) {
          worst = std::max(worst, std::abs(v.sum() - 1.0));
          if ((v.array() < 0).any()) worst = kInf;
          ++checked;
        };
        if (!ext_path.empty()) {
          const auto ext = load_external_priors(ext_path, lexicon.words(), floor);
          for (const auto& [id, dist] : ext.table()) track(dist);
        }
        if (!utt_path.empty()) {
          const auto lm = fit_trigram_kn(utts, lexicon.words());
          std::vector<PriorContext> ctxs;
          if (!tokens_path.empty())
            for (const auto& t : ingest(tokens_path, lexicon, inv).tokens) ctxs.push_back(prior_context(t));
          else
            ctxs.push_back({});
          for (auto mode : {TrigramMode::continuation, TrigramMode::in_context}) {
            const TrigramKNPrior p(lexicon.words(), lm, mode);
            for (const auto& c : ctxs) track(p.distribution(c));
          }
        }
        std::cout << "distributions," << checked << "\nmax_abs_sum_error," << format_double(worst) << '\n';
        if (check_sums && !(worst <= 1e-9)) {
          std::cerr << "error: a distribution does not sum to 1 within 1e-9\n";
          return 2;
        }
        return 0;
      }
      if (uni_cmd->parsed()) {
        std::vector<std::string> words;
        for (const auto& u : utts)
          for (auto& w : utterance_tokens(u)) words.push_back(std::move(w));
        const auto p = fit_unigram(words, lexicon.words(), pseudocount);
        const auto dist = p.distribution({});
        std::string out = "word\tprobability\n";
        for (std::size_t i = 0; i < lexicon.size(); ++i)
          out += lexicon.words()[i] + '\t' + format_double(dist[static_cast<Eigen::Index>(i)]) + '\n';
        emit(prior_out, out);
        return 0;
      }
      std::vector<std::string> warnings;
      const auto lm = fit_trigram_kn(utts, lexicon.words(), &warnings);
      for (const auto& w : warnings) std::cerr << "warning: " << w << '\n';
      emit(prior_out, lm->serialize());
      return 0;
    }
    if (score->parsed()) {
      const auto report = run_pipeline(config_with_overrides(g));
      std::cout << report.summary;
      return 0;
    }
    if (ev->parsed()) {
      std::ostringstream report;
      if (e1->parsed()) eval_experiment1(result_paths, report);
      else if (e2->parsed()) eval_experiment2(result_paths, report);
      else eval_experiment3(matrix_path, sims, g.seed.value_or(1), report);
      emit(eval_out, report.str());
      return 0;
    }
    if (demo->parsed()) {
      const fs::path dir = fs::absolute(g.out.empty() ? "demo" : g.out);
      demo_opts.seed = g.seed.value_or(1);
      auto cfg = write_demo(dir, demo_opts);
      std::cerr << "demo data written to " << dir.string() << '\n';
      if (generate_only) return 0;
      if (g.threads) cfg.threads = *g.threads;
      const auto report = run_pipeline(cfg);
      std::cout << report.summary;
      return 0;
    }
  } catch (const StageError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return e.validation() ? 2 : 3;
  } catch (const ValidationError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 3;
  }
  return 0;
}
