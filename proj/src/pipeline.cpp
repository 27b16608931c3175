#include "wordrec/pipeline.hpp"

#include "wordrec/error.hpp"
#include "wordrec/eval.hpp"
#include "wordrec/parallel.hpp"
#include "wordrec/prior.hpp"
#include "wordrec/recognizer.hpp"
#include "wordrec/text.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <memory>
#include <regex>
#include <set>
#include <sstream>

namespace wordrec {

namespace fs = std::filesystem;
using nlohmann::json;

// --- config ---------------------------------------------------------------------

namespace {

std::string grid_string(const ScaleGrid& g) {
  return format_double(g.lo) + ":" + format_double(g.hi) + ":" + format_double(g.step);
}

std::string objective_string(ScaleObjective o) {
  return o == ScaleObjective::mean_log_posterior ? "mean_log_posterior" : "mean_posterior";
}

template <typename T>
T get_or(const json& j, const char* key, T fallback) {
  if (!j.contains(key)) return fallback;
  try {
    return j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw ValidationError(std::string("config: bad value for '") + key + "': " + e.what());
  }
}

// Splits "kind:value" roster likelihood specs.
struct LikelihoodSpec {
  std::string kind;
  std::optional<double> scale;
};

LikelihoodSpec parse_likelihood_spec(const std::string& s) {
  LikelihoodSpec spec;
  const auto colon = s.find(':');
  spec.kind = s.substr(0, colon);
  if (spec.kind != "none" && spec.kind != "edit" && spec.kind != "wfst")
    throw ValidationError("roster: unknown likelihood '" + s + "'");
  if (colon != std::string::npos) {
    if (spec.kind == "none") throw ValidationError("roster: likelihood 'none' takes no scale");
    try {
      std::size_t used = 0;
      const std::string num = s.substr(colon + 1);
      spec.scale = std::stod(num, &used);
      if (used != num.size() || !(*spec.scale >= 0) || !std::isfinite(*spec.scale)) throw std::invalid_argument(num);
    } catch (const std::exception&) {
      throw ValidationError("roster: bad likelihood scale in '" + s + "'");
    }
  }
  return spec;
}

void check_prior_spec(const std::string& p, const RunConfig& cfg) {
  if (p == "uniform" || p == "unigram" || p == "trigram-continuation" || p == "trigram-context") return;
  if (p.rfind("external:", 0) == 0) {
    const auto name = p.substr(9);
    if (!cfg.external_priors.count(name)) throw ValidationError("roster: external prior '" + name + "' is not declared");
    return;
  }
  throw ValidationError("roster: unknown prior '" + p + "'");
}

}  // namespace

RunConfig RunConfig::from_json(const json& j, fs::path base_dir) {
  static const std::set<std::string> known{
      "inventory",   "lexicon",     "corpus",          "utterances",  "external_priors",     "out",
      "seed",        "threads",     "split",           "min_count",   "beta_grid",           "lambda_grid",
      "scale_sample", "scale_objective", "unigram_pseudocount", "external_floor", "em",  "top_k",
      "roster",      "experiment3", "age_threshold_months", "mc_sims"};
  if (!j.is_object()) throw ValidationError("config: top level must be an object");
  for (const auto& [k, v] : j.items())
    if (!known.count(k)) throw ValidationError("config: unknown key '" + k + "'");

  RunConfig c;
  c.base_dir = std::move(base_dir);
  c.inventory = get_or<std::string>(j, "inventory", "");
  c.lexicon = get_or<std::string>(j, "lexicon", "");
  c.corpus = get_or<std::string>(j, "corpus", "");
  c.utterances = get_or<std::string>(j, "utterances", "");
  c.external_priors = get_or<std::map<std::string, std::string>>(j, "external_priors", {});
  c.out = get_or<std::string>(j, "out", c.out);
  c.seed = get_or<std::uint64_t>(j, "seed", c.seed);
  c.threads = get_or<unsigned>(j, "threads", c.threads);
  if (j.contains("split")) {
    const auto& s = j.at("split");
    c.fractions.train = get_or<double>(s, "train", c.fractions.train);
    c.fractions.validation = get_or<double>(s, "validation", c.fractions.validation);
    c.fractions.test = get_or<double>(s, "test", c.fractions.test);
  }
  c.min_count = get_or<long>(j, "min_count", c.min_count);
  try {
    if (j.contains("beta_grid")) c.beta_grid = ScaleGrid::parse(j.at("beta_grid").get<std::string>());
    if (j.contains("lambda_grid")) c.lambda_grid = ScaleGrid::parse(j.at("lambda_grid").get<std::string>());
  } catch (const std::exception& e) {
    throw ValidationError(std::string("config: bad grid: ") + e.what());
  }
  c.scale_sample = get_or<std::size_t>(j, "scale_sample", c.scale_sample);
  const auto obj = get_or<std::string>(j, "scale_objective", objective_string(c.scale_objective));
  if (obj == "mean_log_posterior") c.scale_objective = ScaleObjective::mean_log_posterior;
  else if (obj == "mean_posterior") c.scale_objective = ScaleObjective::mean_posterior;
  else throw ValidationError("config: unknown scale_objective '" + obj + "'");
  c.unigram_pseudocount = get_or<double>(j, "unigram_pseudocount", c.unigram_pseudocount);
  c.external_floor = get_or<double>(j, "external_floor", c.external_floor);
  if (j.contains("em")) {
    const auto& e = j.at("em");
    for (const auto& [k, v] : e.items())
      if (k != "max_iters" && k != "tol" && k != "floor") throw ValidationError("config: unknown em key '" + k + "'");
    c.em.max_iters = get_or<int>(e, "max_iters", c.em.max_iters);
    c.em.tol = get_or<double>(e, "tol", c.em.tol);
    c.em.floor = get_or<double>(e, "floor", c.em.floor);
  }
  c.top_k = get_or<std::size_t>(j, "top_k", c.top_k);
  if (j.contains("roster")) {
    if (!j.at("roster").is_array()) throw ValidationError("config: roster must be an array");
    for (const auto& r : j.at("roster")) {
      RosterEntry e;
      e.label = get_or<std::string>(r, "label", "");
      e.prior = get_or<std::string>(r, "prior", "");
      e.likelihood = get_or<std::string>(r, "likelihood", "none");
      c.roster.push_back(std::move(e));
    }
  }
  c.experiment3 = get_or<bool>(j, "experiment3", c.experiment3);
  c.age_threshold_months = get_or<int>(j, "age_threshold_months", c.age_threshold_months);
  c.mc_sims = get_or<std::size_t>(j, "mc_sims", c.mc_sims);
  return c;
}

RunConfig RunConfig::load(const std::string& path) {
  json j;
  try {
    j = json::parse(read_file(path));
  } catch (const json::parse_error& e) {
    throw ValidationError("config '" + path + "': " + e.what());
  }
  return from_json(j, fs::absolute(path).parent_path());
}

json RunConfig::to_json() const {
  json j;
  j["inventory"] = inventory;
  j["lexicon"] = lexicon;
  j["corpus"] = corpus;
  j["utterances"] = utterances;
  j["external_priors"] = external_priors;
  j["out"] = out;
  j["seed"] = seed;
  j["threads"] = threads;
  j["split"] = {{"train", fractions.train}, {"validation", fractions.validation}, {"test", fractions.test}};
  j["min_count"] = min_count;
  j["beta_grid"] = grid_string(beta_grid);
  j["lambda_grid"] = grid_string(lambda_grid);
  j["scale_sample"] = scale_sample;
  j["scale_objective"] = objective_string(scale_objective);
  j["unigram_pseudocount"] = unigram_pseudocount;
  j["external_floor"] = external_floor;
  j["em"] = {{"max_iters", em.max_iters}, {"tol", em.tol}, {"floor", em.floor}};
  j["top_k"] = top_k;
  j["roster"] = json::array();
  for (const auto& r : roster) j["roster"].push_back({{"label", r.label}, {"prior", r.prior}, {"likelihood", r.likelihood}});
  j["experiment3"] = experiment3;
  j["age_threshold_months"] = age_threshold_months;
  j["mc_sims"] = mc_sims;
  return j;
}

std::uint64_t RunConfig::hash() const { return fnv1a64(to_json().dump()); }

fs::path RunConfig::resolve(const std::string& p) const {
  const fs::path path(p);
  return path.is_absolute() || base_dir.empty() ? path : base_dir / path;
}

void RunConfig::validate() const {
  auto need = [&](const std::string& p, const char* what) {
    if (p.empty()) throw ValidationError(std::string("config: missing '") + what + "'");
    if (!fs::exists(resolve(p))) throw ValidationError(std::string("config: ") + what + " '" + resolve(p).string() + "' does not exist");
  };
  need(inventory, "inventory");
  need(lexicon, "lexicon");
  need(corpus, "corpus");
  if (!utterances.empty()) need(utterances, "utterances");
  for (const auto& [name, path] : external_priors) need(path, ("external prior " + name).c_str());
  if (out.empty()) throw ValidationError("config: empty output directory");
  if (threads == 0) throw ValidationError("config: threads must be >= 1");
  if (fractions.train < 0 || fractions.validation < 0 || fractions.test < 0 ||
      std::abs(fractions.train + fractions.validation + fractions.test - 1.0) > 1e-9)
    throw ValidationError("config: split fractions must be non-negative and sum to 1");
  if (min_count < 0) throw ValidationError("config: min_count must be >= 0");
  if (scale_sample == 0) throw ValidationError("config: scale_sample must be >= 1");
  if (!(unigram_pseudocount > 0)) throw ValidationError("config: unigram_pseudocount must be > 0");
  if (!(external_floor >= 0)) throw ValidationError("config: external_floor must be >= 0");
  if (em.max_iters < 1 || !(em.tol >= 0) || !(em.floor >= 0)) throw ValidationError("config: bad em settings");
  if (top_k == 0) throw ValidationError("config: top_k must be >= 1");
  if (mc_sims == 0) throw ValidationError("config: mc_sims must be >= 1");
  if (roster.empty()) throw ValidationError("config: roster is empty");
  static const std::regex label_re("[A-Za-z0-9_.+-]+");
  std::set<std::string> labels;
  for (const auto& r : roster) {
    if (!std::regex_match(r.label, label_re))
      throw ValidationError("roster: label '" + r.label + "' must be non-empty and use only [A-Za-z0-9_.+-]");
    if (!labels.insert(r.label).second) throw ValidationError("roster: duplicate label '" + r.label + "'");
    check_prior_spec(r.prior, *this);
    parse_likelihood_spec(r.likelihood);
  }
}

// --- CSV helpers -------------------------------------------------------------------

namespace {

std::string csv_quote(std::string_view s) {
  if (s.find_first_of(",\"\n") == std::string_view::npos) return std::string(s);
  std::string out = "\"";
  for (char ch : s) {
    if (ch == '"') out += '"';
    out += ch;
  }
  return out + '"';
}

std::string num(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  return format_double(v);
}

}  // namespace

std::vector<std::string> parse_csv_line(std::string_view line) {
  std::vector<std::string> fields(1);
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char ch = line[i];
    if (quoted) {
      if (ch == '"' && i + 1 < line.size() && line[i + 1] == '"') {
        fields.back() += '"';
        ++i;
      } else if (ch == '"') {
        quoted = false;
      } else {
        fields.back() += ch;
      }
    } else if (ch == '"') {
      quoted = true;
    } else if (ch == ',') {
      fields.emplace_back();
    } else if (ch != '\r') {
      fields.back() += ch;
    }
  }
  return fields;
}

std::vector<ResultRow> read_results_csv(const std::string& path) {
  const auto text = read_file(path);
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line) || trim(line) != kResultCsvHeader)
    throw ValidationError(path + ": not a result file (header mismatch)");
  std::vector<ResultRow> rows;
  std::size_t lineno = 1;
  auto to_double = [&](const std::string& s) {
    if (s == "inf") return kInf;
    try {
      return std::stod(s);
    } catch (const std::exception&) {
      throw ValidationError(path + ":" + std::to_string(lineno) + ": bad number '" + s + "'");
    }
  };
  while (std::getline(in, line)) {
    ++lineno;
    if (trim(line).empty()) continue;
    const auto f = parse_csv_line(line);
    if (f.size() != 10) throw ValidationError(path + ":" + std::to_string(lineno) + ": expected 10 fields");
    ResultRow r;
    r.token_id = f[0];
    r.child_id = f[1];
    r.age_months = static_cast<int>(to_double(f[2]));
    r.model_id = f[3];
    r.entropy_bits = to_double(f[4]);
    if (!f[5].empty()) {
      r.gold = f[5];
      r.gold_surprisal_bits = to_double(f[6]);
      r.gold_rank = static_cast<std::size_t>(to_double(f[7]));
    }
    r.top1 = f[8];
    r.top1_prob = f[9].empty() ? 0.0 : to_double(f[9]);
    rows.push_back(std::move(r));
  }
  return rows;
}

// --- pipeline ------------------------------------------------------------------------

namespace {

// Collects output files under a staging directory.
class Outputs {
 public:
  explicit Outputs(fs::path dir) : dir_(std::move(dir)) {}
  void put(const std::string& rel, std::string_view content) {
    const auto path = dir_ / rel;
    fs::create_directories(path.parent_path());
    write_file(path.string(), content);
    files_.insert(rel);
  }
  const fs::path& dir() const { return dir_; }
  std::vector<std::string> files() const { return {files_.begin(), files_.end()}; }

 private:
  fs::path dir_;
  std::set<std::string> files_;
};

std::string fill_gap(const std::string& utterance, const std::string& word) {
  for (std::string_view marker : {kGapMarker, std::string_view("<GAP>")}) {
    const auto pos = utterance.find(marker);
    if (pos != std::string::npos) return utterance.substr(0, pos) + word + utterance.substr(pos + marker.size());
  }
  return utterance;
}

// Language-model text contributed by training tokens.
void append_token_text(const VocalizationToken& t, std::vector<std::string>& text) {
  for (const auto& u : t.context_before) text.push_back(u);
  if (t.gloss) text.push_back(fill_gap(t.same_utterance, *t.gloss));
  for (const auto& u : t.context_after) text.push_back(u);
}

std::vector<std::string> words_of(const std::vector<std::string>& utterances) {
  std::vector<std::string> words;
  for (const auto& u : utterances)
    for (auto& w : utterance_tokens(u))
      if (w.front() != '[') words.push_back(std::move(w));
  return words;
}

// Gloss citation form closest to the child form; first listed on ties.
const PhonemeString& closest_citation(const Lexicon& lex, const VocalizationToken& t) {
  const auto& prons = lex.pronunciations(*t.gloss);
  std::size_t best = 0;
  int best_d = edit_distance(prons[0], t.actual_phonemes);
  for (std::size_t i = 1; i < prons.size(); ++i) {
    const int d = edit_distance(prons[i], t.actual_phonemes);
    if (d < best_d) {
      best_d = d;
      best = i;
    }
  }
  return prons[best];
}

std::vector<AlignmentPair> training_pairs(const Lexicon& lex, const std::vector<VocalizationToken>& tokens) {
  std::vector<AlignmentPair> pairs;
  for (const auto& t : tokens)
    if (t.gloss) pairs.emplace_back(closest_citation(lex, t), t.actual_phonemes);
  return pairs;
}

std::vector<VocalizationToken> glossed(const std::vector<VocalizationToken>& tokens, std::size_t limit = SIZE_MAX) {
  std::vector<VocalizationToken> out;
  for (const auto& t : tokens) {
    if (out.size() >= limit) break;
    if (t.gloss) out.push_back(t);
  }
  return out;
}

std::string matrix_csv(const std::vector<std::string>& labels, const Matrix& m) {
  std::string s = "test\\model";
  for (const auto& l : labels) s += ',' + csv_quote(l);
  s += '\n';
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    s += csv_quote(labels[static_cast<std::size_t>(r)]);
    for (Eigen::Index c = 0; c < m.cols(); ++c) s += ',' + num(m(r, c));
    s += '\n';
  }
  return s;
}

std::string strata_key_name(StrataKey k) {
  switch (k) {
    case StrataKey::edit_distance: return "edit_distance";
    case StrataKey::length_diff: return "length_diff";
    case StrataKey::age_bin: return "age_bin";
    case StrataKey::child: return "child";
  }
  return "?";
}

struct ScoredModel {
  RosterEntry entry;
  double scale = 0.0;
  std::string scale_source;  // "fixed", "fitted" or "-"
  // Parallel to the test tokens; nullopt when no candidate was reachable.
  std::vector<std::optional<PosteriorResult>> results;
  std::size_t uninterpretable = 0;
};

class Pipeline {
 public:
  Pipeline(const RunConfig& cfg, Outputs& out) : cfg_(cfg), out_(out) {}

  void stage(const std::string& name, const std::function<void()>& fn) {
    try {
      fn();
    } catch (const StageError&) {
      throw;
    } catch (const ValidationError& e) {
      throw StageError(name, e.what(), true);
    } catch (const std::exception& e) {
      throw StageError(name, e.what(), false);
    }
  }

  void load() {
    inv_ = PhonemeInventory::load(cfg_.resolve(cfg_.inventory).string());
    const Lexicon full = load_lexicon(cfg_.resolve(cfg_.lexicon).string(), inv_);
    auto ing = ingest(cfg_.resolve(cfg_.corpus).string(), full, inv_);
    if (!cfg_.utterances.empty()) {
      std::istringstream in(read_file(cfg_.resolve(cfg_.utterances).string()));
      std::string line;
      while (std::getline(in, line))
        if (!trim(line).empty()) extra_text_.push_back(normalize_speaker(line));
    }
    std::map<std::string, long> counts;
    for (const auto& w : words_of(extra_text_)) ++counts[w];
    for (const auto& t : ing.tokens)
      if (t.gloss) ++counts[*t.gloss];
    lexicon_ = std::make_shared<const Lexicon>(filter_candidate_vocabulary(full, counts, cfg_.min_count, inv_));
    if (lexicon_->empty()) throw ValidationError("candidate vocabulary is empty after filtering");
    std::size_t dropped = 0;
    for (auto& t : ing.tokens) {
      if (t.gloss && !lexicon_->contains(*t.gloss)) {
        ++dropped;
        continue;
      }
      tokens_.push_back(std::move(t));
    }
    if (tokens_.empty()) throw ValidationError("no tokens survive ingestion");
    std::ostringstream s;
    s << "tokens," << tokens_.size() << "\n"
      << "excluded_syllables," << ing.excluded_syllables << "\n"
      << "excluded_gloss," << ing.excluded_gloss + dropped << "\n"
      << "excluded_unintelligible_context," << ing.excluded_unintelligible_context << "\n"
      << "vocabulary," << lexicon_->size() << "\n"
      << "pronunciations," << lexicon_->pronunciation_count() << "\n";
    out_.put("ingest.csv", "field,value\n" + s.str());
    out_.put("models/candidates.tsv", lexicon_->serialize(inv_));
  }

  void split() {
    const auto sp = make_split(tokens_, cfg_.seed, cfg_.fractions);
    for (const auto& w : sp.warnings) warn("split: " + w);
    std::map<std::string, SplitPart> part;
    for (const auto& id : sp.train) part[id] = SplitPart::train;
    for (const auto& id : sp.validation) part[id] = SplitPart::validation;
    for (const auto& id : sp.test) part[id] = SplitPart::test;
    std::string csv = "token_id,split\n";
    static const char* names[] = {"train", "validation", "test"};
    for (const auto& t : tokens_) {
      const auto p = part.at(t.token_id);
      csv += csv_quote(t.token_id) + ',' + names[static_cast<int>(p)] + '\n';
      (p == SplitPart::train ? train_ : p == SplitPart::validation ? val_ : test_).push_back(t);
    }
    out_.put("split.csv", csv);
    std::string strat = "child_id,age_bin,train,validation,test\n";
    for (const auto& [key, n] : sp.stratification)
      strat += csv_quote(key.first) + ',' + std::to_string(key.second) + ',' + std::to_string(n[0]) + ',' +
               std::to_string(n[1]) + ',' + std::to_string(n[2]) + '\n';
    out_.put("split_strata.csv", strat);
    if (test_.empty()) throw ValidationError("the test split is empty");
    for (const auto& t : train_) append_token_text(t, lm_text_);
    lm_text_.insert(lm_text_.end(), extra_text_.begin(), extra_text_.end());
  }

  bool uses(const std::string& kind) const {
    return std::any_of(cfg_.roster.begin(), cfg_.roster.end(),
                       [&](const RosterEntry& r) { return parse_likelihood_spec(r.likelihood).kind == kind; });
  }

  PairModel train_wfst(const std::vector<VocalizationToken>& tokens, const std::string& tag) {
    const auto pairs = training_pairs(*lexicon_, tokens);
    if (pairs.empty()) throw ValidationError("no glossed training tokens for the pair model (" + tag + ")");
    auto em = em_train_pair_model(pairs, inv_.size(), cfg_.em);
    for (const auto& w : em.warnings) warn("em (" + tag + "): " + w);
    std::string log = "iteration,log_likelihood\n";
    for (std::size_t i = 0; i < em.log_likelihood.size(); ++i)
      log += std::to_string(i) + ',' + num(em.log_likelihood[i]) + '\n';
    out_.put("models/em_" + tag + ".csv", log);
    out_.put("models/pair_model_" + tag + ".tsv", em.model.serialize(inv_));
    return std::move(em.model);
  }

  void train() {
    if (uses("wfst")) pair_model_ = train_wfst(train_, "pooled");
  }

  std::shared_ptr<const PriorModel> make_prior(const std::string& spec) {
    if (auto it = priors_.find(spec); it != priors_.end()) return it->second;
    const auto& V = lexicon_->words();
    std::shared_ptr<const PriorModel> p;
    if (spec == "uniform") {
      p = std::make_shared<UniformPrior>(V);
    } else if (spec == "unigram") {
      auto u = std::make_shared<UnigramPrior>(fit_unigram(words_of(lm_text_), V, cfg_.unigram_pseudocount));
      std::string s = "word\tcount\n";
      for (const auto& w : V) {
        auto c = u->counts().find(w);
        s += w + '\t' + num(c == u->counts().end() ? 0.0 : c->second) + '\n';
      }
      out_.put("models/unigram_counts.tsv", s);
      p = u;
    } else if (spec == "trigram-continuation" || spec == "trigram-context") {
      if (!trigram_) {
        std::vector<std::string> w;
        trigram_ = fit_trigram_kn(lm_text_, V, &w);
        for (const auto& m : w) warn("trigram: " + m);
        out_.put("models/trigram_kn.txt", trigram_->serialize());
      }
      p = std::make_shared<TrigramKNPrior>(V, trigram_, spec == "trigram-context" ? TrigramMode::in_context
                                                                                   : TrigramMode::continuation);
    } else {
      const auto name = spec.substr(9);
      p = std::make_shared<ExternalPrior>(
          load_external_priors(cfg_.resolve(cfg_.external_priors.at(name)).string(), V, cfg_.external_floor));
    }
    priors_[spec] = p;
    return p;
  }

  void priors() {
    for (const auto& r : cfg_.roster) make_prior(r.prior);
  }

  Likelihood base_likelihood(const std::string& kind) const {
    if (kind == "edit") return Likelihood::edit(1.0);
    if (kind == "wfst") return Likelihood::wfst(*pair_model_, 1.0);
    return Likelihood::none();
  }

  const std::vector<Vector>& costs(const std::string& kind, bool validation) {
    auto& cache = validation ? val_costs_ : test_costs_;
    auto it = cache.find(kind);
    if (it != cache.end()) return it->second;
    const auto& toks = validation ? dev_ : test_;
    return cache[kind] = candidate_costs(base_likelihood(kind), *lexicon_, toks, cfg_.threads);
  }

  void scales() {
    dev_ = glossed(val_, cfg_.scale_sample);
    std::string table = "label,likelihood,scale,source,on_boundary,unimodal\n";
    std::string curves = "label,scale,score\n";
    for (const auto& r : cfg_.roster) {
      const auto spec = parse_likelihood_spec(r.likelihood);
      ScoredModel m;
      m.entry = r;
      if (spec.kind == "none") {
        m.scale_source = "-";
      } else if (spec.scale) {
        m.scale = *spec.scale;
        m.scale_source = "fixed";
      } else {
        if (dev_.empty()) throw ValidationError("no glossed validation tokens to fit the scale of '" + r.label + "'");
        const auto& prior = *make_prior(r.prior);
        const auto dev = scored_tokens(prior, *lexicon_, dev_, costs(spec.kind, true));
        const auto fit = fit_scale_parameter(dev, spec.kind == "edit" ? cfg_.beta_grid : cfg_.lambda_grid,
                                             cfg_.scale_objective);
        for (const auto& w : fit.warnings) warn("scale (" + r.label + "): " + w);
        for (std::size_t i = 0; i < fit.grid.size(); ++i)
          curves += csv_quote(r.label) + ',' + num(fit.grid[i]) + ',' + num(fit.scores[i]) + '\n';
        m.scale = fit.best;
        m.scale_source = "fitted";
        table += csv_quote(r.label) + ',' + spec.kind + ',' + num(m.scale) + ",fitted," +
                 (fit.on_boundary ? "true" : "false") + ',' + (fit.unimodal ? "true" : "false") + '\n';
        models_.push_back(std::move(m));
        continue;
      }
      table += csv_quote(r.label) + ',' + spec.kind + ',' + num(m.scale) + ',' + m.scale_source + ",,\n";
      models_.push_back(std::move(m));
    }
    out_.put("scales.csv", table);
    out_.put("scale_curves.csv", curves);
  }

  void score() {
    for (auto& m : models_) {
      const auto kind = parse_likelihood_spec(m.entry.likelihood).kind;
      const Recognizer rec(lexicon_, make_prior(m.entry.prior), base_likelihood(kind).with_scale(m.scale));
      const auto& c = costs(kind, false);
      m.results.assign(test_.size(), std::nullopt);
      parallel_for(test_.size(), cfg_.threads, [&](std::size_t i) {
        try {
          m.results[i] = rec.recognize(test_[i], c[i], cfg_.top_k);
        } catch (const std::domain_error&) {
          // every candidate unreachable; left empty
        }
      });
      std::string csv(kResultCsvHeader);
      csv += '\n';
      for (std::size_t i = 0; i < test_.size(); ++i) {
        if (!m.results[i]) {
          ++m.uninterpretable;
          continue;
        }
        csv += result_csv_row(*m.results[i], test_[i], m.entry.label) + '\n';
      }
      if (m.uninterpretable) warn(m.entry.label + ": " + std::to_string(m.uninterpretable) + " test tokens had no reachable candidate");
      out_.put("results/" + m.entry.label + ".csv", csv);
    }
  }

  // Token indices every model could score.
  std::vector<std::size_t> common_indices(bool glossed_only) const {
    std::vector<std::size_t> idx;
    for (std::size_t i = 0; i < test_.size(); ++i) {
      if (glossed_only && !test_[i].gloss) continue;
      if (std::all_of(models_.begin(), models_.end(), [&](const ScoredModel& m) { return m.results[i].has_value(); }))
        idx.push_back(i);
    }
    return idx;
  }

  void experiment1() {
    const auto idx = common_indices(false);
    std::vector<bool> labels;
    for (auto i : idx) labels.push_back(test_[i].intelligible());
    const auto n_pos = static_cast<std::size_t>(std::count(labels.begin(), labels.end(), true));
    if (n_pos == 0 || n_pos == labels.size()) {
      warn("experiment1 skipped: the test split needs both glossed and unglossed tokens");
      out_.put("experiment1.csv", "label,auc,n_pos,n_neg\n");
      return;
    }
    std::string table = "label,auc,n_pos,n_neg\n";
    std::map<std::string, std::vector<double>> scores;
    for (const auto& m : models_) {
      std::vector<double> pos, neg, sc;
      for (auto i : idx) {
        const double h = m.results[i]->entropy_bits;
        (test_[i].intelligible() ? pos : neg).push_back(h);
        sc.push_back(-h);
      }
      const auto roc = intelligibility_auc(pos, neg);
      table += csv_quote(m.entry.label) + ',' + num(roc.auc) + ',' + std::to_string(roc.n_pos) + ',' +
               std::to_string(roc.n_neg) + '\n';
      std::string rc = "threshold,tpr,fpr\n";
      for (std::size_t k = 0; k < roc.tpr.size(); ++k)
        rc += (k == 0 ? std::string("-inf") : num(roc.thresholds[k - 1])) + ',' + num(roc.tpr[k]) + ',' +
              num(roc.fpr[k]) + '\n';
      out_.put("roc/" + m.entry.label + ".csv", rc);
      auc_[m.entry.label] = roc.auc;
      scores[m.entry.label] = std::move(sc);
    }
    out_.put("experiment1.csv", table);
    std::string dl = "model_a,model_b,auc_a,auc_b,z,p_value,n,note\n";
    for (std::size_t a = 0; a < models_.size(); ++a)
      for (std::size_t b = a + 1; b < models_.size(); ++b) {
        const auto& la = models_[a].entry.label;
        const auto& lb = models_[b].entry.label;
        try {
          const auto c = delong_test(scores[la], scores[lb], labels, la, lb);
          dl += csv_quote(la) + ',' + csv_quote(lb) + ',' + num(c.estimate_a) + ',' + num(c.estimate_b) + ',' +
                num(c.statistic) + ',' + num(c.p_value) + ',' + std::to_string(c.n) + ",\n";
        } catch (const std::domain_error& e) {
          dl += csv_quote(la) + ',' + csv_quote(lb) + ',' + num(auc_[la]) + ',' + num(auc_[lb]) + ",,,"
                + std::to_string(labels.size()) + ',' + csv_quote(e.what()) + '\n';
        }
      }
    out_.put("experiment1_delong.csv", dl);
  }

  void experiment2() {
    const auto idx = common_indices(true);
    if (idx.empty()) {
      warn("experiment2 skipped: no glossed test tokens");
      return;
    }
    std::string table = "label,prior,likelihood,scale,mean_surprisal,mean_rank,top1_rate,n,n_infinite\n";
    std::map<std::string, std::vector<double>> surprisals;
    std::vector<VocalizationToken> toks;
    for (auto i : idx) toks.push_back(test_[i]);
    for (const auto& m : models_) {
      std::vector<PosteriorResult> rs;
      for (auto i : idx) rs.push_back(*m.results[i]);
      const auto agg = aggregate_metrics(rs);
      table += csv_quote(m.entry.label) + ',' + csv_quote(m.entry.prior) + ',' +
               csv_quote(parse_likelihood_spec(m.entry.likelihood).kind) + ',' + num(m.scale) + ',' +
               num(agg.mean_surprisal) + ',' + num(agg.mean_rank) + ',' + num(agg.top1_rate) + ',' +
               std::to_string(agg.n) + ',' + std::to_string(agg.n_infinite) + '\n';
      mean_surprisal_[m.entry.label] = agg.mean_surprisal;
      auto& s = surprisals[m.entry.label];
      for (const auto& r : rs) s.push_back(*r.gold_surprisal_bits);
      for (auto key : {StrataKey::edit_distance, StrataKey::length_diff, StrataKey::age_bin, StrataKey::child}) {
        const auto rep = stratify(rs, toks, *lexicon_, key);
        std::string csv = "stratum,order,n,n_infinite,mean_surprisal,sem\n";
        for (const auto& st : rep.strata)
          csv += csv_quote(st.label) + ',' + num(st.order) + ',' + std::to_string(st.n) + ',' +
                 std::to_string(st.n_infinite) + ',' + num(st.mean_surprisal) + ',' + num(st.sem) + '\n';
        out_.put("strata/" + m.entry.label + "." + strata_key_name(key) + ".csv", csv);
      }
    }
    out_.put("experiment2_table.csv", table);

    // Table 1 layout: one row per prior, prior-only metrics first, then each likelihood's posterior metrics.
    std::vector<std::string> prior_specs;
    for (const auto& m : models_)
      if (std::find(prior_specs.begin(), prior_specs.end(), m.entry.prior) == prior_specs.end())
        prior_specs.push_back(m.entry.prior);
    std::string t1 = "prior,likelihood,mean_surprisal,mean_rank,top1_rate,n,n_infinite\n";
    auto row = [&](const std::string& prior, const std::string& lik, const AggregateMetrics& a) {
      t1 += csv_quote(prior) + ',' + csv_quote(lik) + ',' + num(a.mean_surprisal) + ',' + num(a.mean_rank) + ',' +
            num(a.top1_rate) + ',' + std::to_string(a.n) + ',' + std::to_string(a.n_infinite) + '\n';
    };
    for (const auto& ps : prior_specs) {
      const Recognizer prior_only(lexicon_, make_prior(ps), Likelihood::none());
      std::vector<PosteriorResult> rs(idx.size());
      parallel_for(idx.size(), cfg_.threads, [&](std::size_t k) { rs[k] = prior_only.recognize(test_[idx[k]], cfg_.top_k); });
      row(ps, "none", aggregate_metrics(rs));
      for (const auto& m : models_) {
        if (m.entry.prior != ps) continue;
        std::vector<PosteriorResult> mr;
        for (auto i : idx) mr.push_back(*m.results[i]);
        row(ps, m.entry.likelihood, aggregate_metrics(mr));
      }
    }
    out_.put("experiment2_table1.csv", t1);
    std::string tt = "model_a,model_b,mean_a,mean_b,t,p_bonferroni,n,excluded,degenerate\n";
    if (surprisals.size() >= 2)
      for (const auto& c : paired_t_bonferroni(surprisals))
        tt += csv_quote(c.model_a) + ',' + csv_quote(c.model_b) + ',' + num(c.estimate_a) + ',' + num(c.estimate_b) +
              ',' + num(c.statistic) + ',' + num(c.p_value) + ',' + std::to_string(c.n) + ',' +
              std::to_string(c.excluded) + ',' + (c.degenerate ? "true" : "false") + '\n';
    out_.put("experiment2_ttests.csv", tt);
  }

  void crossfit_scheme(const std::string& name, PartitionKey key) {
    auto train_parts = partition(train_, key);
    auto val_parts = partition(val_, key);
    auto test_parts = partition(test_, key);
    std::map<std::string, std::vector<VocalizationToken>> tests, vals;
    for (auto& [label, toks] : test_parts) tests[label] = glossed(toks);
    for (auto& [label, toks] : val_parts) vals[label] = glossed(toks, cfg_.scale_sample);
    std::map<std::string, std::shared_ptr<const Recognizer>> models;
    std::string prior_note;
    for (auto& [label, toks] : train_parts) {
      if (!tests.count(label) || tests[label].empty()) continue;
      if (std::none_of(toks.begin(), toks.end(), [](const auto& t) { return t.intelligible(); })) {
        warn("experiment3 (" + name + "): partition '" + label + "' has no glossed training tokens; excluded");
        continue;
      }
      std::vector<std::string> text;
      for (const auto& t : toks) append_token_text(t, text);
      auto prior = std::make_shared<UnigramPrior>(fit_unigram(words_of(text), lexicon_->words(), cfg_.unigram_pseudocount));
      const auto pm = train_wfst(toks, name + "_" + label);
      models[label] = std::make_shared<Recognizer>(lexicon_, prior, Likelihood::wfst(pm, 1.0));
    }
    for (auto it = tests.begin(); it != tests.end();)
      it = models.count(it->first) ? std::next(it) : tests.erase(it);
    if (models.size() < 2) {
      warn("experiment3 (" + name + ") skipped: fewer than two partitions with training and test data");
      return;
    }
    CrossfitOptions opt;
    opt.threads = cfg_.threads;
    opt.validation = &vals;
    opt.grid = cfg_.lambda_grid;
    const auto cf = crossfit_matrix(models, tests, opt);
    for (const auto& w : cf.warnings) warn("experiment3 (" + name + "): " + w);
    out_.put("experiment3_" + name + "_surprisal.csv", matrix_csv(cf.labels, cf.mean_surprisal));
    out_.put("experiment3_" + name + "_scales.csv", matrix_csv(cf.labels, cf.fitted_scale));
    const auto mc = monte_carlo_best_match(cf.mean_surprisal, cfg_.mc_sims, cfg_.seed);
    out_.put("experiment3_" + name + "_test.csv",
             "partitions,diagonal_best,p_value,n_sims,null_rate\n" + std::to_string(cf.labels.size()) + ',' +
                 num(mc.statistic) + ',' + num(mc.p_value) + ',' + std::to_string(cfg_.mc_sims) + ',' +
                 num(mc.estimate_b) + '\n');
    exp3_lines_.push_back(name + ": " + std::to_string(static_cast<long>(mc.statistic)) + " of " +
                          std::to_string(cf.labels.size()) + " rows best on the diagonal, p = " + num(mc.p_value));
  }

  void experiment3() {
    if (!cfg_.experiment3) return;
    crossfit_scheme("child", PartitionKey::by_child());
    crossfit_scheme("age", PartitionKey::by_age(cfg_.age_threshold_months));
  }

  void manifest() {
    json m;
    m["version"] = std::string(kVersion);
    m["seed"] = cfg_.seed;
    m["config_hash"] = hex(cfg_.hash());
    m["config"] = cfg_.to_json();
    json files = json::object();
    for (const auto& f : out_.files()) files[f] = hex(fnv1a64(read_file((out_.dir() / f).string())));
    m["files"] = files;
    m["warnings"] = warnings_;
    out_.put("manifest.json", m.dump(2) + '\n');
  }

  std::string summary() {
    std::ostringstream s;
    s << "wordrec " << kVersion << "  seed " << cfg_.seed << "  config " << hex(cfg_.hash()) << "\n";
    s << "tokens: " << tokens_.size() << " (train " << train_.size() << ", validation " << val_.size() << ", test "
      << test_.size() << "); vocabulary " << lexicon_->size() << "\n\n";
    s << "label                          scale     AUC    surprisal\n";
    for (const auto& m : models_) {
      char line[160];
      const auto a = auc_.find(m.entry.label);
      const auto su = mean_surprisal_.find(m.entry.label);
      std::snprintf(line, sizeof line, "%-28s %7s  %6s  %9s\n", m.entry.label.c_str(),
                    m.scale_source == "-" ? "-" : num(m.scale).c_str(),
                    a == auc_.end() ? "-" : num(std::round(a->second * 1000) / 1000).c_str(),
                    su == mean_surprisal_.end() ? "-" : num(std::round(su->second * 1000) / 1000).c_str());
      s << line;
    }
    if (!exp3_lines_.empty()) {
      s << "\nper-partition models (Monte Carlo null: each row's entries permuted uniformly)\n";
      for (const auto& l : exp3_lines_) s << "  " << l << "\n";
    }
    if (!warnings_.empty()) {
      s << "\nwarnings:\n";
      for (const auto& w : warnings_) s << "  " << w << "\n";
    }
    return s.str();
  }

  void run() {
    stage("load", [&] { load(); });
    stage("split", [&] { split(); });
    stage("train", [&] { train(); });
    stage("priors", [&] { priors(); });
    stage("scales", [&] { scales(); });
    stage("score", [&] { score(); });
    stage("experiment1", [&] { experiment1(); });
    stage("experiment2", [&] { experiment2(); });
    stage("experiment3", [&] { experiment3(); });
    stage("report", [&] {
      summary_ = summary();
      out_.put("summary.txt", summary_);
      manifest();
    });
  }

  const std::vector<std::string>& warnings() const { return warnings_; }
  const std::string& summary_text() const { return summary_; }

 private:
  static std::string hex(std::uint64_t v) {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
    return buf;
  }
  void warn(std::string w) { warnings_.push_back(std::move(w)); }

  const RunConfig& cfg_;
  Outputs& out_;
  PhonemeInventory inv_;
  std::shared_ptr<const Lexicon> lexicon_;
  std::vector<VocalizationToken> tokens_, train_, val_, test_, dev_;
  std::vector<std::string> extra_text_, lm_text_;
  std::optional<PairModel> pair_model_;
  std::shared_ptr<const KneserNeyTrigram> trigram_;
  std::map<std::string, std::shared_ptr<const PriorModel>> priors_;
  std::map<std::string, std::vector<Vector>> val_costs_, test_costs_;
  std::vector<ScoredModel> models_;
  std::map<std::string, double> auc_, mean_surprisal_;
  std::vector<std::string> exp3_lines_;
  std::vector<std::string> warnings_;
  std::string summary_;
};

}  // namespace

RunReport run_pipeline(const RunConfig& config) {
  try {
    config.validate();
  } catch (const ValidationError& e) {
    throw StageError("config", e.what(), true);
  }
  const fs::path out = config.resolve(config.out);
  fs::path staging = out;
  staging += ".partial";
  fs::path quarantine = out;
  quarantine += ".quarantine";
  try {
    fs::remove_all(staging);
    fs::create_directories(staging);
  } catch (const std::exception& e) {
    throw StageError("setup", e.what(), false);
  }
  Outputs outputs(staging);
  Pipeline p(config, outputs);
  try {
    p.run();
  } catch (...) {
    std::error_code ec;
    fs::remove_all(quarantine, ec);
    fs::rename(staging, quarantine, ec);
    throw;
  }
  try {
    fs::remove_all(out);
    fs::rename(staging, out);
  } catch (const std::exception& e) {
    throw StageError("publish", e.what(), false);
  }
  RunReport report;
  report.out_dir = out;
  report.files = outputs.files();
  report.warnings = p.warnings();
  report.summary = p.summary_text();
  return report;
}

// --- demo ----------------------------------------------------------------------------

std::vector<RosterEntry> default_roster() {
  return {
      {"uniform+edit", "uniform", "edit"},
      {"uniform+wfst", "uniform", "wfst"},
      {"unigram+wfst", "unigram", "wfst"},
      {"trigram-continuation+wfst", "trigram-continuation", "wfst"},
      {"trigram-context+edit", "trigram-context", "edit"},
      {"trigram-context+wfst", "trigram-context", "wfst"},
  };
}

RunConfig write_demo(const fs::path& dir, const DemoOptions& o) {
  auto spec = demo_spec(o.vocab, o.children, o.seed);
  spec.sessions_per_child = o.sessions_per_child;
  spec.tokens_per_session = o.tokens_per_session;
  spec.unintelligible_fraction = o.unintelligible_fraction;
  spec.noise = o.noise;
  const auto corpus = generate_synthetic_corpus(spec, o.training_utterances, o.seed + 1);

  fs::create_directories(dir / "truth");
  write_file((dir / "inventory.tsv").string(), spec.inventory.serialize());
  write_file((dir / "lexicon.tsv").string(), spec.lexicon.serialize(spec.inventory));
  write_file((dir / "corpus.jsonl").string(), serialize_tokens(corpus.tokens, spec.inventory));
  std::string utts;
  for (const auto& u : corpus.training_utterances) utts += u + '\n';
  write_file((dir / "utterances.txt").string(), utts);
  for (const auto& c : spec.children)
    write_file((dir / "truth" / ("pair_model_" + c.id + ".tsv")).string(), c.pair_model.serialize(spec.inventory));

  RunConfig cfg;
  cfg.base_dir = dir;
  cfg.inventory = "inventory.tsv";
  cfg.lexicon = "lexicon.tsv";
  cfg.corpus = "corpus.jsonl";
  cfg.utterances = "utterances.txt";
  cfg.out = "out";
  cfg.seed = o.seed;
  cfg.em.floor = 0.1;
  cfg.roster = default_roster();
  write_file((dir / "config.json").string(), cfg.to_json().dump(2) + '\n');
  return cfg;
}

}  // namespace wordrec
