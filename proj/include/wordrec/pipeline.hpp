#pragma once

#include "wordrec/corpus.hpp"
#include "wordrec/likelihood.hpp"
#include "wordrec/synth.hpp"

#include <json.hpp>

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace wordrec {

inline constexpr std::string_view kVersion = "1.0.0";

/// One recognizer to evaluate.
///   prior:      uniform | unigram | trigram-continuation | trigram-context | external:NAME
///   likelihood: none | edit | wfst | edit:BETA | wfst:LAMBDA
/// A likelihood without an explicit scale has it fitted on validation data.
struct RosterEntry {
  std::string label;
  std::string prior;
  std::string likelihood;

  friend bool operator==(const RosterEntry&, const RosterEntry&) = default;
};

struct RunConfig {
  /// Relative paths are resolved against this directory (the config file's).
  std::filesystem::path base_dir;

  std::string inventory;
  std::string lexicon;
  std::string corpus;
  std::string utterances;  ///< optional extra language-model text, one utterance per line
  std::map<std::string, std::string> external_priors;
  std::string out = "out";

  std::uint64_t seed = 1;
  unsigned threads = 1;
  SplitFractions fractions;
  long min_count = 0;
  ScaleGrid beta_grid{1.5, 4.5, 0.1};
  ScaleGrid lambda_grid{0.0, 2.0, 0.1};
  std::size_t scale_sample = 5000;
  ScaleObjective scale_objective = ScaleObjective::mean_log_posterior;
  double unigram_pseudocount = 0.001;
  double external_floor = 1e-10;
  EmTrainConfig em;
  std::size_t top_k = 5;

  std::vector<RosterEntry> roster;
  bool experiment3 = true;
  int age_threshold_months = 30;
  std::size_t mc_sims = 10000;

  /// Throws ValidationError on unknown keys, bad values or duplicate labels.
  static RunConfig from_json(const nlohmann::json& j, std::filesystem::path base_dir = {});
  static RunConfig load(const std::string& path);
  nlohmann::json to_json() const;
  /// FNV-1a over the canonical JSON form.
  std::uint64_t hash() const;

  std::filesystem::path resolve(const std::string& p) const;
  /// Checks roster syntax and that every referenced input exists.
  void validate() const;
};

/// A pipeline failure, tagged with the stage that raised it.
class StageError : public std::runtime_error {
 public:
  StageError(std::string stage, const std::string& what, bool validation)
      : std::runtime_error("stage '" + stage + "': " + what), stage_(std::move(stage)), validation_(validation) {}
  const std::string& stage() const { return stage_; }
  bool validation() const { return validation_; }

 private:
  std::string stage_;
  bool validation_;
};

struct RunReport {
  std::filesystem::path out_dir;
  std::vector<std::string> files;  ///< relative to out_dir, sorted
  std::vector<std::string> warnings;
  std::string summary;
};

/// Load, split, train, fit, score and evaluate. Outputs are staged next to
/// the output directory and moved into place only on success; on failure
/// the staged files are moved to `<out>.quarantine` and StageError is thrown.
RunReport run_pipeline(const RunConfig& config);

// --- synthetic demo ----------------------------------------------------------------

struct DemoOptions {
  std::size_t vocab = 500;
  std::size_t children = 4;
  int sessions_per_child = 20;
  int tokens_per_session = 250;
  std::size_t training_utterances = 20000;
  double unintelligible_fraction = 0.3;
  double noise = 1.0;
  std::uint64_t seed = 1;
};

/// Writes inventory.tsv, lexicon.tsv, corpus.jsonl, utterances.txt, the
/// planted per-child pair models under truth/, and a ready-to-run
/// config.json into `dir`. Returns the config.
RunConfig write_demo(const std::filesystem::path& dir, const DemoOptions& options);

/// The roster the demo config uses.
std::vector<RosterEntry> default_roster();

// --- result files --------------------------------------------------------------------

/// Quote-aware split of one CSV line.
std::vector<std::string> parse_csv_line(std::string_view line);

/// The subset of a per-token result row the experiment reports need.
struct ResultRow {
  std::string token_id;
  std::string child_id;
  int age_months = 0;
  std::string model_id;
  double entropy_bits = 0.0;
  std::optional<std::string> gold;
  double gold_surprisal_bits = 0.0;
  std::size_t gold_rank = 0;
  std::string top1;
  double top1_prob = 0.0;
};

/// Reads a file written with kResultCsvHeader. Throws ValidationError on a
/// header mismatch or malformed row.
std::vector<ResultRow> read_results_csv(const std::string& path);

}  // namespace wordrec
