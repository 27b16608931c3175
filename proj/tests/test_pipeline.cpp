#include "support.hpp"

#include "wordrec/error.hpp"
#include "wordrec/pipeline.hpp"
#include "wordrec/text.hpp"

#include <doctest.h>
#include <json.hpp>

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include <sys/wait.h>

using namespace wordrec;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

DemoOptions small_demo() {
  DemoOptions o;
  o.vocab = 60;
  o.children = 2;
  o.sessions_per_child = 4;
  o.tokens_per_session = 30;
  o.training_utterances = 400;
  return o;
}

RunConfig quick(RunConfig cfg) {
  cfg.experiment3 = false;
  cfg.scale_sample = 100;
  cfg.mc_sims = 200;
  cfg.em.max_iters = 10;
  return cfg;
}

std::size_t distinct_candidates(const fs::path& tsv) {
  std::set<std::string> words;
  std::istringstream in(read_file(tsv.string()));
  std::string line;
  while (std::getline(in, line))
    if (!line.empty()) words.insert(line.substr(0, line.find('\t')));
  return words.size();
}

// Replaces the leaf at `ptr` with a different value of the same type.
json mutated(json j, const json::json_pointer& ptr) {
  auto& v = j[ptr];
  if (v.is_boolean()) v = !v.get<bool>();
  else if (v.is_number_integer() || v.is_number_unsigned()) v = v.get<long long>() + 1;
  else if (v.is_number_float()) v = v.get<double>() * 0.5;
  else if (v.is_string()) {
    const auto s = v.get<std::string>();
    if (s.find(':') != std::string::npos && s.front() != '/') v = "0.5:1.5:0.25";
    else if (s == "mean_log_posterior") v = "mean_posterior";
    else if (s == "mean_posterior") v = "mean_log_posterior";
    else v = s + "x";
  }
  return j;
}

void leaf_pointers(const json& j, const json::json_pointer& at, std::vector<json::json_pointer>& out) {
  if (j.is_object()) {
    for (auto it = j.begin(); it != j.end(); ++it) leaf_pointers(it.value(), at / it.key(), out);
  } else if (j.is_array()) {
    for (std::size_t i = 0; i < j.size(); ++i) leaf_pointers(j[i], at / i, out);
  } else {
    out.push_back(at);
  }
}

int run_cli(const std::string& args) {
  const std::string cmd = std::string(WORDREC_CLI) + " " + args + " >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

}  // namespace

TEST_SUITE_BEGIN("pipeline");

TEST_CASE("uniform prior with a zero scale gives maximal entropy everywhere") {
  testsupport::TempDir dir("pipe");
  auto cfg = quick(write_demo(dir.path(), small_demo()));
  cfg.roster = {{"flat", "uniform", "wfst:0"}};
  const auto report = run_pipeline(cfg);
  const auto out = report.out_dir;
  const auto v = distinct_candidates(out / "models" / "candidates.tsv");
  REQUIRE(v > 1);
  const auto rows = read_results_csv((out / "results" / "flat.csv").string());
  REQUIRE_FALSE(rows.empty());
  for (const auto& r : rows) CHECK(std::abs(r.entropy_bits - std::log2(static_cast<double>(v))) < 1e-9);
  CHECK(fs::exists(out / "manifest.json"));
  CHECK_FALSE(fs::exists(dir.path() / "out.partial"));
}

TEST_CASE("the demo completes and is reproducible across thread counts") {
  testsupport::TempDir dir("pipe");
  auto cfg = quick(write_demo(dir.path(), small_demo()));
  cfg.experiment3 = true;
  cfg.out = "run1";
  const auto first = run_pipeline(cfg);
  cfg.out = "run2";
  cfg.threads = 3;
  const auto second = run_pipeline(cfg);
  REQUIRE(first.files == second.files);
  std::size_t csvs = 0;
  for (const auto& f : first.files) {
    if (!f.ends_with(".csv")) continue;
    ++csvs;
    CHECK_MESSAGE(read_file((first.out_dir / f).string()) == read_file((second.out_dir / f).string()), f);
  }
  CHECK(csvs > 10);
  const auto manifest = json::parse(read_file((first.out_dir / "manifest.json").string()));
  CHECK(manifest["seed"] == 1);
  CHECK(manifest["config_hash"].is_string());
  CHECK(manifest["files"].contains("experiment1.csv"));
}

TEST_CASE("a failing stage quarantines its partial outputs") {
  testsupport::TempDir dir("pipe");
  auto cfg = quick(write_demo(dir.path(), small_demo()));
  write_file(dir.file("corpus.jsonl"), read_file(dir.file("corpus.jsonl")) + "{\"token_id\": 1}\n");
  try {
    run_pipeline(cfg);
    FAIL("expected a stage error");
  } catch (const StageError& e) {
    CHECK(e.stage() == "load");
    CHECK(e.validation());
  }
  CHECK(fs::exists(dir.path() / "out.quarantine"));
  CHECK_FALSE(fs::exists(dir.path() / "out"));
  CHECK_FALSE(fs::exists(dir.path() / "out.partial"));
}

TEST_CASE("config validation") {
  testsupport::TempDir dir("pipe");
  const auto cfg = write_demo(dir.path(), small_demo());
  auto j = cfg.to_json();
  j["surprise"] = 1;
  CHECK_THROWS_AS(RunConfig::from_json(j, dir.path()), ValidationError);

  auto dup = cfg;
  dup.roster.push_back(dup.roster.front());
  CHECK_THROWS_AS(dup.validate(), ValidationError);
  auto bad_spec = cfg;
  bad_spec.roster = {{"x", "bigram", "edit"}};
  CHECK_THROWS_AS(bad_spec.validate(), ValidationError);
  auto missing = cfg;
  missing.corpus = "nope.jsonl";
  CHECK_THROWS_AS(missing.validate(), ValidationError);
  try {
    run_pipeline(missing);
    FAIL("expected a stage error");
  } catch (const StageError& e) {
    CHECK(e.stage() == "config");
    CHECK(e.validation());
  }
}

TEST_CASE("property: the config hash changes exactly when a field changes") {
  testsupport::TempDir dir("pipe");
  const auto cfg = write_demo(dir.path(), small_demo());
  const auto base = cfg.to_json();
  CHECK(RunConfig::from_json(base, dir.path()).hash() == cfg.hash());
  CHECK(RunConfig::from_json(json::parse(base.dump()), dir.path()).hash() == cfg.hash());
  std::vector<json::json_pointer> leaves;
  leaf_pointers(base, json::json_pointer(), leaves);
  REQUIRE(leaves.size() > 20);
  std::set<std::uint64_t> hashes{cfg.hash()};
  for (const auto& ptr : leaves) {
    const auto changed = mutated(base, ptr);
    REQUIRE_MESSAGE(changed != base, ptr.to_string());
    RunConfig c;
    try {
      c = RunConfig::from_json(changed, dir.path());
    } catch (const ValidationError&) {
      continue;
    }
    CHECK_MESSAGE(c.hash() != cfg.hash(), ptr.to_string());
    hashes.insert(c.hash());
  }
  CHECK(hashes.size() > leaves.size() / 2);
}

TEST_SUITE_END();

TEST_SUITE_BEGIN("cli");

TEST_CASE("exit codes") {
  testsupport::TempDir dir("cli");
  CHECK(run_cli("--help") == 0);
  CHECK(run_cli("--no-such-flag") == 2);
  const auto demo_dir = dir.file("demo");
  REQUIRE(run_cli("--out " + demo_dir + " demo --vocab 40 --children 2 --sessions 3 --tokens-per-session 10 --generate-only") ==
          0);
  CHECK(fs::exists(fs::path(demo_dir) / "config.json"));
  const auto inv = demo_dir + "/inventory.tsv", lex = demo_dir + "/lexicon.tsv";
  CHECK(run_cli("lexicon --inventory " + inv + " --lexicon " + lex) == 0);
  CHECK(run_cli("likelihood path-sum --inventory " + inv + " --citation 'a b' --child 'a'") == 0);
  CHECK(run_cli("corpus ingest --inventory " + inv + " --lexicon " + lex + " --in " + demo_dir + "/corpus.jsonl --out " +
                dir.file("ingested.jsonl")) == 0);

  write_file(dir.file("bad.jsonl"), "{\"token_id\": 3}\n");
  CHECK(run_cli("corpus ingest --inventory " + inv + " --lexicon " + lex + " --in " + dir.file("bad.jsonl")) == 2);
  CHECK(run_cli("--config " + dir.file("missing.json") + " score") == 2);

  write_file(dir.file("blocker"), "not a directory\n");
  CHECK(run_cli("prior fit-unigram --inventory " + inv + " --lexicon " + lex + " --utterances " + demo_dir +
                "/utterances.txt --out " + dir.file("blocker") + "/unigram.tsv") == 3);
}

TEST_SUITE_END();
