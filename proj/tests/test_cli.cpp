#include <doctest.h>

#include <unistd.h>

#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "stageskip/cli.hpp"
#include "stageskip/io.hpp"

using namespace stageskip;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct TempDir {
  fs::path path;
  TempDir() {
    path = fs::temp_directory_path() /
           ("stageskip_cli_" + std::to_string(::getpid()) + "_" + std::to_string(counter()++));
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
  static int& counter() {
    static int c = 0;
    return c;
  }
  std::string file(const std::string& name) const { return (path / name).string(); }
};

const std::string kData = std::string(STAGESKIP_SOURCE_DIR) + "/data/desk_bench.jsonl";
const std::string kPlan = std::string(STAGESKIP_SOURCE_DIR) + "/data/stage_plan.json";

// small model and few samples keep the CLI round-trips quick
std::vector<std::string> with_model(std::vector<std::string> args) {
  std::vector<std::string> out{"--blocks", "2",     "--d-model", "16", "--heads", "2",
                               "--d-ff",   "32",    "--model-seed", "5", "--dataset", kData,
                               "--stage-plan", kPlan, "--samples", "6", "--threads", "2"};
  std::vector<std::string> merged{args[0]};
  merged.insert(merged.end(), out.begin(), out.end());
  merged.insert(merged.end(), args.begin() + 1, args.end());
  return merged;
}

}  // namespace

TEST_CASE("unknown subcommands and missing files fail with exit 1") {
  CHECK(cli::dispatch({"frobnicate"}) != 0);
  CHECK(cli::dispatch({}) != 0);
  TempDir dir;
  CHECK(cli::dispatch({"importance", "--dataset", "/no/such/file.jsonl", "--stage-plan", kPlan,
                       "--out", dir.file("t.json")}) == 1);
  CHECK(cli::dispatch({"eval", "--dataset", kData, "--stage-plan", "/no/such/plan.json",
                       "--out", dir.file("r.json")}) == 1);
}

TEST_CASE("importance then search then eval round-trips through files") {
  TempDir dir;
  std::string table = dir.file("importance.json");
  CHECK(cli::dispatch(with_model({"importance", "--out", table})) == 0);
  REQUIRE(fs::exists(table));
  io::ImportanceFile imp = io::load_importance(table);
  CHECK(imp.global.sublayer_count() == 4);
  CHECK(imp.global.sample_count == 6);

  CHECK(cli::dispatch(with_model({"search", "--table", table, "--epsilon", "1.0", "--grid-step",
                                  "2", "--out-dir", dir.path.string()})) == 0);
  std::string result_path = dir.file("search_result.json");
  std::string config_path = dir.file("skip_config.json");
  REQUIRE(fs::exists(result_path));
  REQUIRE(fs::exists(config_path));
  SearchResult result = io::load_search_result(result_path);
  CHECK(result.budgets.size() == 3);

  // reference (full-layer, early exit off)
  std::string ref = dir.file("reference.json");
  CHECK(cli::dispatch(with_model(
            {"eval", "--no-early-exit", "--label", "full", "--out", ref})) == 0);
  EvalReport ref_report = io::load_eval_report(ref);
  REQUIRE(ref_report.speedup.has_value());
  CHECK(*ref_report.speedup == 1.0);

  // searched config, evaluated with the search's own profiling settings
  std::string rep = dir.file("searched.json");
  CHECK(cli::dispatch(with_model({"eval", "--skip-config", config_path, "--reference", ref,
                                  "--label", "searched", "--out", rep})) == 0);
  EvalReport report = io::load_eval_report(rep);
  CHECK(report.speedup.has_value());
  CHECK(report.skip_budgets == result.budgets);
  // the search's feasibility contract holds end to end
  CHECK(report.accuracy >= result.target_accuracy);
  CHECK(fs::exists(dir.file("searched.csv")));

  // merge both reports
  std::string csv = dir.file("comparison.csv");
  std::string svg = dir.file("scatter.svg");
  CHECK(cli::dispatch({"report", "--inputs", ref, rep, "--out", csv, "--svg", svg}) == 0);
  CHECK(io::read_file(csv).find("searched") != std::string::npos);
  CHECK(io::read_file(svg).find("<svg") != std::string::npos);
}

TEST_CASE("eval without a reference omits speedup but succeeds") {
  TempDir dir;
  std::string rep = dir.file("r.json");
  CHECK(cli::dispatch(with_model({"eval", "--budgets", "2", "2", "0", "--table",
                                  dir.file("t.json"), "--out", rep})) == 1);  // table missing

  std::string table = dir.file("t.json");
  CHECK(cli::dispatch(with_model({"importance", "--out", table})) == 0);
  CHECK(cli::dispatch(with_model({"eval", "--budgets", "2", "2", "0", "--table", table, "--out",
                                  rep})) == 0);
  EvalReport report = io::load_eval_report(rep);
  CHECK(!report.speedup.has_value());
  CHECK(report.skip_budgets == std::vector<int>{2, 2, 0});
}

TEST_CASE("sweep emits one row per grid budget for a single stage") {
  TempDir dir;
  std::string table = dir.file("t.json");
  CHECK(cli::dispatch(with_model({"importance", "--out", table})) == 0);
  std::string out = dir.file("sweep.json");
  CHECK(cli::dispatch(with_model({"sweep", "--table", table, "--stage", "3", "--grid-step", "1",
                                  "--max-budget", "2", "--out", out})) == 0);
  json j = json::parse(io::read_file(out));
  CHECK(j.at("mode") == "stage");
  CHECK(j.at("stage") == 3);
  REQUIRE(j.at("rows").size() == 3);
  CHECK(j.at("rows")[2].at("budget") == 2);
  CHECK(fs::exists(dir.file("sweep.csv")));
}

TEST_CASE("run dumps a transcript for one question") {
  TempDir dir;
  std::string out = dir.file("transcript.json");
  CHECK(cli::dispatch(with_model({"run", "--id", "desk0002", "--out", out})) == 0);
  json j = json::parse(io::read_file(out));
  CHECK(j.at("question_id") == "desk0002");
  REQUIRE(j.at("stages").size() == 3);
  for (const auto& st : j.at("stages")) {
    CHECK(st.at("decode_len").get<int>() <= 24);
    CHECK(st.contains("exit_reason"));
  }
}

TEST_CASE("a run-config file provides defaults that flags override") {
  TempDir dir;
  std::string cfg = dir.file("run.json");
  io::atomic_write(cfg, std::string(R"({
    "model": {"n_blocks": 2, "d_model": 16, "n_heads": 2, "d_ff": 32, "rng_seed": 5},
    "dataset": ")") + kData + R"(",
    "stage_plan": ")" + kPlan + R"(",
    "samples": 4,
    "early_exit": {"enabled": false},
    "threads": 2
  })");

  std::string rep1 = dir.file("c1.json");
  CHECK(cli::dispatch({"eval", "--config", cfg, "--out", rep1}) == 0);
  EvalReport a = io::load_eval_report(rep1);
  CHECK(a.sample_count == 4);
  REQUIRE(a.speedup.has_value());  // config file disabled early exit

  // explicit flag overrides the config file's sample count
  std::string rep2 = dir.file("c2.json");
  CHECK(cli::dispatch({"eval", "--config", cfg, "--samples", "2", "--out", rep2}) == 0);
  CHECK(io::load_eval_report(rep2).sample_count == 2);

  // without the config file the same invocation lacks a dataset
  CHECK(cli::dispatch({"eval", "--out", dir.file("c3.json")}) == 1);
}

TEST_CASE("weight export and reuse give identical evaluations") {
  TempDir dir;
  std::string weights = dir.file("model.bin");
  std::string rep1 = dir.file("a.json");
  std::string rep2 = dir.file("b.json");
  CHECK(cli::dispatch(with_model({"eval", "--no-early-exit", "--export-weights", weights,
                                  "--out", rep1})) == 0);
  REQUIRE(fs::exists(weights));
  // same eval, model loaded from the container instead of synthesized
  CHECK(cli::dispatch(with_model({"eval", "--no-early-exit", "--weights", weights, "--out",
                                  rep2})) == 0);
  EvalReport a = io::load_eval_report(rep1);
  EvalReport b = io::load_eval_report(rep2);
  CHECK(a.accuracy == b.accuracy);
  CHECK(a.mean_modeled_latency == b.mean_modeled_latency);
}
