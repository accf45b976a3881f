#include <doctest.h>

#include <algorithm>
#include <vector>

#include "stageskip/rng.hpp"
#include "stageskip/search.hpp"
#include "support/scripted_evaluator.hpp"

using namespace stageskip;
using testsupport::OracleSearch;
using testsupport::ScriptedEvaluator;
using testsupport::ScriptedStage;
using testsupport::oracle_greedy_search;

namespace {

std::vector<int> grid_to(int max_budget, int step = 2) {
  std::vector<int> g;
  for (int k = 0; k <= max_budget; k += step) g.push_back(k);
  return g;
}

// Random scripted 3-stage setup over a shared grid. Budget-0 rows always have
// zero accuracy drop, so the search target stays reachable.
ScriptedEvaluator random_evaluator(Rng& rng, int sublayers, const std::vector<int>& grid) {
  std::vector<ScriptedStage> stages;
  for (int s = 0; s < 3; ++s) {
    ScriptedStage st;
    st.prompt_len = 10 + static_cast<double>(rng.next_below(30));
    st.acc_drop.push_back(0.0);
    st.decode_tokens.push_back(5 + static_cast<double>(rng.next_below(40)));
    double drop = 0.0;
    for (size_t i = 1; i < grid.size(); ++i) {
      drop += rng.next_unit() * 0.04;  // mostly increasing degradation
      st.acc_drop.push_back(drop);
      st.decode_tokens.push_back(5 + static_cast<double>(rng.next_below(60)));
    }
    stages.push_back(std::move(st));
  }
  return ScriptedEvaluator(sublayers, grid, std::move(stages), 0.6);
}

}  // namespace

TEST_CASE("budget grid covers every step and honors the cap") {
  SearchSettings s;
  s.grid_step = 2;
  // 44 sub-layers: defaults to {0, 2, ..., 42}, 21 non-zero candidates
  std::vector<int> grid = make_budget_grid(44, s);
  REQUIRE(grid.size() == 22);
  CHECK(grid.front() == 0);
  CHECK(grid.back() == 42);

  s.max_budget = 6;
  grid = make_budget_grid(44, s);
  CHECK(grid == std::vector<int>{0, 2, 4, 6});

  s.grid_step = 3;
  s.max_budget = -1;
  grid = make_budget_grid(8, s);
  CHECK(grid == std::vector<int>{0, 3, 6});
}

TEST_CASE("select_budget picks the fastest feasible row") {
  // worked example shape: budgets 0/2/4/6, target 50.7%
  StageProfile p;
  p.stage = 1;
  p.rows = {{0, 0.517, 0.331, 40.0},
            {2, 0.512, 0.310, 41.0},
            {4, 0.509, 0.2986, 43.0},
            {6, 0.501, 0.305, 49.0}};
  CHECK(select_budget(p, 0.507) == 4);
}

TEST_CASE("select_budget falls back to zero when nothing else is feasible") {
  StageProfile p;
  p.rows = {{0, 0.5, 1.0, 1.0}, {2, 0.2, 0.9, 1.0}, {4, 0.1, 0.8, 1.0}};
  CHECK(select_budget(p, 0.5) == 0);
}

TEST_CASE("select_budget never picks latency-inflated rows") {
  // latency rises again past budget 4; those rows lose the argmin even when
  // everything is feasible
  StageProfile p;
  p.rows = {{0, 0.6, 1.00, 1.0},
            {2, 0.6, 0.90, 1.0},
            {4, 0.6, 0.85, 1.0},
            {6, 0.6, 1.20, 1.0},
            {8, 0.6, 1.50, 1.0}};
  CHECK(select_budget(p, -1.0) == 4);
}

TEST_CASE("latency ties prefer more skipping") {
  StageProfile p;
  p.rows = {{0, 0.6, 1.0, 1.0}, {2, 0.6, 0.9, 1.0}, {4, 0.6, 0.9, 1.0}};
  CHECK(select_budget(p, 0.0) == 4);
}

TEST_CASE("an empty feasible set is an error") {
  StageProfile p;
  p.rows = {{0, 0.4, 1.0, 1.0}, {2, 0.3, 0.9, 1.0}};
  CHECK_THROWS_AS(select_budget(p, 0.9), UserError);
  StageProfile empty;
  CHECK_THROWS_AS(select_budget(empty, 0.0), UserError);
}

TEST_CASE("stages rank by decode time, slowest first") {
  auto grid = grid_to(4);
  // stage 2 (index 1) generates 10x the tokens of the others
  std::vector<ScriptedStage> stages;
  for (int s = 0; s < 3; ++s) {
    ScriptedStage st;
    st.prompt_len = 20;
    st.acc_drop = {0.0, 0.0, 0.0};
    double len = s == 1 ? 100.0 : 10.0;
    st.decode_tokens = {len, len, len};
    stages.push_back(st);
  }
  ScriptedEvaluator ev(8, grid, stages, 0.6);
  std::vector<int> order = rank_stages_by_decode_time(ev, {0, 0, 0});
  CHECK(order[0] == 1);

  // identical decode time: ascending stage index
  for (auto& st : stages) st.decode_tokens = {10.0, 10.0, 10.0};
  ScriptedEvaluator tied(8, grid, stages, 0.6);
  CHECK(rank_stages_by_decode_time(tied, {0, 0, 0}) == std::vector<int>{0, 1, 2});

  // one-stage plan
  ScriptedEvaluator single(8, grid, {stages[0]}, 0.6);
  CHECK(rank_stages_by_decode_time(single, {0}) == std::vector<int>{0});
}

TEST_CASE("profile rows mirror the scripted responses") {
  auto grid = grid_to(4);
  ScriptedStage st;
  st.prompt_len = 10;
  st.acc_drop = {0.0, 0.1, 0.2};
  st.decode_tokens = {10, 12, 14};
  ScriptedEvaluator ev(8, grid, {st}, 0.6);

  StageProfile profile = profile_stage(ev, 0, grid, {0});
  REQUIRE(profile.rows.size() == 3);
  CHECK(profile.rows[0].accuracy == doctest::Approx(0.6));
  CHECK(profile.rows[1].accuracy == doctest::Approx(0.5));
  CHECK(profile.rows[2].accuracy == doctest::Approx(0.4));
  for (size_t i = 0; i < grid.size(); ++i) {
    EvalOutcome expected = ev.evaluate({grid[i]});
    CHECK(profile.rows[i].mean_latency == expected.mean_latency);
    CHECK(profile.rows[i].mean_decode_tokens == expected.mean_decode_tokens);
  }

  // grid {0}: only the baseline row
  std::vector<int> baseline_grid{0};
  StageProfile base = profile_stage(ev, 0, baseline_grid, {0});
  REQUIRE(base.rows.size() == 1);
  CHECK(base.rows[0].budget == 0);
}

TEST_CASE("epsilon zero with strictly degrading accuracy keeps all layers") {
  auto grid = grid_to(6);
  std::vector<ScriptedStage> stages;
  for (int s = 0; s < 3; ++s) {
    ScriptedStage st;
    st.prompt_len = 10;
    st.acc_drop = {0.0, 0.01, 0.02, 0.03};
    st.decode_tokens = {10, 10, 10, 10};
    stages.push_back(st);
  }
  ScriptedEvaluator ev(8, grid, stages, 0.6);
  SearchSettings settings;
  settings.epsilon_points = 0.0;
  settings.grid_step = 2;
  settings.max_budget = 6;
  SearchResult result = greedy_search(ev, settings);
  CHECK(result.budgets == std::vector<int>{0, 0, 0});
  CHECK(result.final_accuracy == doctest::Approx(0.6));
}

TEST_CASE("greedy choices match the exhaustive per-iteration oracle") {
  Rng rng(7321);
  for (int trial = 0; trial < 60; ++trial) {
    int sublayers = 8 + 2 * static_cast<int>(rng.next_below(5));
    SearchSettings settings;
    settings.grid_step = 2;
    settings.epsilon_points = 1.0 + rng.next_unit() * 9.0;
    std::vector<int> grid = make_budget_grid(sublayers, settings);
    ScriptedEvaluator ev = random_evaluator(rng, sublayers, grid);

    SearchResult result = greedy_search(ev, settings);
    OracleSearch expected = oracle_greedy_search(ev, grid, settings.epsilon_points);

    CHECK(result.stage_order == expected.visit_order);
    REQUIRE(result.iterations.size() == expected.choices.size());
    for (size_t i = 0; i < expected.choices.size(); ++i) {
      CHECK(result.iterations[i].chosen_budget == expected.choices[i]);
    }
    CHECK(result.budgets == expected.budgets);

    // feasibility: re-evaluating the returned budgets meets the target
    EvalOutcome re = ev.evaluate(result.budgets);
    CHECK(re.accuracy >= result.target_accuracy);
    CHECK(re.accuracy == result.final_accuracy);

    // per-iteration optimality is replayable from the stored profiles
    for (const SearchIteration& it : result.iterations) {
      CHECK(select_budget(it.profile, result.target_accuracy) == it.chosen_budget);
    }
  }
}

TEST_CASE("latency protection excludes token-inflating budgets at any epsilon") {
  auto grid = grid_to(8);
  std::vector<ScriptedStage> stages;
  for (int s = 0; s < 3; ++s) {
    ScriptedStage st;
    st.prompt_len = 10;
    st.acc_drop = {0.0, 0.0, 0.0, 0.0, 0.0};
    // decode length explodes past budget 4, inflating end-to-end latency even
    // though per-step cost keeps falling
    st.decode_tokens = {20, 19, 18, 60, 200};
    stages.push_back(st);
  }
  ScriptedEvaluator ev(8, grid, stages, 0.6);
  SearchSettings settings;
  settings.epsilon_points = 100.0;  // everything is feasible
  settings.grid_step = 2;
  settings.max_budget = 8;
  SearchResult result = greedy_search(ev, settings);
  for (int b : result.budgets) CHECK(b == 4);  // the sweet spot before inflation
  // sanity: inflated rows really were slower in each stored profile
  for (const SearchIteration& it : result.iterations) {
    const auto& rows = it.profile.rows;
    for (const ProfileRow& row : rows) {
      if (row.budget > 4) {
        for (const ProfileRow& other : rows) {
          if (other.budget <= 4) CHECK(row.mean_latency > other.mean_latency);
        }
      }
    }
  }
}

TEST_CASE("a skip-sensitive final stage gets the smallest budget") {
  auto grid = grid_to(8);
  std::vector<ScriptedStage> stages(3);
  for (int s = 0; s < 3; ++s) {
    stages[s].prompt_len = 10;
    stages[s].decode_tokens = {30, 30, 30, 30, 30};
  }
  // stage 1 is robust, stage 2 mildly sensitive, stage 3 collapses quickly
  stages[0].acc_drop = {0.0, 0.001, 0.002, 0.003, 0.004};
  stages[1].acc_drop = {0.0, 0.004, 0.008, 0.012, 0.016};
  stages[2].acc_drop = {0.0, 0.02, 0.08, 0.20, 0.40};
  ScriptedEvaluator ev(8, grid, stages, 0.6);

  SearchSettings settings;
  settings.epsilon_points = 3.0;
  settings.grid_step = 2;
  settings.max_budget = 8;
  SearchResult result = greedy_search(ev, settings);
  CHECK(result.budgets[2] < result.budgets[0]);
  CHECK(result.budgets[0] == 8);  // robust stage takes the whole grid
}

TEST_CASE("the search never rewrites budgets fixed in earlier iterations") {
  Rng rng(99);
  auto grid = grid_to(6);
  ScriptedEvaluator ev = random_evaluator(rng, 8, grid);
  SearchSettings settings;
  settings.grid_step = 2;
  settings.max_budget = 6;
  settings.epsilon_points = 5.0;
  SearchResult result = greedy_search(ev, settings);

  std::vector<int> fixed(3, -1);
  for (size_t i = 0; i < result.iterations.size(); ++i) {
    const SearchIteration& it = result.iterations[i];
    fixed[it.stage] = it.chosen_budget;
    // the final budgets agree with what each iteration locked in
    CHECK(result.budgets[it.stage] == it.chosen_budget);
  }
}
