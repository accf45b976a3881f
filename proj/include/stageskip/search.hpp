#pragma once

#include <span>
#include <vector>

#include "stageskip/errors.hpp"
#include "stageskip/latency.hpp"

namespace stageskip {

struct SearchSettings {
  // Allowed accuracy drop in percentage points; the target is computed once
  // from the full model and held fixed across iterations.
  double epsilon_points = 1.0;
  int grid_step = 2;
  // Largest budget in the grid; -1 picks the largest multiple of grid_step
  // strictly below the sub-layer count (skipping everything is never useful).
  int max_budget = -1;
  bool profile_with_early_exit = true;
  // Re-measure stage decode latencies after each fixed budget instead of
  // ranking once up front.
  bool rerank_stages = false;
  LatencySource latency_source = LatencySource::Modeled;

  void validate() const {
    if (grid_step <= 0) throw UserError("search: grid step must be positive");
    if (epsilon_points < 0.0) throw UserError("search: epsilon must be non-negative");
  }
};

struct EvalOutcome {
  double accuracy = 0.0;
  double mean_latency = 0.0;
  double mean_decode_tokens = 0.0;
};

// What the search needs from an evaluation backend: run the validation set
// under a per-stage budget vector. Implemented over the real pipeline by
// DatasetEvaluator (eval.hpp) and by scripted stubs in tests.
class BudgetEvaluator {
 public:
  virtual ~BudgetEvaluator() = default;
  virtual int stage_count() const = 0;
  virtual int sublayer_count() const = 0;
  virtual EvalOutcome evaluate(const std::vector<int>& budgets) = 0;
  // Total decode-phase latency per stage, summed over the validation set.
  virtual std::vector<double> stage_decode_latency(const std::vector<int>& budgets) = 0;
};

struct ProfileRow {
  int budget = 0;
  double accuracy = 0.0;
  double mean_latency = 0.0;
  double mean_decode_tokens = 0.0;
};

struct StageProfile {
  int stage = 0;
  std::vector<ProfileRow> rows;
};

struct SearchIteration {
  int stage = 0;
  StageProfile profile;
  int chosen_budget = 0;
};

struct SearchResult {
  double baseline_accuracy = 0.0;
  double baseline_latency = 0.0;
  double target_accuracy = 0.0;
  std::vector<int> stage_order;  // slowest first
  std::vector<SearchIteration> iterations;
  std::vector<int> budgets;  // per stage, in stage order 0..K-1
  double final_accuracy = 0.0;
  double final_latency = 0.0;
};

// Budget grid {0, step, 2*step, ..., max_budget}, clamped to the sub-layer
// count.
std::vector<int> make_budget_grid(int sublayer_count, const SearchSettings& settings);

// Stages sorted by full-model decode latency, slowest first; ties keep the
// lower stage index. `fixed_budgets` lets the rerank mode measure under
// already-chosen budgets.
std::vector<int> rank_stages_by_decode_time(BudgetEvaluator& evaluator,
                                            const std::vector<int>& fixed_budgets);

// Accuracy/latency/decode-token rows over the grid for one stage, holding all
// other stages at `fixed_budgets`.
StageProfile profile_stage(BudgetEvaluator& evaluator, int stage, std::span<const int> grid,
                           const std::vector<int>& fixed_budgets);

// Lowest-latency row whose accuracy meets the target. Latency ties prefer the
// larger budget. Throws UserError when no row is feasible (cannot happen when
// the profile's budget-0 row meets the target).
int select_budget(const StageProfile& profile, double target_accuracy);

// Full offline search: baseline once, stages slowest-first, each iteration
// profiles one stage on top of the budgets fixed so far and locks in the
// selected budget.
SearchResult greedy_search(BudgetEvaluator& evaluator, const SearchSettings& settings);

}  // namespace stageskip
