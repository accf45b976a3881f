#include "stageskip/search.hpp"

#include <algorithm>
#include <numeric>

namespace stageskip {

std::vector<int> make_budget_grid(int sublayer_count, const SearchSettings& settings) {
  settings.validate();
  int max_budget = settings.max_budget;
  if (max_budget < 0) {
    max_budget = sublayer_count - 1;  // default grid never skips everything
  }
  max_budget = std::min(max_budget, sublayer_count);
  std::vector<int> grid;
  for (int k = 0; k <= max_budget; k += settings.grid_step) grid.push_back(k);
  return grid;
}

std::vector<int> rank_stages_by_decode_time(BudgetEvaluator& evaluator,
                                            const std::vector<int>& fixed_budgets) {
  std::vector<double> latency = evaluator.stage_decode_latency(fixed_budgets);
  std::vector<int> order(latency.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](int a, int b) { return latency[a] > latency[b]; });
  return order;
}

StageProfile profile_stage(BudgetEvaluator& evaluator, int stage, std::span<const int> grid,
                           const std::vector<int>& fixed_budgets) {
  StageProfile profile;
  profile.stage = stage;
  for (int k : grid) {
    std::vector<int> budgets = fixed_budgets;
    budgets[stage] = k;
    EvalOutcome outcome = evaluator.evaluate(budgets);
    profile.rows.push_back({k, outcome.accuracy, outcome.mean_latency,
                            outcome.mean_decode_tokens});
  }
  return profile;
}

int select_budget(const StageProfile& profile, double target_accuracy) {
  if (profile.rows.empty()) throw UserError("select_budget: empty profile");
  const ProfileRow* best = nullptr;
  for (const ProfileRow& row : profile.rows) {
    if (row.accuracy < target_accuracy) continue;
    if (best == nullptr || row.mean_latency < best->mean_latency ||
        (row.mean_latency == best->mean_latency && row.budget > best->budget)) {
      best = &row;
    }
  }
  if (best == nullptr) {
    throw UserError("select_budget: no budget meets the target accuracy (epsilon infeasible)");
  }
  return best->budget;
}

SearchResult greedy_search(BudgetEvaluator& evaluator, const SearchSettings& settings) {
  settings.validate();
  const int n_stages = evaluator.stage_count();
  std::vector<int> grid = make_budget_grid(evaluator.sublayer_count(), settings);

  SearchResult result;
  std::vector<int> budgets(n_stages, 0);

  EvalOutcome baseline = evaluator.evaluate(budgets);
  result.baseline_accuracy = baseline.accuracy;
  result.baseline_latency = baseline.mean_latency;
  // Target fixed once from the full model; never rebaselined per iteration.
  result.target_accuracy = baseline.accuracy - settings.epsilon_points / 100.0;

  std::vector<int> order = rank_stages_by_decode_time(evaluator, budgets);

  std::vector<char> searched(n_stages, 0);
  for (int iter = 0; iter < n_stages; ++iter) {
    int stage;
    if (settings.rerank_stages && iter > 0) {
      std::vector<int> current = rank_stages_by_decode_time(evaluator, budgets);
      auto it = std::find_if(current.begin(), current.end(),
                             [&](int s) { return !searched[s]; });
      stage = *it;
    } else {
      stage = order[iter];
    }
    searched[stage] = 1;
    result.stage_order.push_back(stage);

    SearchIteration iteration;
    iteration.stage = stage;
    iteration.profile = profile_stage(evaluator, stage, grid, budgets);
    iteration.chosen_budget = select_budget(iteration.profile, result.target_accuracy);
    budgets[stage] = iteration.chosen_budget;
    result.iterations.push_back(std::move(iteration));
  }

  result.budgets = budgets;
  EvalOutcome final_outcome = evaluator.evaluate(budgets);
  result.final_accuracy = final_outcome.accuracy;
  result.final_latency = final_outcome.mean_latency;
  return result;
}

}  // namespace stageskip
