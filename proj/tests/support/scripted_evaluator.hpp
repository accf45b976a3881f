#pragma once

// BudgetEvaluator backed by response tables instead of a model: accuracy
// drops add up across stages, decode lengths come from per-stage tables, and
// latency follows the deterministic cost model with stage outputs feeding
// later prompts.

#include <algorithm>
#include <stdexcept>
#include <vector>

#include "stageskip/latency.hpp"
#include "stageskip/search.hpp"

namespace testsupport {

struct ScriptedStage {
  double prompt_len = 20.0;           // stage prompt tokens before prior outputs
  std::vector<double> acc_drop;       // by grid index; [0] must be 0
  std::vector<double> decode_tokens;  // by grid index
};

class ScriptedEvaluator : public stageskip::BudgetEvaluator {
 public:
  ScriptedEvaluator(int sublayers, std::vector<int> grid, std::vector<ScriptedStage> stages,
                    double base_accuracy, stageskip::LatencyModel lm = {})
      : sublayers_(sublayers),
        grid_(std::move(grid)),
        stages_(std::move(stages)),
        base_accuracy_(base_accuracy),
        lm_(lm) {}

  int stage_count() const override { return static_cast<int>(stages_.size()); }
  int sublayer_count() const override { return sublayers_; }

  stageskip::EvalOutcome evaluate(const std::vector<int>& budgets) override {
    double acc = base_accuracy_;
    double latency = 0.0, tokens = 0.0, carried = 0.0;
    for (size_t s = 0; s < stages_.size(); ++s) {
      size_t idx = grid_index(budgets[s]);
      acc -= stages_[s].acc_drop[idx];
      double len = stages_[s].decode_tokens[idx];
      double prefill = stages_[s].prompt_len + carried;
      latency += prefill * sublayers_ * lm_.c_prefill +
                 len * (lm_.c_base + (sublayers_ - budgets[s]) * lm_.c_sub);
      carried += len;  // generated text lengthens every later prompt
      tokens += len;
    }
    return {std::clamp(acc, 0.0, 1.0), latency, tokens};
  }

  std::vector<double> stage_decode_latency(const std::vector<int>& budgets) override {
    std::vector<double> out(stages_.size(), 0.0);
    for (size_t s = 0; s < stages_.size(); ++s) {
      size_t idx = grid_index(budgets[s]);
      double len = stages_[s].decode_tokens[idx];
      out[s] = len * (lm_.c_base + (sublayers_ - budgets[s]) * lm_.c_sub);
    }
    return out;
  }

  const std::vector<int>& grid() const { return grid_; }

 private:
  size_t grid_index(int budget) const {
    auto it = std::find(grid_.begin(), grid_.end(), budget);
    if (it == grid_.end()) throw std::logic_error("budget off the scripted grid");
    return static_cast<size_t>(it - grid_.begin());
  }

  int sublayers_;
  std::vector<int> grid_;
  std::vector<ScriptedStage> stages_;
  double base_accuracy_;
  stageskip::LatencyModel lm_;
};

// Exhaustive per-iteration reference: re-derives the slowest-first order and
// each iteration's feasible-argmin choice directly from the evaluator,
// without going through profile_stage/select_budget.
struct OracleSearch {
  std::vector<int> visit_order;
  std::vector<int> choices;  // aligned with visit_order
  std::vector<int> budgets;  // final, per stage
  double target = 0.0;
};

inline OracleSearch oracle_greedy_search(stageskip::BudgetEvaluator& ev,
                                         const std::vector<int>& grid, double epsilon_points) {
  const int n = ev.stage_count();
  std::vector<int> budgets(n, 0);
  OracleSearch result;
  result.target = ev.evaluate(budgets).accuracy - epsilon_points / 100.0;

  std::vector<double> decode = ev.stage_decode_latency(budgets);
  std::vector<int> order(n);
  for (int i = 0; i < n; ++i) order[i] = i;
  std::stable_sort(order.begin(), order.end(),
                   [&](int a, int b) { return decode[a] > decode[b]; });

  for (int stage : order) {
    bool found = false;
    int best_k = 0;
    double best_latency = 0.0;
    for (int k : grid) {
      std::vector<int> trial = budgets;
      trial[stage] = k;
      stageskip::EvalOutcome out = ev.evaluate(trial);
      if (out.accuracy < result.target) continue;
      if (!found || out.mean_latency < best_latency ||
          (out.mean_latency == best_latency && k > best_k)) {
        found = true;
        best_k = k;
        best_latency = out.mean_latency;
      }
    }
    if (!found) throw std::logic_error("oracle: no feasible budget");
    budgets[stage] = best_k;
    result.visit_order.push_back(stage);
    result.choices.push_back(best_k);
  }
  result.budgets = budgets;
  return result;
}

}  // namespace testsupport
