#pragma once

#include <span>
#include <vector>

#include "stageskip/io_types.hpp"
#include "stageskip/model.hpp"
#include "stageskip/pipeline.hpp"

namespace stageskip {

// Mean cosine similarity between each sub-layer's residual output and input,
// collected during prefill. Scores close to 1 mean the sub-layer barely moves
// the residual stream, so it is the first candidate to skip.
struct ImportanceTable {
  std::vector<double> scores;  // by global sub-layer ordinal
  int sample_count = 0;
  int stage_count = 0;

  int sublayer_count() const { return static_cast<int>(scores.size()); }
};

struct ImportanceOptions {
  // Also produce one table per stage (ablation path); the global table is
  // always computed.
  bool per_stage_tables = false;
  // Cap on validation samples; 0 means all.
  int max_samples = 0;
  int threads = 1;
};

struct ImportanceResult {
  ImportanceTable global;
  std::vector<ImportanceTable> per_stage;  // empty unless requested
};

// For every sample and stage, renders the stage prompt (later stages consume
// outputs generated by the full model, greedy, no early exit), runs a
// full-depth prefill, and averages per-sub-layer cosines over positions, then
// samples, then stages. Accumulation is compensated (Kahan), so sample order
// does not matter beyond ~1e-9.
ImportanceResult estimate_importance(const Model& model, const StagePlan& plan,
                                     std::span<const DatasetRecord> validation,
                                     const ImportanceOptions& options = {});

// The k most redundant sub-layers (highest similarity), ties broken by
// ascending global ordinal. Results nest: the set for k is a subset of the
// set for k+1. Throws on k outside [0, sublayer_count].
SkipSet skip_set_for_budget(const ImportanceTable& table, int k);

// Builds a per-stage skip config from budgets. `tables` holds either one
// global table shared by every stage or exactly one table per stage.
SkipConfig skip_config_from_budgets(std::span<const int> budgets,
                                    std::span<const ImportanceTable> tables);

}  // namespace stageskip
