#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "stageskip/importance.hpp"
#include "stageskip/io_types.hpp"
#include "stageskip/latency.hpp"
#include "stageskip/pipeline.hpp"
#include "stageskip/search.hpp"

namespace stageskip {

// Scans text for "answer is (X)" (case-insensitive, last occurrence wins),
// falling back to the last standalone "(X)" whose label is one of `labels`.
// No extractable answer is a value, not an error.
std::optional<std::string> extract_answer(const std::string& text,
                                          std::span<const std::string> labels);

// Majority vote ignoring misses; ties go to the label that appeared earliest.
// All-None votes None.
std::optional<std::string> self_consistency_vote(
    std::span<const std::optional<std::string>> answers);

// Recomputes the deterministic cost of a finished transcript from its
// per-stage prefill/decode/skip counts.
double modeled_latency(const Transcript& transcript, const LatencyModel& lm, int sublayer_count);

struct EvalSettings {
  SamplingPolicy sampling;
  EarlyExitSettings early_exit;
  LatencyModel latency_model;
  LatencySource latency_source = LatencySource::Modeled;
  int self_consistency = 1;  // pipeline runs per question; >1 enables voting
  int threads = 1;
};

struct SampleResult {
  std::string id;
  std::optional<std::string> predicted;
  std::string gold;
  bool correct = false;
  double modeled_latency = 0.0;
  double wall_seconds = 0.0;
  std::vector<int> decode_tokens;  // per stage
};

struct EvalReport {
  double accuracy = 0.0;
  double mean_modeled_latency = 0.0;
  double mean_wall_seconds = 0.0;
  std::optional<double> speedup;  // vs. full-layer reference, configured source
  std::vector<double> mean_decode_tokens_per_stage;
  std::vector<double> mean_stage_decode_latency;       // modeled, per stage
  std::vector<double> mean_stage_wall_decode_seconds;  // per stage
  double mean_total_decode_tokens = 0.0;
  std::vector<int> skip_budgets;
  int sample_count = 0;
  std::string label;
  std::vector<SampleResult> samples;

  double mean_latency(LatencySource source) const {
    return source == LatencySource::Modeled ? mean_modeled_latency : mean_wall_seconds;
  }
};

// Runs the pipeline over every record (self-consistency iterations use seeds
// sampling.seed + i), scores extracted answers against gold, and aggregates
// latency. Speedup is taken against `reference` when given; a run that is
// itself the full-layer, early-exit-off reference self-normalizes to exactly
// 1.0; anything else leaves speedup unset.
EvalReport evaluate(const InferenceBackend& backend, const StagePlan& plan,
                    std::span<const DatasetRecord> dataset, const SkipConfig& skip_config,
                    const EvalSettings& settings, const EvalReport* reference = nullptr);

// BudgetEvaluator over the real pipeline: budget vectors become skip configs
// through the importance tables (one shared or one per stage).
class DatasetEvaluator : public BudgetEvaluator {
 public:
  DatasetEvaluator(const InferenceBackend& backend, const StagePlan& plan,
                   std::span<const DatasetRecord> dataset, std::vector<ImportanceTable> tables,
                   EvalSettings settings);

  int stage_count() const override { return plan_.stage_count(); }
  int sublayer_count() const override { return backend_.sublayer_count(); }
  EvalOutcome evaluate(const std::vector<int>& budgets) override;
  std::vector<double> stage_decode_latency(const std::vector<int>& budgets) override;

  // Full report for the same budgets, for callers that want the details.
  EvalReport full_report(const std::vector<int>& budgets);

 private:
  const InferenceBackend& backend_;
  const StagePlan& plan_;
  std::span<const DatasetRecord> dataset_;
  std::vector<ImportanceTable> tables_;
  EvalSettings settings_;
};

}  // namespace stageskip
