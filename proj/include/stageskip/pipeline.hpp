#pragma once

#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "stageskip/early_exit.hpp"
#include "stageskip/latency.hpp"
#include "stageskip/model.hpp"
#include "stageskip/tokenizer.hpp"

namespace stageskip {

// One prompted inference episode. Templates may reference {question},
// {options} and {stage_i_output} for any earlier stage i (1-based).
struct StageSpec {
  std::string name;
  std::string template_text;
  int max_new_tokens = 32;
  std::vector<int> stop_tokens;  // EOS is always implied
};

struct StagePlan {
  std::vector<StageSpec> stages;

  int stage_count() const { return static_cast<int>(stages.size()); }
  // Throws UserError on empty plans, non-positive token limits, or templates
  // that reference the current or a later stage.
  void validate() const;
};

// Per-stage sets of sub-layers to bypass while decoding.
struct SkipConfig {
  std::vector<SkipSet> per_stage;

  static SkipConfig all_empty(int stage_count, int sublayer_count);
  std::vector<int> budgets() const;
};

struct SamplingPolicy {
  enum class Mode { Greedy, Temperature };
  Mode mode = Mode::Greedy;
  double temperature = 1.0;  // ignored under Greedy
  uint64_t seed = 0;         // ignored under Greedy
};

struct EarlyExitSettings {
  enum class Source { Probability, RawLogit };
  bool enabled = true;
  int window = 5;
  double threshold = 0.5;
  Source source = Source::Probability;
};

enum class ExitReason { NaturalEos, ConfidenceExit, MaxTokens };

const char* to_string(ExitReason r);

struct StageTranscript {
  std::string prompt;
  int prefill_len = 0;  // prompt tokens, BOS included
  std::vector<int> tokens;
  std::string text;
  std::vector<double> confidences;
  ExitReason exit_reason = ExitReason::MaxTokens;
  int decode_len = 0;  // emitted tokens == decode steps charged by the cost model
  int skip_count = 0;
  double wall_seconds = 0.0;
  double wall_decode_seconds = 0.0;
  double modeled_cost = 0.0;
};

struct Transcript {
  std::vector<StageTranscript> stages;
  double total_wall_seconds = 0.0;
  double total_modeled_cost = 0.0;
  int total_decode_tokens = 0;
};

// Abstract per-sequence generation state so pipelines can run against the
// real transformer or a scripted stand-in.
class SequenceSession {
 public:
  virtual ~SequenceSession() = default;
  // Processes the prompt at full depth; returns next-token logits.
  virtual std::vector<float> prefill(std::span<const int> tokens) = 0;
  // Processes one emitted token under the stage's skip set; returns logits.
  virtual std::vector<float> step(int token, const SkipSet& skip) = 0;
};

class InferenceBackend {
 public:
  virtual ~InferenceBackend() = default;
  virtual std::unique_ptr<SequenceSession> start_sequence() const = 0;
  virtual int vocab_size() const = 0;
  virtual int sublayer_count() const = 0;
  virtual int max_seq_len() const = 0;
  int eos_id() const { return ByteTokenizer::kEos; }
};

// Backend over a real Model. The model must outlive the backend.
class ModelBackend : public InferenceBackend {
 public:
  explicit ModelBackend(const Model& model);
  std::unique_ptr<SequenceSession> start_sequence() const override;
  int vocab_size() const override { return model_.config().vocab_size; }
  int sublayer_count() const override { return model_.config().sublayer_count(); }
  int max_seq_len() const override { return model_.config().max_seq_len; }

 private:
  const Model& model_;
};

struct QuestionOption {
  std::string label;  // "A".."E"
  std::string text;
};

// Deterministic placeholder substitution. Options render as "(A) text" lines.
// Throws UserError on placeholders that are unknown or reference stage
// `stage_index+1` or later (stage_index is 0-based for the stage being
// rendered).
std::string render_prompt(const StageSpec& spec, int stage_index, const std::string& question,
                          std::span<const QuestionOption> options,
                          std::span<const std::string> prior_outputs);

// Samples a token id. Greedy takes the argmax (lowest id wins ties);
// Temperature draws from softmax(logits / T) using `rng`.
int sample_token(std::span<const float> logits, const SamplingPolicy& sampling, class Rng& rng);

// Runs one stage: full-depth prefill of the rendered prompt, then skip-masked
// decode steps until natural EOS, confidence exit, or max_new_tokens. The
// confidence cache starts fresh. Throws UserError when the prompt plus
// max_new_tokens cannot fit the context window.
StageTranscript run_stage(const InferenceBackend& backend, const StageSpec& spec,
                          const std::string& prompt, const SkipSet& skip,
                          const SamplingPolicy& sampling, const EarlyExitSettings& early_exit,
                          Rng& rng, const LatencyModel& lm);

// Runs all stages in order, feeding each stage's decoded text into later
// prompts.
Transcript run_pipeline(const InferenceBackend& backend, const StagePlan& plan,
                        const std::string& question, std::span<const QuestionOption> options,
                        const SkipConfig& skip_config, const SamplingPolicy& sampling,
                        const EarlyExitSettings& early_exit, const LatencyModel& lm);

}  // namespace stageskip
