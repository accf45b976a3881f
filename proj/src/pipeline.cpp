#include "stageskip/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <sstream>

#include "stageskip/errors.hpp"
#include "stageskip/rng.hpp"

namespace stageskip {

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

// Returns the 1-based stage number of a {stage_N_output} placeholder, or
// nullopt if the name is not of that form.
std::optional<int> parse_stage_placeholder(const std::string& name) {
  if (name.size() < 14 || name.rfind("stage_", 0) != 0) return std::nullopt;
  if (name.substr(name.size() - 7) != "_output") return std::nullopt;
  std::string num = name.substr(6, name.size() - 13);
  if (num.empty() || !std::all_of(num.begin(), num.end(), [](char c) { return std::isdigit(c); }))
    return std::nullopt;
  return std::stoi(num);
}

}  // namespace

void StagePlan::validate() const {
  if (stages.empty()) throw UserError("stage plan: no stages");
  for (int s = 0; s < stage_count(); ++s) {
    const StageSpec& spec = stages[s];
    if (spec.max_new_tokens < 0) {
      throw UserError("stage plan: max_new_tokens must be non-negative in stage " + spec.name);
    }
    // Placeholder scan; rendering repeats this with actual values.
    const std::string& t = spec.template_text;
    size_t pos = 0;
    while ((pos = t.find('{', pos)) != std::string::npos) {
      size_t end = t.find('}', pos);
      if (end == std::string::npos) throw UserError("stage plan: unterminated placeholder");
      std::string name = t.substr(pos + 1, end - pos - 1);
      if (name != "question" && name != "options") {
        auto ref = parse_stage_placeholder(name);
        if (!ref.has_value()) throw UserError("stage plan: unknown placeholder {" + name + "}");
        if (*ref < 1 || *ref > s) {
          throw UserError("stage plan: stage " + std::to_string(s + 1) +
                          " references {" + name + "}, which is not an earlier stage");
        }
      }
      pos = end + 1;
    }
  }
}

SkipConfig SkipConfig::all_empty(int stage_count, int sublayer_count) {
  SkipConfig c;
  c.per_stage.assign(stage_count, SkipSet(sublayer_count));
  return c;
}

std::vector<int> SkipConfig::budgets() const {
  std::vector<int> out;
  out.reserve(per_stage.size());
  for (const auto& s : per_stage) out.push_back(s.size());
  return out;
}

const char* to_string(ExitReason r) {
  switch (r) {
    case ExitReason::NaturalEos: return "natural_eos";
    case ExitReason::ConfidenceExit: return "confidence_exit";
    case ExitReason::MaxTokens: return "max_tokens";
  }
  return "unknown";
}

ModelBackend::ModelBackend(const Model& model) : model_(model) {
  if (model.config().vocab_size < ByteTokenizer::kVocabSize) {
    throw UserError("model vocab_size must cover the byte tokenizer (>= 258)");
  }
}

namespace {

class ModelSession : public SequenceSession {
 public:
  explicit ModelSession(const Model& model) : model_(model), cache_(model.config()) {}

  std::vector<float> prefill(std::span<const int> tokens) override {
    return model_.prefill(tokens, cache_);
  }
  std::vector<float> step(int token, const SkipSet& skip) override {
    return model_.decode_step(cache_, token, skip);
  }

 private:
  const Model& model_;
  KVCache cache_;
};

}  // namespace

std::unique_ptr<SequenceSession> ModelBackend::start_sequence() const {
  return std::make_unique<ModelSession>(model_);
}

std::string render_prompt(const StageSpec& spec, int stage_index, const std::string& question,
                          std::span<const QuestionOption> options,
                          std::span<const std::string> prior_outputs) {
  std::string rendered_options;
  for (size_t i = 0; i < options.size(); ++i) {
    if (i > 0) rendered_options += '\n';
    rendered_options += "(" + options[i].label + ") " + options[i].text;
  }

  const std::string& t = spec.template_text;
  std::string out;
  out.reserve(t.size() + question.size() + rendered_options.size());
  size_t pos = 0;
  while (pos < t.size()) {
    size_t open = t.find('{', pos);
    if (open == std::string::npos) {
      out.append(t, pos, std::string::npos);
      break;
    }
    out.append(t, pos, open - pos);
    size_t close = t.find('}', open);
    if (close == std::string::npos) throw UserError("render_prompt: unterminated placeholder");
    std::string name = t.substr(open + 1, close - open - 1);
    if (name == "question") {
      out += question;
    } else if (name == "options") {
      out += rendered_options;
    } else {
      auto ref = parse_stage_placeholder(name);
      if (!ref.has_value()) throw UserError("render_prompt: unknown placeholder {" + name + "}");
      if (*ref < 1 || *ref > stage_index) {
        throw UserError("render_prompt: {" + name + "} is not available in stage " +
                        std::to_string(stage_index + 1));
      }
      if (*ref > static_cast<int>(prior_outputs.size())) {
        throw UserError("render_prompt: missing value for {" + name + "}");
      }
      out += prior_outputs[*ref - 1];
    }
    pos = close + 1;
  }
  return out;
}

int sample_token(std::span<const float> logits, const SamplingPolicy& sampling, Rng& rng) {
  if (sampling.mode == SamplingPolicy::Mode::Greedy) {
    int best = 0;
    for (int i = 1; i < static_cast<int>(logits.size()); ++i) {
      if (logits[i] > logits[best]) best = i;
    }
    return best;
  }
  if (sampling.temperature <= 0.0) throw UserError("sampling temperature must be positive");
  double zmax = logits[0];
  for (float z : logits) zmax = std::max(zmax, static_cast<double>(z));
  std::vector<double> probs(logits.size());
  double denom = 0.0;
  for (size_t i = 0; i < logits.size(); ++i) {
    probs[i] = std::exp((static_cast<double>(logits[i]) - zmax) / sampling.temperature);
    denom += probs[i];
  }
  double u = rng.next_unit() * denom;
  double acc = 0.0;
  for (size_t i = 0; i < probs.size(); ++i) {
    acc += probs[i];
    if (u < acc) return static_cast<int>(i);
  }
  return static_cast<int>(probs.size()) - 1;
}

StageTranscript run_stage(const InferenceBackend& backend, const StageSpec& spec,
                          const std::string& prompt, const SkipSet& skip,
                          const SamplingPolicy& sampling, const EarlyExitSettings& early_exit,
                          Rng& rng, const LatencyModel& lm) {
  StageTranscript st;
  st.prompt = prompt;
  st.skip_count = skip.size();

  std::vector<int> prompt_tokens = ByteTokenizer::encode(prompt);
  st.prefill_len = static_cast<int>(prompt_tokens.size());
  if (st.prefill_len + spec.max_new_tokens > backend.max_seq_len()) {
    throw UserError("stage '" + spec.name + "': prompt plus max_new_tokens exceeds the context (" +
                    std::to_string(st.prefill_len + spec.max_new_tokens) + " > " +
                    std::to_string(backend.max_seq_len()) + ")");
  }

  auto is_stop = [&](int token) {
    if (token == backend.eos_id()) return true;
    return std::find(spec.stop_tokens.begin(), spec.stop_tokens.end(), token) !=
           spec.stop_tokens.end();
  };

  auto t0 = Clock::now();
  auto session = backend.start_sequence();
  // The prompt pass runs even when nothing will be generated, so wall-clock
  // and modeled cost account the same work.
  std::vector<float> logits = session->prefill(prompt_tokens);
  auto t_decode = Clock::now();

  ConfidenceCache cache(early_exit.window, early_exit.threshold);
  st.exit_reason = ExitReason::MaxTokens;
  while (static_cast<int>(st.tokens.size()) < spec.max_new_tokens) {
    double conf = early_exit.source == EarlyExitSettings::Source::Probability
                      ? token_confidence(logits)
                      : max_logit(logits);
    st.confidences.push_back(conf);
    int token = sample_token(logits, sampling, rng);

    if (early_exit.enabled && cache.observe(conf) == ExitDecision::Exit) {
      // Below-threshold window: the sampled token is replaced by EOS.
      st.tokens.push_back(backend.eos_id());
      st.exit_reason = ExitReason::ConfidenceExit;
      break;
    }
    st.tokens.push_back(token);
    if (is_stop(token)) {
      st.exit_reason = ExitReason::NaturalEos;
      break;
    }
    if (static_cast<int>(st.tokens.size()) == spec.max_new_tokens) {
      st.exit_reason = ExitReason::MaxTokens;
      break;
    }
    logits = session->step(token, skip);
  }

  st.decode_len = static_cast<int>(st.tokens.size());
  st.text = ByteTokenizer::decode(st.tokens);
  st.wall_seconds = seconds_since(t0);
  st.wall_decode_seconds = seconds_since(t_decode);
  st.modeled_cost = modeled_stage_cost(st.prefill_len, st.decode_len,
                                       backend.sublayer_count() - st.skip_count,
                                       backend.sublayer_count(), lm);
  return st;
}

Transcript run_pipeline(const InferenceBackend& backend, const StagePlan& plan,
                        const std::string& question, std::span<const QuestionOption> options,
                        const SkipConfig& skip_config, const SamplingPolicy& sampling,
                        const EarlyExitSettings& early_exit, const LatencyModel& lm) {
  plan.validate();
  if (static_cast<int>(skip_config.per_stage.size()) != plan.stage_count()) {
    throw UserError("skip config has " + std::to_string(skip_config.per_stage.size()) +
                    " stages, plan has " + std::to_string(plan.stage_count()));
  }

  Transcript out;
  Rng rng(sampling.seed);
  std::vector<std::string> prior_outputs;
  auto t0 = Clock::now();
  for (int s = 0; s < plan.stage_count(); ++s) {
    std::string prompt = render_prompt(plan.stages[s], s, question, options, prior_outputs);
    StageTranscript st = run_stage(backend, plan.stages[s], prompt, skip_config.per_stage[s],
                                   sampling, early_exit, rng, lm);
    prior_outputs.push_back(st.text);
    out.total_modeled_cost += st.modeled_cost;
    out.total_decode_tokens += st.decode_len;
    out.stages.push_back(std::move(st));
  }
  out.total_wall_seconds = seconds_since(t0);
  return out;
}

}  // namespace stageskip
