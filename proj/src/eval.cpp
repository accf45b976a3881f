#include "stageskip/eval.hpp"

#include <algorithm>
#include <cctype>
#include <map>

#include "stageskip/errors.hpp"
#include "stageskip/parallel.hpp"
#include "stageskip/rng.hpp"

namespace stageskip {

namespace {

bool is_valid_label(const std::string& candidate, std::span<const std::string> labels) {
  return std::find(labels.begin(), labels.end(), candidate) != labels.end();
}

// Case-insensitive search for "answer is (L)" starting at or after `from`;
// returns the position of the match and the label.
std::optional<std::pair<size_t, std::string>> find_answer_pattern(const std::string& lower,
                                                                  const std::string& text,
                                                                  size_t from) {
  static const std::string kPattern = "answer is (";
  size_t pos = lower.find(kPattern, from);
  while (pos != std::string::npos) {
    size_t label_at = pos + kPattern.size();
    if (label_at + 1 < text.size() && text[label_at + 1] == ')') {
      char c = static_cast<char>(std::toupper(static_cast<unsigned char>(text[label_at])));
      if (c >= 'A' && c <= 'E') return std::make_pair(pos, std::string(1, c));
    }
    pos = lower.find(kPattern, pos + 1);
  }
  return std::nullopt;
}

}  // namespace

std::optional<std::string> extract_answer(const std::string& text,
                                          std::span<const std::string> labels) {
  std::string lower(text.size(), '\0');
  std::transform(text.begin(), text.end(), lower.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });

  // primary pattern: last "answer is (X)" with a valid label
  std::optional<std::string> primary;
  size_t from = 0;
  while (auto hit = find_answer_pattern(lower, text, from)) {
    if (is_valid_label(hit->second, labels)) primary = hit->second;
    from = hit->first + 1;
  }
  if (primary.has_value()) return primary;

  // fallback: last standalone "(X)" with a valid label
  std::optional<std::string> fallback;
  for (size_t i = 0; i + 2 < text.size(); ++i) {
    if (text[i] != '(' || text[i + 2] != ')') continue;
    char c = static_cast<char>(std::toupper(static_cast<unsigned char>(text[i + 1])));
    std::string label(1, c);
    if (c >= 'A' && c <= 'E' && is_valid_label(label, labels)) fallback = label;
  }
  return fallback;
}

std::optional<std::string> self_consistency_vote(
    std::span<const std::optional<std::string>> answers) {
  if (answers.empty()) throw std::invalid_argument("self_consistency_vote: empty answer list");
  std::map<std::string, int> counts;
  std::map<std::string, size_t> first_seen;
  for (size_t i = 0; i < answers.size(); ++i) {
    if (!answers[i].has_value()) continue;
    counts[*answers[i]] += 1;
    first_seen.try_emplace(*answers[i], i);
  }
  if (counts.empty()) return std::nullopt;
  std::optional<std::string> best;
  for (const auto& [label, n] : counts) {
    if (!best || n > counts.at(*best) ||
        (n == counts.at(*best) && first_seen.at(label) < first_seen.at(*best))) {
      best = label;
    }
  }
  return best;
}

double modeled_latency(const Transcript& transcript, const LatencyModel& lm, int sublayer_count) {
  double total = 0.0;
  for (const StageTranscript& st : transcript.stages) {
    total += modeled_stage_cost(st.prefill_len, st.decode_len, sublayer_count - st.skip_count,
                                sublayer_count, lm);
  }
  return total;
}

EvalReport evaluate(const InferenceBackend& backend, const StagePlan& plan,
                    std::span<const DatasetRecord> dataset, const SkipConfig& skip_config,
                    const EvalSettings& settings, const EvalReport* reference) {
  plan.validate();
  if (dataset.empty()) throw UserError("evaluate: empty dataset");
  if (settings.self_consistency < 1) throw UserError("evaluate: self_consistency must be >= 1");
  settings.latency_model.validate();

  const int n_stages = plan.stage_count();
  const size_t n = dataset.size();
  std::vector<SampleResult> samples(n);
  std::vector<std::vector<double>> stage_tokens(n, std::vector<double>(n_stages, 0.0));
  std::vector<std::vector<double>> stage_decode_cost(n, std::vector<double>(n_stages, 0.0));
  std::vector<std::vector<double>> stage_decode_wall(n, std::vector<double>(n_stages, 0.0));

  parallel_for(n, settings.threads, [&](size_t i) {
    const DatasetRecord& rec = dataset[i];
    std::vector<std::optional<std::string>> answers;
    double modeled_sum = 0.0, wall_sum = 0.0;
    std::vector<double> tokens_acc(n_stages, 0.0);
    std::vector<double> decode_cost_acc(n_stages, 0.0);
    std::vector<int> last_tokens(n_stages, 0);

    for (int iter = 0; iter < settings.self_consistency; ++iter) {
      SamplingPolicy sampling = settings.sampling;
      sampling.seed = settings.sampling.seed + static_cast<uint64_t>(iter);
      Transcript t = run_pipeline(backend, plan, rec.question, rec.options, skip_config, sampling,
                                  settings.early_exit, settings.latency_model);
      const std::string& final_text = t.stages.back().text;
      auto labels = rec.labels();
      answers.push_back(extract_answer(final_text, labels));
      modeled_sum += t.total_modeled_cost;
      wall_sum += t.total_wall_seconds;
      for (int s = 0; s < n_stages; ++s) {
        tokens_acc[s] += t.stages[s].decode_len;
        decode_cost_acc[s] += t.stages[s].decode_len *
                              (settings.latency_model.c_base +
                               (backend.sublayer_count() - t.stages[s].skip_count) *
                                   settings.latency_model.c_sub);
        stage_decode_wall[i][s] += t.stages[s].wall_decode_seconds / settings.self_consistency;
        last_tokens[s] = t.stages[s].decode_len;
      }
    }

    SampleResult& r = samples[i];
    r.id = rec.id;
    r.gold = rec.gold;
    r.predicted = settings.self_consistency > 1 ? self_consistency_vote(answers) : answers[0];
    r.correct = r.predicted.has_value() && *r.predicted == rec.gold;
    // Latencies are per-inference means over self-consistency iterations.
    r.modeled_latency = modeled_sum / settings.self_consistency;
    r.wall_seconds = wall_sum / settings.self_consistency;
    r.decode_tokens = last_tokens;
    for (int s = 0; s < n_stages; ++s) {
      stage_tokens[i][s] = tokens_acc[s] / settings.self_consistency;
      stage_decode_cost[i][s] = decode_cost_acc[s] / settings.self_consistency;
    }
  });

  EvalReport report;
  report.sample_count = static_cast<int>(n);
  report.skip_budgets = skip_config.budgets();
  report.mean_decode_tokens_per_stage.assign(n_stages, 0.0);
  report.mean_stage_decode_latency.assign(n_stages, 0.0);
  report.mean_stage_wall_decode_seconds.assign(n_stages, 0.0);
  int correct = 0;
  double modeled = 0.0, wall = 0.0, tokens_total = 0.0;
  for (size_t i = 0; i < n; ++i) {
    correct += samples[i].correct ? 1 : 0;
    modeled += samples[i].modeled_latency;
    wall += samples[i].wall_seconds;
    for (int s = 0; s < n_stages; ++s) {
      report.mean_decode_tokens_per_stage[s] += stage_tokens[i][s];
      report.mean_stage_decode_latency[s] += stage_decode_cost[i][s];
      report.mean_stage_wall_decode_seconds[s] += stage_decode_wall[i][s];
      tokens_total += stage_tokens[i][s];
    }
  }
  report.accuracy = static_cast<double>(correct) / static_cast<double>(n);
  report.mean_modeled_latency = modeled / static_cast<double>(n);
  report.mean_wall_seconds = wall / static_cast<double>(n);
  report.mean_total_decode_tokens = tokens_total / static_cast<double>(n);
  for (int s = 0; s < n_stages; ++s) {
    report.mean_decode_tokens_per_stage[s] /= static_cast<double>(n);
    report.mean_stage_decode_latency[s] /= static_cast<double>(n);
    report.mean_stage_wall_decode_seconds[s] /= static_cast<double>(n);
  }
  report.samples = std::move(samples);

  bool full_layer = true;
  for (const SkipSet& s : skip_config.per_stage) full_layer = full_layer && s.empty();
  if (reference != nullptr) {
    report.speedup = reference->mean_latency(settings.latency_source) /
                     report.mean_latency(settings.latency_source);
  } else if (full_layer && !settings.early_exit.enabled) {
    report.speedup = 1.0;  // the run is its own full-layer reference
  }
  return report;
}

DatasetEvaluator::DatasetEvaluator(const InferenceBackend& backend, const StagePlan& plan,
                                   std::span<const DatasetRecord> dataset,
                                   std::vector<ImportanceTable> tables, EvalSettings settings)
    : backend_(backend),
      plan_(plan),
      dataset_(dataset),
      tables_(std::move(tables)),
      settings_(std::move(settings)) {
  if (tables_.empty()) throw UserError("dataset evaluator: importance tables required");
}

EvalReport DatasetEvaluator::full_report(const std::vector<int>& budgets) {
  SkipConfig config = skip_config_from_budgets(budgets, tables_);
  return stageskip::evaluate(backend_, plan_, dataset_, config, settings_);
}

EvalOutcome DatasetEvaluator::evaluate(const std::vector<int>& budgets) {
  EvalReport report = full_report(budgets);
  return {report.accuracy, report.mean_latency(settings_.latency_source),
          report.mean_total_decode_tokens};
}

std::vector<double> DatasetEvaluator::stage_decode_latency(const std::vector<int>& budgets) {
  EvalReport report = full_report(budgets);
  std::vector<double> totals(plan_.stage_count(), 0.0);
  for (int s = 0; s < plan_.stage_count(); ++s) {
    double per_sample = settings_.latency_source == LatencySource::Modeled
                            ? report.mean_stage_decode_latency[s]
                            : report.mean_stage_wall_decode_seconds[s];
    totals[s] = per_sample * report.sample_count;
  }
  return totals;
}

}  // namespace stageskip
