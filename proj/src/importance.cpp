#include "stageskip/importance.hpp"

#include <algorithm>
#include <numeric>
#include <stdexcept>

#include "stageskip/errors.hpp"
#include "stageskip/parallel.hpp"
#include "stageskip/rng.hpp"

namespace stageskip {

namespace {

// Compensated accumulator; merging partials is associative enough that the
// permutation-invariance property holds to ~1e-9.
struct KahanSum {
  double sum = 0.0;
  double comp = 0.0;

  void add(double v) {
    double y = v - comp;
    double t = sum + y;
    comp = (t - sum) - y;
    sum = t;
  }
  void merge(const KahanSum& other) {
    add(other.sum);
    add(-other.comp);
  }
};

}  // namespace

ImportanceResult estimate_importance(const Model& model, const StagePlan& plan,
                                     std::span<const DatasetRecord> validation,
                                     const ImportanceOptions& options) {
  plan.validate();
  if (validation.empty()) throw UserError("importance estimation needs a non-empty dataset");

  size_t n_samples = validation.size();
  if (options.max_samples > 0) n_samples = std::min<size_t>(n_samples, options.max_samples);
  const int n_stages = plan.stage_count();
  const int n_sub = model.config().sublayer_count();

  ModelBackend backend(model);
  SkipSet no_skip(n_sub);
  SamplingPolicy greedy;  // full-model outputs feed later stages
  EarlyExitSettings ee_off;
  ee_off.enabled = false;
  LatencyModel lm;

  // per sample: position-mean cosine for every (stage, sublayer)
  std::vector<std::vector<double>> sample_means(n_samples,
                                                std::vector<double>(n_stages * n_sub, 0.0));

  parallel_for(n_samples, options.threads, [&](size_t i) {
    const DatasetRecord& rec = validation[i];
    std::vector<std::string> prior_outputs;
    Rng rng(0);
    for (int s = 0; s < n_stages; ++s) {
      std::string prompt =
          render_prompt(plan.stages[s], s, rec.question, rec.options, prior_outputs);
      std::vector<int> tokens = ByteTokenizer::encode(prompt);
      if (static_cast<int>(tokens.size()) > model.config().max_seq_len) {
        throw UserError("importance estimation: prompt overflow in stage " + plan.stages[s].name);
      }

      KVCache cache(model.config());
      ResidualTrace trace;
      trace.mode = TraceMode::Cosine;
      model.prefill(tokens, cache, &trace);
      for (int j = 0; j < n_sub; ++j) {
        KahanSum acc;
        for (double c : trace.cosines[j]) acc.add(c);
        sample_means[i][s * n_sub + j] = acc.sum / static_cast<double>(trace.cosines[j].size());
      }

      StageTranscript st =
          run_stage(backend, plan.stages[s], prompt, no_skip, greedy, ee_off, rng, lm);
      prior_outputs.push_back(st.text);
    }
  });

  // samples -> stage means (Kahan, fixed order), then stages -> global
  std::vector<std::vector<double>> stage_scores(n_stages, std::vector<double>(n_sub));
  for (int s = 0; s < n_stages; ++s) {
    for (int j = 0; j < n_sub; ++j) {
      KahanSum acc;
      for (size_t i = 0; i < n_samples; ++i) acc.add(sample_means[i][s * n_sub + j]);
      stage_scores[s][j] = acc.sum / static_cast<double>(n_samples);
    }
  }

  ImportanceResult result;
  result.global.scores.resize(n_sub);
  result.global.sample_count = static_cast<int>(n_samples);
  result.global.stage_count = n_stages;
  for (int j = 0; j < n_sub; ++j) {
    KahanSum acc;
    for (int s = 0; s < n_stages; ++s) acc.add(stage_scores[s][j]);
    result.global.scores[j] = acc.sum / static_cast<double>(n_stages);
  }

  if (options.per_stage_tables) {
    result.per_stage.resize(n_stages);
    for (int s = 0; s < n_stages; ++s) {
      result.per_stage[s].scores = stage_scores[s];
      result.per_stage[s].sample_count = static_cast<int>(n_samples);
      result.per_stage[s].stage_count = 1;
    }
  }
  return result;
}

SkipSet skip_set_for_budget(const ImportanceTable& table, int k) {
  const int n = table.sublayer_count();
  if (k < 0 || k > n) {
    throw std::invalid_argument("budget k must lie in [0, sublayer_count]");
  }
  std::vector<int> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](int a, int b) {
    if (table.scores[a] != table.scores[b]) return table.scores[a] > table.scores[b];
    return a < b;  // tie: smaller global ordinal first
  });
  SkipSet set(n);
  for (int i = 0; i < k; ++i) set.insert(SubLayerRef::from_ordinal(order[i]));
  return set;
}

SkipConfig skip_config_from_budgets(std::span<const int> budgets,
                                    std::span<const ImportanceTable> tables) {
  if (tables.empty()) throw std::invalid_argument("skip_config_from_budgets: no tables");
  if (tables.size() != 1 && tables.size() != budgets.size()) {
    throw std::invalid_argument(
        "skip_config_from_budgets: need one shared table or one per stage");
  }
  SkipConfig config;
  config.per_stage.reserve(budgets.size());
  for (size_t s = 0; s < budgets.size(); ++s) {
    const ImportanceTable& t = tables.size() == 1 ? tables[0] : tables[s];
    config.per_stage.push_back(skip_set_for_budget(t, budgets[s]));
  }
  return config;
}

}  // namespace stageskip
