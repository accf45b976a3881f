#include "stageskip/cli.hpp"

#include <algorithm>
#include <filesystem>
#include <iostream>
#include <optional>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "stageskip/errors.hpp"
#include "stageskip/eval.hpp"
#include "stageskip/importance.hpp"
#include "stageskip/io.hpp"
#include "stageskip/model.hpp"
#include "stageskip/parallel.hpp"
#include "stageskip/pipeline.hpp"
#include "stageskip/search.hpp"

namespace stageskip::cli {

namespace {

using nlohmann::json;
namespace fs = std::filesystem;

struct CommonOptions {
  // model
  ModelConfig model;
  std::string weights_path;
  std::string export_weights_path;
  // data
  std::string dataset_path;
  std::string stage_plan_path;
  int max_samples = 0;
  // early exit
  bool no_early_exit = false;
  int ee_window = 5;
  double ee_threshold = 0.5;
  std::string ee_confidence = "prob";
  // sampling
  std::string sampling_mode = "greedy";
  double temperature = 1.0;
  uint64_t seed = 0;
  // latency
  std::string latency_source = "model";
  LatencyModel latency_model;
  int threads = default_thread_count();
};

void add_model_flags(CLI::App* cmd, CommonOptions& o) {
  cmd->add_option("--model-seed", o.model.rng_seed, "Seed for synthesized weights");
  cmd->add_option("--blocks", o.model.n_blocks, "Decoder blocks");
  cmd->add_option("--d-model", o.model.d_model, "Hidden width");
  cmd->add_option("--heads", o.model.n_heads, "Attention heads");
  cmd->add_option("--d-ff", o.model.d_ff, "Feed-forward width");
  cmd->add_option("--vocab", o.model.vocab_size, "Vocabulary size (>= 258)");
  cmd->add_option("--max-seq", o.model.max_seq_len, "Context window");
  cmd->add_flag("--tied-head", o.model.tied_head, "Tie output head to the embedding");
  cmd->add_option("--weights", o.weights_path, "Load weights from a container file");
  cmd->add_option("--export-weights", o.export_weights_path,
                  "Write the constructed model to a weight container");
}

void add_data_flags(CLI::App* cmd, CommonOptions& o) {
  cmd->add_option("--dataset", o.dataset_path, "JSONL question file");
  cmd->add_option("--stage-plan", o.stage_plan_path, "Stage plan JSON");
  cmd->add_option("--samples", o.max_samples, "Use only the first N records (0 = all)");
}

// dataset/plan may come from flags or the run-config file; both must resolve
void require_data(const CommonOptions& o) {
  if (o.dataset_path.empty()) throw UserError("--dataset is required (flag or config file)");
  if (o.stage_plan_path.empty()) throw UserError("--stage-plan is required (flag or config file)");
}

void add_runtime_flags(CLI::App* cmd, CommonOptions& o) {
  cmd->add_flag("--no-early-exit", o.no_early_exit, "Disable generation early exit");
  cmd->add_option("--ee-window", o.ee_window, "Confidence cache window");
  cmd->add_option("--ee-threshold", o.ee_threshold, "Mean-confidence exit threshold");
  cmd->add_option("--ee-confidence", o.ee_confidence, "Confidence source: prob | logit")
      ->check(CLI::IsMember({"prob", "logit"}));
  cmd->add_option("--sampling", o.sampling_mode, "greedy | temperature")
      ->check(CLI::IsMember({"greedy", "temperature"}));
  cmd->add_option("--temperature", o.temperature, "Sampling temperature");
  cmd->add_option("--seed", o.seed, "Sampling seed");
  cmd->add_option("--latency-source", o.latency_source, "wallclock | model")
      ->check(CLI::IsMember({"wallclock", "model"}));
  cmd->add_option("--c-prefill", o.latency_model.c_prefill, "Cost per prompt token per sub-layer");
  cmd->add_option("--c-base", o.latency_model.c_base, "Fixed cost per decode step");
  cmd->add_option("--c-sub", o.latency_model.c_sub, "Cost per executed sub-layer per step");
  cmd->add_option("--threads", o.threads, "Worker threads (default: STAGESKIP_THREADS or cores)");
}

EarlyExitSettings early_exit_from(const CommonOptions& o) {
  EarlyExitSettings ee;
  ee.enabled = !o.no_early_exit;
  ee.window = o.ee_window;
  ee.threshold = o.ee_threshold;
  ee.source = o.ee_confidence == "logit" ? EarlyExitSettings::Source::RawLogit
                                         : EarlyExitSettings::Source::Probability;
  return ee;
}

SamplingPolicy sampling_from(const CommonOptions& o) {
  SamplingPolicy p;
  p.mode = o.sampling_mode == "temperature" ? SamplingPolicy::Mode::Temperature
                                            : SamplingPolicy::Mode::Greedy;
  p.temperature = o.temperature;
  p.seed = o.seed;
  return p;
}

EvalSettings eval_settings_from(const CommonOptions& o) {
  EvalSettings s;
  s.sampling = sampling_from(o);
  s.early_exit = early_exit_from(o);
  s.latency_model = o.latency_model;
  s.latency_source = latency_source_from_string(o.latency_source);
  s.threads = o.threads;
  return s;
}

std::string latency_unit_of(const CommonOptions& o) {
  return o.latency_source == "wallclock" ? "seconds" : "cost units";
}

Model build_model(const CommonOptions& o) {
  Model model = o.weights_path.empty()
                    ? Model::synthesize(o.model)
                    : io::load_weights(o.weights_path);
  if (!o.export_weights_path.empty()) io::save_weights(o.export_weights_path, model);
  return model;
}

std::vector<DatasetRecord> load_records(const CommonOptions& o) {
  std::vector<DatasetRecord> records = io::load_dataset(o.dataset_path);
  if (o.max_samples > 0 && static_cast<int>(records.size()) > o.max_samples) {
    records.resize(o.max_samples);
  }
  return records;
}

// Every run logs the full effective configuration for reproducibility.
void log_effective_config(const std::string& command, const CommonOptions& o, json extra) {
  json j{{"command", command},
         {"model",
          {{"n_blocks", o.model.n_blocks},
           {"d_model", o.model.d_model},
           {"n_heads", o.model.n_heads},
           {"d_ff", o.model.d_ff},
           {"vocab_size", o.model.vocab_size},
           {"max_seq_len", o.model.max_seq_len},
           {"rng_seed", o.model.rng_seed},
           {"tied_head", o.model.tied_head},
           {"weights", o.weights_path}}},
         {"dataset", o.dataset_path},
         {"stage_plan", o.stage_plan_path},
         {"samples", o.max_samples},
         {"early_exit",
          {{"enabled", !o.no_early_exit},
           {"window", o.ee_window},
           {"threshold", o.ee_threshold},
           {"confidence", o.ee_confidence}}},
         {"sampling",
          {{"mode", o.sampling_mode}, {"temperature", o.temperature}, {"seed", o.seed}}},
         {"latency",
          {{"source", o.latency_source},
           {"c_prefill", o.latency_model.c_prefill},
           {"c_base", o.latency_model.c_base},
           {"c_sub", o.latency_model.c_sub}}},
         {"threads", o.threads}};
  j.update(extra);
  std::cerr << "[config] " << j.dump() << "\n";
}

// Merges a JSON run-config file into the option defaults before flag parsing,
// so explicit flags win.
void apply_config_file(const std::string& path, CommonOptions& o) {
  json j = json::parse(io::read_file(path), nullptr, false);
  if (j.is_discarded()) throw UserError("run config " + path + ": not valid JSON");
  if (j.contains("model")) {
    const json& m = j["model"];
    o.model.n_blocks = m.value("n_blocks", o.model.n_blocks);
    o.model.d_model = m.value("d_model", o.model.d_model);
    o.model.n_heads = m.value("n_heads", o.model.n_heads);
    o.model.d_ff = m.value("d_ff", o.model.d_ff);
    o.model.vocab_size = m.value("vocab_size", o.model.vocab_size);
    o.model.max_seq_len = m.value("max_seq_len", o.model.max_seq_len);
    o.model.rng_seed = m.value("rng_seed", o.model.rng_seed);
    o.model.tied_head = m.value("tied_head", o.model.tied_head);
    o.weights_path = m.value("weights", o.weights_path);
  }
  o.dataset_path = j.value("dataset", o.dataset_path);
  o.stage_plan_path = j.value("stage_plan", o.stage_plan_path);
  o.max_samples = j.value("samples", o.max_samples);
  if (j.contains("early_exit")) {
    const json& e = j["early_exit"];
    o.no_early_exit = !e.value("enabled", !o.no_early_exit);
    o.ee_window = e.value("window", o.ee_window);
    o.ee_threshold = e.value("threshold", o.ee_threshold);
    o.ee_confidence = e.value("confidence", o.ee_confidence);
  }
  if (j.contains("sampling")) {
    const json& s = j["sampling"];
    o.sampling_mode = s.value("mode", o.sampling_mode);
    o.temperature = s.value("temperature", o.temperature);
    o.seed = s.value("seed", o.seed);
  }
  if (j.contains("latency")) {
    const json& l = j["latency"];
    o.latency_source = l.value("source", o.latency_source);
    o.latency_model.c_prefill = l.value("c_prefill", o.latency_model.c_prefill);
    o.latency_model.c_base = l.value("c_base", o.latency_model.c_base);
    o.latency_model.c_sub = l.value("c_sub", o.latency_model.c_sub);
  }
  o.threads = j.value("threads", o.threads);
}

std::vector<ImportanceTable> load_tables(const std::string& path, int expected_sublayers) {
  io::ImportanceFile file = io::load_importance(path);
  std::vector<ImportanceTable> tables;
  if (!file.per_stage.empty()) {
    tables = file.per_stage;
  } else {
    tables.push_back(file.global);
  }
  for (const ImportanceTable& t : tables) {
    if (t.sublayer_count() != expected_sublayers) {
      throw UserError("importance table covers " + std::to_string(t.sublayer_count()) +
                      " sub-layers but the model has " + std::to_string(expected_sublayers));
    }
  }
  return tables;
}

SkipConfig resolve_skip_config(const std::string& skip_config_path,
                               const std::vector<int>& budgets, const std::string& table_path,
                               const Model& model, const StagePlan& plan) {
  const int n_sub = model.config().sublayer_count();
  if (!skip_config_path.empty() && !budgets.empty()) {
    throw UserError("--skip-config and --budgets are mutually exclusive");
  }
  if (!skip_config_path.empty()) {
    SkipConfig config = io::load_skip_config(skip_config_path, n_sub);
    if (static_cast<int>(config.per_stage.size()) != plan.stage_count()) {
      throw UserError("skip config stage count does not match the stage plan");
    }
    return config;
  }
  if (!budgets.empty()) {
    if (static_cast<int>(budgets.size()) != plan.stage_count()) {
      throw UserError("--budgets needs one value per stage");
    }
    if (table_path.empty()) throw UserError("--budgets requires --table");
    return skip_config_from_budgets(budgets, load_tables(table_path, n_sub));
  }
  return SkipConfig::all_empty(plan.stage_count(), n_sub);
}

// ---------------------------------------------------------------- commands

int cmd_importance(CommonOptions& o, const std::string& out_path, bool per_stage) {
  require_data(o);
  Model model = build_model(o);
  StagePlan plan = io::load_stage_plan(o.stage_plan_path);
  std::vector<DatasetRecord> records = load_records(o);

  ImportanceOptions opts;
  opts.per_stage_tables = per_stage;
  opts.max_samples = o.max_samples;
  opts.threads = o.threads;
  ImportanceResult result = estimate_importance(model, plan, records, opts);

  io::ImportanceFile file{result.global, result.per_stage};
  io::save_importance(out_path, file);
  std::cout << "wrote importance table for " << result.global.sublayer_count()
            << " sub-layers over " << result.global.sample_count << " samples to " << out_path
            << "\n";
  return 0;
}

int cmd_profile(CommonOptions& o, const std::string& table_path, int stage_1based, int grid_step,
                int max_budget, const std::string& fixed_skip_path, bool no_profile_ee,
                const std::string& out_path) {
  require_data(o);
  Model model = build_model(o);
  StagePlan plan = io::load_stage_plan(o.stage_plan_path);
  std::vector<DatasetRecord> records = load_records(o);
  std::vector<ImportanceTable> tables = load_tables(table_path, model.config().sublayer_count());

  if (stage_1based < 1 || stage_1based > plan.stage_count()) {
    throw UserError("--stage must lie in [1, " + std::to_string(plan.stage_count()) + "]");
  }

  EvalSettings settings = eval_settings_from(o);
  if (no_profile_ee) settings.early_exit.enabled = false;
  ModelBackend backend(model);
  DatasetEvaluator evaluator(backend, plan, records, tables, settings);

  SearchSettings ss;
  ss.grid_step = grid_step;
  ss.max_budget = max_budget;
  std::vector<int> grid = make_budget_grid(model.config().sublayer_count(), ss);

  std::vector<int> fixed(plan.stage_count(), 0);
  if (!fixed_skip_path.empty()) {
    SkipConfig fixed_config =
        io::load_skip_config(fixed_skip_path, model.config().sublayer_count());
    fixed = fixed_config.budgets();
  }

  StageProfile profile = profile_stage(evaluator, stage_1based - 1, grid, fixed);
  io::save_stage_profile(out_path, profile, latency_unit_of(o));
  std::cout << "wrote profile with " << profile.rows.size() << " rows to " << out_path << "\n";
  return 0;
}

int cmd_search(CommonOptions& o, const std::string& table_path, double epsilon, int grid_step,
               int max_budget, bool rerank, bool no_profile_ee, const std::string& out_dir) {
  require_data(o);
  Model model = build_model(o);
  StagePlan plan = io::load_stage_plan(o.stage_plan_path);
  std::vector<DatasetRecord> records = load_records(o);
  std::vector<ImportanceTable> tables = load_tables(table_path, model.config().sublayer_count());

  EvalSettings settings = eval_settings_from(o);
  if (no_profile_ee) settings.early_exit.enabled = false;
  ModelBackend backend(model);
  DatasetEvaluator evaluator(backend, plan, records, tables, settings);

  SearchSettings ss;
  ss.epsilon_points = epsilon;
  ss.grid_step = grid_step;
  ss.max_budget = max_budget;
  ss.rerank_stages = rerank;
  ss.profile_with_early_exit = !no_profile_ee;
  ss.latency_source = settings.latency_source;

  SearchResult result = greedy_search(evaluator, ss);

  fs::path dir(out_dir);
  io::save_search_result(dir / "search_result.json", result, latency_unit_of(o));
  SkipConfig config = skip_config_from_budgets(result.budgets, tables);
  io::save_skip_config(dir / "skip_config.json", config);

  std::cout << "baseline accuracy " << result.baseline_accuracy << ", target "
            << result.target_accuracy << "\n";
  std::cout << "budgets:";
  for (int b : result.budgets) std::cout << ' ' << b;
  std::cout << "\nfinal accuracy " << result.final_accuracy << ", latency "
            << result.final_latency << " (" << latency_unit_of(o) << ")\n";
  std::cout << "wrote " << (dir / "search_result.json").string() << " and "
            << (dir / "skip_config.json").string() << "\n";
  return 0;
}

int cmd_run(CommonOptions& o, const std::string& skip_config_path,
            const std::vector<int>& budgets, const std::string& table_path,
            const std::string& question_id, int index, const std::string& out_path) {
  require_data(o);
  Model model = build_model(o);
  StagePlan plan = io::load_stage_plan(o.stage_plan_path);
  std::vector<DatasetRecord> records = load_records(o);

  const DatasetRecord* rec = nullptr;
  if (!question_id.empty()) {
    auto it = std::find_if(records.begin(), records.end(),
                           [&](const DatasetRecord& r) { return r.id == question_id; });
    if (it == records.end()) throw UserError("no record with id '" + question_id + "'");
    rec = &*it;
  } else {
    if (index < 0 || index >= static_cast<int>(records.size())) {
      throw UserError("--index out of range");
    }
    rec = &records[index];
  }

  SkipConfig config = resolve_skip_config(skip_config_path, budgets, table_path, model, plan);
  ModelBackend backend(model);
  Transcript t = run_pipeline(backend, plan, rec->question, rec->options, config,
                              sampling_from(o), early_exit_from(o), o.latency_model);

  if (out_path.empty()) {
    // dump to stdout
    fs::path tmp = fs::temp_directory_path() / "stageskip_transcript.json";
    io::save_transcript(tmp, t, rec->id);
    std::cout << io::read_file(tmp);
    fs::remove(tmp);
  } else {
    io::save_transcript(out_path, t, rec->id);
    std::cout << "wrote transcript to " << out_path << "\n";
  }
  return 0;
}

int cmd_eval(CommonOptions& o, const std::string& skip_config_path,
             const std::vector<int>& budgets, const std::string& table_path,
             const std::string& reference_path, int self_consistency, const std::string& label,
             const std::string& out_path) {
  require_data(o);
  Model model = build_model(o);
  StagePlan plan = io::load_stage_plan(o.stage_plan_path);
  std::vector<DatasetRecord> records = load_records(o);
  SkipConfig config = resolve_skip_config(skip_config_path, budgets, table_path, model, plan);

  EvalSettings settings = eval_settings_from(o);
  settings.self_consistency = self_consistency;

  std::optional<EvalReport> reference;
  if (!reference_path.empty()) reference = io::load_eval_report(reference_path);

  ModelBackend backend(model);
  EvalReport report = evaluate(backend, plan, records, config, settings,
                               reference.has_value() ? &*reference : nullptr);
  report.label = label;

  if (!report.speedup.has_value()) {
    std::cerr << "warning: no full-layer reference run given (--reference); "
                 "speedup omitted from the report\n";
  }

  io::save_eval_report(out_path, report, latency_unit_of(o));
  fs::path csv_path = fs::path(out_path).replace_extension(".csv");
  io::save_eval_report_csv(csv_path, report);
  std::cout << "accuracy " << report.accuracy << ", mean latency "
            << report.mean_latency(settings.latency_source) << " (" << latency_unit_of(o) << ")";
  if (report.speedup.has_value()) std::cout << ", speedup " << *report.speedup << "x";
  std::cout << "\nwrote " << out_path << " and " << csv_path.string() << "\n";
  return 0;
}

int cmd_sweep(CommonOptions& o, const std::string& table_path, int stage_1based, int grid_step,
              int max_budget, const std::string& out_path) {
  require_data(o);
  Model model = build_model(o);
  StagePlan plan = io::load_stage_plan(o.stage_plan_path);
  std::vector<DatasetRecord> records = load_records(o);
  std::vector<ImportanceTable> tables = load_tables(table_path, model.config().sublayer_count());

  if (stage_1based != 0 && (stage_1based < 1 || stage_1based > plan.stage_count())) {
    throw UserError("--stage must lie in [1, " + std::to_string(plan.stage_count()) + "]");
  }

  EvalSettings settings = eval_settings_from(o);
  ModelBackend backend(model);
  DatasetEvaluator evaluator(backend, plan, records, tables, settings);

  SearchSettings ss;
  ss.grid_step = grid_step;
  ss.max_budget = max_budget;
  std::vector<int> grid = make_budget_grid(model.config().sublayer_count(), ss);

  json rows = json::array();
  std::ostringstream csv;
  csv << "budget,accuracy,mean_latency,mean_decode_tokens\n";
  for (int k : grid) {
    std::vector<int> budgets(plan.stage_count(), 0);
    if (stage_1based == 0) {
      std::fill(budgets.begin(), budgets.end(), k);  // uniform skipping
    } else {
      budgets[stage_1based - 1] = k;
    }
    EvalOutcome outcome = evaluator.evaluate(budgets);
    rows.push_back({{"budget", k},
                    {"accuracy", outcome.accuracy},
                    {"mean_latency", outcome.mean_latency},
                    {"mean_decode_tokens", outcome.mean_decode_tokens}});
    csv << k << ',' << outcome.accuracy << ',' << outcome.mean_latency << ','
        << outcome.mean_decode_tokens << '\n';
    std::cout << "budget " << k << ": accuracy " << outcome.accuracy << ", latency "
              << outcome.mean_latency << "\n";
  }

  json j{{"kind", "sweep"},
         {"mode", stage_1based == 0 ? "uniform" : "stage"},
         {"latency_unit", latency_unit_of(o)},
         {"rows", rows}};
  if (stage_1based != 0) j["stage"] = stage_1based;
  io::atomic_write(out_path, j.dump(2) + "\n");
  io::atomic_write(fs::path(out_path).replace_extension(".csv").string(), csv.str());
  std::cout << "wrote " << out_path << "\n";
  return 0;
}

std::string svg_scatter(const std::vector<EvalReport>& reports) {
  const int width = 560, height = 420, margin = 60;
  double min_x = 1e300, max_x = -1e300, min_y = 1e300, max_y = -1e300;
  for (const EvalReport& r : reports) {
    double x = r.speedup.value_or(1.0);
    min_x = std::min(min_x, x);
    max_x = std::max(max_x, x);
    min_y = std::min(min_y, r.accuracy);
    max_y = std::max(max_y, r.accuracy);
  }
  if (max_x - min_x < 1e-9) {
    min_x -= 0.05;
    max_x += 0.05;
  }
  if (max_y - min_y < 1e-9) {
    min_y -= 0.05;
    max_y += 0.05;
  }
  auto sx = [&](double x) {
    return margin + (x - min_x) / (max_x - min_x) * (width - 2 * margin);
  };
  auto sy = [&](double y) {
    return height - margin - (y - min_y) / (max_y - min_y) * (height - 2 * margin);
  };
  std::ostringstream s;
  s << "<svg xmlns='http://www.w3.org/2000/svg' width='" << width << "' height='" << height
    << "'>\n";
  s << "<rect width='100%' height='100%' fill='white'/>\n";
  s << "<line x1='" << margin << "' y1='" << height - margin << "' x2='" << width - margin
    << "' y2='" << height - margin << "' stroke='black'/>\n";
  s << "<line x1='" << margin << "' y1='" << margin << "' x2='" << margin << "' y2='"
    << height - margin << "' stroke='black'/>\n";
  s << "<text x='" << width / 2 << "' y='" << height - 15
    << "' text-anchor='middle' font-size='13'>speedup (x)</text>\n";
  s << "<text x='18' y='" << height / 2 << "' text-anchor='middle' font-size='13' transform='rotate(-90 18 "
    << height / 2 << ")'>accuracy</text>\n";
  for (const EvalReport& r : reports) {
    double x = sx(r.speedup.value_or(1.0));
    double y = sy(r.accuracy);
    s << "<circle cx='" << x << "' cy='" << y << "' r='4' fill='steelblue'/>\n";
    s << "<text x='" << x + 6 << "' y='" << y - 6 << "' font-size='11'>"
      << (r.label.empty() ? "run" : r.label) << "</text>\n";
  }
  s << "</svg>\n";
  return s.str();
}

int cmd_report(const std::vector<std::string>& inputs, const std::string& out_path,
               const std::string& svg_path) {
  if (inputs.empty()) throw UserError("report: at least one eval report required");
  std::vector<EvalReport> reports;
  for (const std::string& path : inputs) {
    EvalReport r = io::load_eval_report(path);
    if (r.label.empty()) r.label = fs::path(path).stem().string();
    reports.push_back(std::move(r));
  }

  std::ostringstream csv;
  csv << "label,accuracy,mean_modeled_latency,mean_wall_seconds,speedup,mean_budget,budgets,"
         "mean_total_decode_tokens,sample_count\n";
  for (const EvalReport& r : reports) {
    double mean_budget = 0.0;
    for (int b : r.skip_budgets) mean_budget += b;
    if (!r.skip_budgets.empty()) mean_budget /= static_cast<double>(r.skip_budgets.size());
    csv << r.label << ',' << r.accuracy << ',' << r.mean_modeled_latency << ','
        << r.mean_wall_seconds << ',';
    if (r.speedup.has_value()) csv << *r.speedup;
    csv << ',' << mean_budget << ',';
    for (size_t i = 0; i < r.skip_budgets.size(); ++i) {
      if (i > 0) csv << ' ';
      csv << r.skip_budgets[i];
    }
    csv << ',' << r.mean_total_decode_tokens << ',' << r.sample_count << '\n';
  }
  io::atomic_write(out_path, csv.str());
  std::cout << "wrote " << out_path << "\n";

  if (!svg_path.empty()) {
    io::atomic_write(svg_path, svg_scatter(reports));
    std::cout << "wrote " << svg_path << "\n";
  }
  return 0;
}

}  // namespace

int dispatch(const std::vector<std::string>& argv) {
  CLI::App app{"stage-wise layer-skipping inference harness"};
  app.require_subcommand(1);

  CommonOptions o;

  // A run-config file provides defaults; explicit flags override it. Scan
  // before CLI11 parsing so later bindings see the merged values.
  for (size_t i = 0; i + 1 < argv.size(); ++i) {
    if (argv[i] == "--config") apply_config_file(argv[i + 1], o);
  }

  std::string out_path, out_dir = ".", table_path, skip_config_path, fixed_skip_path;
  std::string reference_path, question_id, label, svg_path, config_file;
  std::vector<int> budgets;
  std::vector<std::string> report_inputs;
  bool per_stage = false, rerank = false, no_profile_ee = false;
  double epsilon = 1.0;
  int grid_step = 2, max_budget = -1, stage_1based = 0, index = 0, self_consistency = 1;

  auto add_config_flag = [&](CLI::App* cmd) {
    cmd->add_option("--config", config_file, "Run-config JSON providing flag defaults");
  };

  CLI::App* importance = app.add_subcommand("importance", "Estimate sub-layer importance");
  add_model_flags(importance, o);
  add_data_flags(importance, o);
  add_runtime_flags(importance, o);
  add_config_flag(importance);
  importance->add_flag("--per-stage", per_stage, "Emit one table per stage as well");
  importance->add_option("--out", out_path, "Output table path")->default_val("importance.json");

  CLI::App* profile = app.add_subcommand("profile", "Accuracy/latency profile for one stage");
  add_model_flags(profile, o);
  add_data_flags(profile, o);
  add_runtime_flags(profile, o);
  add_config_flag(profile);
  profile->add_option("--table", table_path, "Importance table")->required();
  profile->add_option("--stage", stage_1based, "Stage to profile (1-based)")->required();
  profile->add_option("--grid-step", grid_step, "Budget grid step");
  profile->add_option("--max-budget", max_budget, "Largest budget (-1 = auto)");
  profile->add_option("--fixed-skip", fixed_skip_path, "Skip config fixing other stages");
  profile->add_flag("--no-profile-early-exit", no_profile_ee,
                    "Profile with early exit disabled");
  profile->add_option("--out", out_path, "Output path")->default_val("profile.json");

  CLI::App* search = app.add_subcommand("search", "Greedy stage-wise budget search");
  add_model_flags(search, o);
  add_data_flags(search, o);
  add_runtime_flags(search, o);
  add_config_flag(search);
  search->add_option("--table", table_path, "Importance table")->required();
  search->add_option("--epsilon", epsilon, "Allowed accuracy drop in percentage points");
  search->add_option("--grid-step", grid_step, "Budget grid step");
  search->add_option("--max-budget", max_budget, "Largest budget (-1 = auto)");
  search->add_flag("--rerank-stages", rerank, "Re-rank remaining stages after each iteration");
  search->add_flag("--no-profile-early-exit", no_profile_ee,
                   "Profile with early exit disabled");
  search->add_option("--out-dir", out_dir, "Directory for search_result.json/skip_config.json");

  CLI::App* run = app.add_subcommand("run", "Run the pipeline on one question");
  add_model_flags(run, o);
  add_data_flags(run, o);
  add_runtime_flags(run, o);
  add_config_flag(run);
  run->add_option("--skip-config", skip_config_path, "Skip config JSON");
  run->add_option("--budgets", budgets, "Per-stage budgets (requires --table)");
  run->add_option("--table", table_path, "Importance table for --budgets");
  run->add_option("--id", question_id, "Question id");
  run->add_option("--index", index, "Question index (default 0)");
  run->add_option("--out", out_path, "Transcript path (stdout when omitted)");

  CLI::App* eval_cmd = app.add_subcommand("eval", "Evaluate accuracy and latency");
  add_model_flags(eval_cmd, o);
  add_data_flags(eval_cmd, o);
  add_runtime_flags(eval_cmd, o);
  add_config_flag(eval_cmd);
  eval_cmd->add_option("--skip-config", skip_config_path, "Skip config JSON");
  eval_cmd->add_option("--budgets", budgets, "Per-stage budgets (requires --table)");
  eval_cmd->add_option("--table", table_path, "Importance table for --budgets");
  eval_cmd->add_option("--reference", reference_path, "Full-layer reference report for speedup");
  eval_cmd->add_option("--self-consistency", self_consistency, "Pipeline runs per question");
  eval_cmd->add_option("--label", label, "Report label");
  eval_cmd->add_option("--out", out_path, "Report path")->default_val("report.json");

  CLI::App* sweep = app.add_subcommand("sweep", "Budget sweep, uniform or single-stage");
  add_model_flags(sweep, o);
  add_data_flags(sweep, o);
  add_runtime_flags(sweep, o);
  add_config_flag(sweep);
  sweep->add_option("--table", table_path, "Importance table")->required();
  sweep->add_option("--stage", stage_1based, "Sweep this stage only (1-based; 0 = uniform)");
  sweep->add_option("--grid-step", grid_step, "Budget grid step");
  sweep->add_option("--max-budget", max_budget, "Largest budget (-1 = auto)");
  sweep->add_option("--out", out_path, "Output path")->default_val("sweep.json");

  CLI::App* report = app.add_subcommand("report", "Merge eval reports into a comparison table");
  report->add_option("--inputs", report_inputs, "Eval report JSON files")->required();
  report->add_option("--out", out_path, "CSV output path")->default_val("comparison.csv");
  report->add_option("--svg", svg_path, "Optional accuracy-vs-speedup scatter");

  try {
    std::vector<std::string> args(argv.rbegin(), argv.rend());  // CLI11 wants reversed
    app.parse(args);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    if (app.got_subcommand(importance)) {
      log_effective_config("importance", o, {{"out", out_path}, {"per_stage", per_stage}});
      return cmd_importance(o, out_path, per_stage);
    }
    if (app.got_subcommand(profile)) {
      log_effective_config("profile", o,
                           {{"table", table_path}, {"stage", stage_1based}, {"out", out_path}});
      return cmd_profile(o, table_path, stage_1based, grid_step, max_budget, fixed_skip_path,
                         no_profile_ee, out_path);
    }
    if (app.got_subcommand(search)) {
      log_effective_config("search", o,
                           {{"table", table_path},
                            {"epsilon", epsilon},
                            {"grid_step", grid_step},
                            {"max_budget", max_budget},
                            {"rerank_stages", rerank},
                            {"profile_with_early_exit", !no_profile_ee},
                            {"out_dir", out_dir}});
      return cmd_search(o, table_path, epsilon, grid_step, max_budget, rerank, no_profile_ee,
                        out_dir);
    }
    if (app.got_subcommand(run)) {
      log_effective_config("run", o,
                           {{"skip_config", skip_config_path},
                            {"budgets", budgets},
                            {"id", question_id},
                            {"index", index}});
      return cmd_run(o, skip_config_path, budgets, table_path, question_id, index, out_path);
    }
    if (app.got_subcommand(eval_cmd)) {
      log_effective_config("eval", o,
                           {{"skip_config", skip_config_path},
                            {"budgets", budgets},
                            {"reference", reference_path},
                            {"self_consistency", self_consistency},
                            {"out", out_path}});
      return cmd_eval(o, skip_config_path, budgets, table_path, reference_path, self_consistency,
                      label, out_path);
    }
    if (app.got_subcommand(sweep)) {
      log_effective_config("sweep", o,
                           {{"table", table_path}, {"stage", stage_1based}, {"out", out_path}});
      return cmd_sweep(o, table_path, stage_1based, grid_step, max_budget, out_path);
    }
    if (app.got_subcommand(report)) {
      return cmd_report(report_inputs, out_path, svg_path);
    }
  } catch (const UserError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "internal error: " << e.what() << "\n";
    return 2;
  }
  return 1;
}

}  // namespace stageskip::cli
