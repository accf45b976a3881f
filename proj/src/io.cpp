#include "stageskip/io.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "stageskip/errors.hpp"

namespace stageskip::io {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

constexpr char kWeightMagic[8] = {'S', 'S', 'K', 'W', 'T', '0', '1', '\n'};

json config_to_json(const ModelConfig& c) {
  return json{{"n_blocks", c.n_blocks},   {"d_model", c.d_model},
              {"n_heads", c.n_heads},     {"d_ff", c.d_ff},
              {"vocab_size", c.vocab_size}, {"max_seq_len", c.max_seq_len},
              {"rng_seed", c.rng_seed},   {"tied_head", c.tied_head}};
}

ModelConfig config_from_json(const json& j) {
  ModelConfig c;
  c.n_blocks = j.at("n_blocks").get<int>();
  c.d_model = j.at("d_model").get<int>();
  c.n_heads = j.at("n_heads").get<int>();
  c.d_ff = j.at("d_ff").get<int>();
  c.vocab_size = j.at("vocab_size").get<int>();
  c.max_seq_len = j.at("max_seq_len").get<int>();
  c.rng_seed = j.at("rng_seed").get<uint64_t>();
  c.tied_head = j.value("tied_head", false);
  return c;
}

json parse_or_fail(const std::string& text, const std::string& what) {
  json j = json::parse(text, nullptr, false);
  if (j.is_discarded()) throw UserError("failed to parse " + what + " as JSON");
  return j;
}

json table_to_json(const ImportanceTable& t) {
  json rows = json::array();
  for (int g = 0; g < t.sublayer_count(); ++g) {
    SubLayerRef ref = SubLayerRef::from_ordinal(g);
    rows.push_back({{"ordinal", g},
                    {"block", ref.block},
                    {"kind", to_string(ref.kind)},
                    {"score", t.scores[g]}});
  }
  return json{{"sample_count", t.sample_count},
              {"stage_count", t.stage_count},
              {"sublayers", rows}};
}

ImportanceTable table_from_json(const json& j) {
  ImportanceTable t;
  t.sample_count = j.at("sample_count").get<int>();
  t.stage_count = j.at("stage_count").get<int>();
  const json& rows = j.at("sublayers");
  t.scores.resize(rows.size());
  std::vector<char> seen(rows.size(), 0);
  for (const json& row : rows) {
    int g = row.at("ordinal").get<int>();
    if (g < 0 || g >= static_cast<int>(rows.size()) || seen[g]) {
      throw UserError("importance table: bad or duplicate sub-layer ordinal");
    }
    seen[g] = 1;
    t.scores[g] = row.at("score").get<double>();
  }
  return t;
}

json profile_to_json(const StageProfile& p, const std::string& latency_unit) {
  json rows = json::array();
  for (const ProfileRow& r : p.rows) {
    rows.push_back({{"budget", r.budget},
                    {"accuracy", r.accuracy},
                    {"mean_latency", r.mean_latency},
                    {"mean_decode_tokens", r.mean_decode_tokens}});
  }
  return json{
      {"kind", "stage_profile"}, {"stage", p.stage}, {"latency_unit", latency_unit},
      {"rows", rows}};
}

StageProfile profile_from_json(const json& j) {
  StageProfile p;
  p.stage = j.at("stage").get<int>();
  for (const json& row : j.at("rows")) {
    p.rows.push_back({row.at("budget").get<int>(), row.at("accuracy").get<double>(),
                      row.at("mean_latency").get<double>(),
                      row.at("mean_decode_tokens").get<double>()});
  }
  return p;
}

}  // namespace

void atomic_write(const fs::path& path, const std::string& contents) {
  fs::path dir = path.parent_path();
  if (!dir.empty()) fs::create_directories(dir);
  fs::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw UserError("cannot open " + tmp.string() + " for writing");
    out.write(contents.data(), static_cast<std::streamsize>(contents.size()));
    if (!out) throw UserError("write failed for " + tmp.string());
  }
  fs::rename(tmp, path);
}

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw UserError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::vector<DatasetRecord> load_dataset(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw UserError("cannot open dataset " + path.string());
  std::vector<DatasetRecord> records;
  std::set<std::string> ids;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    json j = json::parse(line, nullptr, false);
    if (j.is_discarded()) {
      throw UserError(path.string() + ":" + std::to_string(line_no) + ": malformed JSON record");
    }
    DatasetRecord rec;
    try {
      rec.id = j.at("id").get<std::string>();
      rec.question = j.at("question").get<std::string>();
      for (const json& opt : j.at("options")) {
        rec.options.push_back({opt.at(0).get<std::string>(), opt.at(1).get<std::string>()});
      }
      rec.gold = j.at("gold").get<std::string>();
    } catch (const json::exception& e) {
      throw UserError(path.string() + ":" + std::to_string(line_no) + ": " + e.what());
    }
    if (rec.options.size() < 2) {
      throw UserError("record '" + rec.id + "': needs at least 2 options");
    }
    std::set<std::string> labels;
    for (const auto& opt : rec.options) {
      if (opt.label.size() != 1 || opt.label[0] < 'A' || opt.label[0] > 'E') {
        throw UserError("record '" + rec.id + "': option labels must be A..E");
      }
      if (!labels.insert(opt.label).second) {
        throw UserError("record '" + rec.id + "': duplicate option label " + opt.label);
      }
    }
    if (!labels.count(rec.gold)) {
      throw UserError("record '" + rec.id + "': gold label '" + rec.gold +
                      "' is not one of the options");
    }
    if (!ids.insert(rec.id).second) {
      throw UserError(path.string() + ":" + std::to_string(line_no) + ": duplicate id '" +
                      rec.id + "'");
    }
    records.push_back(std::move(rec));
  }
  return records;
}

void save_dataset(const fs::path& path, std::span<const DatasetRecord> records) {
  std::string out;
  for (const DatasetRecord& rec : records) {
    json opts = json::array();
    for (const auto& o : rec.options) opts.push_back({o.label, o.text});
    json j{{"id", rec.id}, {"question", rec.question}, {"options", opts}, {"gold", rec.gold}};
    out += j.dump();
    out += '\n';
  }
  atomic_write(path, out);
}

StagePlan load_stage_plan(const fs::path& path) {
  json j = parse_or_fail(read_file(path), "stage plan " + path.string());
  StagePlan plan;
  try {
    for (const json& s : j.at("stages")) {
      StageSpec spec;
      spec.name = s.at("name").get<std::string>();
      spec.template_text = s.at("template").get<std::string>();
      spec.max_new_tokens = s.at("max_new_tokens").get<int>();
      if (s.contains("stop_tokens")) {
        spec.stop_tokens = s.at("stop_tokens").get<std::vector<int>>();
      }
      plan.stages.push_back(std::move(spec));
    }
  } catch (const json::exception& e) {
    throw UserError("stage plan " + path.string() + ": " + e.what());
  }
  plan.validate();
  return plan;
}

void save_stage_plan(const fs::path& path, const StagePlan& plan) {
  json stages = json::array();
  for (const StageSpec& s : plan.stages) {
    json spec{{"name", s.name}, {"template", s.template_text},
              {"max_new_tokens", s.max_new_tokens}};
    if (!s.stop_tokens.empty()) spec["stop_tokens"] = s.stop_tokens;
    stages.push_back(std::move(spec));
  }
  atomic_write(path, json{{"kind", "stage_plan"}, {"stages", stages}}.dump(2) + "\n");
}

ImportanceFile load_importance(const fs::path& path) {
  json j = parse_or_fail(read_file(path), "importance table " + path.string());
  ImportanceFile file;
  try {
    file.global = table_from_json(j.at("global"));
    if (j.contains("per_stage")) {
      for (const json& t : j.at("per_stage")) file.per_stage.push_back(table_from_json(t));
    }
  } catch (const json::exception& e) {
    throw UserError("importance table " + path.string() + ": " + e.what());
  }
  return file;
}

void save_importance(const fs::path& path, const ImportanceFile& file) {
  json j{{"kind", "importance_table"}, {"global", table_to_json(file.global)}};
  if (!file.per_stage.empty()) {
    json per_stage = json::array();
    for (const ImportanceTable& t : file.per_stage) per_stage.push_back(table_to_json(t));
    j["per_stage"] = std::move(per_stage);
  }
  atomic_write(path, j.dump(2) + "\n");
}

SkipConfig load_skip_config(const fs::path& path, int sublayer_count) {
  json j = parse_or_fail(read_file(path), "skip config " + path.string());
  SkipConfig config;
  try {
    for (const json& stage : j.at("stages")) {
      SkipSet set(sublayer_count);
      for (const json& g : stage) set.insert(SubLayerRef::from_ordinal(g.get<int>()));
      config.per_stage.push_back(std::move(set));
    }
  } catch (const json::exception& e) {
    throw UserError("skip config " + path.string() + ": " + e.what());
  } catch (const std::invalid_argument& e) {
    throw UserError("skip config " + path.string() + ": " + e.what());
  }
  return config;
}

void save_skip_config(const fs::path& path, const SkipConfig& config) {
  json stages = json::array();
  for (const SkipSet& set : config.per_stage) {
    json ordinals = json::array();
    for (const SubLayerRef& ref : set.members()) ordinals.push_back(ref.ordinal());
    stages.push_back(std::move(ordinals));
  }
  json j{{"kind", "skip_config"}, {"budgets", config.budgets()}, {"stages", stages}};
  atomic_write(path, j.dump(2) + "\n");
}

StageProfile load_stage_profile(const fs::path& path) {
  return profile_from_json(parse_or_fail(read_file(path), "stage profile " + path.string()));
}

void save_stage_profile(const fs::path& path, const StageProfile& profile,
                        const std::string& latency_unit) {
  atomic_write(path, profile_to_json(profile, latency_unit).dump(2) + "\n");
}

SearchResult load_search_result(const fs::path& path) {
  json j = parse_or_fail(read_file(path), "search result " + path.string());
  SearchResult r;
  try {
    r.baseline_accuracy = j.at("baseline_accuracy").get<double>();
    r.baseline_latency = j.at("baseline_latency").get<double>();
    r.target_accuracy = j.at("target_accuracy").get<double>();
    r.stage_order = j.at("stage_order").get<std::vector<int>>();
    r.budgets = j.at("budgets").get<std::vector<int>>();
    r.final_accuracy = j.at("final_accuracy").get<double>();
    r.final_latency = j.at("final_latency").get<double>();
    for (const json& it : j.at("iterations")) {
      SearchIteration iter;
      iter.stage = it.at("stage").get<int>();
      iter.chosen_budget = it.at("chosen_budget").get<int>();
      iter.profile = profile_from_json(it.at("profile"));
      r.iterations.push_back(std::move(iter));
    }
  } catch (const json::exception& e) {
    throw UserError("search result " + path.string() + ": " + e.what());
  }
  return r;
}

void save_search_result(const fs::path& path, const SearchResult& result,
                        const std::string& latency_unit) {
  json iterations = json::array();
  for (const SearchIteration& it : result.iterations) {
    iterations.push_back({{"stage", it.stage},
                          {"chosen_budget", it.chosen_budget},
                          {"profile", profile_to_json(it.profile, latency_unit)}});
  }
  double mean_budget = 0.0;
  for (int b : result.budgets) mean_budget += b;
  if (!result.budgets.empty()) mean_budget /= static_cast<double>(result.budgets.size());
  json j{{"kind", "search_result"},
         {"baseline_accuracy", result.baseline_accuracy},
         {"baseline_latency", result.baseline_latency},
         {"target_accuracy", result.target_accuracy},
         {"stage_order", result.stage_order},
         {"budgets", result.budgets},
         {"mean_budget", mean_budget},
         {"final_accuracy", result.final_accuracy},
         {"final_latency", result.final_latency},
         {"latency_unit", latency_unit},
         {"iterations", iterations}};
  atomic_write(path, j.dump(2) + "\n");
}

EvalReport load_eval_report(const fs::path& path) {
  json j = parse_or_fail(read_file(path), "eval report " + path.string());
  EvalReport r;
  try {
    r.accuracy = j.at("accuracy").get<double>();
    r.mean_modeled_latency = j.at("mean_modeled_latency").get<double>();
    r.mean_wall_seconds = j.at("mean_wall_seconds").get<double>();
    if (j.contains("speedup") && !j.at("speedup").is_null()) {
      r.speedup = j.at("speedup").get<double>();
    }
    r.mean_decode_tokens_per_stage =
        j.at("mean_decode_tokens_per_stage").get<std::vector<double>>();
    r.mean_stage_decode_latency = j.at("mean_stage_decode_latency").get<std::vector<double>>();
    if (j.contains("mean_stage_wall_decode_seconds")) {
      r.mean_stage_wall_decode_seconds =
          j.at("mean_stage_wall_decode_seconds").get<std::vector<double>>();
    }
    r.mean_total_decode_tokens = j.at("mean_total_decode_tokens").get<double>();
    r.skip_budgets = j.at("skip_budgets").get<std::vector<int>>();
    r.sample_count = j.at("sample_count").get<int>();
    r.label = j.value("label", "");
    for (const json& s : j.at("samples")) {
      SampleResult sr;
      sr.id = s.at("id").get<std::string>();
      if (!s.at("predicted").is_null()) sr.predicted = s.at("predicted").get<std::string>();
      sr.gold = s.at("gold").get<std::string>();
      sr.correct = s.at("correct").get<bool>();
      sr.modeled_latency = s.at("modeled_latency").get<double>();
      sr.wall_seconds = s.at("wall_seconds").get<double>();
      sr.decode_tokens = s.at("decode_tokens").get<std::vector<int>>();
      r.samples.push_back(std::move(sr));
    }
  } catch (const json::exception& e) {
    throw UserError("eval report " + path.string() + ": " + e.what());
  }
  return r;
}

void save_eval_report(const fs::path& path, const EvalReport& report,
                      const std::string& latency_unit) {
  json samples = json::array();
  for (const SampleResult& s : report.samples) {
    samples.push_back({{"id", s.id},
                       {"predicted", s.predicted.has_value() ? json(*s.predicted) : json(nullptr)},
                       {"gold", s.gold},
                       {"correct", s.correct},
                       {"modeled_latency", s.modeled_latency},
                       {"wall_seconds", s.wall_seconds},
                       {"decode_tokens", s.decode_tokens}});
  }
  double mean_budget = 0.0;
  for (int b : report.skip_budgets) mean_budget += b;
  if (!report.skip_budgets.empty()) mean_budget /= static_cast<double>(report.skip_budgets.size());
  json j{{"kind", "eval_report"},
         {"accuracy", report.accuracy},
         {"mean_modeled_latency", report.mean_modeled_latency},
         {"mean_wall_seconds", report.mean_wall_seconds},
         {"speedup", report.speedup.has_value() ? json(*report.speedup) : json(nullptr)},
         {"mean_decode_tokens_per_stage", report.mean_decode_tokens_per_stage},
         {"mean_stage_decode_latency", report.mean_stage_decode_latency},
         {"mean_stage_wall_decode_seconds", report.mean_stage_wall_decode_seconds},
         {"mean_total_decode_tokens", report.mean_total_decode_tokens},
         {"skip_budgets", report.skip_budgets},
         {"mean_budget", mean_budget},
         {"sample_count", report.sample_count},
         {"label", report.label},
         {"latency_unit", latency_unit},
         {"samples", samples}};
  atomic_write(path, j.dump(2) + "\n");
}

void save_eval_report_csv(const fs::path& path, const EvalReport& report) {
  std::ostringstream out;
  out << "label,accuracy,mean_modeled_latency,mean_wall_seconds,speedup,"
         "mean_total_decode_tokens,skip_budgets,sample_count\n";
  out << report.label << ',' << report.accuracy << ',' << report.mean_modeled_latency << ','
      << report.mean_wall_seconds << ',';
  if (report.speedup.has_value()) out << *report.speedup;
  out << ',' << report.mean_total_decode_tokens << ',';
  for (size_t i = 0; i < report.skip_budgets.size(); ++i) {
    if (i > 0) out << ' ';
    out << report.skip_budgets[i];
  }
  out << ',' << report.sample_count << '\n';
  atomic_write(path, out.str());
}

void save_transcript(const fs::path& path, const Transcript& transcript,
                     const std::string& question_id) {
  json stages = json::array();
  for (const StageTranscript& st : transcript.stages) {
    stages.push_back({{"prompt", st.prompt},
                      {"prefill_len", st.prefill_len},
                      {"tokens", st.tokens},
                      {"text", st.text},
                      {"confidences", st.confidences},
                      {"exit_reason", to_string(st.exit_reason)},
                      {"decode_len", st.decode_len},
                      {"skip_count", st.skip_count},
                      {"wall_seconds", st.wall_seconds},
                      {"modeled_cost", st.modeled_cost}});
  }
  json j{{"kind", "transcript"},
         {"question_id", question_id},
         {"stages", stages},
         {"total_wall_seconds", transcript.total_wall_seconds},
         {"total_modeled_cost", transcript.total_modeled_cost},
         {"total_decode_tokens", transcript.total_decode_tokens}};
  // Generated text can be arbitrary bytes; the tokens array stays lossless
  // while invalid UTF-8 in the decoded text is replaced for display.
  atomic_write(path, j.dump(2, ' ', false, json::error_handler_t::replace) + "\n");
}

namespace {

struct TensorEntry {
  std::string name;
  std::vector<size_t> shape;
  size_t offset;  // bytes into payload
  size_t elements() const {
    size_t n = 1;
    for (size_t d : shape) n *= d;
    return n;
  }
};

void append_payload(std::string& payload, std::vector<TensorEntry>& entries,
                    const std::string& name, std::vector<size_t> shape,
                    const std::vector<float>& data) {
  TensorEntry e{name, std::move(shape), payload.size()};
  if (e.elements() != data.size()) throw std::runtime_error("tensor shape/data mismatch");
  payload.append(reinterpret_cast<const char*>(data.data()), data.size() * sizeof(float));
  entries.push_back(std::move(e));
}

std::vector<std::pair<std::string, std::vector<size_t>>> canonical_tensors(
    const ModelConfig& c) {
  size_t d = static_cast<size_t>(c.d_model);
  size_t ff = static_cast<size_t>(c.d_ff);
  size_t v = static_cast<size_t>(c.vocab_size);
  std::vector<std::pair<std::string, std::vector<size_t>>> out;
  out.push_back({"embed.weight", {v, d}});
  for (int b = 0; b < c.n_blocks; ++b) {
    std::string p = "blocks." + std::to_string(b) + ".";
    out.push_back({p + "attn.norm.weight", {d}});
    out.push_back({p + "attn.wq.weight", {d, d}});
    out.push_back({p + "attn.wk.weight", {d, d}});
    out.push_back({p + "attn.wv.weight", {d, d}});
    out.push_back({p + "attn.wo.weight", {d, d}});
    out.push_back({p + "ffn.norm.weight", {d}});
    out.push_back({p + "ffn.w_up.weight", {ff, d}});
    out.push_back({p + "ffn.w_down.weight", {d, ff}});
  }
  out.push_back({"final_norm.weight", {d}});
  if (!c.tied_head) out.push_back({"head.weight", {v, d}});
  return out;
}

std::vector<float>* tensor_slot(Model& m, int n_blocks, const std::string& name) {
  if (name == "embed.weight") return &m.embedding();
  if (name == "final_norm.weight") return &m.final_norm();
  if (name == "head.weight") return &m.head();
  for (int b = 0; b < n_blocks; ++b) {
    std::string p = "blocks." + std::to_string(b) + ".";
    if (name.rfind(p, 0) != 0) continue;
    BlockWeights& bw = m.blocks()[b];
    std::string rest = name.substr(p.size());
    if (rest == "attn.norm.weight") return &bw.attn_norm;
    if (rest == "attn.wq.weight") return &bw.wq;
    if (rest == "attn.wk.weight") return &bw.wk;
    if (rest == "attn.wv.weight") return &bw.wv;
    if (rest == "attn.wo.weight") return &bw.wo;
    if (rest == "ffn.norm.weight") return &bw.ffn_norm;
    if (rest == "ffn.w_up.weight") return &bw.w_up;
    if (rest == "ffn.w_down.weight") return &bw.w_down;
  }
  return nullptr;
}

const std::vector<float>& tensor_data(const Model& m, const std::string& name) {
  auto* slot = tensor_slot(const_cast<Model&>(m), m.config().n_blocks, name);
  if (slot == nullptr) throw std::runtime_error("unknown tensor " + name);
  return *slot;
}

}  // namespace

void save_weights(const fs::path& path, const Model& model) {
  static_assert(std::endian::native == std::endian::little,
                "weight container assumes a little-endian host");
  const ModelConfig& c = model.config();
  std::string payload;
  std::vector<TensorEntry> entries;
  for (const auto& [name, shape] : canonical_tensors(c)) {
    append_payload(payload, entries, name, shape, tensor_data(model, name));
  }

  json tensors = json::array();
  for (const TensorEntry& e : entries) {
    tensors.push_back(
        {{"name", e.name}, {"shape", e.shape}, {"dtype", "f32"}, {"offset", e.offset}});
  }
  std::string header =
      json{{"config", config_to_json(c)}, {"payload_bytes", payload.size()}, {"tensors", tensors}}
          .dump();

  std::string blob(kWeightMagic, sizeof(kWeightMagic));
  uint64_t header_len = header.size();
  blob.append(reinterpret_cast<const char*>(&header_len), sizeof(header_len));
  blob += header;
  blob += payload;
  atomic_write(path, blob);
}

Model load_weights(const fs::path& path, const std::optional<ModelConfig>& expected) {
  std::string blob = read_file(path);
  if (blob.size() < sizeof(kWeightMagic) + sizeof(uint64_t) ||
      std::memcmp(blob.data(), kWeightMagic, sizeof(kWeightMagic)) != 0) {
    throw UserError(path.string() + ": not a weight container");
  }
  uint64_t header_len = 0;
  std::memcpy(&header_len, blob.data() + sizeof(kWeightMagic), sizeof(header_len));
  size_t header_at = sizeof(kWeightMagic) + sizeof(uint64_t);
  if (header_at + header_len > blob.size()) {
    throw UserError(path.string() + ": truncated header");
  }
  json j = parse_or_fail(blob.substr(header_at, header_len), "weight manifest");

  ModelConfig config;
  size_t payload_bytes = 0;
  try {
    config = config_from_json(j.at("config"));
    payload_bytes = j.at("payload_bytes").get<size_t>();
  } catch (const json::exception& e) {
    throw UserError(path.string() + ": bad manifest: " + e.what());
  }
  config.validate();
  if (expected.has_value() && !(config == *expected)) {
    throw UserError(path.string() + ": embedded config differs from the expected one");
  }

  size_t payload_at = header_at + header_len;
  if (blob.size() - payload_at != payload_bytes) {
    throw UserError(path.string() + ": payload size mismatch (trailing or missing bytes)");
  }
  const char* payload = blob.data() + payload_at;

  Model model = Model::with_zero_weights(config);
  auto wanted = canonical_tensors(config);
  std::set<std::string> loaded;
  std::vector<std::pair<size_t, size_t>> spans;  // (offset, bytes)
  try {
    for (const json& t : j.at("tensors")) {
      std::string name = t.at("name").get<std::string>();
      std::vector<size_t> shape = t.at("shape").get<std::vector<size_t>>();
      if (t.at("dtype").get<std::string>() != "f32") {
        throw UserError(path.string() + ": tensor " + name + ": only f32 is supported");
      }
      size_t offset = t.at("offset").get<size_t>();
      auto it = std::find_if(wanted.begin(), wanted.end(),
                             [&](const auto& w) { return w.first == name; });
      if (it == wanted.end()) throw UserError(path.string() + ": unexpected tensor " + name);
      if (it->second != shape) {
        throw UserError(path.string() + ": tensor " + name + ": shape mismatch vs config");
      }
      std::vector<float>* slot = tensor_slot(model, config.n_blocks, name);
      size_t bytes = slot->size() * sizeof(float);
      if (offset + bytes > payload_bytes) {
        throw UserError(path.string() + ": tensor " + name + ": payload out of bounds");
      }
      std::memcpy(slot->data(), payload + offset, bytes);
      if (!loaded.insert(name).second) {
        throw UserError(path.string() + ": duplicate tensor " + name);
      }
      spans.push_back({offset, bytes});
    }
  } catch (const json::exception& e) {
    throw UserError(path.string() + ": bad tensor entry: " + e.what());
  }
  for (const auto& [name, shape] : wanted) {
    if (!loaded.count(name)) throw UserError(path.string() + ": missing tensor " + name);
  }
  std::sort(spans.begin(), spans.end());
  size_t end = 0;
  for (const auto& [offset, bytes] : spans) {
    if (offset < end) throw UserError(path.string() + ": overlapping tensor payloads");
    end = offset + bytes;
  }
  if (end != payload_bytes) {
    throw UserError(path.string() + ": payload has unreferenced trailing bytes");
  }
  return model;
}

}  // namespace stageskip::io
