#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "stageskip/eval.hpp"
#include "stageskip/importance.hpp"
#include "stageskip/io_types.hpp"
#include "stageskip/model.hpp"
#include "stageskip/pipeline.hpp"
#include "stageskip/search.hpp"

namespace stageskip::io {

// All writers go through a temp file in the target directory plus rename, so
// readers never observe partial artifacts.
void atomic_write(const std::filesystem::path& path, const std::string& contents);
std::string read_file(const std::filesystem::path& path);

// JSONL, one record per line; see docs/FORMATS.md. Malformed lines report
// their line number; duplicate ids and gold labels outside the option set are
// rejected.
std::vector<DatasetRecord> load_dataset(const std::filesystem::path& path);
void save_dataset(const std::filesystem::path& path, std::span<const DatasetRecord> records);

StagePlan load_stage_plan(const std::filesystem::path& path);
void save_stage_plan(const std::filesystem::path& path, const StagePlan& plan);

// One global table, or one per stage when estimated with per-stage tables.
struct ImportanceFile {
  ImportanceTable global;
  std::vector<ImportanceTable> per_stage;
};
ImportanceFile load_importance(const std::filesystem::path& path);
void save_importance(const std::filesystem::path& path, const ImportanceFile& file);

SkipConfig load_skip_config(const std::filesystem::path& path, int sublayer_count);
void save_skip_config(const std::filesystem::path& path, const SkipConfig& config);

StageProfile load_stage_profile(const std::filesystem::path& path);
void save_stage_profile(const std::filesystem::path& path, const StageProfile& profile,
                        const std::string& latency_unit);

SearchResult load_search_result(const std::filesystem::path& path);
void save_search_result(const std::filesystem::path& path, const SearchResult& result,
                        const std::string& latency_unit);

EvalReport load_eval_report(const std::filesystem::path& path);
void save_eval_report(const std::filesystem::path& path, const EvalReport& report,
                      const std::string& latency_unit);
// Comma-separated one-row summary next to the JSON report.
void save_eval_report_csv(const std::filesystem::path& path, const EvalReport& report);

void save_transcript(const std::filesystem::path& path, const Transcript& transcript,
                     const std::string& question_id);

// Binary weight container: magic, JSON manifest (config plus tensor table of
// name/shape/dtype/offset), then little-endian f32 payload. Offsets are
// validated to be non-overlapping and to exactly tile the payload.
void save_weights(const std::filesystem::path& path, const Model& model);
// `expected` cross-checks the embedded config when provided.
Model load_weights(const std::filesystem::path& path,
                   const std::optional<ModelConfig>& expected = std::nullopt);

}  // namespace stageskip::io
