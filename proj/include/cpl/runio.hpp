#pragma once

#include <filesystem>
#include <span>
#include <string>

#include <json.hpp>

#include "cpl/config.hpp"
#include "cpl/ingest.hpp"

namespace cpl {

nlohmann::json to_json(const RunConfig& config);
// Throws SchemaError on missing or ill-typed fields.
RunConfig config_from_json(const nlohmann::json& j);

// Records written by the library mark their curves as already smoothed.
nlohmann::json to_json(const RunRecord& run);
std::string to_jsonl(std::span<const RunRecord> runs);
void write_runs(const std::filesystem::path& path, std::span<const RunRecord> runs);

std::string read_text_file(const std::filesystem::path& path);
void write_text_file(const std::filesystem::path& path, const std::string& text);

}  // namespace cpl
