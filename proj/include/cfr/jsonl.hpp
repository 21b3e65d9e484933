#pragma once

#include <json.hpp>

#include <filesystem>
#include <vector>

namespace cfr {

void write_jsonl(const std::filesystem::path& path, const std::vector<nlohmann::json>& records);
std::vector<nlohmann::json> read_jsonl(const std::filesystem::path& path);

nlohmann::json read_json_file(const std::filesystem::path& path);
// Pretty-printed with a trailing newline; key order is nlohmann's sorted order.
void write_json_file(const std::filesystem::path& path, const nlohmann::json& value);

void write_text_file(const std::filesystem::path& path, const std::string& text);
std::string read_text_file(const std::filesystem::path& path);

}  // namespace cfr
