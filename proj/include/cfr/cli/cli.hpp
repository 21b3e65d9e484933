#pragma once

#include "cfr/evaluation/evaluation.hpp"
#include "cfr/reinforcement/reinforcement.hpp"

#include <json.hpp>

#include <filesystem>
#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

namespace cfr {

enum class ReportFormat { kTable, kCsv, kJson };
ReportFormat parse_report_format(std::string_view name);

// Weakness and comparison reports are told apart by their "kind" field.
std::string render_report(const std::filesystem::path& report_path, ReportFormat format);
std::string render_report(const nlohmann::json& report, ReportFormat format);

// Aligned text in the layout of the published tables; negative numbers use a
// typographic minus sign.
std::string render_table(const EvalReport& report);
std::string render_table(const ComparisonReport& report);

// Exit codes: 0 success, 1 usage or configuration error, 2 runtime failure.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace cfr
