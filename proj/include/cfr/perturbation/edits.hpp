#pragma once

#include "cfr/backends/interfaces.hpp"
#include "cfr/perturbation/factor.hpp"

#include <json.hpp>

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace cfr {

enum class Verdict { kPending, kAccepted, kRejectedClassChange, kRejectedTooSimilar, kRejectedDegenerate };

std::string_view to_string(Verdict verdict);
Verdict verdict_from_string(std::string_view name);

// Whitespace-token positions replaced in the original and what replaced them.
struct ChangedSpan {
  std::vector<int> indices;
  std::vector<std::string> replacement;

  std::size_t changed_tokens() const { return std::max(indices.size(), replacement.size()); }
  bool operator==(const ChangedSpan&) const = default;
};

struct CaptionEdit {
  std::string original;
  std::string perturbed;
  VariationFactor factor = VariationFactor::kSubject;
  ChangedSpan changed_span;
  std::optional<double> similarity_to_original;
  Verdict verdict = Verdict::kPending;

  bool operator==(const CaptionEdit&) const = default;
};

// Minimal contiguous token span that turns `original` into `perturbed`.
ChangedSpan diff_span(const std::string& original, const std::string& perturbed);

// Asks the perturber for up to n rewrites per factor. Factors are visited in the
// given order; repeated perturbed texts keep their first occurrence.
std::vector<CaptionEdit> generate_edits(const std::string& caption, const std::vector<VariationFactor>& factors,
                                        int n_per_factor, const Perturber& perturber);

nlohmann::json to_json(const CaptionEdit& edit);
CaptionEdit caption_edit_from_json(const nlohmann::json& j);

void write_edits_jsonl(const std::filesystem::path& path, const std::vector<CaptionEdit>& edits);
std::vector<CaptionEdit> read_edits_jsonl(const std::filesystem::path& path);

}  // namespace cfr
