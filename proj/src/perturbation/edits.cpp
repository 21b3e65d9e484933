#include "cfr/perturbation/edits.hpp"

#include "cfr/common.hpp"
#include "cfr/jsonl.hpp"

#include <algorithm>

namespace cfr {

using nlohmann::json;

std::string_view to_string(Verdict verdict) {
  switch (verdict) {
    case Verdict::kPending: return "pending";
    case Verdict::kAccepted: return "accepted";
    case Verdict::kRejectedClassChange: return "rejected_class_change";
    case Verdict::kRejectedTooSimilar: return "rejected_too_similar";
    case Verdict::kRejectedDegenerate: return "rejected_degenerate";
  }
  return "pending";
}

Verdict verdict_from_string(std::string_view name) {
  for (auto v : {Verdict::kPending, Verdict::kAccepted, Verdict::kRejectedClassChange, Verdict::kRejectedTooSimilar,
                 Verdict::kRejectedDegenerate}) {
    if (to_string(v) == name) return v;
  }
  fail(ErrorCode::kInvalidArgument, "unknown verdict '" + std::string(name) + "'");
}

ChangedSpan diff_span(const std::string& original, const std::string& perturbed) {
  const auto a = split_whitespace(original);
  const auto b = split_whitespace(perturbed);
  std::size_t prefix = 0;
  while (prefix < a.size() && prefix < b.size() && a[prefix] == b[prefix]) ++prefix;
  std::size_t suffix = 0;
  while (suffix < a.size() - prefix && suffix < b.size() - prefix &&
         a[a.size() - 1 - suffix] == b[b.size() - 1 - suffix])
    ++suffix;
  ChangedSpan span;
  for (std::size_t i = prefix; i < a.size() - suffix; ++i) span.indices.push_back(static_cast<int>(i));
  span.replacement.assign(b.begin() + static_cast<std::ptrdiff_t>(prefix),
                          b.end() - static_cast<std::ptrdiff_t>(suffix));
  return span;
}

std::vector<CaptionEdit> generate_edits(const std::string& caption, const std::vector<VariationFactor>& factors,
                                        int n_per_factor, const Perturber& perturber) {
  require(!trim(caption).empty(), ErrorCode::kInvalidArgument, "caption is empty");
  require(n_per_factor >= 1, ErrorCode::kInvalidArgument, "n_per_factor must be >= 1");
  std::vector<CaptionEdit> out;
  std::vector<VariationFactor> seen;
  for (auto factor : factors) {
    if (std::find(seen.begin(), seen.end(), factor) != seen.end()) continue;
    seen.push_back(factor);
    std::vector<std::string> rewrites;
    try {
      rewrites = perturber.perturb(caption, factor, n_per_factor);
    } catch (const Error& e) {
      throw Error(e.code(), std::string(e.what()) + " [caption: \"" + caption + "\", factor: " +
                                std::string(to_string(factor)) + "]");
    }
    for (auto& text : rewrites) {
      const bool duplicate =
          std::any_of(out.begin(), out.end(), [&](const CaptionEdit& e) { return e.perturbed == text; });
      if (duplicate) continue;
      CaptionEdit edit;
      edit.original = caption;
      edit.changed_span = diff_span(caption, text);
      edit.perturbed = std::move(text);
      edit.factor = factor;
      out.push_back(std::move(edit));
    }
  }
  return out;
}

json to_json(const CaptionEdit& edit) {
  json j = {{"original", edit.original},
            {"perturbed", edit.perturbed},
            {"factor", to_string(edit.factor)},
            {"changed_span", {{"indices", edit.changed_span.indices}, {"replacement", edit.changed_span.replacement}}},
            {"similarity_to_original", nullptr},
            {"verdict", nullptr}};
  if (edit.similarity_to_original) j["similarity_to_original"] = *edit.similarity_to_original;
  if (edit.verdict != Verdict::kPending) j["verdict"] = to_string(edit.verdict);
  return j;
}

CaptionEdit caption_edit_from_json(const json& j) {
  CaptionEdit e;
  e.original = j.at("original").get<std::string>();
  e.perturbed = j.at("perturbed").get<std::string>();
  e.factor = factor_from_string(j.at("factor").get<std::string>());
  const auto& span = j.at("changed_span");
  e.changed_span.indices = span.at("indices").get<std::vector<int>>();
  e.changed_span.replacement = span.at("replacement").get<std::vector<std::string>>();
  const auto n_orig = static_cast<int>(split_whitespace(e.original).size());
  for (int idx : e.changed_span.indices) {
    require(idx >= 0 && idx < n_orig, ErrorCode::kInvalidArgument, "changed_span index out of bounds");
  }
  if (j.contains("similarity_to_original") && !j["similarity_to_original"].is_null()) {
    e.similarity_to_original = j["similarity_to_original"].get<double>();
  }
  if (j.contains("verdict") && !j["verdict"].is_null()) e.verdict = verdict_from_string(j["verdict"].get<std::string>());
  require(e.verdict != Verdict::kAccepted || e.perturbed != e.original, ErrorCode::kInvalidArgument,
          "accepted edit has identical captions");
  return e;
}

void write_edits_jsonl(const std::filesystem::path& path, const std::vector<CaptionEdit>& edits) {
  std::vector<json> rows;
  rows.reserve(edits.size());
  for (const auto& e : edits) rows.push_back(to_json(e));
  write_jsonl(path, rows);
}

std::vector<CaptionEdit> read_edits_jsonl(const std::filesystem::path& path) {
  std::vector<CaptionEdit> out;
  for (const auto& j : read_jsonl(path)) out.push_back(caption_edit_from_json(j));
  return out;
}

}  // namespace cfr
