#include "cfr/perturbation/filter.hpp"

#include "cfr/common.hpp"
#include "cfr/jsonl.hpp"

#include <algorithm>
#include <cmath>
#include <unordered_map>

namespace cfr {

void FilterPolicy::validate() const {
  require(max_similarity > 0.0 && max_similarity <= 1.0, ErrorCode::kConfig,
          "filter_policy.max_similarity must be in (0, 1]");
  require(min_caption_tokens >= 0, ErrorCode::kConfig, "filter_policy.min_caption_tokens must be >= 0");
}

std::map<std::string, std::vector<std::string>> load_class_synonyms(const std::filesystem::path& path) {
  const auto j = read_json_file(path);
  require(j.is_object(), ErrorCode::kConfig, path.string() + ": synonym file must be a JSON object");
  std::map<std::string, std::vector<std::string>> out;
  for (const auto& [cls, list] : j.items()) {
    require(list.is_array(), ErrorCode::kConfig, path.string() + ": synonyms of '" + cls + "' must be a list");
    out[cls] = list.get<std::vector<std::string>>();
  }
  return out;
}

std::vector<std::string> protected_tokens(const std::string& gt_class, const FilterPolicy& policy) {
  std::vector<std::string> out = tokenize(gt_class);
  if (auto it = policy.class_synonyms.find(gt_class); it != policy.class_synonyms.end()) {
    for (const auto& syn : it->second) {
      for (auto& t : tokenize(syn)) out.push_back(std::move(t));
    }
  }
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

double cosine_similarity(const EmbeddingVector& u, const EmbeddingVector& v) {
  require(u.data.size() == v.data.size(), ErrorCode::kDimensionMismatch,
          "cosine of vectors with " + std::to_string(u.data.size()) + " and " + std::to_string(v.data.size()) +
              " dims");
  const double nu = u.data.norm();
  const double nv = v.data.norm();
  require(nu > 0.0 && nv > 0.0, ErrorCode::kZeroVector, "cosine similarity of a zero vector");
  return std::clamp(u.data.dot(v.data) / (nu * nv), -1.0, 1.0);
}

namespace {

std::size_t count_of(const std::vector<std::string>& tokens, const std::string& t) {
  return static_cast<std::size_t>(std::count(tokens.begin(), tokens.end(), t));
}

}  // namespace

std::vector<CaptionEdit> filter_edits(const std::vector<CaptionEdit>& edits, const std::string& gt_class,
                                      const FilterPolicy& policy, const SentenceEmbedder& embedder) {
  require(!trim(gt_class).empty(), ErrorCode::kInvalidArgument, "gt_class is empty");
  policy.validate();
  const auto guarded = protected_tokens(gt_class, policy);
  std::unordered_map<std::string, EmbeddingVector> cache;
  auto embed = [&](const std::string& text) -> const EmbeddingVector& {
    auto it = cache.find(text);
    if (it == cache.end()) it = cache.emplace(text, embedder.embed(text)).first;
    return it->second;
  };

  std::vector<CaptionEdit> out;
  out.reserve(edits.size());
  for (CaptionEdit edit : edits) {
    edit.similarity_to_original.reset();
    const auto before = tokenize(edit.original);
    const auto after = tokenize(edit.perturbed);
    if (static_cast<int>(after.size()) < policy.min_caption_tokens || before.empty()) {
      edit.verdict = Verdict::kRejectedDegenerate;
      out.push_back(std::move(edit));
      continue;
    }
    const bool class_touched = std::any_of(guarded.begin(), guarded.end(), [&](const std::string& t) {
      return count_of(after, t) < count_of(before, t);
    });
    if (class_touched) {
      edit.verdict = Verdict::kRejectedClassChange;
      out.push_back(std::move(edit));
      continue;
    }
    try {
      edit.similarity_to_original = cosine_similarity(embed(edit.original), embed(edit.perturbed));
    } catch (const Error&) {
      edit.verdict = Verdict::kRejectedDegenerate;
      out.push_back(std::move(edit));
      continue;
    }
    if (*edit.similarity_to_original > policy.max_similarity || before == after) {
      edit.verdict = Verdict::kRejectedTooSimilar;
    } else if (diff_span(edit.original, edit.perturbed).changed_tokens() == 0) {
      edit.verdict = Verdict::kRejectedDegenerate;
    } else {
      edit.verdict = Verdict::kAccepted;
    }
    out.push_back(std::move(edit));
  }
  return out;
}

}  // namespace cfr
