#pragma once

#include "cfr/backends/interfaces.hpp"
#include "cfr/perturbation/edits.hpp"

#include <filesystem>
#include <map>
#include <string>
#include <vector>

namespace cfr {

struct FilterPolicy {
  // Reject edits whose caption embedding is closer than this to the original's.
  double max_similarity = 0.95;
  // Extra tokens guarded per class on top of the tokens of the class name.
  std::map<std::string, std::vector<std::string>> class_synonyms;
  int min_caption_tokens = 3;

  void validate() const;
};

// JSON object: {"class name": ["synonym", ...], ...}
std::map<std::string, std::vector<std::string>> load_class_synonyms(const std::filesystem::path& path);

// Protected tokens for a class: its own tokens plus its synonyms' tokens.
std::vector<std::string> protected_tokens(const std::string& gt_class, const FilterPolicy& policy);

double cosine_similarity(const EmbeddingVector& u, const EmbeddingVector& v);

// Assigns a verdict to every edit; never throws for a bad edit. Checks run in
// order degenerate -> class change -> too similar. Order of edits is kept.
std::vector<CaptionEdit> filter_edits(const std::vector<CaptionEdit>& edits, const std::string& gt_class,
                                      const FilterPolicy& policy, const SentenceEmbedder& embedder);

}  // namespace cfr
