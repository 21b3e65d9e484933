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

struct LabeledItem {
  ImageTensor image;
  std::string label;
  std::string image_path;  // as written in the manifest
  nlohmann::json extra = nlohmann::json::object();
};

struct LabeledSet {
  std::string name;
  std::vector<LabeledItem> items;
  std::vector<std::string> class_universe;

  // Nonempty, every label in the universe.
  void validate() const;
  std::size_t size() const { return items.size(); }
};

// JSON lines of {image, label}; image paths resolve against the manifest's
// directory. Any other fields are kept in LabeledItem::extra.
// An empty class_universe means "the labels that occur, sorted".
LabeledSet load_labeled_set(const std::filesystem::path& manifest, const std::string& name,
                            std::vector<std::string> class_universe = {});
void write_manifest(const std::filesystem::path& manifest, const LabeledSet& set);

// Ties rank the lower class index first.
int acc_at_k(const ScoreVector& scores, const std::string& gt_class, int k);

// Per-item Acc@5 indicators, in item order.
std::vector<int> acc5_hits(const LabeledSet& set, const Classifier& classifier, int jobs = 1);

// 100 * mean Acc@5, rounded to 2 decimals.
double mean_acc5(const LabeledSet& set, const Classifier& classifier, int jobs = 1);
double percent_of(const std::vector<int>& hits);

// round2(mean_acc5(T') - mean_acc5(T)) computed from the rounded means.
double delta_acc5(const LabeledSet& T, const LabeledSet& T_prime, const Classifier& classifier, int jobs = 1);
double delta_of(double acc_T, double acc_T_prime);

struct ClassResult {
  std::string name;
  std::size_t n_T = 0;
  std::size_t n_T_prime = 0;
  double acc5_T = 0.0;
  std::optional<double> acc5_T_prime;
  std::optional<double> delta;

  bool operator==(const ClassResult&) const = default;
};

struct FactorResult {
  VariationFactor factor = VariationFactor::kBackground;
  std::size_t n = 0;
  double acc5_T_prime = 0.0;
  double delta = 0.0;

  bool operator==(const FactorResult&) const = default;
};

struct EvalReport {
  static constexpr int kSchemaVersion = 1;

  std::string model_name;
  std::size_t size_T = 0;
  std::size_t size_T_prime = 0;
  double acc5_T = 0.0;
  double acc5_T_prime = 0.0;
  double delta = 0.0;
  // Worst first; classes without counterfactuals go last.
  std::vector<ClassResult> per_class;
  std::vector<FactorResult> per_factor;
  std::size_t missing_metadata = 0;
  nlohmann::json metadata = nlohmann::json::object();

  void validate() const;
  bool operator==(const EvalReport&) const = default;
};

nlohmann::json to_json(const EvalReport& report);
EvalReport eval_report_from_json(const nlohmann::json& j);
std::string to_csv(const EvalReport& report);

// Orders classes by ascending delta, then name.
void sort_per_class(std::vector<ClassResult>& rows);

// cf_metadata maps a T' item's image id to the factor of the edit that made it.
// T' items without an entry are counted in missing_metadata.
EvalReport build_weakness_report(const LabeledSet& T, const LabeledSet& T_prime,
                                 const std::map<std::string, VariationFactor>& cf_metadata,
                                 const Classifier& classifier, int jobs = 1);

// Same aggregation from precomputed indicators, for callers that already scored.
EvalReport assemble_weakness_report(const LabeledSet& T, const std::vector<int>& hits_T, const LabeledSet& T_prime,
                                    const std::vector<int>& hits_T_prime,
                                    const std::map<std::string, VariationFactor>& cf_metadata,
                                    const std::string& model_name);

}  // namespace cfr
