#pragma once

#include "cfr/evaluation/evaluation.hpp"
#include "cfr/pipeline/config.hpp"
#include "cfr/reinforcement/reinforcement.hpp"

#include <json.hpp>

#include <filesystem>
#include <map>
#include <string>
#include <vector>

namespace cfr {

enum class Stage { kStressTest, kReinforce };
std::string_view to_string(Stage stage);

struct SkippedItem {
  std::string image_id;
  std::string reason;
};

struct RunManifest {
  std::string run_id;
  Stage stage = Stage::kStressTest;
  std::string status;  // "completed" or "failed"
  std::string config_hash;
  std::vector<BackendDescriptor> backend_descriptors;
  std::map<std::string, std::uint64_t> seeds;
  // Paths relative to the run directory, except "dataset" and "source_run".
  std::map<std::string, std::string> artifact_paths;
  std::map<std::string, std::string> timestamps;
  std::map<std::string, long long> counts;
  std::vector<SkippedItem> skipped;
};

nlohmann::json to_json(const RunManifest& manifest);
RunManifest run_manifest_from_json(const nlohmann::json& j);
RunManifest read_run_manifest(const std::filesystem::path& run_dir);

// Creates runs/<prefix>-<hash8>-<NNN> with the first free NNN. Never reuses a
// directory that already exists.
std::filesystem::path allocate_run_dir(const std::filesystem::path& run_root, const std::string& prefix,
                                       const std::string& config_hash);

// "latest" picks the newest completed stress-test run.
std::filesystem::path find_stress_run(const std::filesystem::path& run_root, const std::string& run_id);

struct StressTestResult {
  std::filesystem::path run_dir;
  LabeledSet T_prime;
  EvalReport report;
  RunManifest manifest;
};

// caption -> perturb -> filter -> invert + edit with tau selection -> evaluate.
// Items that yield no counterfactual are logged in the manifest; the run fails
// with kNoCounterfactuals only when none survive.
StressTestResult run_stress_test(const StressTestConfig& config);

struct ReinforceRunResult {
  std::filesystem::path run_dir;
  ComparisonReport comparison;
  TrainingRecord record;
  RunManifest manifest;
};

// Reads only the files a stress-test run wrote: its counterfactual manifest and
// baseline parameters.
ReinforceRunResult run_reinforcement(const ReinforceConfig& config);

// Splits indices [0, n) into (train, val) by a seeded shuffle; val gets
// round(n * val_fraction) items, clamped so both sides are nonempty.
std::pair<std::vector<std::size_t>, std::vector<std::size_t>> split_indices(std::size_t n, double val_fraction,
                                                                              std::uint64_t seed);

std::string utc_timestamp();

}  // namespace cfr
