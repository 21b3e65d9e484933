#pragma once

#include "cfr/backends/registry.hpp"
#include "cfr/editing/editing.hpp"
#include "cfr/perturbation/filter.hpp"
#include "cfr/reinforcement/reinforcement.hpp"

#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

namespace cfr {

struct ConfigKey {
  std::string key;  // "section.name"
  std::string default_value;
  std::string help;
};

// Every key the config file accepts, in display order.
const std::vector<ConfigKey>& config_keys();

// Flat view of an INI document with [section] headers. Unknown keys are
// rejected so a typo never silently falls back to a default.
class Config {
 public:
  Config();

  static Config load(const std::filesystem::path& file);
  static Config parse(const std::string& text, const std::filesystem::path& base_dir);

  // "section.key=value"
  void apply_override(const std::string& assignment);
  void set(const std::string& key, const std::string& value);
  bool is_set(const std::string& key) const { return explicit_.count(key) != 0; }

  std::string get(const std::string& key) const;
  double get_double(const std::string& key) const;
  long long get_int(const std::string& key) const;
  bool get_bool(const std::string& key) const;
  std::vector<std::string> get_list(const std::string& key) const;
  // Empty value -> empty path; relative paths resolve against base_dir().
  std::filesystem::path get_path(const std::string& key) const;

  const std::filesystem::path& base_dir() const { return base_dir_; }
  void set_base_dir(std::filesystem::path dir) { base_dir_ = std::move(dir); }

  // Sorted key = value lines of every key, grouped into sections. Execution-only
  // keys (run.jobs, run.root) are left out so they never change the hash.
  std::string canonical() const;
  std::string hash() const;

 private:
  std::map<std::string, std::string> values_;
  std::set<std::string> explicit_;
  std::filesystem::path base_dir_;
};

// Run root: run.root when set, else $CFR_RUN_ROOT, else ./runs.
std::filesystem::path resolve_run_root(const Config& config);

BackendConfig backend_config_from(const Config& config);
FilterPolicy filter_policy_from(const Config& config);
TrainConfig train_config_from(const Config& config);

struct StressTestConfig {
  std::filesystem::path dataset_manifest;
  std::vector<VariationFactor> factors;
  int n_edits_per_factor = 1;
  std::vector<double> tau_grid;
  FilterPolicy filter_policy;
  int caption_min_words = 20;
  double repetition_penalty = 1.5;
  int inversion_steps = 50;
  NullTextOptions null_text;
  BackendConfig backends;
  std::filesystem::path run_root;
  std::uint64_t seed = 0;
  int jobs = 1;
  bool cache = false;
  std::string config_text;  // canonical config, stored with the run
  std::string config_hash;

  void validate() const;
  static StressTestConfig from(const Config& config);
};

struct ReinforceConfig {
  std::filesystem::path run_root;
  std::string stress_run;  // run id or "latest"
  std::vector<std::filesystem::path> eval_sets;
  double val_fraction = 0.2;
  bool standard_arm = true;
  std::filesystem::path standard_train;  // empty -> the stress run's dataset
  TrainConfig train;
  std::uint64_t seed = 0;
  std::string config_text;
  std::string config_hash;

  void validate() const;
  static ReinforceConfig from(const Config& config);
};

}  // namespace cfr
