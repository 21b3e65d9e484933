#include "cfr/pipeline/config.hpp"

#include "cfr/common.hpp"
#include "cfr/jsonl.hpp"

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include <cstdlib>
#include <sstream>

namespace cfr {

const std::vector<ConfigKey>& config_keys() {
  static const std::vector<ConfigKey> keys = {
      {"run.root", "", "directory holding run folders (default: $CFR_RUN_ROOT, then ./runs)"},
      {"run.seed", "0", "seed for shuffles and splits"},
      {"run.jobs", "1", "worker threads for per-item stages"},

      {"stress.dataset", "", "JSONL manifest of {image, label} rows to stress-test"},
      {"stress.factors", "background", "comma list of subject, object, background, adjective, data_domain"},
      {"stress.n_edits_per_factor", "1", "caption rewrites requested per factor"},
      {"stress.caption_min_words", "20", "minimum caption length in words"},
      {"stress.repetition_penalty", "1.5", "captioner repetition penalty (>= 1)"},
      {"stress.inversion_steps", "50", "DDIM inversion steps K"},
      {"stress.null_text_steps", "10", "optimisation steps per timestep"},
      {"stress.null_text_lr", "1.0", "multiplier on the line-search step"},
      {"stress.null_text_tolerance", "1e-5", "squared residual counted as converged"},
      {"stress.guidance_scale", "7.5", "classifier-free guidance scale"},
      {"stress.cache", "false", "reuse captions across runs keyed by image, backend and config"},

      {"tau_grid.values", "0.1,0.2,0.3,0.4,0.5,0.6,0.7,0.8,0.9", "candidate tau values"},

      {"filter_policy.max_similarity", "0.95", "edits above this sentence similarity are rejected"},
      {"filter_policy.min_caption_tokens", "3", "shorter rewrites are rejected as degenerate"},
      {"filter_policy.class_synonyms", "", "JSON file mapping class -> list of protected synonyms"},

      {"backends.captioner", "toy", "toy or process:<command>"},
      {"backends.perturber", "toy", "toy or process:<command>"},
      {"backends.sentence_embedder", "toy", "toy or process:<command>"},
      {"backends.joint_encoder", "toy", "toy or process:<command>"},
      {"backends.generator", "toy", "toy or process:<command>"},
      {"backends.classifier", "toy", "toy or process:<command>"},
      {"backends.classifier_params", "", "parameter directory of the toy classifier"},
      {"backends.seed", "0", "seed passed to every backend"},
      {"backends.image_channels", "3", "toy image channels"},
      {"backends.image_height", "16", "toy image height"},
      {"backends.image_width", "16", "toy image width"},
      {"backends.generator_steps", "50", "toy generator schedule length (>= stress.inversion_steps)"},

      {"train.batch_size", "8", "mini-batch size"},
      {"train.learning_rate", "0.0001", "step size"},
      {"train.max_epochs", "50", "epoch cap"},
      {"train.min_delta", "0.005", "validation Acc@5 gain (fraction) that resets patience; <= 0 disables early stopping"},
      {"train.patience", "5", "epochs without gain before stopping"},
      {"train.alpha", "0.3", "blend weight of the fine-tuned head"},
      {"train.optimizer", "sgd", "sgd or momentum"},
      {"train.momentum", "0.9", "momentum coefficient"},
      {"train.blend_per_epoch", "false", "blend after every epoch instead of once"},
      {"train.alpha_search", "false", "choose alpha in {0, 0.1, ..., 1} by validation Acc@5"},
      {"train.augment_copies", "2", "augmented copies per image for the standard arm"},
      {"train.seed", "0", "training shuffle seed"},

      {"reinforce.stress_run", "latest", "stress-test run id, or latest"},
      {"reinforce.eval_sets", "", "comma list of JSONL manifests to compare on"},
      {"reinforce.val_fraction", "0.2", "share of counterfactuals held out for early stopping"},
      {"reinforce.standard_arm", "true", "also train on standard augmentations"},
      {"reinforce.standard_train", "", "manifest for the standard arm (default: the stress dataset)"},
  };
  return keys;
}

Config::Config() {
  for (const auto& k : config_keys()) values_[k.key] = k.default_value;
}

Config Config::parse(const std::string& text, const std::filesystem::path& base_dir) {
  namespace pt = boost::property_tree;
  pt::ptree tree;
  std::istringstream in(text);
  try {
    pt::read_ini(in, tree);
  } catch (const pt::ini_parser_error& e) {
    fail(ErrorCode::kConfig, std::string("config: ") + e.what());
  }
  Config config;
  config.base_dir_ = base_dir;
  for (const auto& [section, body] : tree) {
    require(!body.empty() || body.data().empty(), ErrorCode::kConfig, "config: key '" + section + "' outside a section");
    for (const auto& [key, value] : body) config.set(section + "." + key, value.data());
  }
  return config;
}

Config Config::load(const std::filesystem::path& file) {
  require(std::filesystem::is_regular_file(file), ErrorCode::kConfig, "config file not found: " + file.string());
  return parse(read_text_file(file), std::filesystem::absolute(file).parent_path());
}

void Config::apply_override(const std::string& assignment) {
  const auto eq = assignment.find('=');
  require(eq != std::string::npos && eq > 0, ErrorCode::kConfig,
          "override '" + assignment + "' is not of the form section.key=value");
  set(trim(assignment.substr(0, eq)), trim(assignment.substr(eq + 1)));
}

void Config::set(const std::string& key, const std::string& value) {
  require(values_.count(key) != 0, ErrorCode::kConfig, "unknown config key '" + key + "'");
  values_[key] = trim(value);
  explicit_.insert(key);
}

std::string Config::get(const std::string& key) const {
  auto it = values_.find(key);
  require(it != values_.end(), ErrorCode::kConfig, "unknown config key '" + key + "'");
  return it->second;
}

namespace {

double parse_number(const std::string& key, const std::string& v) {
  try {
    std::size_t used = 0;
    const double d = std::stod(v, &used);
    if (used == v.size()) return d;
  } catch (const std::exception&) {
  }
  fail(ErrorCode::kConfig, key + ": expected a number, got '" + v + "'");
}

}  // namespace

double Config::get_double(const std::string& key) const { return parse_number(key, get(key)); }

long long Config::get_int(const std::string& key) const {
  const std::string v = get(key);
  try {
    std::size_t used = 0;
    const long long i = std::stoll(v, &used);
    if (used == v.size()) return i;
  } catch (const std::exception&) {
  }
  fail(ErrorCode::kConfig, key + ": expected an integer, got '" + v + "'");
}

bool Config::get_bool(const std::string& key) const {
  const std::string v = get(key);
  if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
  if (v == "false" || v == "0" || v == "no" || v == "off") return false;
  fail(ErrorCode::kConfig, key + ": expected true or false, got '" + v + "'");
}

std::vector<std::string> Config::get_list(const std::string& key) const {
  std::vector<std::string> out;
  std::stringstream ss(get(key));
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

std::filesystem::path Config::get_path(const std::string& key) const {
  const std::string v = get(key);
  if (v.empty()) return {};
  std::filesystem::path p(v);
  return p.is_absolute() || base_dir_.empty() ? p : base_dir_ / p;
}

std::string Config::canonical() const {
  std::ostringstream out;
  std::string section;
  for (const auto& [key, value] : values_) {
    if (key == "run.jobs" || key == "run.root") continue;
    const auto dot = key.find('.');
    if (key.substr(0, dot) != section) {
      if (!section.empty()) out << '\n';
      section = key.substr(0, dot);
      out << '[' << section << "]\n";
    }
    out << key.substr(dot + 1) << " = " << value << '\n';
  }
  return out.str();
}

std::string Config::hash() const { return hex64(fnv1a64(canonical())); }

std::filesystem::path resolve_run_root(const Config& config) {
  if (config.is_set("run.root") && !config.get("run.root").empty()) return config.get_path("run.root");
  if (const char* env = std::getenv("CFR_RUN_ROOT"); env && *env) return env;
  return "runs";
}

BackendConfig backend_config_from(const Config& c) {
  BackendConfig b;
  b.captioner = c.get("backends.captioner");
  b.perturber = c.get("backends.perturber");
  b.sentence_embedder = c.get("backends.sentence_embedder");
  b.joint_encoder = c.get("backends.joint_encoder");
  b.generator = c.get("backends.generator");
  b.classifier = c.get("backends.classifier");
  b.classifier_params = c.get_path("backends.classifier_params");
  b.seed = static_cast<std::uint64_t>(c.get_int("backends.seed"));
  b.image_channels = static_cast<int>(c.get_int("backends.image_channels"));
  b.image_height = static_cast<int>(c.get_int("backends.image_height"));
  b.image_width = static_cast<int>(c.get_int("backends.image_width"));
  b.generator_steps = static_cast<int>(c.get_int("backends.generator_steps"));
  b.guidance_scale = c.get_double("stress.guidance_scale");
  return b;
}

FilterPolicy filter_policy_from(const Config& c) {
  FilterPolicy p;
  p.max_similarity = c.get_double("filter_policy.max_similarity");
  p.min_caption_tokens = static_cast<int>(c.get_int("filter_policy.min_caption_tokens"));
  if (const auto path = c.get_path("filter_policy.class_synonyms"); !path.empty()) {
    p.class_synonyms = load_class_synonyms(path);
  }
  p.validate();
  return p;
}

TrainConfig train_config_from(const Config& c) {
  TrainConfig t;
  t.batch_size = static_cast<int>(c.get_int("train.batch_size"));
  t.learning_rate = c.get_double("train.learning_rate");
  t.max_epochs = static_cast<int>(c.get_int("train.max_epochs"));
  t.min_delta = c.get_double("train.min_delta");
  t.patience = static_cast<int>(c.get_int("train.patience"));
  t.alpha = c.get_double("train.alpha");
  t.optimizer = c.get("train.optimizer");
  t.momentum = c.get_double("train.momentum");
  t.blend_per_epoch = c.get_bool("train.blend_per_epoch");
  t.alpha_search = c.get_bool("train.alpha_search");
  t.augment_copies = static_cast<int>(c.get_int("train.augment_copies"));
  t.seed = static_cast<std::uint64_t>(c.get_int("train.seed"));
  t.jobs = static_cast<int>(c.get_int("run.jobs"));
  t.validate();
  return t;
}

void StressTestConfig::validate() const {
  require(!dataset_manifest.empty(), ErrorCode::kConfig, "stress.dataset is not set");
  require(!factors.empty(), ErrorCode::kConfig, "stress.factors is empty");
  require(n_edits_per_factor >= 1, ErrorCode::kConfig, "stress.n_edits_per_factor must be >= 1");
  require(!tau_grid.empty(), ErrorCode::kConfig, "tau_grid.values is empty");
  for (double t : tau_grid) require(t >= 0.0 && t <= 1.0, ErrorCode::kConfig, "tau_grid values must lie in [0, 1]");
  require(caption_min_words >= 1, ErrorCode::kConfig, "stress.caption_min_words must be >= 1");
  require(repetition_penalty >= 1.0, ErrorCode::kConfig, "stress.repetition_penalty must be >= 1");
  require(inversion_steps >= 1, ErrorCode::kConfig, "stress.inversion_steps must be >= 1");
  require(null_text.steps_per_timestep >= 1 && null_text.tolerance > 0 && null_text.learning_rate >= 0,
          ErrorCode::kConfig, "null-text settings out of range");
  require(jobs >= 1, ErrorCode::kConfig, "run.jobs must be >= 1");
  filter_policy.validate();
}

StressTestConfig StressTestConfig::from(const Config& c) {
  StressTestConfig s;
  s.dataset_manifest = c.get_path("stress.dataset");
  for (const auto& name : c.get_list("stress.factors")) {
    const auto f = parse_factor(name);
    require(f.has_value(), ErrorCode::kConfig, "stress.factors: unknown factor '" + name + "'");
    s.factors.push_back(*f);
  }
  s.n_edits_per_factor = static_cast<int>(c.get_int("stress.n_edits_per_factor"));
  for (const auto& v : c.get_list("tau_grid.values")) s.tau_grid.push_back(parse_number("tau_grid.values", v));
  s.filter_policy = filter_policy_from(c);
  s.caption_min_words = static_cast<int>(c.get_int("stress.caption_min_words"));
  s.repetition_penalty = c.get_double("stress.repetition_penalty");
  s.inversion_steps = static_cast<int>(c.get_int("stress.inversion_steps"));
  s.null_text.steps_per_timestep = static_cast<int>(c.get_int("stress.null_text_steps"));
  s.null_text.learning_rate = c.get_double("stress.null_text_lr");
  s.null_text.tolerance = c.get_double("stress.null_text_tolerance");
  s.null_text.guidance_scale = c.get_double("stress.guidance_scale");
  s.backends = backend_config_from(c);
  s.run_root = resolve_run_root(c);
  s.seed = static_cast<std::uint64_t>(c.get_int("run.seed"));
  s.jobs = static_cast<int>(c.get_int("run.jobs"));
  s.cache = c.get_bool("stress.cache");
  s.config_text = c.canonical();
  s.config_hash = c.hash();
  s.validate();
  return s;
}

void ReinforceConfig::validate() const {
  require(!stress_run.empty(), ErrorCode::kConfig, "reinforce.stress_run is not set");
  require(val_fraction > 0.0 && val_fraction < 1.0, ErrorCode::kConfig, "reinforce.val_fraction must lie in (0, 1)");
  train.validate();
}

ReinforceConfig ReinforceConfig::from(const Config& c) {
  ReinforceConfig r;
  r.run_root = resolve_run_root(c);
  r.stress_run = c.get("reinforce.stress_run");
  for (const auto& p : c.get_list("reinforce.eval_sets")) {
    std::filesystem::path path(p);
    r.eval_sets.push_back(path.is_absolute() || c.base_dir().empty() ? path : c.base_dir() / path);
  }
  r.val_fraction = c.get_double("reinforce.val_fraction");
  r.standard_arm = c.get_bool("reinforce.standard_arm");
  r.standard_train = c.get_path("reinforce.standard_train");
  r.train = train_config_from(c);
  r.seed = static_cast<std::uint64_t>(c.get_int("run.seed"));
  r.config_text = c.canonical();
  r.config_hash = c.hash();
  r.validate();
  return r;
}

}  // namespace cfr
