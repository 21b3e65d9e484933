#include "cfr/pipeline/pipeline.hpp"

#include "cfr/backends/toy.hpp"
#include "cfr/backends/toy_world.hpp"
#include "cfr/common.hpp"
#include "cfr/editing/editing.hpp"
#include "cfr/jsonl.hpp"
#include "cfr/parallel.hpp"
#include "cfr/perturbation/edits.hpp"
#include "cfr/perturbation/filter.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <ctime>
#include <numeric>

namespace cfr {

namespace fs = std::filesystem;
using nlohmann::json;

std::string_view to_string(Stage stage) { return stage == Stage::kStressTest ? "stress_test" : "reinforce"; }

std::string utc_timestamp() {
  const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

json to_json(const RunManifest& m) {
  json descriptors = json::array();
  for (const auto& d : m.backend_descriptors) {
    descriptors.push_back({{"kind", to_string(d.kind)}, {"name", d.name}, {"deterministic", d.deterministic},
                           {"seed", d.seed}, {"dimension", d.dimension}});
  }
  json skipped = json::array();
  for (const auto& s : m.skipped) skipped.push_back({{"image_id", s.image_id}, {"reason", s.reason}});
  return {{"run_id", m.run_id},
          {"stage", to_string(m.stage)},
          {"status", m.status},
          {"config_hash", m.config_hash},
          {"backend_descriptors", std::move(descriptors)},
          {"seeds", m.seeds},
          {"artifact_paths", m.artifact_paths},
          {"timestamps", m.timestamps},
          {"counts", m.counts},
          {"skipped", std::move(skipped)}};
}

RunManifest run_manifest_from_json(const json& j) {
  try {
    RunManifest m;
    m.run_id = j.at("run_id").get<std::string>();
    const auto stage = j.at("stage").get<std::string>();
    require(stage == "stress_test" || stage == "reinforce", ErrorCode::kSchemaMismatch, "unknown stage '" + stage + "'");
    m.stage = stage == "stress_test" ? Stage::kStressTest : Stage::kReinforce;
    m.status = j.at("status").get<std::string>();
    m.config_hash = j.at("config_hash").get<std::string>();
    for (const auto& d : j.at("backend_descriptors")) {
      BackendDescriptor bd;
      const auto kind = d.at("kind").get<std::string>();
      for (auto k : {BackendKind::kCaptioner, BackendKind::kPerturber, BackendKind::kSentenceEmbedder,
                     BackendKind::kJointEncoder, BackendKind::kGenerator, BackendKind::kClassifier}) {
        if (to_string(k) == kind) bd.kind = k;
      }
      bd.name = d.at("name").get<std::string>();
      bd.deterministic = d.at("deterministic").get<bool>();
      bd.seed = d.at("seed").get<std::uint64_t>();
      bd.dimension = d.at("dimension").get<int>();
      m.backend_descriptors.push_back(bd);
    }
    m.seeds = j.at("seeds").get<std::map<std::string, std::uint64_t>>();
    m.artifact_paths = j.at("artifact_paths").get<std::map<std::string, std::string>>();
    m.timestamps = j.at("timestamps").get<std::map<std::string, std::string>>();
    m.counts = j.at("counts").get<std::map<std::string, long long>>();
    for (const auto& s : j.at("skipped")) {
      m.skipped.push_back({s.at("image_id").get<std::string>(), s.at("reason").get<std::string>()});
    }
    return m;
  } catch (const json::exception& e) {
    fail(ErrorCode::kSchemaMismatch, std::string("malformed run manifest: ") + e.what());
  }
}

RunManifest read_run_manifest(const fs::path& run_dir) { return run_manifest_from_json(read_json_file(run_dir / "manifest.json")); }

fs::path allocate_run_dir(const fs::path& run_root, const std::string& prefix, const std::string& config_hash) {
  fs::create_directories(run_root);
  const std::string stem = prefix + "-" + config_hash.substr(0, 8) + "-";
  for (int n = 1; n < 100000; ++n) {
    char num[16];
    std::snprintf(num, sizeof(num), "%03d", n);
    const fs::path dir = run_root / (stem + num);
    if (fs::create_directory(dir)) return dir;
  }
  fail(ErrorCode::kIo, "no free run directory under " + run_root.string());
}

fs::path find_stress_run(const fs::path& run_root, const std::string& run_id) {
  if (run_id != "latest") {
    const fs::path dir = run_root / run_id;
    require(fs::is_regular_file(dir / "manifest.json"), ErrorCode::kNotFound,
            "stress-test run '" + run_id + "' not found under " + run_root.string());
    return dir;
  }
  fs::path best;
  std::string best_time;
  if (fs::is_directory(run_root)) {
    for (const auto& entry : fs::directory_iterator(run_root)) {
      if (!fs::is_regular_file(entry.path() / "manifest.json")) continue;
      RunManifest m;
      try {
        m = read_run_manifest(entry.path());
      } catch (const Error&) {
        continue;
      }
      if (m.stage != Stage::kStressTest || m.status != "completed") continue;
      const std::string t = m.timestamps.count("finished") ? m.timestamps.at("finished") : "";
      if (best.empty() || std::tie(t, m.run_id) > std::tie(best_time, best.filename().native())) {
        best = entry.path();
        best_time = t;
      }
    }
  }
  require(!best.empty(), ErrorCode::kNotFound, "no completed stress-test run under " + run_root.string());
  return best;
}

std::pair<std::vector<std::size_t>, std::vector<std::size_t>> split_indices(std::size_t n, double val_fraction,
                                                                              std::uint64_t seed) {
  require(n >= 2, ErrorCode::kInvalidArgument, "need at least two items to split off a validation set");
  require(val_fraction > 0.0 && val_fraction < 1.0, ErrorCode::kInvalidArgument, "val_fraction must lie in (0, 1)");
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  toy::SplitMix64 rng(seed ^ 0x9a11dULL);
  for (std::size_t i = n; i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);
  auto n_val = static_cast<std::size_t>(std::llround(static_cast<double>(n) * val_fraction));
  n_val = std::clamp<std::size_t>(n_val, 1, n - 1);
  std::vector<std::size_t> val(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_val));
  std::vector<std::size_t> train(order.begin() + static_cast<std::ptrdiff_t>(n_val), order.end());
  std::sort(val.begin(), val.end());
  std::sort(train.begin(), train.end());
  return {train, val};
}

namespace {

struct ItemOutcome {
  std::optional<std::string> caption;
  bool caption_from_cache = false;
  std::vector<CaptionEdit> edits;
  std::vector<CounterfactualExample> examples;
  std::vector<std::string> edit_failures;
  std::string skip_reason;
  bool null_text_converged = true;
};

std::string cache_key(const std::string& image_id, const std::string& backend, const std::string& config_hash) {
  return hex64(fnv1a64(image_id + "|" + backend + "|" + config_hash));
}

ItemOutcome process_item(const LabeledItem& item, const StressTestConfig& config, const BackendSet& backends,
                         const std::map<std::string, std::string>& caption_cache) {
  ItemOutcome out;
  try {
    const auto key = cache_key(item.image.id(), backends.captioner->descriptor().name, config.config_hash);
    if (auto it = caption_cache.find(key); it != caption_cache.end()) {
      out.caption = it->second;
      out.caption_from_cache = true;
    } else {
      out.caption = backends.captioner->caption(item.image, config.caption_min_words, config.repetition_penalty);
    }
    const auto proposed = generate_edits(*out.caption, config.factors, config.n_edits_per_factor, *backends.perturber);
    out.edits = filter_edits(proposed, item.label, config.filter_policy, *backends.sentence_embedder);
    const auto n_accepted = std::count_if(out.edits.begin(), out.edits.end(),
                                          [](const CaptionEdit& e) { return e.verdict == Verdict::kAccepted; });
    if (n_accepted == 0) {
      out.skip_reason = "no accepted edits (" + std::to_string(out.edits.size()) + " proposed)";
      return out;
    }

    const Generator& gen = *backends.generator;
    const auto trajectory =
        ddim_invert(gen.encode(item.image), gen.embed_text(*out.caption), config.inversion_steps, gen);
    const auto schedule = optimize_null_text(trajectory, config.null_text, gen);
    out.null_text_converged = schedule.all_converged();
    const EditingContext context{gen, *backends.joint_encoder, trajectory, schedule, config.null_text.guidance_scale};
    for (const auto& edit : out.edits) {
      if (edit.verdict != Verdict::kAccepted) continue;
      try {
        out.examples.push_back(select_tau(item.image, edit, item.label, config.tau_grid, context).best);
      } catch (const Error& e) {
        out.edit_failures.push_back(std::string(to_string(edit.factor)) + ": " + e.what());
      }
    }
    if (out.examples.empty()) out.skip_reason = "every accepted edit failed: " + out.edit_failures.front();
  } catch (const Error& e) {
    out.skip_reason = e.what();
  }
  return out;
}

std::map<std::string, std::string> read_caption_cache(const fs::path& file) {
  std::map<std::string, std::string> out;
  if (!fs::is_regular_file(file)) return out;
  for (const auto& row : read_jsonl(file)) out[row.at("key").get<std::string>()] = row.at("caption").get<std::string>();
  return out;
}

json factor_list(const std::vector<VariationFactor>& factors) {
  json out = json::array();
  for (auto f : factors) out.push_back(to_string(f));
  return out;
}

void save_classifier(const TrainableClassifier& classifier, const fs::path& dir) {
  fs::create_directories(dir);
  if (const auto* toy = dynamic_cast<const toy::ToyClassifier*>(&classifier)) {
    toy->save(dir);
  } else {
    classifier.parameters().save(dir);
    write_json_file(dir / "classes.json", {{"class_names", classifier.class_names()}});
  }
}

}  // namespace

StressTestResult run_stress_test(const StressTestConfig& config) {
  config.validate();
  const std::string started = utc_timestamp();
  const BackendSet backends = make_backends(config.backends);
  const auto& universe = backends.classifier->class_names();
  const LabeledSet T = load_labeled_set(config.dataset_manifest, "T", universe);

  const fs::path cache_file = config.run_root / "cache" / "captions.jsonl";
  const auto caption_cache = config.cache ? read_caption_cache(cache_file) : std::map<std::string, std::string>{};

  std::vector<ItemOutcome> outcomes(T.items.size());
  parallel_for(T.items.size(), config.jobs,
               [&](std::size_t i) { outcomes[i] = process_item(T.items[i], config, backends, caption_cache); });

  const fs::path run_dir = allocate_run_dir(config.run_root, "stress", config.config_hash);
  StressTestResult result;
  result.run_dir = run_dir;
  RunManifest& m = result.manifest;
  m.run_id = run_dir.filename().string();
  m.stage = Stage::kStressTest;
  m.config_hash = config.config_hash;
  m.backend_descriptors = backends.descriptors();
  m.seeds = {{"run", config.seed}, {"backends", config.backends.seed}};
  m.timestamps["started"] = started;

  std::vector<json> caption_rows, edit_rows;
  std::vector<CounterfactualExample> examples;
  long long n_accepted = 0, n_unconverged = 0, n_cached = 0;
  for (std::size_t i = 0; i < outcomes.size(); ++i) {
    auto& o = outcomes[i];
    const std::string& id = T.items[i].image.id();
    if (o.caption) {
      caption_rows.push_back({{"image_id", id}, {"caption", *o.caption}});
      n_cached += o.caption_from_cache ? 1 : 0;
    }
    for (const auto& e : o.edits) {
      json row = to_json(e);
      row["image_id"] = id;
      edit_rows.push_back(std::move(row));
      n_accepted += e.verdict == Verdict::kAccepted ? 1 : 0;
    }
    n_unconverged += o.null_text_converged ? 0 : 1;
    if (!o.skip_reason.empty()) m.skipped.push_back({id, o.skip_reason});
    for (auto& ex : o.examples) examples.push_back(std::move(ex));
  }
  write_jsonl(run_dir / "captions.jsonl", caption_rows);
  write_jsonl(run_dir / "edits.jsonl", edit_rows);
  write_text_file(run_dir / "config.ini", config.config_text);
  m.artifact_paths = {{"captions", "captions.jsonl"}, {"edits", "edits.jsonl"}, {"config", "config.ini"},
                      {"dataset", fs::absolute(config.dataset_manifest).lexically_normal().string()}};
  m.counts = {{"images", static_cast<long long>(T.items.size())},
              {"captions", static_cast<long long>(caption_rows.size())},
              {"captions_from_cache", n_cached},
              {"edits", static_cast<long long>(edit_rows.size())},
              {"accepted_edits", n_accepted},
              {"counterfactuals", static_cast<long long>(examples.size())},
              {"null_text_unconverged", n_unconverged},
              {"skipped", static_cast<long long>(m.skipped.size())}};

  if (config.cache) {
    auto merged = caption_cache;
    for (std::size_t i = 0; i < outcomes.size(); ++i) {
      if (outcomes[i].caption) {
        merged[cache_key(T.items[i].image.id(), backends.captioner->descriptor().name, config.config_hash)] =
            *outcomes[i].caption;
      }
    }
    std::vector<json> rows;
    for (const auto& [k, v] : merged) rows.push_back({{"key", k}, {"caption", v}});
    fs::create_directories(cache_file.parent_path());
    write_jsonl(cache_file, rows);
  }

  if (examples.empty()) {
    m.status = "failed";
    m.timestamps["finished"] = utc_timestamp();
    write_json_file(run_dir / "manifest.json", to_json(m));
    fail(ErrorCode::kNoCounterfactuals, "stress test produced no counterfactuals (" + std::to_string(m.skipped.size()) +
                                            " items skipped; see " + (run_dir / "manifest.json").string() + ")");
  }

  const fs::path cf_dir = run_dir / "counterfactuals";
  examples = write_counterfactual_set(cf_dir, std::move(examples));
  std::vector<json> manifest_rows;
  for (const auto& ex : examples) {
    manifest_rows.push_back({{"image", ex.image_file},
                             {"label", ex.gt_class},
                             {"source_image_id", ex.source_image_id},
                             {"factor", to_string(ex.edit.factor)},
                             {"tau", ex.tau},
                             {"directional_score", ex.directional_score}});
  }
  write_jsonl(cf_dir / "manifest.jsonl", manifest_rows);
  m.artifact_paths["counterfactuals"] = "counterfactuals/manifest.jsonl";
  m.artifact_paths["counterfactual_metadata"] = "counterfactuals/metadata.jsonl";

  // Evaluate what was written, so the report describes the stored images.
  result.T_prime = load_labeled_set(cf_dir / "manifest.jsonl", "T_prime", universe);
  std::map<std::string, VariationFactor> cf_metadata;
  for (const auto& item : result.T_prime.items) {
    if (item.extra.contains("factor")) {
      if (auto f = parse_factor(item.extra["factor"].get<std::string>())) cf_metadata[item.image.id()] = *f;
    }
  }
  result.report = build_weakness_report(T, result.T_prime, cf_metadata, *backends.classifier, config.jobs);
  json tau_grid = config.tau_grid;
  result.report.metadata["factors"] = factor_list(config.factors);
  result.report.metadata["tau_grid"] = tau_grid;
  result.report.metadata["filter_policy"] = {{"max_similarity", config.filter_policy.max_similarity},
                                             {"max_similarity_origin", "project default"},
                                             {"min_caption_tokens", config.filter_policy.min_caption_tokens}};
  result.report.metadata["skipped_items"] = m.skipped.size();
  fs::create_directories(run_dir / "reports");
  write_json_file(run_dir / "reports" / "weakness.json", to_json(result.report));
  write_text_file(run_dir / "reports" / "weakness.csv", to_csv(result.report));
  m.artifact_paths["reports"] = "reports/weakness.json";
  m.artifact_paths["reports_csv"] = "reports/weakness.csv";

  if (backends.trainable_classifier) {
    save_classifier(*backends.trainable_classifier, run_dir / "params" / "baseline");
    m.artifact_paths["parameters"] = "params/baseline";
  }

  m.status = "completed";
  m.timestamps["finished"] = utc_timestamp();
  write_json_file(run_dir / "manifest.json", to_json(m));
  return result;
}

ReinforceRunResult run_reinforcement(const ReinforceConfig& config) {
  config.validate();
  const std::string started = utc_timestamp();
  const fs::path stress_dir = find_stress_run(config.run_root, config.stress_run);
  const RunManifest stress = read_run_manifest(stress_dir);
  require(stress.stage == Stage::kStressTest, ErrorCode::kInvalidArgument,
          "run '" + stress.run_id + "' is not a stress-test run");
  require(stress.status == "completed" && stress.artifact_paths.count("counterfactuals"), ErrorCode::kNoCounterfactuals,
          "stress-test run '" + stress.run_id + "' produced no counterfactuals");
  require(stress.artifact_paths.count("parameters") != 0, ErrorCode::kBackendUnavailable,
          "stress-test run '" + stress.run_id + "' has no trainable classifier snapshot");

  const auto baseline = toy::ToyClassifier::load(stress_dir / stress.artifact_paths.at("parameters"));
  const auto& universe = baseline.class_names();
  const LabeledSet T_prime =
      load_labeled_set(stress_dir / stress.artifact_paths.at("counterfactuals"), "T_prime", universe);

  const auto [train_idx, val_idx] = split_indices(T_prime.items.size(), config.val_fraction, config.seed);
  LabeledSet cf_train{"cf_train", {}, universe}, val{"val", {}, universe};
  for (auto i : train_idx) cf_train.items.push_back(T_prime.items[i]);
  for (auto i : val_idx) val.items.push_back(T_prime.items[i]);

  std::vector<LabeledSet> eval_sets;
  std::map<std::string, std::string> load_errors;
  for (const auto& path : config.eval_sets) {
    try {
      eval_sets.push_back(load_labeled_set(path, path.stem().string(), universe));
    } catch (const Error& e) {
      load_errors[path.stem().string()] = e.what();
    }
  }

  std::optional<LabeledSet> standard_train;
  if (config.standard_arm) {
    const fs::path p = config.standard_train.empty() ? fs::path(stress.artifact_paths.at("dataset")) : config.standard_train;
    standard_train = load_labeled_set(p, "T", universe);
  }

  ReinforceResult rr = reinforce(baseline, cf_train, val, eval_sets, config.train,
                                 standard_train ? &*standard_train : nullptr);
  for (const auto& [name, err] : load_errors) rr.comparison.errors[name] = err;
  rr.comparison.metadata["train_size"] = cf_train.items.size();
  rr.comparison.metadata["val_size"] = val.items.size();

  const fs::path run_dir = allocate_run_dir(config.run_root, "reinforce", config.config_hash);
  ReinforceRunResult out;
  out.run_dir = run_dir;
  out.comparison = rr.comparison;
  out.record = rr.record;
  RunManifest& m = out.manifest;
  m.run_id = run_dir.filename().string();
  m.stage = Stage::kReinforce;
  m.config_hash = config.config_hash;
  m.backend_descriptors = {baseline.descriptor()};
  m.seeds = {{"run", config.seed}, {"train", config.train.seed}};
  m.timestamps["started"] = started;

  save_classifier(*rr.reinforced, run_dir / "params" / "reinforced");
  m.artifact_paths["parameters"] = "params/reinforced";
  if (rr.standard) {
    save_classifier(*rr.standard->classifier, run_dir / "params" / "standard");
    m.artifact_paths["parameters_standard"] = "params/standard";
  }
  fs::create_directories(run_dir / "reports");
  write_json_file(run_dir / "reports" / "comparison.json", to_json(rr.comparison));
  write_text_file(run_dir / "reports" / "comparison.csv", to_csv(rr.comparison));
  json training = {{"counterfactual", to_json(rr.record)}, {"alpha", rr.alpha}};
  if (rr.standard) training["standard"] = to_json(rr.standard->record);
  write_json_file(run_dir / "reports" / "training.json", training);
  write_text_file(run_dir / "config.ini", config.config_text);
  m.artifact_paths["reports"] = "reports/comparison.json";
  m.artifact_paths["reports_csv"] = "reports/comparison.csv";
  m.artifact_paths["training"] = "reports/training.json";
  m.artifact_paths["config"] = "config.ini";
  m.artifact_paths["source_run"] = fs::absolute(stress_dir).lexically_normal().string();
  m.counts = {{"cf_train", static_cast<long long>(cf_train.items.size())},
              {"val", static_cast<long long>(val.items.size())},
              {"eval_sets", static_cast<long long>(eval_sets.size())},
              {"epochs_run", rr.record.epochs_run}};
  m.status = "completed";
  m.timestamps["finished"] = utc_timestamp();
  write_json_file(run_dir / "manifest.json", to_json(m));
  return out;
}

}  // namespace cfr
