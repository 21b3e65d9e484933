#include "cfr/reinforcement/reinforcement.hpp"

#include "cfr/backends/toy_world.hpp"
#include "cfr/common.hpp"
#include "cfr/parallel.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>

namespace cfr {

using nlohmann::json;

ParameterSet blend_parameters(const ParameterSet& theta0, const ParameterSet& theta1, double alpha,
                              const std::set<std::string>& scope) {
  require(alpha >= 0.0 && alpha <= 1.0, ErrorCode::kInvalidArgument, "alpha must lie in [0, 1]");
  require(theta0.same_layout(theta1), ErrorCode::kShapeMismatch, "parameter sets differ in group names or shapes");
  for (const auto& name : scope) {
    require(theta0.contains(name), ErrorCode::kInvalidArgument, "blend scope names unknown group '" + name + "'");
  }
  ParameterSet out;
  for (const auto& [name, g0] : theta0.groups()) {
    Eigen::VectorXd values = g0.values;
    // This form is exact at both alpha = 0 and alpha = 1.
    if (scope.count(name)) values = (1.0 - alpha) * g0.values + alpha * theta1.group(name).values;
    out.add(name, g0.shape, std::move(values), theta0.is_head(name));
  }
  return out;
}

void TrainConfig::validate() const {
  require(batch_size >= 1, ErrorCode::kConfig, "train.batch_size must be >= 1");
  require(max_epochs >= 1, ErrorCode::kConfig, "train.max_epochs must be >= 1");
  require(learning_rate >= 0.0 && std::isfinite(learning_rate), ErrorCode::kConfig, "train.learning_rate must be >= 0");
  require(alpha >= 0.0 && alpha <= 1.0, ErrorCode::kConfig, "train.alpha must lie in [0, 1]");
  require(patience >= 1, ErrorCode::kConfig, "train.patience must be >= 1");
  require(optimizer == "sgd" || optimizer == "momentum", ErrorCode::kConfig,
          "train.optimizer must be 'sgd' or 'momentum'");
  require(momentum >= 0.0 && momentum < 1.0, ErrorCode::kConfig, "train.momentum must lie in [0, 1)");
  require(augment_copies >= 0, ErrorCode::kConfig, "train.augment_copies must be >= 0");
  require(jobs >= 1, ErrorCode::kConfig, "jobs must be >= 1");
}

json to_json(const TrainingRecord& record) {
  json epochs = json::array();
  for (const auto& e : record.epoch_metrics) {
    epochs.push_back({{"epoch", e.epoch}, {"train_loss", e.train_loss}, {"val_acc5", e.val_acc5}});
  }
  return {{"epoch_metrics", std::move(epochs)}, {"stopped_early", record.stopped_early},
          {"epochs_run", record.epochs_run}};
}

namespace {

std::vector<int> label_indices(const LabeledSet& set, const Classifier& classifier) {
  std::vector<int> out;
  out.reserve(set.items.size());
  for (const auto& item : set.items) {
    const int idx = classifier.class_index(item.label);
    require(idx >= 0, ErrorCode::kUnknownClass,
            "label '" + item.label + "' of '" + item.image.id() + "' is not a classifier class");
    out.push_back(idx);
  }
  return out;
}

}  // namespace

FineTuneResult fine_tune_head(const TrainableClassifier& classifier, const LabeledSet& train_set,
                              const LabeledSet& val_set, const TrainConfig& config) {
  config.validate();
  train_set.validate();
  val_set.validate();
  const ParameterSet& theta0 = classifier.parameters();
  const auto& head = theta0.head_groups();
  require(!head.empty(), ErrorCode::kInvalidArgument, "classifier exposes no head groups");

  const auto labels = label_indices(train_set, classifier);
  auto model = classifier.clone();
  ParameterSet theta = theta0;
  std::map<std::string, Eigen::VectorXd> velocity;
  for (const auto& name : head) velocity[name] = Eigen::VectorXd::Zero(theta0.group(name).values.size());

  const std::size_t n = train_set.items.size();
  std::vector<std::size_t> order(n);
  toy::SplitMix64 rng(config.seed);
  const bool early_stopping = config.min_delta > 0.0;
  double best = -std::numeric_limits<double>::infinity();
  int wait = 0;

  FineTuneResult out;
  for (int epoch = 1; epoch <= config.max_epochs; ++epoch) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    for (std::size_t i = n; i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);

    double loss_sum = 0.0;
    for (std::size_t start = 0; start < n; start += static_cast<std::size_t>(config.batch_size)) {
      const std::size_t end = std::min(n, start + static_cast<std::size_t>(config.batch_size));
      std::vector<ImageTensor> images;
      std::vector<int> batch_labels;
      for (std::size_t j = start; j < end; ++j) {
        images.push_back(train_set.items[order[j]].image);
        batch_labels.push_back(labels[order[j]]);
      }
      ParameterSet grad;
      const double loss = model->head_loss_and_gradient(images, batch_labels, grad);
      require(std::isfinite(loss), ErrorCode::kNonFiniteLoss, "non-finite training loss at epoch " + std::to_string(epoch));
      loss_sum += loss * static_cast<double>(end - start);
      for (const auto& name : head) {
        const Eigen::VectorXd& g = grad.group(name).values;
        Eigen::VectorXd& v = velocity[name];
        v = config.optimizer == "momentum" ? Eigen::VectorXd(config.momentum * v + g) : g;
        theta.mutable_group(name).values -= config.learning_rate * v;
        require(theta.group(name).values.allFinite(), ErrorCode::kNonFiniteLoss,
                "head parameters diverged at epoch " + std::to_string(epoch));
      }
      model->set_parameters(theta);
    }
    if (config.blend_per_epoch) {
      theta = blend_parameters(theta0, theta, config.alpha, head);
      model->set_parameters(theta);
    }

    EpochMetrics m{epoch, loss_sum / static_cast<double>(n), mean_acc5(val_set, *model, config.jobs)};
    out.record.epoch_metrics.push_back(m);
    out.record.epochs_run = epoch;
    if (!early_stopping) continue;
    if (m.val_acc5 / 100.0 - best > config.min_delta) {
      best = m.val_acc5 / 100.0;
      wait = 0;
    } else if (++wait >= config.patience) {
      out.record.stopped_early = epoch < config.max_epochs;
      break;
    }
  }
  out.theta1 = std::move(theta);
  return out;
}

ImageTensor augment_image(const ImageTensor& image, std::uint64_t seed) {
  toy::SplitMix64 rng(seed);
  const int C = image.channels(), H = image.height(), W = image.width();
  const bool hflip = rng.uniform() < 0.5;
  const bool vflip = rng.uniform() < 0.5;
  const double angle = (rng.uniform() * 2.0 - 1.0) * 15.0 * M_PI / 180.0;
  const double crop = 0.75 + 0.25 * rng.uniform();
  const double crop_x = rng.uniform() * (1.0 - crop) * W;
  const double crop_y = rng.uniform() * (1.0 - crop) * H;
  const double brightness = 0.8 + 0.4 * rng.uniform();
  const double contrast = 0.8 + 0.4 * rng.uniform();
  const double saturation = 0.8 + 0.4 * rng.uniform();
  const bool mask = rng.uniform() < 0.5;
  const int mask_size = std::max(1, std::min(H, W) / 4);
  const int mask_x = static_cast<int>(rng.below(static_cast<std::uint64_t>(W - mask_size + 1)));
  const int mask_y = static_cast<int>(rng.below(static_cast<std::uint64_t>(H - mask_size + 1)));

  // Geometry: output pixel -> crop window -> rotate about the centre -> flip.
  ImageTensor out(image.id(), C, H, W);
  const double cx = (W - 1) / 2.0, cy = (H - 1) / 2.0;
  const double ca = std::cos(angle), sa = std::sin(angle);
  for (int y = 0; y < H; ++y) {
    for (int x = 0; x < W; ++x) {
      const double px = crop_x + (x + 0.5) * crop - 0.5;
      const double py = crop_y + (y + 0.5) * crop - 0.5;
      double rx = ca * (px - cx) + sa * (py - cy) + cx;
      double ry = -sa * (px - cx) + ca * (py - cy) + cy;
      if (hflip) rx = W - 1 - rx;
      if (vflip) ry = H - 1 - ry;
      const int sx = std::clamp(static_cast<int>(std::lround(rx)), 0, W - 1);
      const int sy = std::clamp(static_cast<int>(std::lround(ry)), 0, H - 1);
      for (int c = 0; c < C; ++c) out.at(c, y, x) = image.at(c, sy, sx);
    }
  }

  Eigen::VectorXd& d = out.mutable_data();
  d *= brightness;
  const double mean = d.mean();
  d = ((d.array() - mean) * contrast + mean).matrix();
  if (C == 3) {
    for (int y = 0; y < H; ++y) {
      for (int x = 0; x < W; ++x) {
        const double gray = 0.299 * out.at(0, y, x) + 0.587 * out.at(1, y, x) + 0.114 * out.at(2, y, x);
        for (int c = 0; c < 3; ++c) out.at(c, y, x) = gray + saturation * (out.at(c, y, x) - gray);
      }
    }
  }
  if (mask) {
    for (int c = 0; c < C; ++c)
      for (int y = mask_y; y < mask_y + mask_size; ++y)
        for (int x = mask_x; x < mask_x + mask_size; ++x) out.at(c, y, x) = 0.5;
  }
  d = d.cwiseMax(0.0).cwiseMin(1.0);
  return out;
}

LabeledSet augment_set(const LabeledSet& set, int copies, std::uint64_t seed) {
  require(copies >= 0, ErrorCode::kInvalidArgument, "copies must be >= 0");
  LabeledSet out;
  out.name = set.name + "_augmented";
  out.class_universe = set.class_universe;
  out.items = set.items;
  for (std::size_t i = 0; i < set.items.size(); ++i) {
    for (int k = 0; k < copies; ++k) {
      LabeledItem item = set.items[i];
      const std::uint64_t s = seed ^ fnv1a64(item.image.id() + "#" + std::to_string(k));
      item.image = augment_image(item.image, s);
      item.image.set_id(set.items[i].image.id() + "__aug" + std::to_string(k));
      item.image_path.clear();
      out.items.push_back(std::move(item));
    }
  }
  return out;
}

std::optional<double> ComparisonRow::gain() const {
  if (!baseline || !counterfactual) return std::nullopt;
  return round2(*counterfactual - *baseline);
}

bool ComparisonReport::has_standard() const {
  return std::any_of(rows.begin(), rows.end(), [](const ComparisonRow& r) { return r.standard.has_value(); });
}

ComparisonReport compare_models(const std::vector<LabeledSet>& eval_sets,
                                const std::vector<const Classifier*>& models, int jobs) {
  require(models.size() == 3 && models[0] != nullptr && models[2] != nullptr, ErrorCode::kInvalidArgument,
          "compare_models expects baseline, optional standard, counterfactual");
  struct SetResult {
    std::vector<ComparisonRow> rows;
    std::string error;
  };
  std::vector<SetResult> results(eval_sets.size());
  parallel_for(eval_sets.size(), jobs, [&](std::size_t s) {
    const LabeledSet& set = eval_sets[s];
    try {
      set.validate();
      std::array<std::optional<std::vector<int>>, 3> hits;
      for (std::size_t m = 0; m < 3; ++m) {
        if (models[m]) hits[m] = acc5_hits(set, *models[m]);
      }
      std::map<std::string, std::vector<std::size_t>> by_class;
      for (std::size_t i = 0; i < set.items.size(); ++i) by_class[set.items[i].label].push_back(i);
      auto row_for = [&](const std::string& cls, const std::vector<std::size_t>& idx) {
        ComparisonRow row{set.name, cls, std::nullopt, std::nullopt, std::nullopt};
        std::array<std::optional<double>*, 3> slots{&row.baseline, &row.standard, &row.counterfactual};
        for (std::size_t m = 0; m < 3; ++m) {
          if (!hits[m]) continue;
          std::vector<int> h;
          for (auto i : idx) h.push_back((*hits[m])[i]);
          *slots[m] = percent_of(h);
        }
        return row;
      };
      for (const auto& [cls, idx] : by_class) results[s].rows.push_back(row_for(cls, idx));
      std::vector<std::size_t> all(set.items.size());
      std::iota(all.begin(), all.end(), std::size_t{0});
      results[s].rows.push_back(row_for("overall", all));
    } catch (const Error& e) {
      results[s].error = e.what();
    }
  });
  ComparisonReport report;
  report.model_name = models[0]->descriptor().name;
  for (std::size_t s = 0; s < eval_sets.size(); ++s) {
    if (!results[s].error.empty()) {
      report.errors[eval_sets[s].name] = results[s].error;
      continue;
    }
    for (auto& row : results[s].rows) report.rows.push_back(std::move(row));
  }
  return report;
}

ReinforceResult reinforce(const TrainableClassifier& classifier, const LabeledSet& cf_train, const LabeledSet& val_set,
                          const std::vector<LabeledSet>& eval_sets, const TrainConfig& config,
                          const LabeledSet* standard_train) {
  const auto& theta0 = classifier.parameters();
  const auto& head = theta0.head_groups();

  auto train_arm = [&](const LabeledSet& train) {
    ArmResult arm;
    FineTuneResult ft = fine_tune_head(classifier, train, val_set, config);
    arm.record = std::move(ft.record);
    arm.alpha = config.alpha;
    arm.classifier = classifier.clone();
    if (config.blend_per_epoch) {
      arm.classifier->set_parameters(ft.theta1);
      return arm;
    }
    if (config.alpha_search) {
      double best = -1.0;
      for (int i = 0; i <= 10; ++i) {
        const double a = i / 10.0;
        auto candidate = classifier.clone();
        candidate->set_parameters(blend_parameters(theta0, ft.theta1, a, head));
        const double acc = mean_acc5(val_set, *candidate, config.jobs);
        if (acc > best) {
          best = acc;
          arm.alpha = a;
        }
      }
    }
    arm.classifier->set_parameters(blend_parameters(theta0, ft.theta1, arm.alpha, head));
    return arm;
  };

  ReinforceResult out;
  ArmResult cf = train_arm(cf_train);
  out.reinforced = std::move(cf.classifier);
  out.record = std::move(cf.record);
  out.alpha = cf.alpha;
  if (standard_train) {
    out.standard = train_arm(augment_set(*standard_train, config.augment_copies, config.seed ^ 0x5eedULL));
  }
  const Classifier* standard_model = out.standard ? out.standard->classifier.get() : nullptr;
  out.comparison = compare_models(eval_sets, {&classifier, standard_model, out.reinforced.get()}, config.jobs);
  out.comparison.metadata["alpha"] = out.alpha;
  out.comparison.metadata["blend"] = config.blend_per_epoch ? "per_epoch" : "once_after_training";
  out.comparison.metadata["epochs_run"] = out.record.epochs_run;
  out.comparison.metadata["stopped_early"] = out.record.stopped_early;
  out.comparison.metadata["tie_break"] = "top-k ties rank the lower class index first";
  return out;
}

namespace {

json opt(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }
std::optional<double> opt_from(const json& j) {
  return j.is_null() ? std::nullopt : std::optional<double>(j.get<double>());
}

}  // namespace

json to_json(const ComparisonReport& report) {
  json rows = json::array();
  for (const auto& r : report.rows) {
    rows.push_back({{"set", r.set},
                    {"class", r.cls},
                    {"baseline", opt(r.baseline)},
                    {"standard", opt(r.standard)},
                    {"counterfactual", opt(r.counterfactual)},
                    {"gain", opt(r.gain())}});
  }
  return {{"schema_version", ComparisonReport::kSchemaVersion},
          {"kind", "comparison"},
          {"model_name", report.model_name},
          {"columns", {"set", "class", "baseline", "standard", "counterfactual", "gain"}},
          {"rows", std::move(rows)},
          {"errors", report.errors},
          {"metadata", report.metadata}};
}

ComparisonReport comparison_report_from_json(const json& j) {
  try {
    require(j.at("schema_version").get<int>() == ComparisonReport::kSchemaVersion, ErrorCode::kSchemaMismatch,
            "comparison schema_version " + j.at("schema_version").dump() + " is not supported");
    ComparisonReport r;
    r.model_name = j.at("model_name").get<std::string>();
    for (const auto& row : j.at("rows")) {
      r.rows.push_back({row.at("set").get<std::string>(), row.at("class").get<std::string>(), opt_from(row.at("baseline")),
                        opt_from(row.at("standard")), opt_from(row.at("counterfactual"))});
    }
    r.errors = j.at("errors").get<std::map<std::string, std::string>>();
    r.metadata = j.at("metadata");
    return r;
  } catch (const json::exception& e) {
    fail(ErrorCode::kSchemaMismatch, std::string("malformed comparison report: ") + e.what());
  }
}

std::string to_csv(const ComparisonReport& report) {
  std::ostringstream out;
  out << "set,class,baseline,standard,counterfactual,gain\n";
  auto cell = [](const std::optional<double>& v) { return v ? format2(*v) : std::string(); };
  for (const auto& r : report.rows) {
    const auto g = r.gain();
    out << r.set << ',' << r.cls << ',' << cell(r.baseline) << ',' << cell(r.standard) << ','
        << cell(r.counterfactual) << ',' << (g ? format_signed2(*g) : std::string()) << '\n';
  }
  return out.str();
}

}  // namespace cfr
