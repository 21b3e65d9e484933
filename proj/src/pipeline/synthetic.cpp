#include "cfr/pipeline/synthetic.hpp"

#include "cfr/backends/toy_world.hpp"
#include "cfr/common.hpp"
#include "cfr/image_io.hpp"
#include "cfr/jsonl.hpp"

#include <algorithm>
#include <map>

namespace cfr {

namespace fs = std::filesystem;
using nlohmann::json;
using toy::SceneVocabulary;
using toy::SplitMix64;

void SyntheticOptions::validate() const {
  require(!target_classes.empty(), ErrorCode::kInvalidArgument, "no target classes");
  for (const auto& c : target_classes) {
    require(SceneVocabulary::standard().object_index(c).has_value(), ErrorCode::kUnknownClass,
            "unknown synthetic class '" + c + "'");
  }
  require(per_class >= 1 && test_per_class >= 1 && ood_per_class >= 1 && pretrain_per_class >= 1,
          ErrorCode::kInvalidArgument, "set sizes must be >= 1");
  require(bias >= 0.0 && bias <= 1.0, ErrorCode::kInvalidArgument, "bias must lie in [0, 1]");
  require(object_contrast >= 0.0 && object_contrast <= 1.0, ErrorCode::kInvalidArgument,
          "object_contrast must lie in [0, 1]");
  require(noise >= 0.0 && color_jitter >= 0.0, ErrorCode::kInvalidArgument, "noise must be >= 0");
  require(feature_scale > 0.0 && pretrain_lr > 0.0 && pretrain_epochs >= 1, ErrorCode::kInvalidArgument,
          "pretraining settings out of range");
}

const std::string& typical_background(const std::string& class_name) {
  static const std::map<std::string, std::string> table = {
      {"dog sled", "snow"},   {"howler monkey", "grass"}, {"seat belt", "road"},  {"ski", "mountain"},
      {"canoe", "water"},     {"snorkel", "beach"},        {"balloon", "sky"},     {"volleyball", "beach"},
      {"tractor", "grass"},   {"lighthouse", "sunset"},    {"umbrella", "sunset"}, {"kite", "sky"},
      {"tent", "mountain"},   {"kayak", "water"},          {"bicycle", "road"},    {"toboggan", "snow"},
  };
  auto it = table.find(class_name);
  require(it != table.end(), ErrorCode::kUnknownClass, "no typical background for '" + class_name + "'");
  return it->second;
}

ImageTensor synthesize_image(const std::string& id, const std::string& class_name, const std::string& background,
                             const SyntheticOptions& options, std::uint64_t seed) {
  const auto& vocab = SceneVocabulary::standard();
  const auto obj = vocab.object_index(class_name);
  const auto bg = vocab.background_index(background);
  require(obj.has_value(), ErrorCode::kUnknownClass, "unknown class '" + class_name + "'");
  require(bg.has_value(), ErrorCode::kInvalidArgument, "unknown background '" + background + "'");
  SplitMix64 rng(seed);
  const auto& base = vocab.backgrounds()[*bg].color;
  const double jitter[3] = {options.color_jitter * rng.normal(), options.color_jitter * rng.normal(),
                            options.color_jitter * rng.normal()};
  const auto& cells = vocab.objects()[*obj].cells;
  ImageTensor img(id, 3, 16, 16);
  for (int y = 0; y < 16; ++y) {
    for (int x = 0; x < 16; ++x) {
      const bool fg = cells[static_cast<std::size_t>(toy::cell_of(y, x, 16, 16))];
      for (int c = 0; c < 3; ++c) {
        double v = base.channel(c) + jitter[c];
        if (fg) v -= options.object_contrast;
        v += options.noise * rng.normal();
        img.at(c, y, x) = std::clamp(v, 0.0, 1.0);
      }
    }
  }
  return img;
}

namespace {

std::string pick_background(const std::string& cls, bool typical, SplitMix64& rng) {
  const auto& bgs = SceneVocabulary::standard().backgrounds();
  const std::string& home = typical_background(cls);
  if (typical) return home;
  for (;;) {
    const auto& w = bgs[rng.below(bgs.size())].word;
    if (w != home) return w;
  }
}

std::string slug(const std::string& s) {
  std::string out = s;
  std::replace(out.begin(), out.end(), ' ', '_');
  return out;
}

}  // namespace

toy::ToyClassifier pretrain_baseline(const SyntheticOptions& options) {
  options.validate();
  const auto names = SceneVocabulary::standard().class_names();
  auto model = toy::ToyClassifier::create(names, 3, 16, 16, options.feature_scale, options.seed);
  SplitMix64 rng(options.seed ^ 0x9e7a1aULL);
  std::vector<ImageTensor> images;
  std::vector<int> labels;
  for (std::size_t c = 0; c < names.size(); ++c) {
    for (int i = 0; i < options.pretrain_per_class; ++i) {
      const bool typical = rng.uniform() < options.bias;
      const std::string bg = pick_background(names[c], typical, rng);
      images.push_back(synthesize_image("pre", names[c], bg, options, rng.next()));
      labels.push_back(static_cast<int>(c));
    }
  }
  // Step relative to the mean squared feature norm keeps full-batch descent stable.
  double sq = 0.0;
  for (const auto& img : images) sq += model.features(img).squaredNorm();
  const double lr = options.pretrain_lr * static_cast<double>(images.size()) / sq;
  ParameterSet theta = model.parameters();
  for (int epoch = 0; epoch < options.pretrain_epochs; ++epoch) {
    ParameterSet grad;
    model.head_loss_and_gradient(images, labels, grad);
    for (const auto& name : theta.head_groups()) {
      theta.mutable_group(name).values -= lr * grad.group(name).values;
    }
    model.set_parameters(theta);
  }
  return model;
}

SyntheticDataset generate_synthetic(const fs::path& out_dir, const SyntheticOptions& options) {
  options.validate();
  SyntheticDataset ds;
  ds.root = out_dir;
  fs::create_directories(out_dir / "images");
  SplitMix64 rng(options.seed ^ 0xda7a5e7ULL);

  auto make_set = [&](const std::string& name, int per_class, double bias) {
    std::vector<json> rows;
    fs::create_directories(out_dir / "images" / name);
    for (const auto& cls : options.target_classes) {
      for (int i = 0; i < per_class; ++i) {
        const bool typical = rng.uniform() < bias;
        const std::string bg = pick_background(cls, typical, rng);
        char num[16];
        std::snprintf(num, sizeof(num), "%03d", i);
        const std::string id = name + "_" + slug(cls) + "_" + num;
        const auto img = synthesize_image(id, cls, bg, options, rng.next());
        const fs::path rel = fs::path("images") / name / (id + ".png");
        write_png(img, out_dir / rel);
        rows.push_back({{"image", rel.string()}, {"label", cls}, {"background", bg}});
      }
    }
    write_jsonl(out_dir / (name + ".jsonl"), rows);
    return rows;
  };

  make_set("T", options.per_class, options.bias);
  const auto test = make_set("test", options.test_per_class, options.bias);
  const auto ood = make_set("ood", options.ood_per_class, 0.0);
  ds.T = out_dir / "T.jsonl";
  ds.test = out_dir / "test.jsonl";
  ds.ood = out_dir / "ood.jsonl";

  // Hybrid: every other item of the in-distribution and OOD test sets.
  std::vector<json> hybrid;
  for (std::size_t i = 0; i < test.size(); i += 2) hybrid.push_back(test[i]);
  for (std::size_t i = 1; i < ood.size(); i += 2) hybrid.push_back(ood[i]);
  write_jsonl(out_dir / "hybrid.jsonl", hybrid);
  ds.hybrid = out_dir / "hybrid.jsonl";

  ds.params = out_dir / "baseline";
  fs::create_directories(ds.params);
  pretrain_baseline(options).save(ds.params);

  ds.config = out_dir / "synthetic.ini";
  write_text_file(ds.config,
                  "; Planted-background-bias benchmark written by `cfr gen-synthetic`.\n"
                  "[run]\n"
                  "seed = " + std::to_string(options.seed) + "\n"
                  "\n"
                  "[stress]\n"
                  "dataset = T.jsonl\n"
                  "factors = background\n"
                  "n_edits_per_factor = 7\n"
                  "\n"
                  "[backends]\n"
                  "classifier_params = baseline\n"
                  "seed = 7\n"
                  "\n"
                  "[reinforce]\n"
                  "eval_sets = test.jsonl, ood.jsonl, hybrid.jsonl\n");
  return ds;
}

}  // namespace cfr
