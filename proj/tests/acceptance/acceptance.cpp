// One line per acceptance criterion; exit status is nonzero if any fails.

#include "cfr/backends/toy.hpp"
#include "cfr/editing/editing.hpp"
#include "cfr/evaluation/evaluation.hpp"
#include "cfr/jsonl.hpp"
#include "cfr/perturbation/adapter.hpp"
#include "cfr/perturbation/filter.hpp"
#include "cfr/pipeline/config.hpp"
#include "cfr/pipeline/pipeline.hpp"
#include "cfr/pipeline/synthetic.hpp"
#include "cfr/reinforcement/reinforcement.hpp"
#include "engineered.hpp"
#include "test_util.hpp"

#include <Eigen/SVD>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <map>
#include <sstream>
#include <thread>

using namespace cfr;
using namespace cfr::testing;
namespace fs = std::filesystem;

namespace {

using Clock = std::chrono::steady_clock;

struct Outcome {
  bool pass = true;
  std::string detail;
};

int failures = 0;

void check(const char* id, const char* title, const std::function<Outcome()>& body) {
  const auto start = Clock::now();
  Outcome o;
  try {
    o = body();
  } catch (const std::exception& e) {
    o = {false, std::string("exception: ") + e.what()};
  }
  const double secs = std::chrono::duration<double>(Clock::now() - start).count();
  if (!o.pass) ++failures;
  std::printf("%s %s  %s (%s) [%.2fs]\n", id, o.pass ? "PASS" : "FAIL", title, o.detail.c_str(), secs);
  std::fflush(stdout);
}

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

struct PublishedCell {
  const char* cls;
  const char* model;
  double t, tp, delta;
};

const PublishedCell kTableOne[] = {
    {"dog sled", "ResNet50", 95.43, 80.77, -14.66},       {"dog sled", "DenseNet121", 96.55, 82.27, -14.28},
    {"dog sled", "VGG16", 82.76, 61.54, -21.22},          {"howler monkey", "ResNet50", 82.67, 40.39, -42.28},
    {"howler monkey", "DenseNet121", 79.80, 44.33, -35.47}, {"howler monkey", "VGG16", 83.74, 48.28, -35.46},
    {"seat belt", "ResNet50", 86.29, 69.14, -17.15},      {"seat belt", "DenseNet121", 85.71, 72.66, -13.05},
    {"seat belt", "VGG16", 81.28, 69.78, -11.5},          {"ski", "ResNet50", 78.22, 68.72, -9.5},
    {"ski", "DenseNet121", 71.43, 58.59, -12.84},         {"ski", "VGG16", 69.46, 44.33, -25.13},
};

Outcome ac1() {
  const auto start = Clock::now();
  double worst = 0.0;
  for (const auto& c : kTableOne) worst = std::max(worst, std::abs(delta_of(c.t, c.tp) - c.delta));
  const double secs = std::chrono::duration<double>(Clock::now() - start).count();
  return {worst <= 0.01 + 1e-9 && secs < 1.0, "12 cells, max |error| " + fmt("%.3g", worst)};
}

Outcome ac2() {
  toy::SplitMix64 rng(2024);
  double worst = 0.0;
  bool rank_ok = true;
  for (int trial = 0; trial < 100; ++trial) {
    const auto d = static_cast<Eigen::Index>(1 + rng.below(64));
    const auto k = static_cast<Eigen::Index>(1 + rng.below(64));
    const auto r = static_cast<Eigen::Index>(1 + rng.below(static_cast<std::uint64_t>(std::min(d, k))));
    AdapterWeights w{random_matrix(d, k, rng), random_matrix(d, r, rng), random_matrix(r, k, rng)};
    const Eigen::MatrixXd merged = merge_adapter(w);
    const Eigen::MatrixXd oracle = w.base + brute_multiply(w.A, w.B);
    worst = std::max(worst, (merged - oracle).cwiseAbs().maxCoeff());
    if (r < std::min(d, k) && tail_singular_ratio(merged - w.base, r) > 1e-10) rank_ok = false;
  }
  return {worst < 1e-12 && rank_ok, "100 adapters, max |error| " + fmt("%.3g", worst) + (rank_ok ? ", rank <= r" : ", rank exceeded")};
}

Outcome ac3() {
  auto gen = toy::ToyGenerator::with_guidance(3, 16, 16, 10, 7.5, 0);
  const auto image = random_image("ac3", 11);
  const auto c = gen.embed_text("a photo of a ski on the snow");
  const auto z0 = gen.encode(image);
  const auto traj = ddim_invert(z0, c, 10, gen);
  NullTextOptions opt;
  opt.tolerance = 1e-20;
  const auto sched = optimize_null_text(traj, opt, gen);
  double worst_residual = 0.0, worst_null = 0.0;
  Eigen::VectorXd z_hat = traj.latents.back().data;
  for (int k = 10; k >= 1; --k) {
    const auto& co = gen.coefficients(k);
    const Eigen::VectorXd closed = (traj.latents[k - 1].data - co.a * z_hat - co.d * c.data) / co.b;
    worst_null = std::max(worst_null, (sched.at_step(k).data - closed).lpNorm<Eigen::Infinity>());
    worst_residual = std::max(worst_residual, sched.residuals[k - 1]);
    z_hat = co.a * z_hat + co.b * sched.at_step(k).data + co.d * c.data;
  }
  const auto z = reconstruct(traj, sched, gen, 7.5);
  const double rel = (z.data - z0.data).norm() / z0.data.norm();
  return {worst_residual < 1e-10 && worst_null < 1e-6 && rel < 1e-6,
          "K=10, residual " + fmt("%.2g", worst_residual) + ", null vs closed form " + fmt("%.2g", worst_null) +
              ", round trip " + fmt("%.2g", rel)};
}

Outcome ac4() {
  const Eigen::Vector2d u(1.0, 0.0);
  const double same = directional_similarity_from_deltas(u, 3.0 * u);
  const double orth = directional_similarity_from_deltas(u, Eigen::Vector2d(0.0, 2.0));
  const double opp = directional_similarity_from_deltas(u, -u);
  const bool exact = std::abs(same) <= 1e-12 && std::abs(orth - 1.0) <= 1e-12 && std::abs(opp - 2.0) <= 1e-12;
  toy::SplitMix64 rng(4);
  double lo = 2.0, hi = 0.0;
  for (int i = 0; i < 1000; ++i) {
    const auto n = static_cast<Eigen::Index>(1 + rng.below(32));
    const double s = directional_similarity_from_deltas(random_vector(n, rng), random_vector(n, rng));
    lo = std::min(lo, s);
    hi = std::max(hi, s);
  }
  return {exact && lo >= 0.0 && hi <= 2.0, "0/1/2 cases exact, 1000 random in [" + fmt("%.3f", lo) + ", " + fmt("%.3f", hi) + "]"};
}

Outcome ac5() {
  auto gen = toy::ToyGenerator::with_guidance(3, 16, 16, 10, 7.5, 0);
  const auto image = random_image("src", 17);
  CaptionEdit edit;
  edit.original = "a photo of a ski on the snow";
  edit.perturbed = "a photo of a ski on the beach";
  edit.factor = VariationFactor::kBackground;
  const auto traj = ddim_invert(gen.encode(image), gen.embed_text(edit.original), 10, gen);
  const auto sched = optimize_null_text(traj, NullTextOptions{}, gen);
  EngineeredEncoder quad(edit.original, [](double t) { return (t - 0.4) * (t - 0.4) + 0.1; });
  const auto a = select_tau(image, edit, "ski", default_tau_grid(), EditingContext{gen, quad, traj, sched, 7.5});
  EngineeredEncoder plateau(edit.original, [](double t) { return std::abs(t - 0.5) < 0.15 ? 0.2 : 0.9; });
  const auto b = select_tau(image, edit, "ski", {0.2, 0.4, 0.6, 0.8}, EditingContext{gen, plateau, traj, sched, 7.5});
  return {std::abs(a.tau_star - 0.4) < 1e-12 && std::abs(b.tau_star - 0.6) < 1e-12,
          "tau* " + fmt("%.2f", a.tau_star) + ", tie resolved to " + fmt("%.2f", b.tau_star)};
}

Outcome ac6() {
  const auto names = toy::SceneVocabulary::standard().class_names();
  const auto clf = toy::ToyClassifier::create(names, 3, 16, 16, 8.0, 1);
  const auto other = toy::ToyClassifier::create(names, 3, 16, 16, 8.0, 2);
  const auto& t0 = clf.parameters();
  const auto& t1 = other.parameters();
  const auto& head = t0.head_groups();
  bool ends = blend_parameters(t0, t1, 0.0, head) == t0;
  for (const auto& g : head) ends = ends && blend_parameters(t0, t1, 1.0, head).group(g).values == t1.group(g).values;
  double worst = 0.0;
  toy::SplitMix64 rng(6);
  for (int i = 0; i < 50; ++i) {
    const double alpha = rng.uniform();
    const auto b = blend_parameters(t0, t1, alpha, head);
    for (const auto& g : head) {
      const Eigen::VectorXd want = t0.group(g).values + alpha * (t1.group(g).values - t0.group(g).values);
      worst = std::max(worst, (b.group(g).values - want).lpNorm<Eigen::Infinity>());
    }
  }
  // Fine-tuning must leave every non-head group bit-identical.
  SyntheticOptions so;
  LabeledSet train;
  train.name = "train";
  train.class_universe = names;
  for (int i = 0; i < 16; ++i) {
    LabeledItem it;
    it.label = i % 2 ? "ski" : "dog sled";
    it.image = synthesize_image("ac6-" + std::to_string(i), it.label, i % 2 ? "beach" : "snow", so, 100 + i);
    train.items.push_back(it);
  }
  TrainConfig cfg;
  cfg.learning_rate = 0.05;
  cfg.max_epochs = 5;
  const auto ft = fine_tune_head(clf, train, train, cfg);
  bool frozen = true;
  for (const auto& n : t0.names()) {
    if (!head.count(n)) frozen = frozen && ft.theta1.group(n).values == t0.group(n).values;
  }
  return {ends && worst <= 1e-12 && frozen, std::string(ends ? "ends exact" : "ends differ") + ", affine error " +
                                               fmt("%.2g", worst) + (frozen ? ", body frozen" : ", body changed")};
}

Outcome ac7() {
  toy::ToySentenceEmbedder emb(0);
  auto make = [](const std::string& a, const std::string& b, VariationFactor f) {
    CaptionEdit e;
    e.original = a;
    e.perturbed = b;
    e.factor = f;
    e.changed_span = diff_span(a, b);
    return e;
  };
  const auto carrot =
      filter_edits({make("a carrot on a table", "a turnip on a table", VariationFactor::kObject)}, "carrot", {}, emb);
  const auto same = filter_edits({make("a dog on grass", "a dog on grass", VariationFactor::kObject)}, "dog", {}, emb);
  toy::ToyPerturber perturber(5);
  toy::ToyCaptioner captioner(5);
  const std::vector<std::string> classes = {"dog sled", "howler monkey", "seat belt", "ski"};
  const std::vector<VariationFactor> factors(kAllFactors.begin(), kAllFactors.end());
  std::map<std::string, std::vector<CaptionEdit>> by_class;
  std::size_t total = 0;
  for (int i = 0; total < 200; ++i) {
    const auto& cls = classes[static_cast<std::size_t>(i) % classes.size()];
    const auto img = synthesize_image("ac7-" + std::to_string(i), cls, i % 3 ? "snow" : "beach", SyntheticOptions{},
                                      static_cast<std::uint64_t>(i));
    for (auto& e : generate_edits(captioner.caption(img, 20, 1.5), factors, 2, perturber)) {
      if (total == 200) break;
      by_class[cls].push_back(e);
      ++total;
    }
  }
  // Also filter every edit against a class it does not depict.
  bool idempotent = true;
  std::map<Verdict, int> verdicts;
  for (const auto& [cls, edits] : by_class) {
    const auto other = cls == "ski" ? std::string("dog sled") : std::string("ski");
    for (const auto& gt : {cls, other}) {
      const auto once = filter_edits(edits, gt, {}, emb);
      idempotent = idempotent && filter_edits(once, gt, {}, emb) == once;
      if (gt == cls) {
        for (const auto& e : once) ++verdicts[e.verdict];
      }
    }
  }
  std::string mix;
  for (const auto& [v, n] : verdicts) mix += (mix.empty() ? "" : " ") + std::string(to_string(v)) + "=" + std::to_string(n);
  const bool ok = carrot[0].verdict == Verdict::kRejectedClassChange && same[0].verdict == Verdict::kRejectedTooSimilar &&
                  idempotent;
  return {ok, std::string("carrot ") + std::string(to_string(carrot[0].verdict)) + ", identity " +
                  std::string(to_string(same[0].verdict)) + ", 200 edits [" + mix + "] " +
                  (idempotent ? "idempotent" : "not idempotent")};
}

struct EndToEnd {
  bool ran = false;
  std::string error;
  double seconds = 0.0;
  std::optional<double> baseline, standard, counterfactual;
  std::string weakness_a, weakness_b, comparison_a, comparison_b;
};

EndToEnd run_end_to_end(const fs::path& root) {
  EndToEnd e;
  const auto start = Clock::now();
  try {
    const auto ds = generate_synthetic(root / "data", SyntheticOptions{});
    auto config = Config::load(ds.config);
    config.set("run.root", (root / "runs").string());
    config.set("run.jobs", std::to_string(std::max(1u, std::thread::hardware_concurrency())));
    const auto stress = run_stress_test(StressTestConfig::from(config));
    config.set("reinforce.stress_run", stress.manifest.run_id);
    const auto reinforced = run_reinforcement(ReinforceConfig::from(config));
    e.seconds = std::chrono::duration<double>(Clock::now() - start).count();
    for (const auto& row : reinforced.comparison.rows) {
      if (row.set == "ood" && row.cls == "overall") {
        e.baseline = row.baseline;
        e.standard = row.standard;
        e.counterfactual = row.counterfactual;
      }
    }
    e.weakness_a = read_text_file(stress.run_dir / "reports" / "weakness.json");
    e.comparison_a = read_text_file(reinforced.run_dir / "reports" / "comparison.json");
    // Same configuration again, into fresh run directories.
    const auto stress2 = run_stress_test(StressTestConfig::from(config));
    config.set("reinforce.stress_run", stress2.manifest.run_id);
    const auto reinforced2 = run_reinforcement(ReinforceConfig::from(config));
    e.weakness_b = read_text_file(stress2.run_dir / "reports" / "weakness.json");
    e.comparison_b = read_text_file(reinforced2.run_dir / "reports" / "comparison.json");
    e.ran = true;
  } catch (const std::exception& ex) {
    e.error = ex.what();
  }
  return e;
}

}  // namespace

int main() {
  check("AC1", "published Acc@5 deltas replay", ac1);
  check("AC2", "adapter merge matches oracle", ac2);
  check("AC3", "null-text inversion on the affine generator", ac3);
  check("AC4", "directional similarity bounds", ac4);
  check("AC5", "tau selection", ac5);
  check("AC6", "parameter blending and frozen body", ac6);
  check("AC7", "edit filtering", ac7);

  TempDir dir("cfr-acceptance");
  const auto e2e = run_end_to_end(dir.path());
  check("AC8", "synthetic benchmark end to end", [&]() -> Outcome {
    if (!e2e.ran) return {false, e2e.error};
    if (!e2e.baseline || !e2e.standard || !e2e.counterfactual) return {false, "OOD overall row missing"};
    const bool ok = *e2e.counterfactual > *e2e.baseline && *e2e.counterfactual >= *e2e.standard && e2e.seconds < 300.0;
    return {ok, "OOD Acc@5 baseline " + format2(*e2e.baseline) + ", standard " + format2(*e2e.standard) +
                    ", counterfactual " + format2(*e2e.counterfactual) + ", " + fmt("%.1f", e2e.seconds) + "s"};
  });
  check("AC9", "reruns give byte-identical reports", [&]() -> Outcome {
    if (!e2e.ran) return {false, e2e.error};
    const bool ok = !e2e.weakness_a.empty() && e2e.weakness_a == e2e.weakness_b && e2e.comparison_a == e2e.comparison_b;
    return {ok, std::string("weakness ") + (e2e.weakness_a == e2e.weakness_b ? "identical" : "differs") + ", comparison " +
                    (e2e.comparison_a == e2e.comparison_b ? "identical" : "differs")};
  });
  std::printf("%d of 9 criteria failed\n", failures);
  return failures == 0 ? 0 : 1;
}
