#include "cfr/backends/toy.hpp"
#include "cfr/evaluation/evaluation.hpp"
#include "cfr/image_io.hpp"
#include "cfr/jsonl.hpp"
#include "fakes.hpp"
#include "test_util.hpp"

#include <gtest/gtest.h>

using namespace cfr;
using namespace cfr::testing;

namespace {

std::vector<std::string> names(int n) {
  std::vector<std::string> out;
  for (int i = 0; i < n; ++i) out.push_back("c" + std::to_string(i));
  return out;
}

ScoreVector sv(std::vector<double> s) {
  ScoreVector v;
  v.class_names = names(static_cast<int>(s.size()));
  v.scores = std::move(s);
  return v;
}

// Rank oracle written independently of acc_at_k: sort indices by (score desc, index asc).
int rank_of(const ScoreVector& s, std::size_t gt) {
  std::vector<std::size_t> order(s.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return s.scores[a] != s.scores[b] ? s.scores[a] > s.scores[b] : a < b;
  });
  return static_cast<int>(std::find(order.begin(), order.end(), gt) - order.begin());
}

}  // namespace

TEST(AccAtK, Examples) {
  EXPECT_EQ(acc_at_k(sv({0, 1, 9, 2, 3, 4, 5}), "c2", 5), 1);
  EXPECT_EQ(acc_at_k(sv({10, 9, 8, 7, 6, 5, 4, 3, 2, 1}), "c5", 5), 0);
  EXPECT_EQ(acc_at_k(sv(std::vector<double>(10, 0.1)), "c7", 5), 0);
  EXPECT_EQ(acc_at_k(sv(std::vector<double>(10, 0.1)), "c4", 5), 1);
}

TEST(AccAtK, Errors) {
  try {
    acc_at_k(sv({1, 2, 3}), "zebra", 1);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kUnknownClass);
  }
  EXPECT_THROW(acc_at_k(sv({1, 2, 3}), "c0", 0), Error);
  EXPECT_THROW(acc_at_k(sv({1, 2, 3}), "c0", 4), Error);
}

TEST(AccAtK, PropertyMonotoneInKAndGtScore) {
  toy::SplitMix64 rng(21);
  for (int trial = 0; trial < 500; ++trial) {
    const int n = 1 + static_cast<int>(rng.below(15));
    std::vector<double> s(n);
    // Coarse values so ties are common.
    for (auto& x : s) x = static_cast<double>(rng.below(4));
    auto scores = sv(s);
    const auto gt = rng.below(n);
    const std::string g = "c" + std::to_string(gt);
    const int r = rank_of(scores, gt);
    for (int k = 1; k <= n; ++k) {
      EXPECT_EQ(acc_at_k(scores, g, k), r < k ? 1 : 0);
      if (k < n && acc_at_k(scores, g, k)) {
        EXPECT_EQ(acc_at_k(scores, g, k + 1), 1);
      }
    }
    const int k = 1 + static_cast<int>(rng.below(n));
    const int before = acc_at_k(scores, g, k);
    auto raised = scores;
    raised.scores[gt] += rng.uniform() * 3;
    if (before) {
      EXPECT_EQ(acc_at_k(raised, g, k), 1);
    }
  }
}

TEST(MeanAcc5, AllAndQuarter) {
  auto cls = names(8);
  ScriptedClassifier clf(cls, [](const std::string& id) {
    std::vector<double> s(8, 0.0);
    // "good" items score their label (c0) highest; "bad" ones rank c0 last.
    if (id.rfind("good", 0) == 0) s[0] = 1.0;
    else
      for (int i = 1; i < 8; ++i) s[i] = 1.0;
    return s;
  });
  auto all = make_set("T", {{"good1", "c0"}, {"good2", "c0"}}, cls);
  EXPECT_DOUBLE_EQ(mean_acc5(all, clf), 100.0);
  auto quarter = make_set("T", {{"good1", "c0"}, {"bad1", "c0"}, {"bad2", "c0"}, {"bad3", "c0"}}, cls);
  EXPECT_DOUBLE_EQ(mean_acc5(quarter, clf), 25.0);
  EXPECT_DOUBLE_EQ(delta_acc5(quarter, quarter, clf), 0.0);
  EXPECT_DOUBLE_EQ(delta_acc5(all, quarter, clf), -75.0);
}

TEST(MeanAcc5, ToyClassifierMatchesBruteForce) {
  auto vocab = toy::SceneVocabulary::standard().class_names();
  auto clf = toy::ToyClassifier::create(vocab, 3, 16, 16, 8.0, 3);
  LabeledSet set;
  set.name = "gen";
  set.class_universe = vocab;
  toy::SplitMix64 rng(5);
  for (int i = 0; i < 20; ++i) {
    LabeledItem it;
    it.image = random_image("i" + std::to_string(i), 1000 + i);
    it.label = vocab[rng.below(vocab.size())];
    set.items.push_back(it);
  }
  int hits = 0;
  for (const auto& it : set.items) {
    auto s = clf.classify(it.image);
    const auto gt = std::find(vocab.begin(), vocab.end(), it.label) - vocab.begin();
    if (rank_of(s, static_cast<std::size_t>(gt)) < 5) ++hits;
  }
  EXPECT_DOUBLE_EQ(mean_acc5(set, clf), round2(100.0 * hits / 20.0));
  EXPECT_DOUBLE_EQ(mean_acc5(set, clf, 4), mean_acc5(set, clf, 1));
}

TEST(MeanAcc5, ClassifierErrorsCarryItemContext) {
  auto cls = names(6);
  ScriptedClassifier clf(cls, [](const std::string&) { return std::vector<double>(6, 0.0); });
  auto set = make_set("S", {{"a", "c0"}, {"b", "c1"}}, cls);
  set.items[1].label = "zebra";
  try {
    mean_acc5(set, clf);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kUnknownClass);
    EXPECT_NE(std::string(e.what()).find("'b'"), std::string::npos);
  }
}

TEST(Delta, TableOneReplays) {
  EXPECT_DOUBLE_EQ(delta_of(95.43, 80.77), -14.66);
  EXPECT_DOUBLE_EQ(delta_of(82.67, 40.39), -42.28);
  EXPECT_DOUBLE_EQ(delta_of(69.46, 44.33), -25.13);
  EXPECT_DOUBLE_EQ(delta_of(50.0, 50.0), 0.0);
}

TEST(Delta, PropertyBoundedAndAntisymmetric) {
  toy::SplitMix64 rng(3);
  for (int i = 0; i < 1000; ++i) {
    const double a = round2(100 * rng.uniform()), b = round2(100 * rng.uniform());
    const double d = delta_of(a, b);
    EXPECT_GE(d, -100.0);
    EXPECT_LE(d, 100.0);
    EXPECT_DOUBLE_EQ(d, -delta_of(b, a));
  }
}

TEST(WeaknessReport, SkiReplayWithCountedSets) {
  // 3473/5000 = 69.46% and 4433/10000 = 44.33%.
  std::vector<std::pair<std::string, std::string>> t, tp;
  for (int i = 0; i < 5000; ++i) t.push_back({"t" + std::to_string(i), "ski"});
  for (int i = 0; i < 10000; ++i) tp.push_back({"p" + std::to_string(i), "ski"});
  auto T = make_set("T", t, {"ski"});
  auto Tp = make_set("Tprime", tp, {"ski"});
  std::vector<int> ht(5000, 0), hp(10000, 0);
  std::fill(ht.begin(), ht.begin() + 3473, 1);
  std::fill(hp.begin(), hp.begin() + 4433, 1);
  auto r = assemble_weakness_report(T, ht, Tp, hp, {}, "VGG16");
  ASSERT_EQ(r.per_class.size(), 1u);
  EXPECT_DOUBLE_EQ(r.per_class[0].acc5_T, 69.46);
  EXPECT_DOUBLE_EQ(*r.per_class[0].acc5_T_prime, 44.33);
  EXPECT_DOUBLE_EQ(*r.per_class[0].delta, -25.13);
  EXPECT_TRUE(r.per_factor.empty());
  EXPECT_EQ(r.missing_metadata, 10000u);
}

TEST(WeaknessReport, PlantedBackgroundFailure) {
  auto cls = names(8);
  // Everything is classified correctly except background counterfactuals.
  ScriptedClassifier clf(cls, [](const std::string& id) {
    std::vector<double> s(8, 0.0);
    const int label = id.back() - '0';
    if (id.find("__background__") != std::string::npos) {
      for (int i = 0; i < 8; ++i) s[i] = i == label ? -1.0 : 1.0;
    } else {
      s[label] = 1.0;
    }
    return s;
  });
  std::vector<std::pair<std::string, std::string>> t, tp;
  std::map<std::string, VariationFactor> meta;
  for (int i = 0; i < 12; ++i) {
    const std::string label = "c" + std::to_string(i % 3);
    const std::string src = "img" + std::to_string(i) + "_" + std::to_string(i % 3);
    t.push_back({src, label});
    for (auto f : {VariationFactor::kBackground, VariationFactor::kAdjective, VariationFactor::kDataDomain}) {
      const std::string id = "img" + std::to_string(i) + "__" + std::string(to_string(f)) + "__0.40_" + std::to_string(i % 3);
      tp.push_back({id, label});
      meta[id] = f;
    }
  }
  auto r = build_weakness_report(make_set("T", t, cls), make_set("Tp", tp, cls), meta, clf, 2);
  EXPECT_DOUBLE_EQ(r.acc5_T, 100.0);
  int negative = 0;
  for (const auto& f : r.per_factor) {
    if (f.delta < 0) {
      ++negative;
      EXPECT_EQ(f.factor, VariationFactor::kBackground);
      EXPECT_DOUBLE_EQ(f.delta, -100.0);
    } else {
      EXPECT_DOUBLE_EQ(f.delta, 0.0);
    }
  }
  EXPECT_EQ(negative, 1);
  EXPECT_EQ(r.missing_metadata, 0u);
  EXPECT_EQ(r.metadata["extensions"].count("per_factor"), 1u);
  for (const auto& c : r.per_class) EXPECT_NEAR(*c.delta, -33.33, 1e-9);
}

TEST(WeaknessReport, SortingWorstFirstNullsLast) {
  std::vector<ClassResult> rows = {{"b", 1, 1, 90, 80, -10}, {"a", 1, 0, 90, {}, {}}, {"c", 1, 1, 90, 50, -40},
                                   {"d", 1, 1, 90, 80, -10}};
  sort_per_class(rows);
  EXPECT_EQ(rows[0].name, "c");
  EXPECT_EQ(rows[1].name, "b");
  EXPECT_EQ(rows[2].name, "d");
  EXPECT_EQ(rows[3].name, "a");
}

TEST(WeaknessReport, JsonRoundTripAndSchemaCheck) {
  EvalReport r;
  r.model_name = "m";
  r.size_T = 10;
  r.size_T_prime = 20;
  r.acc5_T = 95.43;
  r.acc5_T_prime = 80.77;
  r.delta = -14.66;
  r.per_class = {{"dog sled", 10, 20, 95.43, 80.77, -14.66}, {"ski", 3, 0, 66.67, {}, {}}};
  r.per_factor = {{VariationFactor::kBackground, 20, 80.77, -14.66}};
  r.missing_metadata = 2;
  r.metadata["note"] = "x";
  const auto j = to_json(r);
  EXPECT_EQ(eval_report_from_json(nlohmann::json::parse(j.dump())), r);
  auto bad = j;
  bad["schema_version"] = 99;
  try {
    eval_report_from_json(bad);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kSchemaMismatch);
  }
  auto inconsistent = j;
  inconsistent["overall"]["delta"] = 3.0;
  EXPECT_THROW(eval_report_from_json(inconsistent), Error);
  const auto csv = to_csv(r);
  EXPECT_EQ(csv.substr(0, csv.find('\n')), "class,acc5_T,acc5_Tprime,delta");
  EXPECT_NE(csv.find("dog sled,95.43,80.77,-14.66"), std::string::npos);
}

TEST(LabeledSets, ManifestRoundTrip) {
  TempDir dir;
  std::filesystem::create_directories(dir / "img");
  write_png(random_image("a", 1), dir / "img" / "a.png");
  write_png(random_image("b", 2), dir / "img" / "b.png");
  write_jsonl(dir / "m.jsonl", {{{"image", "img/a.png"}, {"label", "ski"}, {"source", "x"}},
                                {{"image", "img/b.png"}, {"label", "dog sled"}}});
  auto s = load_labeled_set(dir / "m.jsonl", "m");
  ASSERT_EQ(s.size(), 2u);
  EXPECT_EQ(s.items[0].image.id(), "a");
  EXPECT_EQ(s.items[0].extra["source"], "x");
  EXPECT_EQ(s.class_universe, (std::vector<std::string>{"dog sled", "ski"}));
  try {
    load_labeled_set(dir / "m.jsonl", "m", {"ski"});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kUnknownClass);
  }
  write_manifest(dir / "copy.jsonl", s);
  EXPECT_EQ(load_labeled_set(dir / "copy.jsonl", "c").items[1].label, "dog sled");
  write_jsonl(dir / "empty.jsonl", {});
  EXPECT_THROW(load_labeled_set(dir / "empty.jsonl", "e"), Error);
}
