#include "cfr/backends/toy.hpp"
#include "cfr/perturbation/adapter.hpp"
#include "cfr/perturbation/edits.hpp"
#include "cfr/perturbation/filter.hpp"
#include "test_util.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>

using namespace cfr;
using namespace cfr::testing;

namespace {

bool contains_text(const std::vector<CaptionEdit>& edits, const std::string& text) {
  return std::any_of(edits.begin(), edits.end(), [&](const CaptionEdit& e) { return e.perturbed == text; });
}

CaptionEdit make_edit(const std::string& a, const std::string& b, VariationFactor f = VariationFactor::kObject) {
  CaptionEdit e;
  e.original = a;
  e.perturbed = b;
  e.factor = f;
  e.changed_span = diff_span(a, b);
  return e;
}

}  // namespace

TEST(MergeAdapter, ZeroUpdateReturnsBase) {
  toy::SplitMix64 rng(1);
  AdapterWeights w{random_matrix(4, 3, rng), Eigen::MatrixXd::Zero(4, 2), random_matrix(2, 3, rng)};
  EXPECT_EQ(merge_adapter(w), w.base);
}

TEST(MergeAdapter, TwoByTwoExample) {
  AdapterWeights w;
  w.base = Eigen::Matrix2d::Identity();
  w.A = Eigen::MatrixXd(2, 1);
  w.A << 1, 0;
  w.B = Eigen::MatrixXd(1, 2);
  w.B << 0, 2;
  Eigen::Matrix2d want;
  want << 1, 2, 0, 1;
  EXPECT_EQ(merge_adapter(w), Eigen::MatrixXd(want));
}

TEST(MergeAdapter, RankOfUpdateBoundedByR) {
  toy::SplitMix64 rng(2);
  AdapterWeights w{random_matrix(8, 6, rng), random_matrix(8, 2, rng), random_matrix(2, 6, rng)};
  const Eigen::MatrixXd delta = merge_adapter(w) - w.base;
  EXPECT_LT(tail_singular_ratio(delta, 2), 1e-10);
}

TEST(MergeAdapter, PropertyMatchesOracleAndLeavesInputs) {
  toy::SplitMix64 rng(3);
  for (int trial = 0; trial < 100; ++trial) {
    const auto d = 1 + static_cast<Eigen::Index>(rng.below(24));
    const auto k = 1 + static_cast<Eigen::Index>(rng.below(24));
    const auto r = 1 + static_cast<Eigen::Index>(rng.below(std::min(d, k)));
    AdapterWeights w{random_matrix(d, k, rng), random_matrix(d, r, rng), random_matrix(r, k, rng)};
    const AdapterWeights copy = w;
    const Eigen::MatrixXd merged = merge_adapter(w);
    EXPECT_LT((merged - w.base - brute_multiply(w.A, w.B)).lpNorm<Eigen::Infinity>(), 1e-12);
    EXPECT_LT(tail_singular_ratio(merged - w.base, r), 1e-10);
    EXPECT_EQ(w.base, copy.base);
    EXPECT_EQ(w.A, copy.A);
    EXPECT_EQ(w.B, copy.B);
  }
}

TEST(MergeAdapter, ShapeErrors) {
  AdapterWeights w{Eigen::MatrixXd::Zero(3, 3), Eigen::MatrixXd::Zero(2, 1), Eigen::MatrixXd::Zero(1, 3)};
  try {
    merge_adapter(w);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kShapeMismatch);
  }
  AdapterWeights too_wide{Eigen::MatrixXd::Zero(2, 2), Eigen::MatrixXd::Zero(2, 3), Eigen::MatrixXd::Zero(3, 2)};
  EXPECT_THROW(merge_adapter(too_wide), Error);
}

TEST(Factor, ExactlyFiveRoundTripping) {
  EXPECT_EQ(kAllFactors.size(), 5u);
  for (auto f : kAllFactors) EXPECT_EQ(factor_from_string(to_string(f)), f);
  EXPECT_EQ(to_string(VariationFactor::kDataDomain), "data_domain");
  EXPECT_FALSE(parse_factor("weather").has_value());
  EXPECT_THROW(factor_from_string("weather"), Error);
}

TEST(GenerateEdits, AdjectiveOldBecomesNewOrYoung) {
  toy::ToyPerturber p(0);
  auto edits = generate_edits("an old truck on a road", {VariationFactor::kAdjective}, 3, p);
  EXPECT_TRUE(contains_text(edits, "an new truck on a road") || contains_text(edits, "an young truck on a road"));
  for (const auto& e : edits) {
    EXPECT_EQ(e.factor, VariationFactor::kAdjective);
    EXPECT_EQ(e.verdict, Verdict::kPending);
  }
}

TEST(GenerateEdits, BackgroundMountainBecomesBeach) {
  toy::ToyPerturber p(0);
  auto edits = generate_edits("a man skiing on a mountain", {VariationFactor::kBackground}, 2, p);
  ASSERT_FALSE(edits.empty());
  EXPECT_TRUE(contains_text(edits, "a man skiing on a beach"));
  EXPECT_EQ(edits.front().changed_span.indices, std::vector<int>{5});
}

TEST(GenerateEdits, CountBoundAndZeroRejected) {
  toy::ToyPerturber p(4);
  const std::string cap = "a photo of a man with an old red bag on the snow";
  for (int n = 1; n <= 4; ++n) {
    auto edits = generate_edits(cap, {kAllFactors.begin(), kAllFactors.end()}, n, p);
    EXPECT_LE(edits.size(), static_cast<std::size_t>(n) * kAllFactors.size());
    for (const auto& e : edits) EXPECT_NE(e.perturbed, e.original);
  }
  EXPECT_THROW(generate_edits(cap, {VariationFactor::kSubject}, 0, p), Error);
  EXPECT_THROW(generate_edits("  ", {VariationFactor::kSubject}, 1, p), Error);
}

TEST(DiffSpan, MinimalSpan) {
  auto s = diff_span("a b c d", "a x y d");
  EXPECT_EQ(s.indices, (std::vector<int>{1, 2}));
  EXPECT_EQ(s.replacement, (std::vector<std::string>{"x", "y"}));
  auto ins = diff_span("red car on street", "red car on snowy street");
  EXPECT_TRUE(ins.indices.empty());
  EXPECT_EQ(ins.replacement, std::vector<std::string>{"snowy"});
  EXPECT_EQ(diff_span("same", "same").changed_tokens(), 0u);
}

TEST(FilterEdits, CarrotToTurnipIsClassChange) {
  toy::ToySentenceEmbedder emb(0);
  auto out = filter_edits({make_edit("a carrot on a table", "a turnip on a table")}, "carrot", FilterPolicy{}, emb);
  ASSERT_EQ(out.size(), 1u);
  EXPECT_EQ(out[0].verdict, Verdict::kRejectedClassChange);
}

TEST(FilterEdits, SynonymsAreProtected) {
  toy::ToySentenceEmbedder emb(0);
  FilterPolicy policy;
  policy.class_synonyms["dog sled"] = {"sledge"};
  auto out = filter_edits({make_edit("a sledge on the snow", "a cart on the snow")}, "dog sled", policy, emb);
  EXPECT_EQ(out[0].verdict, Verdict::kRejectedClassChange);
}

TEST(FilterEdits, IdentityIsTooSimilar) {
  toy::ToySentenceEmbedder emb(0);
  auto out = filter_edits({make_edit("a dog on grass", "a dog on grass")}, "dog", FilterPolicy{}, emb);
  EXPECT_EQ(out[0].verdict, Verdict::kRejectedTooSimilar);
  EXPECT_NEAR(*out[0].similarity_to_original, 1.0, 1e-12);
}

TEST(FilterEdits, SnowyStreetAccepted) {
  toy::ToySentenceEmbedder emb(0);
  auto out = filter_edits({make_edit("red car on street", "red car on snowy street", VariationFactor::kBackground)},
                          "car", FilterPolicy{}, emb);
  EXPECT_EQ(out[0].verdict, Verdict::kAccepted);
  // Bag-of-words oracle: {red, car, street} against {red, car, snowy, street}.
  EXPECT_NEAR(*out[0].similarity_to_original, 3.0 / std::sqrt(12.0), 1e-12);
}

TEST(FilterEdits, ShortCaptionIsDegenerate) {
  toy::ToySentenceEmbedder emb(0);
  auto out = filter_edits({make_edit("a dog", "a cat")}, "ski", FilterPolicy{}, emb);
  EXPECT_EQ(out[0].verdict, Verdict::kRejectedDegenerate);
  EXPECT_THROW(filter_edits({}, " ", FilterPolicy{}, emb), Error);
}

TEST(FilterEdits, PropertyIdempotentAndNonEmptyChanges) {
  const std::vector<std::string> pool = {"a",    "dog",   "cat",    "on",    "the",  "snow", "grass", "red",
                                         "old",  "new",   "street", "beach", "ski",  "man",  "woman", "photo",
                                         "tree", "house", "blue",   "sled",  "road", "with", "car",   "sketch"};
  toy::SplitMix64 rng(42);
  toy::ToySentenceEmbedder emb(0);
  FilterPolicy policy;
  std::vector<CaptionEdit> edits;
  std::vector<std::string> classes;
  for (int i = 0; i < 200; ++i) {
    std::vector<std::string> words;
    const auto len = 2 + rng.below(8);
    for (std::size_t w = 0; w < len; ++w) words.push_back(pool[rng.below(pool.size())]);
    auto changed = words;
    const auto swaps = rng.below(3);
    for (std::size_t s = 0; s < swaps; ++s) changed[rng.below(changed.size())] = pool[rng.below(pool.size())];
    if (rng.below(4) == 0) changed.push_back(pool[rng.below(pool.size())]);
    edits.push_back(make_edit(join(words, " "), join(changed, " "), kAllFactors[rng.below(5)]));
  }
  const std::string gt = "dog";
  auto once = filter_edits(edits, gt, policy, emb);
  ASSERT_EQ(once.size(), edits.size());
  std::vector<CaptionEdit> accepted;
  for (std::size_t i = 0; i < once.size(); ++i) {
    EXPECT_EQ(once[i].original, edits[i].original);  // order kept
    EXPECT_NE(once[i].verdict, Verdict::kPending);
    if (once[i].verdict != Verdict::kAccepted) continue;
    EXPECT_GT(once[i].changed_span.changed_tokens(), 0u);
    EXPECT_LE(*once[i].similarity_to_original, policy.max_similarity);
    EXPECT_GE(split_whitespace(once[i].perturbed).size(), 3u);
    accepted.push_back(once[i]);
  }
  EXPECT_FALSE(accepted.empty());
  EXPECT_EQ(filter_edits(accepted, gt, policy, emb), accepted);
  EXPECT_EQ(filter_edits(once, gt, policy, emb), once);
}

TEST(Cosine, Examples) {
  EmbeddingVector u{Eigen::Vector2d(1, 0)}, v{Eigen::Vector2d(1, 1)}, w{Eigen::Vector2d(0, 3)};
  EXPECT_DOUBLE_EQ(cosine_similarity(u, u), 1.0);
  EXPECT_DOUBLE_EQ(cosine_similarity(u, w), 0.0);
  EXPECT_NEAR(cosine_similarity(u, v), 1.0 / std::sqrt(2.0), 1e-15);
  try {
    cosine_similarity(u, EmbeddingVector{Eigen::Vector2d(0, 0)});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kZeroVector);
  }
}

TEST(Cosine, PropertySymmetricAndScaleInvariant) {
  toy::SplitMix64 rng(9);
  for (int i = 0; i < 500; ++i) {
    const auto n = 1 + static_cast<Eigen::Index>(rng.below(16));
    EmbeddingVector u{random_vector(n, rng)}, v{random_vector(n, rng)};
    const double c = cosine_similarity(u, v);
    EXPECT_GE(c, -1.0);
    EXPECT_LE(c, 1.0);
    EXPECT_NEAR(c, cosine_similarity(v, u), 1e-14);
    const double s = std::exp(4 * rng.normal());
    EXPECT_NEAR(c, cosine_similarity(EmbeddingVector{u.data * s}, v), 1e-12);
  }
}

TEST(EditsIo, JsonlRoundTripAndValidation) {
  TempDir dir;
  auto a = make_edit("a man on a mountain", "a man on a beach", VariationFactor::kBackground);
  a.similarity_to_original = 0.5;
  a.verdict = Verdict::kAccepted;
  auto b = make_edit("x y z", "x q z");
  write_edits_jsonl(dir / "e.jsonl", {a, b});
  auto back = read_edits_jsonl(dir / "e.jsonl");
  ASSERT_EQ(back.size(), 2u);
  EXPECT_EQ(back[0], a);
  EXPECT_EQ(back[1], b);
  auto bad = to_json(a);
  bad["perturbed"] = bad["original"];
  EXPECT_THROW(caption_edit_from_json(bad), Error);
  auto oob = to_json(b);
  oob["changed_span"]["indices"] = {7};
  EXPECT_THROW(caption_edit_from_json(oob), Error);
}
