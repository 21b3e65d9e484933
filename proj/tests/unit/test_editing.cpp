#include "cfr/backends/toy.hpp"
#include "cfr/editing/editing.hpp"
#include "cfr/jsonl.hpp"
#include "engineered.hpp"
#include "test_util.hpp"

#include <gtest/gtest.h>

#include <cmath>

using namespace cfr;
using namespace cfr::testing;

namespace {

toy::ToyGenerator random_affine(int K, std::uint64_t seed, int c = 1, int h = 2, int w = 3) {
  toy::SplitMix64 rng(seed);
  std::vector<toy::StepCoefficients> steps;
  for (int k = 0; k < K; ++k) {
    const double sign = rng.below(2) ? 1.0 : -1.0;
    steps.push_back({0.7 + 0.5 * rng.uniform(), sign * (0.05 + 0.5 * rng.uniform()), 0.2 * rng.normal()});
  }
  return toy::ToyGenerator(c, h, w, steps, seed);
}

struct Fixture {
  toy::ToyGenerator gen = toy::ToyGenerator::with_guidance(3, 16, 16, 10, 7.5, 0);
  ImageTensor image = random_image("src", 17);
  std::string caption = "a photo of a ski on the snow";
  InversionTrajectory traj;
  NullTextSchedule sched;

  Fixture() {
    traj = ddim_invert(gen.encode(image), gen.embed_text(caption), 10, gen);
    sched = optimize_null_text(traj, NullTextOptions{}, gen);
  }
};

}  // namespace

TEST(DdimInvert, OneStepIsTheAffineInverse) {
  toy::ToyGenerator g(1, 1, 2, {{0.8, 0.5, 0.25}});
  LatentVector z0{Eigen::Vector2d(1.0, -2.0), 0};
  EmbeddingVector c{Eigen::Vector2d(4.0, 0.0)};
  auto t = ddim_invert(z0, c, 1, g);
  ASSERT_EQ(t.latents.size(), 2u);
  // The inverse treats the null slot as the caption: z0 = 0.8*z1 + (0.5+0.25)*c.
  EXPECT_NEAR(t.latents[1].data[0], (1.0 - 0.75 * 4.0) / 0.8, 1e-14);
  EXPECT_NEAR(t.latents[1].data[1], -2.0 / 0.8, 1e-14);
  EXPECT_EQ(t.latents[1].timestep, 1);
  EXPECT_EQ(t.latents[0].data, z0.data);
}

TEST(DdimInvert, Preconditions) {
  auto g = random_affine(3, 1);
  LatentVector z0{Eigen::VectorXd::Ones(6), 0};
  EmbeddingVector c{Eigen::VectorXd::Ones(6)};
  EXPECT_THROW(ddim_invert(z0, c, 0, g), Error);
  EXPECT_THROW(ddim_invert(z0, c, 4, g), Error);
  EmbeddingVector bad{Eigen::VectorXd::Ones(5)};
  try {
    ddim_invert(z0, bad, 2, g);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kDimensionMismatch);
    EXPECT_NE(std::string(e.what()).find("step 1"), std::string::npos);
  }
}

TEST(NullText, MatchesClosedFormAndConverges) {
  toy::SplitMix64 rng(4);
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    auto g = random_affine(10, seed);
    LatentVector z0{random_vector(6, rng), 0};
    EmbeddingVector c{random_vector(6, rng)};
    auto t = ddim_invert(z0, c, 10, g);
    NullTextOptions opt;
    opt.tolerance = 1e-20;
    auto s = optimize_null_text(t, opt, g);
    Eigen::VectorXd z_hat = t.latents.back().data;
    for (int k = 10; k >= 1; --k) {
      const auto& co = g.coefficients(k);
      const Eigen::VectorXd closed = (t.latents[k - 1].data - co.a * z_hat - co.d * c.data) / co.b;
      EXPECT_LT((s.at_step(k).data - closed).lpNorm<Eigen::Infinity>(), 1e-6) << "k=" << k;
      EXPECT_LT(s.residuals[k - 1], 1e-10);
      z_hat = co.a * z_hat + co.b * s.at_step(k).data + co.d * c.data;
    }
    const auto z = reconstruct(t, s, g, 7.5);
    EXPECT_LT((z.data - z0.data).norm() / z0.data.norm(), 1e-6);
  }
}

TEST(NullText, ConsistentTrajectoryNeedsNoChange) {
  auto g = random_affine(4, 9);
  toy::SplitMix64 rng(1);
  EmbeddingVector c{random_vector(6, rng)};
  InversionTrajectory t;
  t.K = 4;
  t.caption_embedding = c;
  t.latents.resize(5);
  t.latents[4] = {random_vector(6, rng), 4};
  for (int k = 4; k >= 1; --k) t.latents[k - 1] = g.denoise_step(t.latents[k], k, c, g.null_embedding(), 7.5);
  auto s = optimize_null_text(t, NullTextOptions{}, g);
  for (int k = 1; k <= 4; ++k) {
    EXPECT_LT(s.at_step(k).data.norm(), 1e-12);
    EXPECT_LT(s.residuals[k - 1], 1e-20);
  }
  EXPECT_TRUE(s.all_converged());
}

TEST(NullText, ZeroLearningRateMakesNoProgress) {
  auto g = random_affine(3, 2);
  toy::SplitMix64 rng(3);
  EmbeddingVector c{random_vector(6, rng)};
  auto t = ddim_invert(LatentVector{random_vector(6, rng), 0}, c, 3, g);
  NullTextOptions opt;
  opt.steps_per_timestep = 1;
  opt.learning_rate = 0.0;
  auto s = optimize_null_text(t, opt, g);
  const Eigen::VectorXd initial =
      t.latents[2].data - g.denoise_step(t.latents[3], 3, c, g.null_embedding(), 7.5).data;
  EXPECT_DOUBLE_EQ(s.residuals[2], initial.squaredNorm());
  EXPECT_FALSE(s.converged[2]);
  EXPECT_FALSE(s.all_converged());
}

TEST(NullText, Preconditions) {
  Fixture f;
  NullTextOptions opt;
  opt.steps_per_timestep = 0;
  EXPECT_THROW(optimize_null_text(f.traj, opt, f.gen), Error);
  opt = {};
  opt.tolerance = 0.0;
  EXPECT_THROW(optimize_null_text(f.traj, opt, f.gen), Error);
}

TEST(NullText, RoundTripOnToyImages) {
  Fixture f;
  EXPECT_TRUE(f.sched.all_converged());
  const auto z = reconstruct(f.traj, f.sched, f.gen, 7.5);
  EXPECT_LT((z.data - f.traj.latents[0].data).norm() / f.traj.latents[0].data.norm(), 1e-6);
}

TEST(EditImage, SameCaptionReconstructs) {
  Fixture f;
  EditRequest req{f.image, f.caption, f.caption, 0.3};
  auto out = edit_image(req, f.sched, f.traj, f.gen, 7.5);
  EXPECT_LT((out.data() - f.image.data()).lpNorm<Eigen::Infinity>(), 1e-6);
}

TEST(EditImage, TauOneIsNoEdit) {
  Fixture f;
  EditRequest req{f.image, f.caption, "a photo of a ski on the beach", 1.0};
  auto out = edit_image(req, f.sched, f.traj, f.gen, 7.5);
  const auto rec = f.gen.decode(reconstruct(f.traj, f.sched, f.gen, 7.5), "src");
  EXPECT_LT((out.data() - rec.data()).lpNorm<Eigen::Infinity>(), 1e-12);
}

TEST(EditImage, TauZeroConditionsOnEditEveryStep) {
  Fixture f;
  const std::string edited = "a photo of a ski on the beach";
  EditRequest req{f.image, f.caption, edited, 0.0};
  auto out = edit_image(req, f.sched, f.traj, f.gen, 7.5);
  const auto ce = f.gen.embed_text(edited);
  LatentVector z = f.traj.latents.back();
  for (int k = 10; k >= 1; --k) z = f.gen.denoise_step(z, k, ce, f.sched.at_step(k), 7.5);
  EXPECT_LT((out.data() - f.gen.decode(z, "x").data()).lpNorm<Eigen::Infinity>(), 1e-12);
  // Heavier edits move further from the source.
  EditRequest lighter{f.image, f.caption, edited, 0.7};
  const double far = (out.data() - f.image.data()).norm();
  const double near = (edit_image(lighter, f.sched, f.traj, f.gen, 7.5).data() - f.image.data()).norm();
  EXPECT_GT(far, near);
}

TEST(EditImage, DeterministicAndKChecked) {
  Fixture f;
  EditRequest req{f.image, f.caption, "a photo of a ski on the grass", 0.45};
  EXPECT_EQ(edit_image(req, f.sched, f.traj, f.gen, 7.5).data(), edit_image(req, f.sched, f.traj, f.gen, 7.5).data());
  NullTextSchedule shorter = f.sched;
  shorter.embeddings.pop_back();
  try {
    edit_image(req, shorter, f.traj, f.gen, 7.5);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kStepMismatch);
  }
  req.tau = 1.5;
  EXPECT_THROW(edit_image(req, f.sched, f.traj, f.gen, 7.5), Error);
}

TEST(EditRequest, ValidateRequiresDistinctCaptions) {
  EditRequest r{random_image("a", 1), "x y", "x y", 0.5};
  EXPECT_THROW(r.validate(), Error);
  r.perturbed_caption = "x z";
  EXPECT_NO_THROW(r.validate());
  r.tau = -0.1;
  EXPECT_THROW(r.validate(), Error);
}

TEST(DirectionalSimilarity, BoundaryValues) {
  Eigen::Vector3d u(1, 2, 3), v(-2, 1, 0);
  EXPECT_NEAR(directional_similarity_from_deltas(u, 2.5 * u), 0.0, 1e-12);
  EXPECT_NEAR(directional_similarity_from_deltas(u, v), 1.0, 1e-12);
  EXPECT_NEAR(directional_similarity_from_deltas(u, -0.1 * u), 2.0, 1e-12);
  try {
    directional_similarity_from_deltas(Eigen::Vector3d::Zero(), u);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kZeroDelta);
  }
}

TEST(DirectionalSimilarity, PropertyRangeAndScaleInvariance) {
  toy::SplitMix64 rng(77);
  for (int i = 0; i < 1000; ++i) {
    const auto n = 1 + static_cast<Eigen::Index>(rng.below(12));
    const auto a = random_vector(n, rng), b = random_vector(n, rng);
    const double o = directional_similarity_from_deltas(a, b);
    EXPECT_GE(o, 0.0);
    EXPECT_LE(o, 2.0);
    const double s = std::exp(3 * rng.normal());
    EXPECT_NEAR(o, directional_similarity_from_deltas(s * a, b), 1e-12);
    EXPECT_NEAR(o, directional_similarity_from_deltas(a, s * b), 1e-12);
  }
}

TEST(DirectionalSimilarity, NoOpEditIsZeroDelta) {
  toy::ToyJointEncoder enc(0);
  auto img = random_image("a", 1);
  try {
    directional_similarity(img, img, "ski on snow", "ski on beach", enc);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kZeroDelta);
  }
}

TEST(SearchTau, ExhaustiveOracleAndTies) {
  auto grid = default_tau_grid();
  auto objective = [](double t) { return (t - 0.4) * (t - 0.4) + 0.1; };
  auto s = search_tau(grid, objective);
  EXPECT_DOUBLE_EQ(s.tau_star, 0.4);
  double best = 1e300;
  for (double t : grid) best = std::min(best, objective(t));
  EXPECT_EQ(s.best_score, best);
  EXPECT_DOUBLE_EQ(search_tau({0.5}, [](double) { return 1.7; }).tau_star, 0.5);
  EXPECT_DOUBLE_EQ(search_tau({0.3, 0.6}, [](double) { return 0.25; }).tau_star, 0.6);
  EXPECT_DOUBLE_EQ(search_tau({0.6, 0.3}, [](double) { return 0.25; }).tau_star, 0.6);
}

TEST(SearchTau, FailuresAreSkippedOrFatalWhenAll) {
  auto zero = [](double t) -> double {
    if (t < 0.5) fail(ErrorCode::kZeroDelta, "no change");
    return t;
  };
  auto s = search_tau({0.2, 0.4, 0.6, 0.8}, zero);
  EXPECT_DOUBLE_EQ(s.tau_star, 0.6);
  EXPECT_FALSE(s.candidates[0].score.has_value());
  EXPECT_FALSE(s.candidates[0].failure.empty());
  try {
    search_tau({0.1, 0.2}, zero);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kAllCandidatesFailed);
  }
  EXPECT_THROW(search_tau({}, zero), Error);
  EXPECT_THROW(search_tau({1.2}, zero), Error);
}

TEST(SelectTau, EngineeredObjectivePicksPointFour) {
  Fixture f;
  CaptionEdit edit;
  edit.original = f.caption;
  edit.perturbed = "a photo of a ski on the beach";
  edit.factor = VariationFactor::kBackground;
  EngineeredEncoder enc(edit.original, [](double t) { return (t - 0.4) * (t - 0.4) + 0.1; });
  EditingContext ctx{f.gen, enc, f.traj, f.sched, 7.5};
  auto sel = select_tau(f.image, edit, "ski", default_tau_grid(), ctx);
  EXPECT_DOUBLE_EQ(sel.tau_star, 0.4);
  EXPECT_NEAR(sel.best.directional_score, 0.1, 1e-12);
  EXPECT_EQ(sel.best.image.id(), "src__background__0.40");
  EXPECT_EQ(sel.best.gt_class, "ski");
  EXPECT_EQ(sel.best.source_image_id, "src");
  // The returned score is the minimum over independently recomputed scores.
  double best = 1e300;
  for (const auto& c : sel.candidates) {
    EditRequest req{f.image, edit.original, edit.perturbed, c.tau};
    auto cf = edit_image(req, f.sched, f.traj, f.gen, 7.5);
    auto name = counterfactual_file_name("src", edit.factor, c.tau);
    cf.set_id(name.substr(0, name.size() - 4));
    best = std::min(best, directional_similarity(f.image, cf, edit.original, edit.perturbed, enc));
  }
  EXPECT_EQ(sel.best.directional_score, best);
}

TEST(SelectTau, TwoWayTieGoesToLargerTau) {
  Fixture f;
  CaptionEdit edit;
  edit.original = f.caption;
  edit.perturbed = "a photo of a ski on the grass";
  edit.factor = VariationFactor::kBackground;
  EngineeredEncoder enc(edit.original, [](double t) { return std::abs(t - 0.5) < 0.15 ? 0.2 : 0.9; });
  EditingContext ctx{f.gen, enc, f.traj, f.sched, 7.5};
  auto sel = select_tau(f.image, edit, "ski", {0.2, 0.4, 0.6, 0.8}, ctx);
  EXPECT_DOUBLE_EQ(sel.tau_star, 0.6);
}

TEST(SelectTau, ToyEncoderScoresStayInRange) {
  Fixture f;
  toy::ToyJointEncoder enc(0);
  CaptionEdit edit;
  edit.original = f.caption;
  edit.perturbed = "a photo of a ski on the grass";
  edit.factor = VariationFactor::kBackground;
  EditingContext ctx{f.gen, enc, f.traj, f.sched, 7.5};
  auto sel = select_tau(f.image, edit, "ski", default_tau_grid(), ctx);
  EXPECT_GE(sel.best.directional_score, 0.0);
  EXPECT_LE(sel.best.directional_score, 2.0);
  for (const auto& c : sel.candidates) {
    if (c.score) {
      EXPECT_LE(sel.best.directional_score, *c.score);
    }
  }
}

TEST(CounterfactualSet, FileNamesMetadataAndCollisions) {
  TempDir dir;
  CounterfactualExample a;
  a.image = random_image("x", 1);
  a.source_image_id = "img-3";
  a.edit.original = "a ski on snow";
  a.edit.perturbed = "a ski on sand";
  a.edit.factor = VariationFactor::kBackground;
  a.edit.changed_span = diff_span(a.edit.original, a.edit.perturbed);
  a.tau = 0.4;
  a.directional_score = 0.3;
  a.gt_class = "ski";
  auto b = a;
  b.edit.perturbed = "a ski on grass";
  auto out = write_counterfactual_set(dir.path(), {a, b});
  EXPECT_EQ(out[0].image_file, "img-3__background__0.40.png");
  EXPECT_EQ(out[1].image_file, "img-3__background__0.40-2.png");
  EXPECT_TRUE(std::filesystem::exists(dir / out[1].image_file));
  auto rows = read_jsonl(dir / "metadata.jsonl");
  ASSERT_EQ(rows.size(), 2u);
  EXPECT_EQ(rows[0]["image"], "img-3__background__0.40.png");
  EXPECT_EQ(rows[1]["edit"]["perturbed"], "a ski on grass");
  EXPECT_EQ(rows[0]["gt_class"], "ski");
  EXPECT_DOUBLE_EQ(rows[0]["tau"].get<double>(), 0.4);
}
