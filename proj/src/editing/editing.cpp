#include "cfr/editing/editing.hpp"

#include "cfr/common.hpp"
#include "cfr/image_io.hpp"
#include "cfr/jsonl.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <set>

namespace cfr {

using nlohmann::json;

void InversionTrajectory::validate() const {
  require(K >= 1, ErrorCode::kInvalidArgument, "trajectory K must be >= 1");
  require(latents.size() == static_cast<std::size_t>(K) + 1, ErrorCode::kStepMismatch,
          "trajectory holds " + std::to_string(latents.size()) + " latents for K=" + std::to_string(K));
  for (int k = 0; k <= K; ++k) {
    require(latents[static_cast<std::size_t>(k)].timestep == k, ErrorCode::kStepMismatch,
            "latent " + std::to_string(k) + " carries timestep " +
                std::to_string(latents[static_cast<std::size_t>(k)].timestep));
  }
}

bool NullTextSchedule::all_converged() const {
  return std::all_of(converged.begin(), converged.end(), [](bool c) { return c; });
}

InversionTrajectory ddim_invert(const LatentVector& z0, const EmbeddingVector& caption_embedding, int K,
                                const Generator& generator) {
  require(K >= 1, ErrorCode::kInvalidArgument, "K must be >= 1");
  require(K <= generator.max_steps(), ErrorCode::kInvalidArgument,
          "K=" + std::to_string(K) + " exceeds the generator's " + std::to_string(generator.max_steps()) + " steps");
  require(z0.timestep == 0, ErrorCode::kStepMismatch, "inversion starts from a timestep-0 latent");
  InversionTrajectory t;
  t.K = K;
  t.caption_embedding = caption_embedding;
  t.latents.reserve(static_cast<std::size_t>(K) + 1);
  t.latents.push_back(z0);
  for (int k = 1; k <= K; ++k) {
    try {
      t.latents.push_back(generator.invert_step(t.latents.back(), k, caption_embedding));
    } catch (const Error& e) {
      throw Error(e.code(), std::string(e.what()) + " [inversion stopped at step " + std::to_string(k) + " of " +
                                std::to_string(K) + "; " + std::to_string(t.latents.size()) +
                                " latents computed, last norm " + std::to_string(t.latents.back().data.norm()) +
                                "]");
    }
  }
  return t;
}

NullTextSchedule optimize_null_text(const InversionTrajectory& trajectory, const NullTextOptions& options,
                                    const Generator& generator) {
  trajectory.validate();
  require(options.steps_per_timestep >= 1, ErrorCode::kInvalidArgument, "steps_per_timestep must be >= 1");
  require(options.tolerance > 0.0, ErrorCode::kInvalidArgument, "tolerance must be > 0");
  require(options.learning_rate >= 0.0, ErrorCode::kInvalidArgument, "learning_rate must be >= 0");

  const int K = trajectory.K;
  const auto& c = trajectory.caption_embedding;
  NullTextSchedule schedule;
  schedule.embeddings.resize(static_cast<std::size_t>(K));
  schedule.residuals.resize(static_cast<std::size_t>(K));
  schedule.converged.resize(static_cast<std::size_t>(K));

  EmbeddingVector null = generator.null_embedding();
  LatentVector z_hat = trajectory.latents.back();
  for (int k = K; k >= 1; --k) {
    const Eigen::VectorXd& target = trajectory.latents[static_cast<std::size_t>(k - 1)].data;
    auto residual_of = [&](const EmbeddingVector& n) {
      return Eigen::VectorXd(target - generator.denoise_step(z_hat, k, c, n, options.guidance_scale).data);
    };
    Eigen::VectorXd r = residual_of(null);
    for (int it = 0; it < options.steps_per_timestep; ++it) {
      if (r.squaredNorm() <= options.tolerance) break;
      // d/d(null) ||r||^2 = -2 J^T r; the minimiser along J^T r is (g.g)/(Jg.Jg).
      const Eigen::VectorXd g = generator.null_vjp(z_hat, k, c, null, options.guidance_scale, r);
      const Eigen::VectorXd jg = generator.null_jvp(z_hat, k, c, null, options.guidance_scale, g);
      const double denom = jg.squaredNorm();
      if (denom <= 0.0 || !std::isfinite(denom)) break;
      null.data += options.learning_rate * (g.squaredNorm() / denom) * g;
      r = residual_of(null);
    }
    const auto idx = static_cast<std::size_t>(k - 1);
    schedule.residuals[idx] = r.squaredNorm();
    require(std::isfinite(schedule.residuals[idx]), ErrorCode::kNonFinite,
            "null-text residual diverged at step " + std::to_string(k));
    schedule.converged[idx] = schedule.residuals[idx] <= options.tolerance;
    schedule.embeddings[idx] = null;
    z_hat = generator.denoise_step(z_hat, k, c, null, options.guidance_scale);
  }
  return schedule;
}

LatentVector reconstruct(const InversionTrajectory& trajectory, const NullTextSchedule& schedule,
                         const Generator& generator, double guidance_scale) {
  trajectory.validate();
  require(schedule.K() == trajectory.K, ErrorCode::kStepMismatch, "schedule and trajectory differ in K");
  LatentVector z = trajectory.latents.back();
  for (int k = trajectory.K; k >= 1; --k) {
    z = generator.denoise_step(z, k, trajectory.caption_embedding, schedule.at_step(k), guidance_scale);
  }
  return z;
}

void EditRequest::validate() const {
  require(!trim(original_caption).empty() && !trim(perturbed_caption).empty(), ErrorCode::kInvalidArgument,
          "edit captions must be nonempty");
  require(original_caption != perturbed_caption, ErrorCode::kInvalidArgument, "edit captions must differ");
  require(tau >= 0.0 && tau <= 1.0, ErrorCode::kInvalidArgument, "tau must lie in [0, 1]");
}

ImageTensor edit_image(const EditRequest& request, const NullTextSchedule& schedule,
                       const InversionTrajectory& trajectory, const Generator& generator, double guidance_scale) {
  trajectory.validate();
  require(schedule.K() == trajectory.K, ErrorCode::kStepMismatch,
          "schedule has K=" + std::to_string(schedule.K()) + ", trajectory has K=" + std::to_string(trajectory.K));
  require(!trim(request.original_caption).empty() && !trim(request.perturbed_caption).empty(),
          ErrorCode::kInvalidArgument, "edit captions must be nonempty");
  require(request.tau >= 0.0 && request.tau <= 1.0, ErrorCode::kInvalidArgument, "tau must lie in [0, 1]");

  const int K = trajectory.K;
  const Eigen::VectorXd& c = trajectory.caption_embedding.data;
  const Eigen::VectorXd c_edit = generator.embed_text(request.perturbed_caption).data;
  require(c_edit.size() == c.size(), ErrorCode::kDimensionMismatch, "caption embeddings differ in width");

  const double injected = request.tau * K;
  LatentVector z = trajectory.latents.back();
  for (int i = 0; i < K; ++i) {
    const int k = K - i;
    const double lambda = std::clamp(injected - i, 0.0, 1.0);
    EmbeddingVector cond{lambda == 1.0 ? c : (lambda == 0.0 ? c_edit : Eigen::VectorXd(lambda * c + (1.0 - lambda) * c_edit))};
    z = generator.denoise_step(z, k, cond, schedule.at_step(k), guidance_scale);
  }
  return generator.decode(z, request.image.id());
}

double directional_similarity_from_deltas(const Eigen::VectorXd& image_delta, const Eigen::VectorXd& text_delta) {
  require(image_delta.size() == text_delta.size(), ErrorCode::kDimensionMismatch,
          "image and text deltas differ in width");
  const double ni = image_delta.norm();
  const double nt = text_delta.norm();
  require(ni > 0.0, ErrorCode::kZeroDelta, "image embedding did not change");
  require(nt > 0.0, ErrorCode::kZeroDelta, "text embedding did not change");
  const double cos = std::clamp(image_delta.dot(text_delta) / (ni * nt), -1.0, 1.0);
  return 1.0 - cos;
}

double directional_similarity(const ImageTensor& x, const ImageTensor& x_cf, const std::string& c,
                              const std::string& c_cf, const JointEncoder& encoder) {
  const auto [img, txt] = encoder.encode_pair(x, c);
  const auto [img_cf, txt_cf] = encoder.encode_pair(x_cf, c_cf);
  Eigen::VectorXd di = img.data - img_cf.data;
  Eigen::VectorXd dt = txt.data - txt_cf.data;
  // Deltas at rounding level count as "no change".
  if (di.norm() <= 1e-9 * std::max(1.0, img.data.norm())) di.setZero();
  if (dt.norm() <= 1e-9 * std::max(1.0, txt.data.norm())) dt.setZero();
  return directional_similarity_from_deltas(di, dt);
}

json to_json(const CounterfactualExample& example) {
  return {{"image", example.image_file},
          {"source_image_id", example.source_image_id},
          {"edit", to_json(example.edit)},
          {"tau", example.tau},
          {"directional_score", example.directional_score},
          {"gt_class", example.gt_class}};
}

TauSearch search_tau(const std::vector<double>& tau_grid, const std::function<double(double)>& score) {
  require(!tau_grid.empty(), ErrorCode::kInvalidArgument, "tau grid is empty");
  for (double t : tau_grid) require(t >= 0.0 && t <= 1.0, ErrorCode::kInvalidArgument, "tau grid values must lie in [0,1]");
  TauSearch out;
  bool found = false;
  for (std::size_t i = 0; i < tau_grid.size(); ++i) {
    TauCandidate cand{tau_grid[i], std::nullopt, {}};
    try {
      cand.score = score(tau_grid[i]);
    } catch (const Error& e) {
      cand.failure = e.what();
    }
    if (cand.score) {
      const double s = *cand.score;
      const bool better = !found || s < out.best_score || (s == out.best_score && cand.tau > out.tau_star);
      if (better) {
        found = true;
        out.best_score = s;
        out.tau_star = cand.tau;
        out.best_index = i;
      }
    }
    out.candidates.push_back(std::move(cand));
  }
  if (!found) {
    std::string why = out.candidates.front().failure;
    fail(ErrorCode::kAllCandidatesFailed, "every tau candidate failed (first: " + why + ")");
  }
  return out;
}

std::string counterfactual_file_name(const std::string& source_id, VariationFactor factor, double tau) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.2f", tau);
  return source_id + "__" + std::string(to_string(factor)) + "__" + buf + ".png";
}

TauSelection select_tau(const ImageTensor& image, const CaptionEdit& edit, const std::string& gt_class,
                        const std::vector<double>& tau_grid, const EditingContext& context) {
  std::vector<ImageTensor> produced(tau_grid.size());
  std::size_t next = 0;
  auto score = [&](double tau) {
    const std::size_t slot = next++;
    EditRequest request{image, edit.original, edit.perturbed, tau};
    request.validate();
    ImageTensor cf = edit_image(request, context.schedule, context.trajectory, context.generator, context.guidance_scale);
    const std::string name = counterfactual_file_name(image.id(), edit.factor, tau);
    cf.set_id(name.substr(0, name.size() - 4));
    const double o = directional_similarity(image, cf, edit.original, edit.perturbed, context.encoder);
    produced[slot] = std::move(cf);
    return o;
  };
  TauSearch search = search_tau(tau_grid, score);
  TauSelection out;
  out.tau_star = search.tau_star;
  out.candidates = std::move(search.candidates);
  out.best.image = std::move(produced[search.best_index]);
  out.best.source_image_id = image.id();
  out.best.edit = edit;
  out.best.tau = search.tau_star;
  out.best.directional_score = search.best_score;
  out.best.gt_class = gt_class;
  return out;
}

std::vector<CounterfactualExample> write_counterfactual_set(const std::filesystem::path& dir,
                                                            std::vector<CounterfactualExample> examples) {
  std::filesystem::create_directories(dir);
  std::set<std::string> used;
  std::vector<json> rows;
  for (auto& ex : examples) {
    std::string name = counterfactual_file_name(ex.source_image_id, ex.edit.factor, ex.tau);
    for (int n = 2; used.count(name); ++n) {
      name = counterfactual_file_name(ex.source_image_id, ex.edit.factor, ex.tau);
      name = name.substr(0, name.size() - 4) + "-" + std::to_string(n) + ".png";
    }
    used.insert(name);
    ex.image_file = name;
    ex.image.set_id(name.substr(0, name.size() - 4));
    write_png(ex.image, dir / name);
    rows.push_back(to_json(ex));
  }
  write_jsonl(dir / "metadata.jsonl", rows);
  return examples;
}

std::vector<double> default_tau_grid() {
  std::vector<double> grid;
  for (int i = 1; i <= 9; ++i) grid.push_back(i / 10.0);
  return grid;
}

}  // namespace cfr
