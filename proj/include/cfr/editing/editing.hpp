#pragma once

#include "cfr/backends/interfaces.hpp"
#include "cfr/perturbation/edits.hpp"

#include <json.hpp>

#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

namespace cfr {

// latents[k] is z_k for k = 0..K.
struct InversionTrajectory {
  std::vector<LatentVector> latents;
  EmbeddingVector caption_embedding;
  int K = 0;

  void validate() const;
};

// embeddings[k-1] is the null embedding for step k; residuals likewise.
struct NullTextSchedule {
  std::vector<EmbeddingVector> embeddings;
  std::vector<double> residuals;
  std::vector<bool> converged;

  int K() const { return static_cast<int>(embeddings.size()); }
  bool all_converged() const;
  const EmbeddingVector& at_step(int k) const { return embeddings.at(static_cast<std::size_t>(k - 1)); }
};

struct NullTextOptions {
  int steps_per_timestep = 10;
  // Multiplier on the exact line-search step along the negative gradient.
  double learning_rate = 1.0;
  // A timestep is converged once its squared reconstruction error is <= tolerance.
  double tolerance = 1e-5;
  double guidance_scale = 7.5;
};

// Runs the generator's inversion step K times from z0 under `caption_embedding`.
InversionTrajectory ddim_invert(const LatentVector& z0, const EmbeddingVector& caption_embedding, int K,
                                const Generator& generator);

// For k = K..1, fits the null embedding of step k so that one sampling step
// from the threaded latent lands on z_{k-1}. Each timestep warm-starts from the
// previous solution and descends along the gradient with an exact line search.
NullTextSchedule optimize_null_text(const InversionTrajectory& trajectory, const NullTextOptions& options,
                                    const Generator& generator);

// Samples z_K -> z_0 with the fitted schedule and the original caption.
LatentVector reconstruct(const InversionTrajectory& trajectory, const NullTextSchedule& schedule,
                         const Generator& generator, double guidance_scale);

struct EditRequest {
  ImageTensor image;
  std::string original_caption;
  std::string perturbed_caption;
  double tau = 0.5;

  // Captions nonempty and distinct, tau in [0,1].
  void validate() const;
};

// Denoises from z_K; step i (counting from z_K) conditions on
// lambda*c + (1-lambda)*c' with lambda = clamp(tau*K - i, 0, 1), so the first
// tau*K steps keep the original caption and the rest follow the edit.
// Only tau range and caption non-emptiness are enforced here.
ImageTensor edit_image(const EditRequest& request, const NullTextSchedule& schedule,
                       const InversionTrajectory& trajectory, const Generator& generator, double guidance_scale);

// 1 - cos(O_I(x) - O_I(x'), O_T(c) - O_T(c')), in [0, 2]. kZeroDelta when
// either difference vanishes.
double directional_similarity(const ImageTensor& x, const ImageTensor& x_cf, const std::string& c,
                              const std::string& c_cf, const JointEncoder& encoder);
double directional_similarity_from_deltas(const Eigen::VectorXd& image_delta, const Eigen::VectorXd& text_delta);

struct CounterfactualExample {
  ImageTensor image;
  std::string source_image_id;
  CaptionEdit edit;
  double tau = 0.0;
  double directional_score = 0.0;
  std::string gt_class;
  std::string image_file;  // set once persisted
};

nlohmann::json to_json(const CounterfactualExample& example);

struct TauCandidate {
  double tau = 0.0;
  std::optional<double> score;
  std::string failure;
};

struct TauSearch {
  double tau_star = 0.0;
  double best_score = 0.0;
  std::size_t best_index = 0;
  std::vector<TauCandidate> candidates;
};

// Minimises `score(tau)` over the grid. A candidate whose scorer throws cfr::Error
// is recorded as failed. Equal scores go to the larger tau.
TauSearch search_tau(const std::vector<double>& tau_grid, const std::function<double(double)>& score);

struct EditingContext {
  const Generator& generator;
  const JointEncoder& encoder;
  const InversionTrajectory& trajectory;
  const NullTextSchedule& schedule;
  double guidance_scale = 7.5;
};

struct TauSelection {
  double tau_star = 0.0;
  CounterfactualExample best;
  std::vector<TauCandidate> candidates;
};

// One edit per tau, each scored by directional similarity; keeps the minimiser.
// Throws kAllCandidatesFailed when no tau yields a usable edit.
TauSelection select_tau(const ImageTensor& image, const CaptionEdit& edit, const std::string& gt_class,
                        const std::vector<double>& tau_grid, const EditingContext& context);

std::string counterfactual_file_name(const std::string& source_id, VariationFactor factor, double tau);

// PNGs plus metadata.jsonl. Name collisions get a numeric suffix. Returns the
// examples with image_file filled in.
std::vector<CounterfactualExample> write_counterfactual_set(const std::filesystem::path& dir,
                                                            std::vector<CounterfactualExample> examples);

std::vector<double> default_tau_grid();

}  // namespace cfr
