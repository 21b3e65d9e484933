#pragma once

// Narrow contracts for every external model the framework drives. Public
// entry points check preconditions and then dispatch to the do_* hooks that
// concrete backends override.

#include "cfr/backends/types.hpp"
#include "cfr/parameter_set.hpp"
#include "cfr/perturbation/factor.hpp"

#include <memory>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace cfr {

class Backend {
 public:
  virtual ~Backend() = default;
  virtual BackendDescriptor descriptor() const = 0;
};

class Captioner : public Backend {
 public:
  // At least `min_words` whitespace-separated tokens; never empty.
  std::string caption(const ImageTensor& image, int min_words, double repetition_penalty) const;

 protected:
  virtual std::string do_caption(const ImageTensor& image, int min_words, double repetition_penalty) const = 0;
};

class Perturber : public Backend {
 public:
  // Up to `n` rewrites of `caption` that vary only the given factor.
  std::vector<std::string> perturb(const std::string& caption, VariationFactor factor, int n) const;

 protected:
  virtual std::vector<std::string> do_perturb(const std::string& caption, VariationFactor factor, int n) const = 0;
};

class SentenceEmbedder : public Backend {
 public:
  EmbeddingVector embed(const std::string& text) const;

 protected:
  virtual EmbeddingVector do_embed(const std::string& text) const = 0;
};

class JointEncoder : public Backend {
 public:
  EmbeddingVector encode_image(const ImageTensor& image) const;
  EmbeddingVector encode_text(const std::string& text) const;
  // Both branches; throws kDimensionMismatch when their widths differ.
  std::pair<EmbeddingVector, EmbeddingVector> encode_pair(const ImageTensor& image, const std::string& text) const;

 protected:
  virtual EmbeddingVector do_encode_image(const ImageTensor& image) const = 0;
  virtual EmbeddingVector do_encode_text(const std::string& text) const = 0;
};

// Latent diffusion model seen through the operations inversion and editing need.
// Steps are numbered 1..max_steps(); step k maps a latent at timestep k to k-1.
class Generator : public Backend {
 public:
  virtual int max_steps() const = 0;
  virtual int latent_dim() const = 0;

  virtual LatentVector encode(const ImageTensor& image) const = 0;
  virtual ImageTensor decode(const LatentVector& latent, const std::string& id) const = 0;
  virtual EmbeddingVector embed_text(const std::string& text) const = 0;
  // Unconditional ("empty prompt") embedding used to start null-text optimization.
  virtual EmbeddingVector null_embedding() const = 0;

  // One deterministic sampling step S_{k-1}(z_k, null, text).
  LatentVector denoise_step(const LatentVector& z, int k, const EmbeddingVector& text_embedding,
                            const EmbeddingVector& null_embedding, double guidance_scale) const;
  // One inversion step z_{k-1} -> z_k conditioned on `text_embedding` only.
  LatentVector invert_step(const LatentVector& z_prev, int k, const EmbeddingVector& text_embedding) const;

  // Products with the Jacobian J = dS/d(null) at the given point.
  Eigen::VectorXd null_vjp(const LatentVector& z, int k, const EmbeddingVector& text_embedding,
                           const EmbeddingVector& null_embedding, double guidance_scale,
                           const Eigen::VectorXd& upstream) const;
  Eigen::VectorXd null_jvp(const LatentVector& z, int k, const EmbeddingVector& text_embedding,
                           const EmbeddingVector& null_embedding, double guidance_scale,
                           const Eigen::VectorXd& direction) const;

 protected:
  virtual Eigen::VectorXd do_denoise_step(const Eigen::VectorXd& z, int k, const Eigen::VectorXd& text,
                                          const Eigen::VectorXd& null, double guidance_scale) const = 0;
  virtual Eigen::VectorXd do_invert_step(const Eigen::VectorXd& z_prev, int k, const Eigen::VectorXd& text) const = 0;
  virtual Eigen::VectorXd do_null_vjp(const Eigen::VectorXd& z, int k, const Eigen::VectorXd& text,
                                      const Eigen::VectorXd& null, double guidance_scale,
                                      const Eigen::VectorXd& upstream) const = 0;
  virtual Eigen::VectorXd do_null_jvp(const Eigen::VectorXd& z, int k, const Eigen::VectorXd& text,
                                      const Eigen::VectorXd& null, double guidance_scale,
                                      const Eigen::VectorXd& direction) const = 0;

 private:
  void check_step(const LatentVector& z, int k, const EmbeddingVector& text, const EmbeddingVector* null) const;
};

class Classifier : public Backend {
 public:
  ScoreVector classify(const ImageTensor& image) const;
  virtual const std::vector<std::string>& class_names() const = 0;
  int class_index(const std::string& name) const;  // -1 when absent

 protected:
  virtual ScoreVector do_classify(const ImageTensor& image) const = 0;
};

// A classifier whose head can be fine-tuned in-process.
class TrainableClassifier : public Classifier {
 public:
  virtual const ParameterSet& parameters() const = 0;
  virtual void set_parameters(const ParameterSet& params) = 0;
  virtual std::unique_ptr<TrainableClassifier> clone() const = 0;

  // Mean cross-entropy over the batch. `gradient` receives d(loss)/d(group)
  // for head groups only and has the same layout restricted to those groups.
  virtual double head_loss_and_gradient(std::span<const ImageTensor> images, std::span<const int> labels,
                                        ParameterSet& gradient) const = 0;
};

}  // namespace cfr
