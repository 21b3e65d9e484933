#pragma once

// Deterministic stand-ins for the captioner, perturber, sentence embedder,
// joint image-text encoder, latent diffusion generator and classifier. Each
// is a pure function of (inputs, seed) and safe for concurrent reads.

#include "cfr/backends/interfaces.hpp"
#include "cfr/backends/toy_world.hpp"

#include <filesystem>
#include <map>

namespace cfr::toy {

class ToyCaptioner final : public Captioner {
 public:
  explicit ToyCaptioner(std::uint64_t seed = 0) : seed_(seed) {}
  BackendDescriptor descriptor() const override;
  static std::size_t template_count();

 protected:
  std::string do_caption(const ImageTensor& image, int min_words, double repetition_penalty) const override;

 private:
  std::uint64_t seed_;
};

// Lexicon-driven rewriter: each factor owns a table of swappable words.
class ToyPerturber final : public Perturber {
 public:
  explicit ToyPerturber(std::uint64_t seed = 0);
  BackendDescriptor descriptor() const override;
  const std::map<std::string, std::vector<std::string>>& lexicon(VariationFactor factor) const;

 protected:
  std::vector<std::string> do_perturb(const std::string& caption, VariationFactor factor, int n) const override;

 private:
  std::uint64_t seed_;
  std::map<VariationFactor, std::map<std::string, std::vector<std::string>>> lexicons_;
};

// Signed token-hash bag of words over non-stopwords, L2 normalised.
class ToySentenceEmbedder final : public SentenceEmbedder {
 public:
  explicit ToySentenceEmbedder(std::uint64_t seed = 0, int dim = 1024) : seed_(seed), dim_(dim) {}
  BackendDescriptor descriptor() const override;

 protected:
  EmbeddingVector do_embed(const std::string& text) const override;

 private:
  std::uint64_t seed_;
  int dim_;
};

// Text branch: token-hash bag of words. Image branch: the same hash vectors
// weighted by what the scene vocabulary perceives in the pixels.
class ToyJointEncoder final : public JointEncoder {
 public:
  explicit ToyJointEncoder(std::uint64_t seed = 0, int dim = 512, double temperature = 0.02)
      : seed_(seed), dim_(dim), temperature_(temperature) {}
  BackendDescriptor descriptor() const override;
  Eigen::VectorXd token_vector(const std::string& token) const;

 protected:
  EmbeddingVector do_encode_image(const ImageTensor& image) const override;
  EmbeddingVector do_encode_text(const std::string& text) const override;

 private:
  std::uint64_t seed_;
  int dim_;
  double temperature_;
};

// Per-step affine coefficients: S_{k-1}(z, null, c) = a*z + b*null + d*c.
struct StepCoefficients {
  double a = 1.0;
  double b = 0.0;
  double d = 0.0;
};

// Affine latent "diffusion" over pixel space. Text embeddings are caption
// renderings, so editing a caption moves exactly the pixels it names. The
// guidance scale is folded into b and d when the schedule is built; the
// per-call guidance argument is not used by this backend.
class ToyGenerator final : public Generator {
 public:
  ToyGenerator(int channels, int height, int width, std::vector<StepCoefficients> steps, std::uint64_t seed = 0);

  // Classifier-free-guidance shaped schedule: b = (1-g)*beta, d = g*beta with a
  // uniform beta scaled so a full caption swap moves the output by exactly one
  // rendering difference.
  static ToyGenerator with_guidance(int channels, int height, int width, int steps, double guidance_scale,
                                    std::uint64_t seed = 0);

  BackendDescriptor descriptor() const override;
  int max_steps() const override { return static_cast<int>(steps_.size()); }
  int latent_dim() const override { return channels_ * height_ * width_; }
  const StepCoefficients& coefficients(int k) const { return steps_.at(static_cast<std::size_t>(k - 1)); }

  LatentVector encode(const ImageTensor& image) const override;
  ImageTensor decode(const LatentVector& latent, const std::string& id) const override;
  EmbeddingVector embed_text(const std::string& text) const override;
  EmbeddingVector null_embedding() const override;

 protected:
  Eigen::VectorXd do_denoise_step(const Eigen::VectorXd& z, int k, const Eigen::VectorXd& text,
                                  const Eigen::VectorXd& null, double guidance_scale) const override;
  Eigen::VectorXd do_invert_step(const Eigen::VectorXd& z_prev, int k, const Eigen::VectorXd& text) const override;
  Eigen::VectorXd do_null_vjp(const Eigen::VectorXd& z, int k, const Eigen::VectorXd& text,
                              const Eigen::VectorXd& null, double guidance_scale,
                              const Eigen::VectorXd& upstream) const override;
  Eigen::VectorXd do_null_jvp(const Eigen::VectorXd& z, int k, const Eigen::VectorXd& text,
                              const Eigen::VectorXd& null, double guidance_scale,
                              const Eigen::VectorXd& direction) const override;

 private:
  int channels_, height_, width_;
  std::vector<StepCoefficients> steps_;
  std::uint64_t seed_;
};

// Linear-softmax classifier over fixed pooled-cell features.
// Groups: body.weight (F x D), body.bias (F), head.weight (C x F), head.bias (C).
class ToyClassifier final : public TrainableClassifier {
 public:
  ToyClassifier(std::vector<std::string> class_names, ParameterSet params, std::uint64_t seed = 0);

  // Body averages each channel over the 4x4 cell grid, centred and scaled.
  static ToyClassifier create(std::vector<std::string> class_names, int channels, int height, int width,
                              double feature_scale, std::uint64_t seed);
  static ToyClassifier load(const std::filesystem::path& dir);
  void save(const std::filesystem::path& dir) const;

  BackendDescriptor descriptor() const override;
  const std::vector<std::string>& class_names() const override { return class_names_; }
  const ParameterSet& parameters() const override { return params_; }
  void set_parameters(const ParameterSet& params) override;
  std::unique_ptr<TrainableClassifier> clone() const override;
  double head_loss_and_gradient(std::span<const ImageTensor> images, std::span<const int> labels,
                                ParameterSet& gradient) const override;

  Eigen::VectorXd features(const ImageTensor& image) const;
  Eigen::VectorXd logits(const ImageTensor& image) const;

 protected:
  ScoreVector do_classify(const ImageTensor& image) const override;

 private:
  void check_layout() const;

  std::vector<std::string> class_names_;
  ParameterSet params_;
  std::uint64_t seed_;
};

}  // namespace cfr::toy
