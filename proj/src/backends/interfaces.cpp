#include "cfr/backends/interfaces.hpp"

#include "cfr/common.hpp"

#include <algorithm>

namespace cfr {

std::string Captioner::caption(const ImageTensor& image, int min_words, double repetition_penalty) const {
  require(min_words >= 1, ErrorCode::kInvalidArgument, "min_words must be >= 1");
  require(repetition_penalty >= 1.0, ErrorCode::kInvalidArgument, "repetition_penalty must be >= 1");
  image.validate();
  std::string text = do_caption(image, min_words, repetition_penalty);
  const auto words = split_whitespace(text);
  require(!words.empty(), ErrorCode::kBackendFailure,
          descriptor().name + " returned an empty caption for '" + image.id() + "'");
  require(static_cast<int>(words.size()) >= min_words, ErrorCode::kBackendFailure,
          descriptor().name + " returned " + std::to_string(words.size()) + " words, fewer than min_words=" +
              std::to_string(min_words));
  return text;
}

std::vector<std::string> Perturber::perturb(const std::string& caption, VariationFactor factor, int n) const {
  require(!trim(caption).empty(), ErrorCode::kInvalidArgument, "caption is empty");
  require(n >= 1, ErrorCode::kInvalidArgument, "n_per_factor must be >= 1");
  auto out = do_perturb(caption, factor, n);
  if (static_cast<int>(out.size()) > n) out.resize(static_cast<std::size_t>(n));
  return out;
}

EmbeddingVector SentenceEmbedder::embed(const std::string& text) const {
  auto e = do_embed(text);
  require(e.data.allFinite(), ErrorCode::kNonFinite, "sentence embedding is not finite");
  return e;
}

EmbeddingVector JointEncoder::encode_image(const ImageTensor& image) const {
  image.validate();
  auto e = do_encode_image(image);
  require(e.data.allFinite(), ErrorCode::kNonFinite, "image embedding is not finite");
  return e;
}

EmbeddingVector JointEncoder::encode_text(const std::string& text) const {
  require(!trim(text).empty(), ErrorCode::kInvalidArgument, "text is empty");
  auto e = do_encode_text(text);
  require(e.data.allFinite(), ErrorCode::kNonFinite, "text embedding is not finite");
  return e;
}

std::pair<EmbeddingVector, EmbeddingVector> JointEncoder::encode_pair(const ImageTensor& image,
                                                                      const std::string& text) const {
  auto img = encode_image(image);
  auto txt = encode_text(text);
  require(img.data.size() == txt.data.size(), ErrorCode::kDimensionMismatch,
          "image embedding has " + std::to_string(img.data.size()) + " dims, text embedding has " +
              std::to_string(txt.data.size()));
  return {std::move(img), std::move(txt)};
}

void Generator::check_step(const LatentVector& z, int k, const EmbeddingVector& text,
                           const EmbeddingVector* null) const {
  if (k == 0) fail(ErrorCode::kTimestepExhausted, "no step below timestep 0");
  require(k >= 1 && k <= max_steps(), ErrorCode::kInvalidArgument,
          "step " + std::to_string(k) + " outside 1.." + std::to_string(max_steps()));
  require(z.data.size() == latent_dim(), ErrorCode::kDimensionMismatch, "latent width does not match generator");
  require(z.data.allFinite(), ErrorCode::kNonFinite, "latent is not finite");
  require(text.data.size() > 0, ErrorCode::kInvalidArgument, "text embedding is empty");
  if (null) {
    require(null->data.size() == text.data.size(), ErrorCode::kDimensionMismatch,
            "null and text embeddings differ in width");
  }
}

LatentVector Generator::denoise_step(const LatentVector& z, int k, const EmbeddingVector& text_embedding,
                                     const EmbeddingVector& null_embedding, double guidance_scale) const {
  check_step(z, k, text_embedding, &null_embedding);
  require(z.timestep == k, ErrorCode::kStepMismatch,
          "latent is at timestep " + std::to_string(z.timestep) + ", step expects " + std::to_string(k));
  return {do_denoise_step(z.data, k, text_embedding.data, null_embedding.data, guidance_scale), k - 1};
}

LatentVector Generator::invert_step(const LatentVector& z_prev, int k, const EmbeddingVector& text_embedding) const {
  check_step(z_prev, k, text_embedding, nullptr);
  require(z_prev.timestep == k - 1, ErrorCode::kStepMismatch,
          "inversion step " + std::to_string(k) + " expects a latent at timestep " + std::to_string(k - 1));
  return {do_invert_step(z_prev.data, k, text_embedding.data), k};
}

Eigen::VectorXd Generator::null_vjp(const LatentVector& z, int k, const EmbeddingVector& text_embedding,
                                    const EmbeddingVector& null_embedding, double guidance_scale,
                                    const Eigen::VectorXd& upstream) const {
  check_step(z, k, text_embedding, &null_embedding);
  return do_null_vjp(z.data, k, text_embedding.data, null_embedding.data, guidance_scale, upstream);
}

Eigen::VectorXd Generator::null_jvp(const LatentVector& z, int k, const EmbeddingVector& text_embedding,
                                    const EmbeddingVector& null_embedding, double guidance_scale,
                                    const Eigen::VectorXd& direction) const {
  check_step(z, k, text_embedding, &null_embedding);
  return do_null_jvp(z.data, k, text_embedding.data, null_embedding.data, guidance_scale, direction);
}

ScoreVector Classifier::classify(const ImageTensor& image) const {
  require(!class_names().empty(), ErrorCode::kClassSetUndefined,
          descriptor().name + " has no class names configured");
  image.validate();
  auto scores = do_classify(image);
  scores.validate();
  return scores;
}

int Classifier::class_index(const std::string& name) const {
  const auto& names = class_names();
  auto it = std::find(names.begin(), names.end(), name);
  return it == names.end() ? -1 : static_cast<int>(it - names.begin());
}

}  // namespace cfr
