#pragma once

// Out-of-process adapters. The child speaks one JSON object per line on its
// standard streams:
//   request  {"op": "<name>", "args": {...}}
//   response {"ok": true, "result": ...} | {"ok": false, "error": "..."}
// Every adapter first sends {"op": "describe"} and expects a result object
// with at least "name" and "deterministic".

#include "cfr/backends/interfaces.hpp"

#include <json.hpp>

#include <istream>
#include <memory>
#include <mutex>
#include <ostream>
#include <string>

namespace cfr {

class StdioChannel {
 public:
  // Runs `command` through /bin/sh. Throws kBackendUnavailable if it cannot start.
  explicit StdioChannel(const std::string& command);
  ~StdioChannel();
  StdioChannel(const StdioChannel&) = delete;
  StdioChannel& operator=(const StdioChannel&) = delete;

  // kBackendUnavailable when the child is gone, kBackendFailure on {"ok": false}.
  nlohmann::json call(const std::string& op, const nlohmann::json& args);
  const std::string& command() const { return command_; }

 private:
  std::string read_line();

  std::string command_;
  int fd_ = -1;
  int pid_ = -1;
  std::string buffer_;
  std::mutex mutex_;
};

nlohmann::json image_to_json(const ImageTensor& image);
ImageTensor image_from_json(const nlohmann::json& j);
nlohmann::json vector_to_json(const Eigen::VectorXd& v);
Eigen::VectorXd vector_from_json(const nlohmann::json& j);

class ProcessCaptioner final : public Captioner {
 public:
  explicit ProcessCaptioner(const std::string& command);
  BackendDescriptor descriptor() const override { return descriptor_; }

 protected:
  std::string do_caption(const ImageTensor& image, int min_words, double repetition_penalty) const override;

 private:
  std::unique_ptr<StdioChannel> channel_;
  BackendDescriptor descriptor_;
};

class ProcessPerturber final : public Perturber {
 public:
  explicit ProcessPerturber(const std::string& command);
  BackendDescriptor descriptor() const override { return descriptor_; }

 protected:
  std::vector<std::string> do_perturb(const std::string& caption, VariationFactor factor, int n) const override;

 private:
  std::unique_ptr<StdioChannel> channel_;
  BackendDescriptor descriptor_;
};

class ProcessSentenceEmbedder final : public SentenceEmbedder {
 public:
  explicit ProcessSentenceEmbedder(const std::string& command);
  BackendDescriptor descriptor() const override { return descriptor_; }

 protected:
  EmbeddingVector do_embed(const std::string& text) const override;

 private:
  std::unique_ptr<StdioChannel> channel_;
  BackendDescriptor descriptor_;
};

class ProcessJointEncoder final : public JointEncoder {
 public:
  explicit ProcessJointEncoder(const std::string& command);
  BackendDescriptor descriptor() const override { return descriptor_; }

 protected:
  EmbeddingVector do_encode_image(const ImageTensor& image) const override;
  EmbeddingVector do_encode_text(const std::string& text) const override;

 private:
  std::unique_ptr<StdioChannel> channel_;
  BackendDescriptor descriptor_;
};

class ProcessGenerator final : public Generator {
 public:
  explicit ProcessGenerator(const std::string& command);
  BackendDescriptor descriptor() const override { return descriptor_; }
  int max_steps() const override { return max_steps_; }
  int latent_dim() const override { return latent_dim_; }

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
  Eigen::VectorXd vector_call(const std::string& op, const nlohmann::json& args) const;

  std::unique_ptr<StdioChannel> channel_;
  BackendDescriptor descriptor_;
  int max_steps_ = 0;
  int latent_dim_ = 0;
};

class ProcessClassifier final : public Classifier {
 public:
  explicit ProcessClassifier(const std::string& command);
  BackendDescriptor descriptor() const override { return descriptor_; }
  const std::vector<std::string>& class_names() const override { return class_names_; }

 protected:
  ScoreVector do_classify(const ImageTensor& image) const override;

 private:
  std::unique_ptr<StdioChannel> channel_;
  BackendDescriptor descriptor_;
  std::vector<std::string> class_names_;
};

struct BackendSet;

// Serves whichever backends `set` holds over the line protocol until EOF.
// Returns the number of requests handled.
std::size_t serve_stdio(const BackendSet& set, BackendKind kind, std::istream& in, std::ostream& out);

}  // namespace cfr
