#pragma once

#include "cfr/backends/interfaces.hpp"

#include <filesystem>
#include <memory>
#include <string>
#include <vector>

namespace cfr {

// How each backend is obtained. A name is either "toy" or "process:<command>".
struct BackendConfig {
  std::string captioner = "toy";
  std::string perturber = "toy";
  std::string sentence_embedder = "toy";
  std::string joint_encoder = "toy";
  std::string generator = "toy";
  std::string classifier = "toy";
  std::filesystem::path classifier_params;  // toy classifier parameter directory
  std::uint64_t seed = 0;
  int image_channels = 3;
  int image_height = 16;
  int image_width = 16;
  int generator_steps = 50;
  double guidance_scale = 7.5;
};

struct BackendSet {
  std::shared_ptr<const Captioner> captioner;
  std::shared_ptr<const Perturber> perturber;
  std::shared_ptr<const SentenceEmbedder> sentence_embedder;
  std::shared_ptr<const JointEncoder> joint_encoder;
  std::shared_ptr<const Generator> generator;
  std::shared_ptr<const Classifier> classifier;
  // Same object as `classifier` when it supports head fine-tuning.
  std::shared_ptr<const TrainableClassifier> trainable_classifier;

  std::vector<BackendDescriptor> descriptors() const;
};

// Builds every backend named in `config`; unknown names raise kConfig.
BackendSet make_backends(const BackendConfig& config);

std::shared_ptr<const Classifier> make_classifier(const BackendConfig& config,
                                                  std::shared_ptr<const TrainableClassifier>* trainable = nullptr);

}  // namespace cfr
