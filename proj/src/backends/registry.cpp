#include "cfr/backends/registry.hpp"

#include "cfr/backends/process.hpp"
#include "cfr/backends/toy.hpp"
#include "cfr/common.hpp"

namespace cfr {

namespace {

constexpr std::string_view kProcessPrefix = "process:";

bool is_process(const std::string& name) { return name.rfind(kProcessPrefix, 0) == 0; }
std::string process_command(const std::string& name) { return name.substr(kProcessPrefix.size()); }

[[noreturn]] void unknown(BackendKind kind, const std::string& name) {
  fail(ErrorCode::kConfig, "unknown " + to_string(kind) + " backend '" + name + "' (expected 'toy' or 'process:<cmd>')");
}

}  // namespace

std::vector<BackendDescriptor> BackendSet::descriptors() const {
  std::vector<BackendDescriptor> out;
  if (captioner) out.push_back(captioner->descriptor());
  if (perturber) out.push_back(perturber->descriptor());
  if (sentence_embedder) out.push_back(sentence_embedder->descriptor());
  if (joint_encoder) out.push_back(joint_encoder->descriptor());
  if (generator) out.push_back(generator->descriptor());
  if (classifier) out.push_back(classifier->descriptor());
  return out;
}

std::shared_ptr<const Classifier> make_classifier(const BackendConfig& config,
                                                  std::shared_ptr<const TrainableClassifier>* trainable) {
  if (config.classifier == "toy") {
    require(!config.classifier_params.empty(), ErrorCode::kConfig,
            "toy classifier needs backends.classifier_params (a parameter directory)");
    auto c = std::make_shared<const toy::ToyClassifier>(toy::ToyClassifier::load(config.classifier_params));
    if (trainable) *trainable = c;
    return c;
  }
  if (is_process(config.classifier)) return std::make_shared<const ProcessClassifier>(process_command(config.classifier));
  unknown(BackendKind::kClassifier, config.classifier);
}

BackendSet make_backends(const BackendConfig& config) {
  BackendSet set;
  const auto seed = config.seed;

  if (config.captioner == "toy") set.captioner = std::make_shared<const toy::ToyCaptioner>(seed);
  else if (is_process(config.captioner)) set.captioner = std::make_shared<const ProcessCaptioner>(process_command(config.captioner));
  else unknown(BackendKind::kCaptioner, config.captioner);

  if (config.perturber == "toy") set.perturber = std::make_shared<const toy::ToyPerturber>(seed);
  else if (is_process(config.perturber)) set.perturber = std::make_shared<const ProcessPerturber>(process_command(config.perturber));
  else unknown(BackendKind::kPerturber, config.perturber);

  if (config.sentence_embedder == "toy") set.sentence_embedder = std::make_shared<const toy::ToySentenceEmbedder>(seed);
  else if (is_process(config.sentence_embedder))
    set.sentence_embedder = std::make_shared<const ProcessSentenceEmbedder>(process_command(config.sentence_embedder));
  else unknown(BackendKind::kSentenceEmbedder, config.sentence_embedder);

  if (config.joint_encoder == "toy") set.joint_encoder = std::make_shared<const toy::ToyJointEncoder>(seed);
  else if (is_process(config.joint_encoder))
    set.joint_encoder = std::make_shared<const ProcessJointEncoder>(process_command(config.joint_encoder));
  else unknown(BackendKind::kJointEncoder, config.joint_encoder);

  if (config.generator == "toy") {
    set.generator = std::make_shared<const toy::ToyGenerator>(toy::ToyGenerator::with_guidance(
        config.image_channels, config.image_height, config.image_width, config.generator_steps, config.guidance_scale,
        seed));
  } else if (is_process(config.generator)) {
    set.generator = std::make_shared<const ProcessGenerator>(process_command(config.generator));
  } else {
    unknown(BackendKind::kGenerator, config.generator);
  }

  set.classifier = make_classifier(config, &set.trainable_classifier);
  return set;
}

}  // namespace cfr
