#include "cfr/backends/types.hpp"

#include "cfr/common.hpp"

#include <cmath>

namespace cfr {

ImageTensor::ImageTensor(std::string id, int channels, int height, int width)
    : id_(std::move(id)), channels_(channels), height_(height), width_(width) {
  require(channels >= 1 && height >= 1 && width >= 1, ErrorCode::kInvalidArgument,
          "image dimensions must be positive");
  data_ = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(channels) * height * width);
}

ImageTensor::ImageTensor(std::string id, int channels, int height, int width, Eigen::VectorXd data)
    : id_(std::move(id)), channels_(channels), height_(height), width_(width), data_(std::move(data)) {
  require(channels >= 1 && height >= 1 && width >= 1, ErrorCode::kInvalidArgument,
          "image dimensions must be positive");
  require(data_.size() == static_cast<Eigen::Index>(channels) * height * width,
          ErrorCode::kShapeMismatch, "image data length does not match its shape");
}

void ImageTensor::validate() const {
  require(channels_ >= 1 && height_ >= 1 && width_ >= 1, ErrorCode::kInvalidArgument,
          "image '" + id_ + "' has empty shape");
  require(data_.size() == static_cast<Eigen::Index>(channels_) * height_ * width_,
          ErrorCode::kShapeMismatch, "image '" + id_ + "' data length does not match its shape");
  require(all_finite(data_), ErrorCode::kNonFinite, "image '" + id_ + "' has non-finite values");
  require(data_.size() == 0 || (data_.minCoeff() >= 0.0 && data_.maxCoeff() <= 1.0),
          ErrorCode::kInvalidArgument, "image '" + id_ + "' has values outside [0,1]");
}

void ScoreVector::validate() const {
  require(!scores.empty(), ErrorCode::kInvalidArgument, "score vector is empty");
  require(scores.size() == class_names.size(), ErrorCode::kShapeMismatch,
          "scores and class names differ in length");
  for (double s : scores) require(std::isfinite(s), ErrorCode::kNonFinite, "non-finite score");
}

std::string to_string(BackendKind kind) {
  switch (kind) {
    case BackendKind::kCaptioner: return "captioner";
    case BackendKind::kPerturber: return "perturber";
    case BackendKind::kSentenceEmbedder: return "sentence_embedder";
    case BackendKind::kJointEncoder: return "joint_encoder";
    case BackendKind::kGenerator: return "generator";
    case BackendKind::kClassifier: return "classifier";
  }
  return "unknown";
}

bool all_finite(const Eigen::VectorXd& v) { return v.allFinite(); }

}  // namespace cfr
