#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <string>
#include <vector>

namespace cfr {

// CHW image, values in [0,1], flattened channel-major.
class ImageTensor {
 public:
  ImageTensor() = default;
  ImageTensor(std::string id, int channels, int height, int width);
  ImageTensor(std::string id, int channels, int height, int width, Eigen::VectorXd data);

  const std::string& id() const { return id_; }
  void set_id(std::string id) { id_ = std::move(id); }
  int channels() const { return channels_; }
  int height() const { return height_; }
  int width() const { return width_; }
  Eigen::Index size() const { return data_.size(); }

  double& at(int c, int y, int x) { return data_[index(c, y, x)]; }
  double at(int c, int y, int x) const { return data_[index(c, y, x)]; }

  const Eigen::VectorXd& data() const { return data_; }
  Eigen::VectorXd& mutable_data() { return data_; }

  bool same_shape(const ImageTensor& other) const {
    return channels_ == other.channels_ && height_ == other.height_ && width_ == other.width_;
  }

  // Throws kInvalidArgument / kNonFinite when the invariants are broken.
  void validate() const;

 private:
  Eigen::Index index(int c, int y, int x) const {
    return (static_cast<Eigen::Index>(c) * height_ + y) * width_ + x;
  }

  std::string id_;
  int channels_ = 0;
  int height_ = 0;
  int width_ = 0;
  Eigen::VectorXd data_;
};

struct LatentVector {
  Eigen::VectorXd data;
  int timestep = 0;
};

struct EmbeddingVector {
  Eigen::VectorXd data;
};

struct ScoreVector {
  std::vector<double> scores;
  std::vector<std::string> class_names;

  std::size_t size() const { return scores.size(); }
  void validate() const;
};

enum class BackendKind { kCaptioner, kPerturber, kSentenceEmbedder, kJointEncoder, kGenerator, kClassifier };

std::string to_string(BackendKind kind);

struct BackendDescriptor {
  BackendKind kind = BackendKind::kCaptioner;
  std::string name;
  bool deterministic = true;
  std::uint64_t seed = 0;
  // Vector width for embedders/encoders/generators, 0 when not applicable.
  int dimension = 0;
};

bool all_finite(const Eigen::VectorXd& v);

}  // namespace cfr
