#pragma once

#include "cfr/backends/toy_world.hpp"
#include "cfr/backends/types.hpp"
#include "cfr/common.hpp"

#include <filesystem>
#include <random>
#include <string>

namespace cfr::testing {

// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag = "cfr") {
    std::random_device rd;
    path_ = std::filesystem::temp_directory_path() /
            (tag + "-" + std::to_string(rd()) + "-" + std::to_string(rd()));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& leaf) const { return path_ / leaf; }

 private:
  std::filesystem::path path_;
};

inline ImageTensor random_image(const std::string& id, std::uint64_t seed, int c = 3, int h = 16, int w = 16) {
  toy::SplitMix64 rng(seed);
  ImageTensor img(id, c, h, w);
  for (Eigen::Index i = 0; i < img.size(); ++i) img.mutable_data()[i] = rng.uniform();
  return img;
}

inline Eigen::VectorXd random_vector(Eigen::Index n, toy::SplitMix64& rng) {
  Eigen::VectorXd v(n);
  for (Eigen::Index i = 0; i < n; ++i) v[i] = rng.normal();
  return v;
}

// Triple-loop product, kept free of Eigen's expression templates on purpose.
inline Eigen::MatrixXd brute_multiply(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
  Eigen::MatrixXd out(a.rows(), b.cols());
  for (Eigen::Index i = 0; i < a.rows(); ++i) {
    for (Eigen::Index j = 0; j < b.cols(); ++j) {
      long double acc = 0;
      for (Eigen::Index t = 0; t < a.cols(); ++t) acc += static_cast<long double>(a(i, t)) * b(t, j);
      out(i, j) = static_cast<double>(acc);
    }
  }
  return out;
}

inline Eigen::MatrixXd random_matrix(Eigen::Index r, Eigen::Index c, toy::SplitMix64& rng) {
  Eigen::MatrixXd m(r, c);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = rng.normal();
  return m;
}

// Singular values past index r, relative to the largest.
inline double tail_singular_ratio(const Eigen::MatrixXd& m, Eigen::Index r) {
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(m);
  const auto& s = svd.singularValues();
  if (s.size() <= r || s[0] == 0.0) return 0.0;
  return s[r] / s[0];
}

}  // namespace cfr::testing
