#pragma once

#include <Eigen/Dense>

namespace cfr {

// Low-rank update over a frozen base weight: W_ft = W_pt + A * B.
struct AdapterWeights {
  Eigen::MatrixXd base;  // d x k
  Eigen::MatrixXd A;     // d x r
  Eigen::MatrixXd B;     // r x k

  Eigen::Index rank() const { return A.cols(); }
  // Throws kShapeMismatch / kInvalidArgument / kNonFinite.
  void validate() const;
};

// Returns base + A*B; the adapter itself is left untouched.
Eigen::MatrixXd merge_adapter(const AdapterWeights& adapter);

// Only the low-rank delta A*B.
Eigen::MatrixXd adapter_delta(const AdapterWeights& adapter);

}  // namespace cfr
