#include "cfr/perturbation/adapter.hpp"

#include "cfr/common.hpp"

#include <algorithm>

namespace cfr {

namespace {

std::string shape(const Eigen::MatrixXd& m) {
  return "(" + std::to_string(m.rows()) + "x" + std::to_string(m.cols()) + ")";
}

}  // namespace

void AdapterWeights::validate() const {
  require(A.rows() == base.rows() && B.cols() == base.cols() && A.cols() == B.rows(), ErrorCode::kShapeMismatch,
          "adapter shapes base" + shape(base) + " A" + shape(A) + " B" + shape(B) + " are incompatible");
  const Eigen::Index r = A.cols();
  require(r >= 1 && r <= std::min(base.rows(), base.cols()), ErrorCode::kInvalidArgument,
          "adapter rank " + std::to_string(r) + " outside 1..min(d,k)");
  require(base.allFinite() && A.allFinite() && B.allFinite(), ErrorCode::kNonFinite, "adapter has non-finite entries");
}

Eigen::MatrixXd adapter_delta(const AdapterWeights& adapter) {
  adapter.validate();
  return adapter.A * adapter.B;
}

Eigen::MatrixXd merge_adapter(const AdapterWeights& adapter) {
  adapter.validate();
  Eigen::MatrixXd merged = adapter.base;
  merged.noalias() += adapter.A * adapter.B;
  return merged;
}

}  // namespace cfr
