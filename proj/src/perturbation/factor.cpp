#include "cfr/perturbation/factor.hpp"

#include "cfr/common.hpp"

namespace cfr {

std::string_view to_string(VariationFactor factor) {
  switch (factor) {
    case VariationFactor::kSubject: return "subject";
    case VariationFactor::kObject: return "object";
    case VariationFactor::kBackground: return "background";
    case VariationFactor::kAdjective: return "adjective";
    case VariationFactor::kDataDomain: return "data_domain";
  }
  return "unknown";
}

std::optional<VariationFactor> parse_factor(std::string_view name) {
  for (auto f : kAllFactors) {
    if (to_string(f) == name) return f;
  }
  return std::nullopt;
}

VariationFactor factor_from_string(std::string_view name) {
  auto f = parse_factor(name);
  if (!f) fail(ErrorCode::kInvalidArgument, "unknown variation factor '" + std::string(name) + "'");
  return *f;
}

}  // namespace cfr
