#pragma once

#include <array>
#include <optional>
#include <string>
#include <string_view>

namespace cfr {

// The five caption-perturbation categories.
enum class VariationFactor { kSubject, kObject, kBackground, kAdjective, kDataDomain };

inline constexpr std::array<VariationFactor, 5> kAllFactors = {
    VariationFactor::kSubject, VariationFactor::kObject, VariationFactor::kBackground,
    VariationFactor::kAdjective, VariationFactor::kDataDomain};

std::string_view to_string(VariationFactor factor);
std::optional<VariationFactor> parse_factor(std::string_view name);
VariationFactor factor_from_string(std::string_view name);  // throws kInvalidArgument

}  // namespace cfr
