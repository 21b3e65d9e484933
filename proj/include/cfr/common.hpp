#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace cfr {

enum class ErrorCode {
  kInvalidArgument,
  kShapeMismatch,
  kDimensionMismatch,
  kNonFinite,
  kZeroVector,
  kZeroDelta,
  kBackendUnavailable,
  kBackendFailure,
  kTimestepExhausted,
  kClassSetUndefined,
  kUnknownClass,
  kStepMismatch,
  kAllCandidatesFailed,
  kNonFiniteLoss,
  kSchemaMismatch,
  kConfig,
  kIo,
  kNotFound,
  kNoCounterfactuals,
};

std::string_view to_string(ErrorCode code);

// Single exception type; callers branch on code().
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

[[noreturn]] void fail(ErrorCode code, const std::string& what);

inline void require(bool ok, ErrorCode code, const std::string& what) {
  if (!ok) fail(code, what);
}

// FNV-1a, 64 bit. Stable across platforms; used for toy hashing and config digests.
std::uint64_t fnv1a64(std::string_view bytes, std::uint64_t seed = 0xcbf29ce484222325ULL);
std::string hex64(std::uint64_t value);

// Lowercased whitespace/punctuation tokenization shared by the text backends.
std::vector<std::string> tokenize(std::string_view text);
std::vector<std::string> split_whitespace(std::string_view text);
std::string join(const std::vector<std::string>& parts, std::string_view sep);
std::string trim(std::string_view text);

// Round half away from zero to two decimals; the reporting precision everywhere.
double round2(double value);
std::string format2(double value);
std::string format_signed2(double value);

}  // namespace cfr
