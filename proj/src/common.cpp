#include "cfr/common.hpp"

#include <cctype>
#include <cmath>
#include <cstdio>

namespace cfr {

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::kInvalidArgument: return "invalid-argument";
    case ErrorCode::kShapeMismatch: return "shape-mismatch";
    case ErrorCode::kDimensionMismatch: return "dimension-mismatch";
    case ErrorCode::kNonFinite: return "non-finite";
    case ErrorCode::kZeroVector: return "zero-vector";
    case ErrorCode::kZeroDelta: return "zero-delta";
    case ErrorCode::kBackendUnavailable: return "backend-unavailable";
    case ErrorCode::kBackendFailure: return "backend-failure";
    case ErrorCode::kTimestepExhausted: return "timestep-exhausted";
    case ErrorCode::kClassSetUndefined: return "class-set-undefined";
    case ErrorCode::kUnknownClass: return "unknown-class";
    case ErrorCode::kStepMismatch: return "step-mismatch";
    case ErrorCode::kAllCandidatesFailed: return "all-candidates-failed";
    case ErrorCode::kNonFiniteLoss: return "non-finite-loss";
    case ErrorCode::kSchemaMismatch: return "schema-mismatch";
    case ErrorCode::kConfig: return "config";
    case ErrorCode::kIo: return "io";
    case ErrorCode::kNotFound: return "not-found";
    case ErrorCode::kNoCounterfactuals: return "no-counterfactuals";
  }
  return "unknown";
}

void fail(ErrorCode code, const std::string& what) {
  throw Error(code, std::string(to_string(code)) + ": " + what);
}

std::uint64_t fnv1a64(std::string_view bytes, std::uint64_t seed) {
  std::uint64_t h = seed;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string hex64(std::uint64_t value) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(value));
  return buf;
}

std::vector<std::string> tokenize(std::string_view text) {
  std::vector<std::string> out;
  std::string cur;
  for (char ch : text) {
    auto c = static_cast<unsigned char>(ch);
    if (std::isalnum(c) || c == '\'') {
      cur.push_back(static_cast<char>(std::tolower(c)));
    } else if (!cur.empty()) {
      out.push_back(std::move(cur));
      cur.clear();
    }
  }
  if (!cur.empty()) out.push_back(std::move(cur));
  return out;
}

std::vector<std::string> split_whitespace(std::string_view text) {
  std::vector<std::string> out;
  std::string cur;
  for (char ch : text) {
    if (std::isspace(static_cast<unsigned char>(ch))) {
      if (!cur.empty()) out.push_back(std::move(cur));
      cur.clear();
    } else {
      cur.push_back(ch);
    }
  }
  if (!cur.empty()) out.push_back(std::move(cur));
  return out;
}

std::string join(const std::vector<std::string>& parts, std::string_view sep) {
  std::string out;
  for (std::size_t i = 0; i < parts.size(); ++i) {
    if (i) out += sep;
    out += parts[i];
  }
  return out;
}

std::string trim(std::string_view text) {
  std::size_t b = 0, e = text.size();
  while (b < e && std::isspace(static_cast<unsigned char>(text[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(text[e - 1]))) --e;
  return std::string(text.substr(b, e - b));
}

double round2(double value) {
  double r = std::round(value * 100.0) / 100.0;
  return r == 0.0 ? 0.0 : r;  // no negative zero in reports
}

std::string format2(double value) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.2f", round2(value));
  return buf;
}

std::string format_signed2(double value) {
  double r = round2(value);
  char buf[64];
  std::snprintf(buf, sizeof(buf), r > 0 ? "+%.2f" : "%.2f", r);
  return buf;
}

}  // namespace cfr
