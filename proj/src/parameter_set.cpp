#include "cfr/parameter_set.hpp"

#include "cfr/common.hpp"

#include <json.hpp>

#include <bit>
#include <cstring>
#include <fstream>
#include <numeric>

namespace cfr {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

Eigen::Index element_count(const std::vector<Eigen::Index>& shape) {
  return std::accumulate(shape.begin(), shape.end(), Eigen::Index{1}, std::multiplies<>());
}

std::string file_name_for(const std::string& group) {
  std::string out;
  for (char c : group) out.push_back(std::isalnum(static_cast<unsigned char>(c)) || c == '.' || c == '_' ? c : '_');
  return out + ".bin";
}

}  // namespace

void ParameterSet::add(const std::string& name, std::vector<Eigen::Index> shape, Eigen::VectorXd values,
                       bool head) {
  require(!name.empty(), ErrorCode::kInvalidArgument, "parameter group name is empty");
  require(!contains(name), ErrorCode::kInvalidArgument, "duplicate parameter group '" + name + "'");
  require(element_count(shape) == values.size(), ErrorCode::kShapeMismatch,
          "group '" + name + "' values do not match its shape");
  groups_.emplace(name, ParameterGroup{std::move(shape), std::move(values)});
  if (head) head_.insert(name);
}

const ParameterGroup& ParameterSet::group(const std::string& name) const {
  auto it = groups_.find(name);
  require(it != groups_.end(), ErrorCode::kNotFound, "no parameter group '" + name + "'");
  return it->second;
}

ParameterGroup& ParameterSet::mutable_group(const std::string& name) {
  auto it = groups_.find(name);
  require(it != groups_.end(), ErrorCode::kNotFound, "no parameter group '" + name + "'");
  return it->second;
}

std::vector<std::string> ParameterSet::names() const {
  std::vector<std::string> out;
  for (const auto& [name, _] : groups_) out.push_back(name);
  return out;
}

bool ParameterSet::same_layout(const ParameterSet& other) const {
  if (groups_.size() != other.groups_.size() || head_ != other.head_) return false;
  for (const auto& [name, g] : groups_) {
    auto it = other.groups_.find(name);
    if (it == other.groups_.end() || it->second.shape != g.shape) return false;
  }
  return true;
}

void ParameterSet::validate() const {
  for (const auto& h : head_) {
    require(contains(h), ErrorCode::kInvalidArgument, "head group '" + h + "' is not a parameter group");
  }
  for (const auto& [name, g] : groups_) {
    require(g.values.allFinite(), ErrorCode::kNonFinite, "group '" + name + "' has non-finite values");
    require(element_count(g.shape) == g.values.size(), ErrorCode::kShapeMismatch,
            "group '" + name + "' values do not match its shape");
  }
}

bool ParameterSet::operator==(const ParameterSet& other) const {
  if (!same_layout(other)) return false;
  for (const auto& [name, g] : groups_) {
    if (g.values != other.groups_.at(name).values) return false;
  }
  return true;
}

void ParameterSet::save(const fs::path& dir) const {
  static_assert(std::endian::native == std::endian::little, "parameter files are little-endian float64");
  validate();
  fs::create_directories(dir);
  json index = json::object();
  for (const auto& [name, g] : groups_) {
    const std::string file = file_name_for(name);
    std::ofstream out(dir / file, std::ios::binary);
    require(static_cast<bool>(out), ErrorCode::kIo, "cannot write " + (dir / file).string());
    out.write(reinterpret_cast<const char*>(g.values.data()),
              static_cast<std::streamsize>(g.values.size() * sizeof(double)));
    index[name] = {{"shape", g.shape}, {"dtype", "float64"}, {"file", file}, {"is_head", is_head(name)}};
  }
  std::ofstream idx(dir / "index.json");
  require(static_cast<bool>(idx), ErrorCode::kIo, "cannot write " + (dir / "index.json").string());
  idx << index.dump(2) << "\n";
}

ParameterSet ParameterSet::load(const fs::path& dir) {
  std::ifstream idx(dir / "index.json");
  require(static_cast<bool>(idx), ErrorCode::kIo, "cannot read " + (dir / "index.json").string());
  json index;
  try {
    idx >> index;
  } catch (const json::exception& e) {
    fail(ErrorCode::kIo, "malformed parameter index in " + dir.string() + ": " + e.what());
  }
  ParameterSet out;
  for (const auto& [name, entry] : index.items()) {
    require(entry.value("dtype", "") == "float64", ErrorCode::kSchemaMismatch,
            "group '" + name + "' has unsupported dtype");
    auto shape = entry.at("shape").get<std::vector<Eigen::Index>>();
    const auto n = element_count(shape);
    Eigen::VectorXd values(n);
    const fs::path file = dir / entry.at("file").get<std::string>();
    std::ifstream in(file, std::ios::binary);
    require(static_cast<bool>(in), ErrorCode::kIo, "cannot read " + file.string());
    in.read(reinterpret_cast<char*>(values.data()), static_cast<std::streamsize>(n * sizeof(double)));
    require(in.gcount() == static_cast<std::streamsize>(n * sizeof(double)), ErrorCode::kIo,
            "truncated parameter file " + file.string());
    out.add(name, std::move(shape), std::move(values), entry.value("is_head", false));
  }
  out.validate();
  return out;
}

}  // namespace cfr
