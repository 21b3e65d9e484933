#pragma once

#include <Eigen/Dense>

#include <filesystem>
#include <map>
#include <set>
#include <string>
#include <vector>

namespace cfr {

struct ParameterGroup {
  std::vector<Eigen::Index> shape;
  Eigen::VectorXd values;  // row-major flattening of `shape`
};

// Named parameter arrays of a classifier plus the subset that forms its head.
class ParameterSet {
 public:
  void add(const std::string& name, std::vector<Eigen::Index> shape, Eigen::VectorXd values, bool head);

  bool contains(const std::string& name) const { return groups_.count(name) != 0; }
  const ParameterGroup& group(const std::string& name) const;
  ParameterGroup& mutable_group(const std::string& name);

  const std::map<std::string, ParameterGroup>& groups() const { return groups_; }
  const std::set<std::string>& head_groups() const { return head_; }
  bool is_head(const std::string& name) const { return head_.count(name) != 0; }
  std::vector<std::string> names() const;

  // Same names, same shapes, same head designation.
  bool same_layout(const ParameterSet& other) const;
  void validate() const;

  bool operator==(const ParameterSet& other) const;

  // Directory of <group>.bin (little-endian float64) files plus index.json.
  void save(const std::filesystem::path& dir) const;
  static ParameterSet load(const std::filesystem::path& dir);

 private:
  std::map<std::string, ParameterGroup> groups_;
  std::set<std::string> head_;
};

}  // namespace cfr
