#include "cfr/evaluation/evaluation.hpp"

#include "cfr/common.hpp"
#include "cfr/image_io.hpp"
#include "cfr/jsonl.hpp"
#include "cfr/parallel.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>
#include <sstream>

namespace cfr {

using nlohmann::json;

namespace {

constexpr const char* kTieBreak = "top-k ties rank the lower class index first";

}  // namespace

void LabeledSet::validate() const {
  require(!items.empty(), ErrorCode::kInvalidArgument, "labeled set '" + name + "' is empty");
  require(!class_universe.empty(), ErrorCode::kInvalidArgument, "labeled set '" + name + "' has no class universe");
  const std::set<std::string> universe(class_universe.begin(), class_universe.end());
  for (const auto& item : items) {
    require(universe.count(item.label) > 0, ErrorCode::kUnknownClass,
            "item '" + item.image.id() + "' of set '" + name + "' has label '" + item.label +
                "' outside the class universe");
  }
}

LabeledSet load_labeled_set(const std::filesystem::path& manifest, const std::string& name,
                            std::vector<std::string> class_universe) {
  LabeledSet set;
  set.name = name;
  const auto base = manifest.parent_path();
  std::set<std::string> seen;
  for (const auto& row : read_jsonl(manifest)) {
    require(row.is_object() && row.contains("image") && row.contains("label"), ErrorCode::kSchemaMismatch,
            manifest.string() + ": every row needs 'image' and 'label'");
    LabeledItem item;
    item.image_path = row["image"].get<std::string>();
    item.label = row["label"].get<std::string>();
    std::filesystem::path p(item.image_path);
    item.image = read_png(p.is_absolute() ? p : base / p);
    for (const auto& [k, v] : row.items()) {
      if (k != "image" && k != "label") item.extra[k] = v;
    }
    seen.insert(item.label);
    set.items.push_back(std::move(item));
  }
  set.class_universe = class_universe.empty() ? std::vector<std::string>(seen.begin(), seen.end())
                                              : std::move(class_universe);
  set.validate();
  return set;
}

void write_manifest(const std::filesystem::path& manifest, const LabeledSet& set) {
  std::vector<json> rows;
  rows.reserve(set.items.size());
  for (const auto& item : set.items) {
    json row = {{"image", item.image_path}, {"label", item.label}};
    for (const auto& [k, v] : item.extra.items()) row[k] = v;
    rows.push_back(std::move(row));
  }
  write_jsonl(manifest, rows);
}

int acc_at_k(const ScoreVector& scores, const std::string& gt_class, int k) {
  scores.validate();
  const int n = static_cast<int>(scores.size());
  require(k >= 1 && k <= n, ErrorCode::kInvalidArgument,
          "k=" + std::to_string(k) + " outside [1, " + std::to_string(n) + "]");
  const auto it = std::find(scores.class_names.begin(), scores.class_names.end(), gt_class);
  require(it != scores.class_names.end(), ErrorCode::kUnknownClass, "unknown class '" + gt_class + "'");
  const auto gt = static_cast<std::size_t>(it - scores.class_names.begin());
  const double s = scores.scores[gt];
  int ahead = 0;
  for (std::size_t i = 0; i < scores.scores.size(); ++i) {
    if (scores.scores[i] > s || (scores.scores[i] == s && i < gt)) ++ahead;
  }
  return ahead < k ? 1 : 0;
}

std::vector<int> acc5_hits(const LabeledSet& set, const Classifier& classifier, int jobs) {
  require(!set.items.empty(), ErrorCode::kInvalidArgument, "labeled set '" + set.name + "' is empty");
  std::vector<int> hits(set.items.size(), 0);
  parallel_for(set.items.size(), jobs, [&](std::size_t i) {
    const auto& item = set.items[i];
    try {
      hits[i] = acc_at_k(classifier.classify(item.image), item.label, 5);
    } catch (const Error& e) {
      throw Error(e.code(), std::string(e.what()) + " [set '" + set.name + "', item " + std::to_string(i) + " '" +
                                item.image.id() + "']");
    }
  });
  return hits;
}

double percent_of(const std::vector<int>& hits) {
  require(!hits.empty(), ErrorCode::kInvalidArgument, "no items to average");
  const long sum = std::accumulate(hits.begin(), hits.end(), 0L);
  return round2(100.0 * static_cast<double>(sum) / static_cast<double>(hits.size()));
}

double mean_acc5(const LabeledSet& set, const Classifier& classifier, int jobs) {
  return percent_of(acc5_hits(set, classifier, jobs));
}

double delta_of(double acc_T, double acc_T_prime) { return round2(round2(acc_T_prime) - round2(acc_T)); }

double delta_acc5(const LabeledSet& T, const LabeledSet& T_prime, const Classifier& classifier, int jobs) {
  return delta_of(mean_acc5(T, classifier, jobs), mean_acc5(T_prime, classifier, jobs));
}

void sort_per_class(std::vector<ClassResult>& rows) {
  std::stable_sort(rows.begin(), rows.end(), [](const ClassResult& a, const ClassResult& b) {
    if (a.delta.has_value() != b.delta.has_value()) return a.delta.has_value();
    if (a.delta && *a.delta != *b.delta) return *a.delta < *b.delta;
    return a.name < b.name;
  });
}

EvalReport assemble_weakness_report(const LabeledSet& T, const std::vector<int>& hits_T, const LabeledSet& T_prime,
                                    const std::vector<int>& hits_T_prime,
                                    const std::map<std::string, VariationFactor>& cf_metadata,
                                    const std::string& model_name) {
  require(hits_T.size() == T.items.size() && hits_T_prime.size() == T_prime.items.size(),
          ErrorCode::kShapeMismatch, "indicator count differs from set size");
  EvalReport r;
  r.model_name = model_name;
  r.size_T = T.items.size();
  r.size_T_prime = T_prime.items.size();
  r.acc5_T = percent_of(hits_T);
  r.acc5_T_prime = percent_of(hits_T_prime);
  r.delta = delta_of(r.acc5_T, r.acc5_T_prime);

  std::map<std::string, std::vector<int>> by_class_T, by_class_Tp;
  for (std::size_t i = 0; i < T.items.size(); ++i) by_class_T[T.items[i].label].push_back(hits_T[i]);
  for (std::size_t i = 0; i < T_prime.items.size(); ++i) by_class_Tp[T_prime.items[i].label].push_back(hits_T_prime[i]);
  for (const auto& [name, hits] : by_class_T) {
    ClassResult row;
    row.name = name;
    row.n_T = hits.size();
    row.acc5_T = percent_of(hits);
    if (auto it = by_class_Tp.find(name); it != by_class_Tp.end()) {
      row.n_T_prime = it->second.size();
      row.acc5_T_prime = percent_of(it->second);
      row.delta = delta_of(row.acc5_T, *row.acc5_T_prime);
    }
    r.per_class.push_back(std::move(row));
  }
  sort_per_class(r.per_class);

  std::map<VariationFactor, std::vector<int>> by_factor;
  for (std::size_t i = 0; i < T_prime.items.size(); ++i) {
    auto it = cf_metadata.find(T_prime.items[i].image.id());
    if (it == cf_metadata.end()) {
      ++r.missing_metadata;
      continue;
    }
    by_factor[it->second].push_back(hits_T_prime[i]);
  }
  for (const auto& [factor, hits] : by_factor) {
    FactorResult f;
    f.factor = factor;
    f.n = hits.size();
    f.acc5_T_prime = percent_of(hits);
    f.delta = delta_of(r.acc5_T, f.acc5_T_prime);
    r.per_factor.push_back(f);
  }

  r.metadata["tie_break"] = kTieBreak;
  r.metadata["extensions"] = {{"per_factor", "delta of each factor's counterfactuals against the overall Acc@5 on T"}};
  r.validate();
  return r;
}

EvalReport build_weakness_report(const LabeledSet& T, const LabeledSet& T_prime,
                                 const std::map<std::string, VariationFactor>& cf_metadata,
                                 const Classifier& classifier, int jobs) {
  T.validate();
  T_prime.validate();
  const auto hits_T = acc5_hits(T, classifier, jobs);
  const auto hits_Tp = acc5_hits(T_prime, classifier, jobs);
  return assemble_weakness_report(T, hits_T, T_prime, hits_Tp, cf_metadata, classifier.descriptor().name);
}

void EvalReport::validate() const {
  auto pct = [](double v, const std::string& what) {
    require(v >= 0.0 && v <= 100.0, ErrorCode::kSchemaMismatch, what + " outside [0, 100]");
  };
  auto consistent = [](double a, double b, double d, const std::string& what) {
    require(std::abs(d - (b - a)) <= 0.005 + 1e-9, ErrorCode::kSchemaMismatch, what + " delta disagrees with its accuracies");
  };
  pct(acc5_T, "acc5_T");
  pct(acc5_T_prime, "acc5_Tprime");
  consistent(acc5_T, acc5_T_prime, delta, "overall");
  for (const auto& c : per_class) {
    pct(c.acc5_T, c.name + " acc5_T");
    require(c.acc5_T_prime.has_value() == c.delta.has_value(), ErrorCode::kSchemaMismatch,
            c.name + ": acc5_Tprime and delta must both be present or both absent");
    if (c.acc5_T_prime) {
      pct(*c.acc5_T_prime, c.name + " acc5_Tprime");
      consistent(c.acc5_T, *c.acc5_T_prime, *c.delta, c.name);
    }
  }
  for (const auto& f : per_factor) {
    pct(f.acc5_T_prime, std::string(to_string(f.factor)) + " acc5_Tprime");
    consistent(acc5_T, f.acc5_T_prime, f.delta, std::string(to_string(f.factor)));
  }
}

json to_json(const EvalReport& r) {
  json classes = json::array();
  for (const auto& c : r.per_class) {
    json row = {{"class", c.name}, {"n_T", c.n_T}, {"n_Tprime", c.n_T_prime}, {"acc5_T", c.acc5_T},
                {"acc5_Tprime", nullptr}, {"delta", nullptr}};
    if (c.acc5_T_prime) row["acc5_Tprime"] = *c.acc5_T_prime;
    if (c.delta) row["delta"] = *c.delta;
    classes.push_back(std::move(row));
  }
  json factors = json::array();
  for (const auto& f : r.per_factor) {
    factors.push_back({{"factor", to_string(f.factor)}, {"n", f.n}, {"acc5_Tprime", f.acc5_T_prime}, {"delta", f.delta}});
  }
  return {{"schema_version", EvalReport::kSchemaVersion},
          {"model_name", r.model_name},
          {"set_sizes", {{"T", r.size_T}, {"Tprime", r.size_T_prime}}},
          {"overall", {{"acc5_T", r.acc5_T}, {"acc5_Tprime", r.acc5_T_prime}, {"delta", r.delta}}},
          {"per_class", std::move(classes)},
          {"per_factor", std::move(factors)},
          {"missing_metadata", r.missing_metadata},
          {"metadata", r.metadata}};
}

EvalReport eval_report_from_json(const json& j) {
  try {
    require(j.at("schema_version").get<int>() == EvalReport::kSchemaVersion, ErrorCode::kSchemaMismatch,
            "report schema_version " + j.at("schema_version").dump() + " is not supported");
    EvalReport r;
    r.model_name = j.at("model_name").get<std::string>();
    r.size_T = j.at("set_sizes").at("T").get<std::size_t>();
    r.size_T_prime = j.at("set_sizes").at("Tprime").get<std::size_t>();
    const auto& o = j.at("overall");
    r.acc5_T = o.at("acc5_T").get<double>();
    r.acc5_T_prime = o.at("acc5_Tprime").get<double>();
    r.delta = o.at("delta").get<double>();
    for (const auto& c : j.at("per_class")) {
      ClassResult row;
      row.name = c.at("class").get<std::string>();
      row.n_T = c.at("n_T").get<std::size_t>();
      row.n_T_prime = c.at("n_Tprime").get<std::size_t>();
      row.acc5_T = c.at("acc5_T").get<double>();
      if (!c.at("acc5_Tprime").is_null()) row.acc5_T_prime = c["acc5_Tprime"].get<double>();
      if (!c.at("delta").is_null()) row.delta = c["delta"].get<double>();
      r.per_class.push_back(std::move(row));
    }
    for (const auto& f : j.at("per_factor")) {
      r.per_factor.push_back({factor_from_string(f.at("factor").get<std::string>()), f.at("n").get<std::size_t>(),
                              f.at("acc5_Tprime").get<double>(), f.at("delta").get<double>()});
    }
    r.missing_metadata = j.at("missing_metadata").get<std::size_t>();
    r.metadata = j.at("metadata");
    r.validate();
    return r;
  } catch (const json::exception& e) {
    fail(ErrorCode::kSchemaMismatch, std::string("malformed report: ") + e.what());
  }
}

std::string to_csv(const EvalReport& r) {
  std::ostringstream out;
  out << "class,acc5_T,acc5_Tprime,delta\n";
  for (const auto& c : r.per_class) {
    out << c.name << ',' << format2(c.acc5_T) << ',' << (c.acc5_T_prime ? format2(*c.acc5_T_prime) : "") << ','
        << (c.delta ? format2(*c.delta) : "") << '\n';
  }
  return out.str();
}

}  // namespace cfr
