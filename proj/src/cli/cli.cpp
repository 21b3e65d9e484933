#include "cfr/cli/cli.hpp"

#include "cfr/backends/registry.hpp"
#include "cfr/common.hpp"
#include "cfr/jsonl.hpp"
#include "cfr/parameter_set.hpp"
#include "cfr/pipeline/config.hpp"
#include "cfr/pipeline/pipeline.hpp"
#include "cfr/pipeline/synthetic.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <cctype>
#include <ostream>
#include <sstream>

namespace cfr {

namespace fs = std::filesystem;
using nlohmann::json;

ReportFormat parse_report_format(std::string_view name) {
  if (name == "table") return ReportFormat::kTable;
  if (name == "csv") return ReportFormat::kCsv;
  if (name == "json") return ReportFormat::kJson;
  fail(ErrorCode::kConfig, "unknown format '" + std::string(name) + "' (expected table, csv or json)");
}

namespace {

std::size_t display_width(const std::string& s) {
  return static_cast<std::size_t>(std::count_if(s.begin(), s.end(), [](char c) { return (c & 0xC0) != 0x80; }));
}

std::string typographic(std::string number) {
  if (!number.empty() && number[0] == '-') number.replace(0, 1, "−");
  return number;
}

std::string cell(const std::optional<double>& v) { return v ? typographic(format2(*v)) : "-"; }

std::string title_case(std::string s) {
  if (!s.empty()) s[0] = static_cast<char>(std::toupper(static_cast<unsigned char>(s[0])));
  return s;
}

// Left-aligns the first `text_columns` columns, right-aligns the rest.
std::string layout(const std::vector<std::vector<std::string>>& rows, std::size_t text_columns) {
  if (rows.empty()) return {};
  std::vector<std::size_t> width(rows.front().size(), 0);
  for (const auto& r : rows)
    for (std::size_t c = 0; c < r.size(); ++c) width[c] = std::max(width[c], display_width(r[c]));
  std::ostringstream out;
  for (const auto& r : rows) {
    std::string line;
    for (std::size_t c = 0; c < r.size(); ++c) {
      const std::string pad(width[c] - display_width(r[c]), ' ');
      if (c > 0) line += "  ";
      line += c < text_columns ? r[c] + pad : pad + r[c];
    }
    while (!line.empty() && line.back() == ' ') line.pop_back();
    out << line << '\n';
  }
  return out.str();
}

bool is_comparison(const json& j) { return j.value("kind", std::string()) == "comparison"; }

}  // namespace

std::string render_table(const EvalReport& r) {
  std::vector<std::vector<std::string>> rows = {{"Class", "Acc@5 T", "Acc@5 T'", "ΔAcc@5"}};
  for (const auto& c : r.per_class) {
    rows.push_back({title_case(c.name), format2(c.acc5_T), cell(c.acc5_T_prime), cell(c.delta)});
  }
  if (!r.per_class.empty()) {
    rows.push_back({"Overall", format2(r.acc5_T), format2(r.acc5_T_prime), typographic(format2(r.delta))});
  }
  std::string out = layout(rows, 1);
  if (!r.per_factor.empty()) {
    std::vector<std::vector<std::string>> f = {{"Factor (extension)", "n", "Acc@5 T'", "ΔAcc@5"}};
    for (const auto& row : r.per_factor) {
      f.push_back({std::string(to_string(row.factor)), std::to_string(row.n), format2(row.acc5_T_prime),
                   typographic(format2(row.delta))});
    }
    out += "\n" + layout(f, 1);
  }
  if (r.missing_metadata > 0) out += "\n" + std::to_string(r.missing_metadata) + " counterfactuals lacked factor metadata\n";
  return out;
}

std::string render_table(const ComparisonReport& r) {
  const bool standard = r.has_standard();
  std::vector<std::string> header = {"Set", "Class", "Baseline"};
  if (standard) header.push_back("Standard");
  header.insert(header.end(), {"Counterfactual", "Gain"});
  std::vector<std::vector<std::string>> rows = {header};
  for (const auto& row : r.rows) {
    std::vector<std::string> line = {row.set, title_case(row.cls), cell(row.baseline)};
    if (standard) line.push_back(cell(row.standard));
    const auto g = row.gain();
    line.insert(line.end(), {cell(row.counterfactual), g ? typographic(format_signed2(*g)) : "-"});
    rows.push_back(std::move(line));
  }
  std::string out = layout(rows, 2);
  for (const auto& [set, error] : r.errors) out += "\n" + set + ": not evaluated (" + error + ")\n";
  return out;
}

std::string render_report(const json& j, ReportFormat format) {
  if (is_comparison(j)) {
    const auto r = comparison_report_from_json(j);
    switch (format) {
      case ReportFormat::kTable: return render_table(r);
      case ReportFormat::kCsv: return to_csv(r);
      case ReportFormat::kJson: return to_json(r).dump(2) + "\n";
    }
  }
  const auto r = eval_report_from_json(j);
  switch (format) {
    case ReportFormat::kTable: return render_table(r);
    case ReportFormat::kCsv: return to_csv(r);
    case ReportFormat::kJson: return to_json(r).dump(2) + "\n";
  }
  return {};
}

std::string render_report(const fs::path& report_path, ReportFormat format) {
  return render_report(read_json_file(report_path), format);
}

namespace {

std::string config_key_listing() {
  std::ostringstream out;
  out << "Config keys (INI sections; override as section.key=value):\n";
  for (const auto& k : config_keys()) {
    out << "  " << k.key << " [" << (k.default_value.empty() ? "\"\"" : k.default_value) << "]  " << k.help << "\n";
  }
  out << "\nEnvironment: CFR_RUN_ROOT sets the default run root.\n";
  return out.str();
}

struct CommonOptions {
  std::string config_path;
  int jobs = 0;
  std::optional<long long> seed;
  std::string out;
  std::vector<std::string> overrides;
};

void add_common(CLI::App* cmd, CommonOptions& o) {
  cmd->add_option("--config", o.config_path, "INI configuration file");
  cmd->add_option("--jobs", o.jobs, "worker threads")->check(CLI::PositiveNumber);
  cmd->add_option("--seed", o.seed, "overrides run.seed");
  cmd->add_option("overrides", o.overrides, "section.key=value overrides");
}

Config build_config(const CommonOptions& o) {
  Config c = o.config_path.empty() ? Config() : Config::load(o.config_path);
  if (o.config_path.empty()) c.set_base_dir(fs::current_path());
  for (const auto& ov : o.overrides) c.apply_override(ov);
  if (o.jobs > 0) c.set("run.jobs", std::to_string(o.jobs));
  if (o.seed) c.set("run.seed", std::to_string(*o.seed));
  if (!o.out.empty()) c.set("run.root", fs::absolute(o.out).string());
  return c;
}

int cmd_stress_test(const CommonOptions& o, std::ostream& out) {
  const auto config = StressTestConfig::from(build_config(o));
  const auto r = run_stress_test(config);
  out << "stress-test " << r.manifest.run_id << ": " << r.T_prime.size() << " counterfactuals from "
      << r.report.size_T << " images, " << r.manifest.skipped.size() << " skipped\n";
  out << "Acc@5 T " << format2(r.report.acc5_T) << "  T' " << format2(r.report.acc5_T_prime) << "  delta "
      << format_signed2(r.report.delta) << "\n";
  out << "report: " << (r.run_dir / "reports" / "weakness.json").string() << "\n";
  out << "manifest: " << (r.run_dir / "manifest.json").string() << "\n";
  return 0;
}

int cmd_reinforce(const CommonOptions& o, const std::string& run, std::ostream& out) {
  Config c = build_config(o);
  if (!run.empty()) c.set("reinforce.stress_run", run);
  const auto r = run_reinforcement(ReinforceConfig::from(c));
  out << "reinforce " << r.manifest.run_id << ": " << r.record.epochs_run << " epochs"
      << (r.record.stopped_early ? " (early stop)" : "") << "\n";
  out << render_table(r.comparison);
  out << "report: " << (r.run_dir / "reports" / "comparison.json").string() << "\n";
  out << "parameters: " << (r.run_dir / "params" / "reinforced").string() << "\n";
  out << "manifest: " << (r.run_dir / "manifest.json").string() << "\n";
  return 0;
}

int cmd_evaluate(const CommonOptions& o, const std::string& params, const std::vector<std::string>& manifests,
                 const std::string& counterfactual, const std::string& report_out, const std::string& format,
                 std::ostream& out) {
  Config c = build_config(o);
  if (!params.empty()) c.set("backends.classifier_params", fs::absolute(params).string());
  const auto classifier = make_classifier(backend_config_from(c));
  const int jobs = static_cast<int>(c.get_int("run.jobs"));
  const auto& universe = classifier->class_names();
  if (counterfactual.empty()) {
    std::vector<std::vector<std::string>> rows = {{"Set", "n", "Acc@5"}};
    for (const auto& m : manifests) {
      const auto set = load_labeled_set(m, fs::path(m).stem().string(), universe);
      rows.push_back({set.name, std::to_string(set.size()), format2(mean_acc5(set, *classifier, jobs))});
    }
    out << layout(rows, 1);
    return 0;
  }
  require(manifests.size() == 1, ErrorCode::kConfig, "--counterfactual needs exactly one --manifest (the original set)");
  const auto T = load_labeled_set(manifests.front(), "T", universe);
  const auto Tp = load_labeled_set(counterfactual, "T_prime", universe);
  std::map<std::string, VariationFactor> meta;
  for (const auto& item : Tp.items) {
    if (item.extra.contains("factor")) {
      if (auto f = parse_factor(item.extra["factor"].get<std::string>())) meta[item.image.id()] = *f;
    }
  }
  const auto report = build_weakness_report(T, Tp, meta, *classifier, jobs);
  const json j = to_json(report);
  if (!report_out.empty()) {
    require(!fs::exists(report_out), ErrorCode::kConfig, "refusing to overwrite " + report_out);
    write_json_file(report_out, j);
  }
  out << render_report(j, parse_report_format(format));
  if (!report_out.empty()) out << "report: " << report_out << "\n";
  return 0;
}

int cmd_blend(double alpha, const std::string& theta0_dir, const std::string& theta1_dir, const std::string& out_dir,
              const std::string& scope_name, std::ostream& out) {
  require(!fs::exists(out_dir) || fs::is_empty(out_dir), ErrorCode::kConfig,
          "output directory " + out_dir + " already has content");
  const auto theta0 = ParameterSet::load(theta0_dir);
  const auto theta1 = ParameterSet::load(theta1_dir);
  std::set<std::string> scope;
  if (scope_name == "head") {
    scope = theta0.head_groups();
  } else if (scope_name == "all") {
    for (const auto& n : theta0.names()) scope.insert(n);
  } else {
    fail(ErrorCode::kConfig, "--scope must be head or all");
  }
  const auto blended = blend_parameters(theta0, theta1, alpha, scope);
  fs::create_directories(out_dir);
  blended.save(out_dir);
  if (fs::exists(fs::path(theta0_dir) / "classes.json")) {
    fs::copy_file(fs::path(theta0_dir) / "classes.json", fs::path(out_dir) / "classes.json");
  }
  out << "blended " << scope.size() << " group(s) at alpha " << alpha << " -> " << out_dir << "\n";
  return 0;
}

int cmd_gen_synthetic(const SyntheticOptions& options, const std::string& out_dir, std::ostream& out) {
  require(!fs::exists(out_dir) || fs::is_empty(out_dir), ErrorCode::kConfig,
          "output directory " + out_dir + " already has content");
  const auto ds = generate_synthetic(out_dir, options);
  out << "T: " << ds.T.string() << "\n"
      << "test: " << ds.test.string() << "\n"
      << "ood: " << ds.ood.string() << "\n"
      << "hybrid: " << ds.hybrid.string() << "\n"
      << "baseline: " << ds.params.string() << "\n"
      << "config: " << ds.config.string() << "\n";
  return 0;
}

int exit_code_for(const Error& e) {
  switch (e.code()) {
    case ErrorCode::kConfig:
    case ErrorCode::kSchemaMismatch:
      return 1;
    default:
      return 2;
  }
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Counterfactual stress testing and reinforcement of image classifiers", "cfr"};
  app.require_subcommand(1);
  app.footer("\n" + config_key_listing());

  CommonOptions common;
  std::string run_id, params, counterfactual, report_out, format = "table", scope = "head";
  std::string theta0, theta1, out_dir, report_path;
  std::vector<std::string> manifests;
  double alpha = 0.3;
  SyntheticOptions synth;
  long long synth_seed = 0;

  auto* stress = app.add_subcommand("stress-test", "caption, perturb, edit and evaluate a dataset");
  add_common(stress, common);
  stress->add_option("--out", common.out, "run root directory (overrides run.root)");

  auto* reinforce_cmd = app.add_subcommand("reinforce", "fine-tune the head on a stress run's counterfactuals");
  add_common(reinforce_cmd, common);
  reinforce_cmd->add_option("--out", common.out, "run root directory (overrides run.root)");
  reinforce_cmd->add_option("--run", run_id, "stress-test run id (overrides reinforce.stress_run)");

  auto* evaluate = app.add_subcommand("evaluate", "Acc@5 of a classifier on manifests, or a weakness report");
  add_common(evaluate, common);
  evaluate->add_option("--params", params, "classifier parameter directory");
  evaluate->add_option("--manifest", manifests, "labeled set manifest (repeatable)")->required();
  evaluate->add_option("--counterfactual", counterfactual, "counterfactual manifest; produces a weakness report");
  evaluate->add_option("--out", report_out, "write the weakness report JSON here");
  evaluate->add_option("--format", format, "table, csv or json")->check(CLI::IsMember({"table", "csv", "json"}));

  auto* blend = app.add_subcommand("blend", "interpolate two parameter directories");
  blend->add_option("--alpha", alpha, "weight of theta1")->required()->check(CLI::Range(0.0, 1.0));
  blend->add_option("--theta0", theta0, "original parameters")->required();
  blend->add_option("--theta1", theta1, "fine-tuned parameters")->required();
  blend->add_option("--out", out_dir, "output directory")->required();
  blend->add_option("--scope", scope, "head or all")->check(CLI::IsMember({"head", "all"}));

  auto* report = app.add_subcommand("report", "render a weakness or comparison report");
  report->add_option("report", report_path, "report JSON")->required();
  report->add_option("--format", format, "table, csv or json")->check(CLI::IsMember({"table", "csv", "json"}));

  auto* gen = app.add_subcommand("gen-synthetic", "write the planted-background-bias benchmark");
  gen->add_option("--out", out_dir, "output directory")->required();
  gen->add_option("--seed", synth_seed, "generator seed");
  gen->add_option("--per-class", synth.per_class, "images per class in T");
  gen->add_option("--test-per-class", synth.test_per_class, "images per class in the test set");
  gen->add_option("--ood-per-class", synth.ood_per_class, "images per class in the OOD set");
  gen->add_option("--bias", synth.bias, "share of images on the class-typical background")->check(CLI::Range(0.0, 1.0));

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return 0;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return 0;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n\n" << app.help();
    return 1;
  }

  try {
    if (stress->parsed()) return cmd_stress_test(common, out);
    if (reinforce_cmd->parsed()) return cmd_reinforce(common, run_id, out);
    if (evaluate->parsed()) return cmd_evaluate(common, params, manifests, counterfactual, report_out, format, out);
    if (blend->parsed()) return cmd_blend(alpha, theta0, theta1, out_dir, scope, out);
    if (report->parsed()) {
      out << render_report(fs::path(report_path), parse_report_format(format));
      return 0;
    }
    if (gen->parsed()) {
      synth.seed = static_cast<std::uint64_t>(synth_seed);
      return cmd_gen_synthetic(synth, out_dir, out);
    }
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return exit_code_for(e);
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 2;
  }
  err << app.help();
  return 1;
}

}  // namespace cfr
