#include "cfr/cli/cli.hpp"
#include "cfr/common.hpp"
#include "cfr/editing/editing.hpp"
#include "cfr/evaluation/evaluation.hpp"
#include "cfr/jsonl.hpp"
#include "cfr/perturbation/adapter.hpp"
#include "cfr/pipeline/config.hpp"
#include "cfr/pipeline/pipeline.hpp"
#include "cfr/pipeline/synthetic.hpp"

#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <sstream>

namespace py = pybind11;
namespace fs = std::filesystem;
using namespace cfr;

namespace {

Config load_config(const std::string& path, const std::vector<std::string>& overrides, const std::string& run_root) {
  Config c = Config::load(path);
  for (const auto& o : overrides) c.apply_override(o);
  if (!run_root.empty()) c.set("run.root", fs::absolute(run_root).string());
  return c;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Counterfactual stress testing and reinforcement of image classifiers";

  // Raised for every cfr::Error; `code` holds the error code name.
  static PyObject* error_type = PyErr_NewException("cfr._core.CfrError", PyExc_RuntimeError, nullptr);
  m.add_object("CfrError", py::handle(error_type));
  py::register_exception_translator([](std::exception_ptr p) {
    try {
      if (p) std::rethrow_exception(p);
    } catch (const Error& e) {
      py::object exc = py::reinterpret_borrow<py::object>(error_type)(std::string(to_string(e.code())) + ": " + e.what());
      exc.attr("code") = std::string(to_string(e.code()));
      PyErr_SetObject(error_type, exc.ptr());
    }
  });

  m.def(
      "run_cli",
      [](const std::vector<std::string>& args) {
        std::ostringstream out, err;
        int code;
        {
          py::gil_scoped_release release;
          code = run_cli(args, out, err);
        }
        return py::make_tuple(code, out.str(), err.str());
      },
      py::arg("args"), "Runs the command-line tool in process; returns (exit_code, stdout, stderr).");

  m.def(
      "merge_adapter",
      [](const Eigen::MatrixXd& base, const Eigen::MatrixXd& A, const Eigen::MatrixXd& B) {
        return merge_adapter(AdapterWeights{base, A, B});
      },
      py::arg("base"), py::arg("A"), py::arg("B"));

  m.def("directional_similarity", &directional_similarity_from_deltas, py::arg("image_delta"), py::arg("text_delta"));
  m.def("delta_of", &delta_of, py::arg("acc_T"), py::arg("acc_T_prime"));
  m.def(
      "acc_at_k",
      [](const std::vector<double>& scores, const std::vector<std::string>& names, const std::string& gt, int k) {
        return acc_at_k(ScoreVector{scores, names}, gt, k);
      },
      py::arg("scores"), py::arg("class_names"), py::arg("gt_class"), py::arg("k") = 5);
  m.def("default_tau_grid", &default_tau_grid);

  m.def(
      "generate_synthetic",
      [](const std::string& out_dir, std::uint64_t seed, int per_class, int test_per_class, int ood_per_class) {
        SyntheticOptions o;
        o.seed = seed;
        o.per_class = per_class;
        o.test_per_class = test_per_class;
        o.ood_per_class = ood_per_class;
        SyntheticDataset ds;
        {
          py::gil_scoped_release release;
          ds = generate_synthetic(out_dir, o);
        }
        py::dict d;
        d["T"] = ds.T.string();
        d["test"] = ds.test.string();
        d["ood"] = ds.ood.string();
        d["hybrid"] = ds.hybrid.string();
        d["params"] = ds.params.string();
        d["config"] = ds.config.string();
        return d;
      },
      py::arg("out_dir"), py::arg("seed") = 0, py::arg("per_class") = 50, py::arg("test_per_class") = 25,
      py::arg("ood_per_class") = 25);

  m.def(
      "stress_test",
      [](const std::string& config, const std::vector<std::string>& overrides, const std::string& run_root) {
        const auto c = load_config(config, overrides, run_root);
        StressTestResult r;
        {
          py::gil_scoped_release release;
          r = run_stress_test(StressTestConfig::from(c));
        }
        py::dict d;
        d["run_id"] = r.manifest.run_id;
        d["run_dir"] = r.run_dir.string();
        d["report"] = to_json(r.report).dump();
        return d;
      },
      py::arg("config"), py::arg("overrides") = std::vector<std::string>{}, py::arg("run_root") = "",
      "Returns run_id, run_dir and the weakness report as JSON text.");

  m.def(
      "reinforce",
      [](const std::string& config, const std::string& stress_run, const std::vector<std::string>& overrides,
         const std::string& run_root) {
        auto c = load_config(config, overrides, run_root);
        c.set("reinforce.stress_run", stress_run);
        ReinforceRunResult r;
        {
          py::gil_scoped_release release;
          r = run_reinforcement(ReinforceConfig::from(c));
        }
        py::dict d;
        d["run_id"] = r.manifest.run_id;
        d["run_dir"] = r.run_dir.string();
        d["report"] = to_json(r.comparison).dump();
        return d;
      },
      py::arg("config"), py::arg("stress_run") = "latest", py::arg("overrides") = std::vector<std::string>{},
      py::arg("run_root") = "", "Returns run_id, run_dir and the comparison report as JSON text.");

  m.def(
      "render_report",
      [](const std::string& path, const std::string& format) { return render_report(fs::path(path), parse_report_format(format)); },
      py::arg("path"), py::arg("format") = "table");
}
