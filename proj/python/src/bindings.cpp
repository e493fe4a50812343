#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "mindsets/error.hpp"
#include "mindsets/eval.hpp"
#include "mindsets/radiomics.hpp"
#include "mindsets/select.hpp"
#include "mindsets/synth.hpp"
#include "mindsets/tabular.hpp"

namespace py = pybind11;
namespace fs = std::filesystem;
using namespace mindsets;

namespace {

using DoubleArray = py::array_t<double, py::array::c_style | py::array::forcecast>;
using IntArray = py::array_t<int, py::array::c_style | py::array::forcecast>;

Dims dims_of(const py::buffer_info& info) {
  if (info.ndim != 3) throw Error(Errc::DimMismatch, "expected a 3-d array of shape (nz, ny, nx)");
  return {static_cast<std::size_t>(info.shape[2]), static_cast<std::size_t>(info.shape[1]),
          static_cast<std::size_t>(info.shape[0])};
}

Matrix to_matrix(const DoubleArray& a) {
  const auto info = a.request();
  if (info.ndim != 2) throw Error(Errc::DimMismatch, "expected a 2-d array");
  Matrix m(static_cast<std::size_t>(info.shape[0]), static_cast<std::size_t>(info.shape[1]));
  const auto* src = static_cast<const double*>(info.ptr);
  std::copy(src, src + info.size, m.data().begin());
  return m;
}

std::vector<double> to_vector(const DoubleArray& a) {
  const auto info = a.request();
  if (info.ndim != 1) throw Error(Errc::DimMismatch, "expected a 1-d array");
  const auto* src = static_cast<const double*>(info.ptr);
  return {src, src + info.size};
}

std::vector<int> to_ints(const IntArray& a) {
  const auto info = a.request();
  if (info.ndim != 1) throw Error(Errc::DimMismatch, "expected a 1-d array");
  const auto* src = static_cast<const int*>(info.ptr);
  return {src, src + info.size};
}

CohortData load_data(const fs::path& dir) {
  CohortData d;
  d.schema = load_schema(dir / "cohort.schema.json");
  d.records = load_cohort_csv(dir / "cohort.csv", d.schema);
  if (fs::is_directory(dir / "fragments")) d.fragments = load_fragment_dir(dir / "fragments");
  return d;
}

}  // namespace

PYBIND11_MODULE(_mindsets, m) {
  m.doc() = "Radiomics, feature selection and evaluation primitives";

  static py::exception<Error> error_type(m, "MindsetsError");
  py::register_exception_translator([](std::exception_ptr p) {
    try {
      if (p) std::rethrow_exception(p);
    } catch (const Error& e) {
      py::object exc = py::handle(error_type.ptr())(e.what());
      exc.attr("code") = std::string(to_string(e.code()));
      PyErr_SetObject(error_type.ptr(), exc.ptr());
    }
  });

  m.def(
      "extract_features",
      [](const DoubleArray& volume, const IntArray& mask, std::array<double, 3> spacing, const std::string& config) {
        const auto vi = volume.request();
        const auto mi = mask.request();
        const Dims dims = dims_of(vi);
        if (dims_of(mi) != dims) throw Error(Errc::DimsMismatch, "volume and mask shapes differ");
        const auto* v = static_cast<const double*>(vi.ptr);
        const auto* l = static_cast<const int*>(mi.ptr);
        Volume3D vol(dims, spacing, std::vector<double>(v, v + vi.size));
        LabelMask lm(dims, std::vector<std::int32_t>(l, l + mi.size));
        const auto cfg = config.empty() ? RadiomicsConfig{} : nlohmann::json::parse(config).get<RadiomicsConfig>();
        RadiomicsFragment frag;
        {
          py::gil_scoped_release release;
          frag = extract_all(vol, lm, cfg);
        }
        py::dict out;
        for (std::size_t r = 0; r < frag.labels.size(); ++r) {
          py::dict row;
          for (std::size_t c = 0; c < frag.feature_names.size(); ++c) row[py::str(frag.feature_names[c])] = frag.values[r][c];
          out[py::int_(frag.labels[r])] = row;
        }
        return out;
      },
      py::arg("volume"), py::arg("mask"), py::arg("spacing") = std::array<double, 3>{1.0, 1.0, 1.0},
      py::arg("config") = "");

  m.def(
      "feature_catalog",
      [](const std::string& config) {
        return feature_catalog(config.empty() ? RadiomicsConfig{} : nlohmann::json::parse(config).get<RadiomicsConfig>());
      },
      py::arg("config") = "");

  m.def(
      "roc_auc", [](const DoubleArray& s, const IntArray& y) { return roc_auc(to_vector(s), to_ints(y)); },
      py::arg("scores"), py::arg("labels"));

  m.def(
      "metrics",
      [](const IntArray& predicted, const IntArray& truth, const DoubleArray& scores) {
        return nlohmann::json(metrics(to_ints(predicted), to_ints(truth), to_matrix(scores))).dump();
      },
      py::arg("predicted"), py::arg("truth"), py::arg("scores"));

  m.def(
      "group_kfold",
      [](const std::vector<std::string>& ids, int k, std::uint64_t seed) {
        const auto plan = group_kfold(ids, k, seed);
        return py::make_tuple(plan.assignments, plan.digest());
      },
      py::arg("patient_ids"), py::arg("k") = 5, py::arg("seed") = 0);

  m.def(
      "mutual_information",
      [](const DoubleArray& x, const IntArray& y, int bins, bool categorical) {
        const auto r = mutual_information(to_vector(x), to_ints(y), bins, categorical);
        return py::make_tuple(r.value, r.degenerate);
      },
      py::arg("x"), py::arg("y"), py::arg("bins") = 10, py::arg("categorical") = false);

  m.def(
      "correlation", [](const DoubleArray& a, const DoubleArray& b) { return correlation(to_vector(a), to_vector(b)); },
      py::arg("a"), py::arg("b"));

  m.def(
      "sulov_select",
      [](const DoubleArray& x, const IntArray& y, const std::vector<std::string>& names, double threshold, int bins) {
        SelectOptions opt;
        opt.corr_threshold = threshold;
        opt.mi_bins = bins;
        return nlohmann::json(sulov_select(to_matrix(x), to_ints(y), names, {}, opt)).dump();
      },
      py::arg("x"), py::arg("labels"), py::arg("names"), py::arg("corr_threshold") = 0.7, py::arg("mi_bins") = 10);

  m.def(
      "generate_cohort",
      [](const std::string& spec, const fs::path& out) {
        const auto s = spec.empty() ? strong_spec() : nlohmann::json::parse(spec).get<SynthSpec>();
        py::gil_scoped_release release;
        return generate_cohort(s, out).manifest.dump();
      },
      py::arg("spec"), py::arg("out_dir"));

  m.def("strong_spec", [] { return nlohmann::json(strong_spec()).dump(); });
  m.def("null_spec", [] { return nlohmann::json(null_spec()).dump(); });

  m.def(
      "run_experiment",
      [](const fs::path& data_dir, const std::string& spec, const std::string& options) {
        const auto s = nlohmann::json::parse(spec).get<ExperimentSpec>();
        const auto o = options.empty() ? PipelineOptions{} : nlohmann::json::parse(options).get<PipelineOptions>();
        py::gil_scoped_release release;
        return nlohmann::json(run_experiment(load_data(data_dir), s, o)).dump();
      },
      py::arg("data_dir"), py::arg("spec"), py::arg("options") = "");
}
