#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <cstring>

#include "elasto/cli.hpp"
#include "elasto/pipeline.hpp"

namespace py = pybind11;
using namespace elasto;

namespace {

using InArray = py::array_t<double, py::array::c_style | py::array::forcecast>;

Array2D to_array(const InArray& a) {
  if (a.ndim() != 2) throw DimensionError("expected a 2-D array");
  const auto rows = static_cast<std::size_t>(a.shape(0)), cols = static_cast<std::size_t>(a.shape(1));
  return Array2D(rows, cols, std::vector<double>(a.data(), a.data() + rows * cols));
}

py::array_t<double> to_numpy(const Array2D& a) {
  py::array_t<double> out({a.rows(), a.cols()});
  std::memcpy(out.mutable_data(), a.values().data(), a.size() * sizeof(double));
  return out;
}

RfFrame to_frame(const InArray& a) {
  RfFrame f;
  f.samples = to_array(a);
  return f;
}

py::dict field_dict(const DisplacementField& d) {
  py::dict out;
  out["axial"] = to_numpy(d.axial);
  out["lateral"] = d.lateral ? py::object(to_numpy(*d.lateral)) : py::object(py::none());
  out["provenance"] = to_string(d.provenance);
  out["flags"] = d.flags;
  return out;
}

DisplacementField to_field(const InArray& axial, const std::optional<InArray>& lateral) {
  DisplacementField d;
  d.axial = to_array(axial);
  if (lateral) d.lateral = to_array(*lateral);
  return d;
}

tde::DpConfig dp_config(std::size_t rows, std::size_t num_lines, double alpha_dp, int search_range) {
  tde::DpConfig base;
  base.alpha_dp = alpha_dp;
  base.num_lines = num_lines;
  if (search_range > 0) {
    base.search_range = search_range;
    return base;
  }
  return pipeline::dp_for_frame(rows, base);
}

refine::RefineConfig refine_config(double alpha1, double alpha2, double beta1, double beta2, int max_iters) {
  refine::RefineConfig cfg;
  cfg.alpha1 = alpha1;
  cfg.alpha2 = alpha2;
  cfg.beta1 = beta1;
  cfg.beta2 = beta2;
  cfg.max_iters = max_iters;
  return cfg;
}

}  // namespace

PYBIND11_MODULE(_elasto, m) {
  m.doc() = "Sparse-DP plus principal-mode displacement estimation for quasi-static elastography";
  m.attr("__version__") = cli::kVersion;

  py::register_exception<Error>(m, "ElastoError", PyExc_RuntimeError);

  m.def(
      "simulate",
      [](std::size_t rows, std::size_t lines, const std::string& kind, double magnitude, double axial_strain,
         std::uint64_t seed) {
        sim::PhantomSpec spec;
        spec.rows = rows;
        spec.lines = lines;
        sim::DeformationSpec def;
        def.kind = sim::deformation_kind_from_string(kind);
        def.magnitude = magnitude;
        def.axial_strain = axial_strain;
        def.rng_seed = seed;
        const auto pair = sim::synthesize_pair(spec, def);
        py::dict out;
        out["first"] = to_numpy(pair.first.samples);
        out["second"] = to_numpy(pair.second.samples);
        out["oracle"] = field_dict(pair.oracle);
        return out;
      },
      py::arg("rows") = 128, py::arg("lines") = 32, py::arg("kind") = "axial_compression",
      py::arg("magnitude") = 0.02, py::arg("axial_strain") = 0.0, py::arg("seed") = 0);

  m.def(
      "dp_line",
      [](const InArray& first, const InArray& second, std::size_t line, double alpha_dp, int search_range) {
        const auto a = to_frame(first);
        return tde::dp_line(a, to_frame(second), line, dp_config(a.rows(), 5, alpha_dp, search_range));
      },
      py::arg("first"), py::arg("second"), py::arg("line"), py::arg("alpha_dp") = 0.2, py::arg("search_range") = 0);

  m.def("smooth_staircase", [](const std::vector<double>& d) { return tde::smooth_staircase(d); }, py::arg("d"));

  py::class_<modes::ModeBasis>(m, "ModeBasis")
      .def_readonly("eigenvalues", &modes::ModeBasis::eigenvalues)
      .def_readonly("explained_variance_ratio", &modes::ModeBasis::explained_variance_ratio)
      .def_readonly("rows", &modes::ModeBasis::rows)
      .def_readonly("cols", &modes::ModeBasis::cols)
      .def("__len__", &modes::ModeBasis::size)
      .def("mode", [](const modes::ModeBasis& b, std::size_t n) { return to_numpy(b.mode_image(n)); })
      .def("mean", [](const modes::ModeBasis& b) { return to_numpy(b.mean_image()); })
      .def("project", [](const modes::ModeBasis& b, const InArray& f) { return modes::project(b, to_array(f)).w; })
      .def("reconstruct",
           [](const modes::ModeBasis& b, const std::vector<double>& w) {
             return to_numpy(modes::reconstruct_with_mean(b, w));
           })
      .def("save", [](const modes::ModeBasis& b, const std::string& dir) { modes::save_basis(b, dir); });

  m.def(
      "learn_modes",
      [](const std::vector<InArray>& fields, std::size_t n_modes) {
        std::vector<Array2D> corpus;
        for (const auto& f : fields) corpus.push_back(to_array(f));
        return modes::learn_modes(corpus, n_modes);
      },
      py::arg("fields"), py::arg("n_modes") = 12);
  m.def("load_modes", [](const std::string& dir) { return modes::load_basis(dir); }, py::arg("dir"));

  m.def(
      "coarse_estimate",
      [](const modes::ModeBasis& basis, const InArray& first, const InArray& second, std::size_t num_lines,
         double alpha_dp) {
        const auto a = to_frame(first);
        const auto r = coarse::coarse_estimate(basis, a, to_frame(second), dp_config(a.rows(), num_lines, alpha_dp, 0));
        auto out = field_dict(r.field);
        out["weights"] = r.weights.w;
        out["lines"] = r.sparse.lines;
        return out;
      },
      py::arg("basis"), py::arg("first"), py::arg("second"), py::arg("num_lines") = 5, py::arg("alpha_dp") = 0.2);

  m.def(
      "refine",
      [](const InArray& first, const InArray& second, const InArray& axial, const std::optional<InArray>& lateral,
         double alpha1, double alpha2, double beta1, double beta2, int max_iters) {
        const auto r = refine::refine(to_frame(first), to_frame(second), to_field(axial, lateral),
                                      refine_config(alpha1, alpha2, beta1, beta2, max_iters));
        auto out = field_dict(r.field);
        out["iterations"] = r.iterations;
        out["converged"] = r.converged;
        out["energy_history"] = r.energy_history;
        return out;
      },
      py::arg("first"), py::arg("second"), py::arg("axial"), py::arg("lateral") = py::none(), py::arg("alpha1") = 5.0,
      py::arg("alpha2") = 1.0, py::arg("beta1") = 5.0, py::arg("beta2") = 1.0, py::arg("max_iters") = 10);

  m.def(
      "strain", [](const InArray& axial, int window_len) { return to_numpy(refine::strain(to_array(axial), window_len).strain); },
      py::arg("axial"), py::arg("window_len") = 43);

  m.def(
      "ncc", [](const InArray& a, const InArray& b) { return refine::ncc(to_array(a), to_array(b)); }, py::arg("a"),
      py::arg("b"));

  m.def(
      "snr_cnr",
      [](const InArray& s, std::array<std::size_t, 4> target, std::array<std::size_t, 4> background) {
        const auto q = refine::snr_cnr(to_array(s), Window{target[0], target[1], target[2], target[3]},
                                       Window{background[0], background[1], background[2], background[3]});
        return py::make_tuple(q.snr, q.cnr);
      },
      py::arg("strain"), py::arg("target"), py::arg("background"),
      "Windows are (row, col, rows, cols). Returns (snr, cnr).");

  m.def(
      "f1_score",
      [](std::size_t tp, std::size_t fp, std::size_t fn, std::size_t tn) {
        const auto r = select::confusion_metrics(tp, fp, fn, tn);
        return py::make_tuple(r.accuracy, r.f1);
      },
      py::arg("tp"), py::arg("fp"), py::arg("fn"), py::arg("tn"), "Returns (accuracy, f1).");

  m.def(
      "run_cli",
      [](std::vector<std::string> args) {
        args.insert(args.begin(), "elasto");
        return cli::run(args);
      },
      py::arg("args"),
      "Runs the command-line tool in-process with the given arguments (without the program name).");
}
