#include "tlsmon/analysis.hpp"
#include "tlsmon/bench.hpp"
#include "tlsmon/config_io.hpp"
#include "tlsmon/error.hpp"
#include "tlsmon/pipeline.hpp"
#include "tlsmon/registration.hpp"
#include "tlsmon/synth.hpp"

#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

namespace py = pybind11;
using namespace tlsmon;

namespace {

using Points = Eigen::Matrix<double, Eigen::Dynamic, 3, Eigen::RowMajor>;

Points to_array(const std::vector<Point3>& pts) {
  Points out(static_cast<Eigen::Index>(pts.size()), 3);
  for (std::size_t i = 0; i < pts.size(); ++i) out.row(static_cast<Eigen::Index>(i)) = pts[i].transpose();
  return out;
}

PointCloud to_cloud(const Eigen::Ref<const Points>& a) {
  PointCloud c;
  c.points.resize(static_cast<std::size_t>(a.rows()));
  for (Eigen::Index i = 0; i < a.rows(); ++i) c.points[static_cast<std::size_t>(i)] = a.row(i).transpose();
  return c;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Native core of the tlsmon slope-monitoring library";

  static py::exception<Error> error_type(m, "TlsmonError", PyExc_RuntimeError);
  py::register_exception_translator([](std::exception_ptr p) {
    try {
      if (p) std::rethrow_exception(p);
    } catch (const Error& e) {
      py::set_error(error_type, (std::string(to_string(e.code())) + ": " + e.what()).c_str());
    }
  });

  m.def("error_budget", &error_budget, py::arg("m_tls"), py::arg("m_mreg"), py::arg("m_treg"), py::arg("m_veg"),
        py::arg("m_mesh"), "Propagated error in mm");
  m.def("relative_error", &relative_error, py::arg("sigma_mm"), py::arg("displacement_m"));
  m.def("shape_angle", &shape_angle, py::arg("W_m"), py::arg("L_m"));
  m.def("classify_shape", [](double theta) { return std::string(to_string(classify_shape(theta))); }, py::arg("theta_deg"));
  m.def(
      "interval_days", [](const std::string& a, const std::string& b) { return interval_days(parse_date(a), parse_date(b)); },
      py::arg("earlier"), py::arg("later"));

  m.def(
      "gen_terrain",
      [](std::pair<double, double> extent, double slope, double roughness, double density, std::uint64_t seed) {
        TerrainParams p;
        p.extent = {extent.first, extent.second};
        p.mean_slope_deg = slope;
        p.roughness = roughness;
        p.density = density;
        p.seed = seed;
        return to_array(gen_terrain(p).cloud.points);
      },
      py::arg("extent"), py::arg("mean_slope_deg") = 70.0, py::arg("roughness") = 0.5, py::arg("density") = 154.0,
      py::arg("seed") = 1, "Points of a synthetic slope as an (N, 3) array");

  m.def(
      "register",
      [](const Eigen::Ref<const Points>& source, const Eigen::Ref<const Points>& target, const std::string& method) {
        const auto s = to_cloud(source), t = to_cloud(target);
        HybridParams hp;
        RegistrationResult r;
        if (method == "icp") {
          r = icp(s, t, hp.icp);
        } else if (method == "coarse+icp") {
          r = icp(s, t, hp.icp, coarse_register(s, t, hp.coarse).transform);
        } else if (method == "hybrid") {
          r = register_global_hybrid(s, t, hp);
        } else {
          throw Error(ErrorCode::Parameter, "unknown method '" + method + "'");
        }
        return py::make_tuple(Eigen::Matrix4d(r.transform.matrix()), r.rmse);
      },
      py::arg("source"), py::arg("target"), py::arg("method") = "hybrid",
      "Returns the 4x4 source-to-target matrix and the inlier RMS distance");

  m.def("example_config", [] { return pipeline_config_to_json(example_landslide_config()).dump(); });
  m.def(
      "run_pipeline",
      [](const std::string& config_json) {
        nlohmann::json doc;
        try {
          doc = nlohmann::json::parse(config_json);
        } catch (const nlohmann::json::parse_error& e) {
          throw Error(ErrorCode::Parse, e.what());
        }
        const auto cfg = pipeline_config_from_json(doc);
        PipelineResult res;
        {
          py::gil_scoped_release release;
          res = run_pipeline(cfg);
        }
        return write_report(res.report);
      },
      py::arg("config_json"), "Runs the pipeline and returns report.json text");
  m.def(
      "bench_table2",
      [](int trials, std::uint64_t seed, std::vector<std::string> methods) {
        BenchConfig c;
        c.trials = trials;
        c.seed = seed;
        c.methods = std::move(methods);
        BenchReport r;
        {
          py::gil_scoped_release release;
          r = run_table2_benchmark(c);
        }
        return bench_to_json(r, false).dump();
      },
      py::arg("trials") = 5, py::arg("seed") = 1, py::arg("methods") = kBenchMethods);
}
