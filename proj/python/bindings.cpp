#include <pybind11/operators.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <qdot/estimation.hpp>
#include <qdot/io.hpp>
#include <qdot/sensor.hpp>
#include <qdot/smoother.hpp>
#include <qdot/trajectory.hpp>

namespace py = pybind11;
using namespace qdot;

PYBIND11_MODULE(_core, m) {
  m.doc() = "Driven quantum dot under charge sensing";
  m.attr("__version__") = "0.1.0";

  py::register_exception<NumericalError>(m, "NumericalError");
  py::register_exception<FormatError>(m, "FormatError");

  py::class_<ModelParams>(m, "ModelParams")
      .def(py::init<>())
      .def(py::init([](double omega, double gamma_down, double gamma_up, double r0, double r1,
                       double dt_sim, double bin_dt) {
             return ModelParams{omega, gamma_down, gamma_up, r0, r1, dt_sim, bin_dt};
           }),
           py::arg("omega") = 5.0, py::arg("gamma_down") = 3.0, py::arg("gamma_up") = 3.0,
           py::arg("r0") = 31210.0, py::arg("r1") = 24970.0, py::arg("dt_sim") = 0.001,
           py::arg("bin_dt") = 0.01)
      .def_readwrite("omega", &ModelParams::omega)
      .def_readwrite("gamma_down", &ModelParams::gamma_down)
      .def_readwrite("gamma_up", &ModelParams::gamma_up)
      .def_readwrite("r0", &ModelParams::r0)
      .def_readwrite("r1", &ModelParams::r1)
      .def_readwrite("dt_sim", &ModelParams::dt_sim)
      .def_readwrite("bin_dt", &ModelParams::bin_dt)
      .def("steps_per_bin", &ModelParams::steps_per_bin)
      .def("validate", [](const ModelParams& p, bool sim) { validate(p, sim); },
           py::arg("for_simulation") = false)
      .def(py::self == py::self)
      .def("__repr__", [](const ModelParams& p) {
        return "ModelParams(omega=" + std::to_string(p.omega) +
               ", gamma_down=" + std::to_string(p.gamma_down) +
               ", gamma_up=" + std::to_string(p.gamma_up) + ")";
      });

  py::enum_<JumpKind>(m, "JumpKind")
      .value("CHARGE_IN", JumpKind::ChargeIn)
      .value("CHARGE_OUT", JumpKind::ChargeOut);

  py::class_<JumpEvent>(m, "JumpEvent")
      .def_readonly("time", &JumpEvent::time)
      .def_readonly("kind", &JumpEvent::kind);

  py::class_<TrajectoryRecord>(m, "TrajectoryRecord")
      .def_readonly("params", &TrajectoryRecord::params)
      .def_readonly("seed", &TrajectoryRecord::seed)
      .def_readonly("duration", &TrajectoryRecord::duration)
      .def_readonly("events", &TrajectoryRecord::events)
      .def_readonly("p_up", &TrajectoryRecord::p_up)
      .def_readonly("occupancy", &TrajectoryRecord::occupancy)
      .def("steps", &TrajectoryRecord::steps);

  py::class_<CountRecord>(m, "CountRecord")
      .def(py::init<>())
      .def_readwrite("bin_dt", &CountRecord::bin_dt)
      .def_readwrite("r0", &CountRecord::r0)
      .def_readwrite("r1", &CountRecord::r1)
      .def_readwrite("seed", &CountRecord::seed)
      .def_readwrite("duration", &CountRecord::duration)
      .def_readwrite("counts", &CountRecord::counts)
      .def("bins", &CountRecord::bins);

  py::class_<SmoothedTimeline>(m, "SmoothedTimeline")
      .def_readonly("bin_dt", &SmoothedTimeline::bin_dt)
      .def_readonly("filter_occupation", &SmoothedTimeline::filter_occupation)
      .def_readonly("pqs_occupation", &SmoothedTimeline::pqs_occupation)
      .def_readonly("total_log_likelihood", &SmoothedTimeline::total_log_likelihood);

  py::class_<DwellHistogram>(m, "DwellHistogram")
      .def_readonly("occupied", &DwellHistogram::occupied)
      .def_readonly("empty", &DwellHistogram::empty)
      .def_readonly("edges", &DwellHistogram::edges)
      .def_readonly("counts", &DwellHistogram::counts);

  py::class_<DwellFit>(m, "DwellFit")
      .def_readonly("omega", &DwellFit::omega)
      .def_readonly("gamma_up", &DwellFit::gamma_up)
      .def_readonly("gamma_down", &DwellFit::gamma_down)
      .def_readonly("log_likelihood", &DwellFit::log_likelihood)
      .def_readonly("occupied_intervals", &DwellFit::occupied_intervals)
      .def_readonly("empty_intervals", &DwellFit::empty_intervals);

  py::class_<LikelihoodGrid>(m, "LikelihoodGrid")
      .def_readonly("candidates", &LikelihoodGrid::candidates)
      .def_readonly("log_likelihood", &LikelihoodGrid::log_likelihood)
      .def_readonly("snapshot_times", &LikelihoodGrid::snapshot_times)
      .def_readonly("snapshots", &LikelihoodGrid::snapshots)
      .def_readonly("argmax", &LikelihoodGrid::argmax)
      .def("best", &LikelihoodGrid::best)
      .def("posterior", &LikelihoodGrid::posterior)
      .def("posterior_mean", &LikelihoodGrid::posterior_mean)
      .def("posterior_width", &LikelihoodGrid::posterior_width);

  py::class_<RateEstimate>(m, "RateEstimate")
      .def_readonly("gamma_down", &RateEstimate::gamma_down)
      .def_readonly("gamma_up", &RateEstimate::gamma_up)
      .def_readonly("iteration", &RateEstimate::iteration)
      .def_property_readonly("history", [](const RateEstimate& r) {
        py::list out;
        for (const auto& e : r.history) out.append(py::make_tuple(e.iteration, e.gamma_down, e.gamma_up));
        return out;
      });

  py::class_<HybridStep>(m, "HybridStep")
      .def_readonly("outer", &HybridStep::outer)
      .def_readonly("phase", &HybridStep::phase)
      .def_readonly("omega", &HybridStep::omega)
      .def_readonly("gamma_down", &HybridStep::gamma_down)
      .def_readonly("gamma_up", &HybridStep::gamma_up)
      .def_readonly("log_likelihood", &HybridStep::log_likelihood);

  py::class_<HybridResult>(m, "HybridResult")
      .def_readonly("omega", &HybridResult::omega)
      .def_readonly("gamma_down", &HybridResult::gamma_down)
      .def_readonly("gamma_up", &HybridResult::gamma_up)
      .def_readonly("converged", &HybridResult::converged)
      .def_readonly("outer_iterations", &HybridResult::outer_iterations)
      .def_readonly("history", &HybridResult::history)
      .def_readonly("last_grid", &HybridResult::last_grid);

  m.def("derive_seed",
        [](std::uint64_t root, std::uint64_t stream) { return derive_seed(root, stream); },
        py::arg("root"), py::arg("stream"));
  m.def("simulate_trajectory", &simulate_trajectory, py::arg("params"), py::arg("duration"),
        py::arg("seed"), py::call_guard<py::gil_scoped_release>());
  m.def("synthesize_counts", &synthesize_counts, py::arg("trajectory"), py::arg("params"),
        py::arg("seed"), py::call_guard<py::gil_scoped_release>());
  m.def("bin_occupancy", &bin_occupancy, py::arg("trajectory"), py::arg("steps_per_bin"));
  m.def("current_from_counts", &current_from_counts, py::arg("m"), py::arg("tau"));
  m.def(
      "smooth",
      [](const CountRecord& r, const ModelParams& p) { return smooth(r, p); },
      py::arg("record"), py::arg("params"), py::call_guard<py::gil_scoped_release>());
  m.def("misassignment_fraction",
        [](const std::vector<double>& prob, const std::vector<std::uint8_t>& truth,
           double threshold) { return misassignment_fraction(prob, truth, threshold); },
        py::arg("probability"), py::arg("truth"), py::arg("threshold") = 0.5);
  m.def("dwell_pdf", &dwell_pdf, py::arg("t"), py::arg("omega"), py::arg("gamma_up"),
        py::arg("gamma_down"));
  m.def(
      "extract_dwells",
      [](const std::vector<double>& occ, double bin_dt, double threshold, std::size_t bins) {
        return extract_dwells(occ, bin_dt, threshold, bins);
      },
      py::arg("occupation"), py::arg("bin_dt"), py::arg("threshold") = 0.5,
      py::arg("histogram_bins") = 50);
  m.def("exponential_rate_mle",
        [](const std::vector<double>& d) { return exponential_rate_mle(d); }, py::arg("durations"));
  m.def("fit_dwell_histogram", &fit_dwell_histogram, py::arg("histogram"),
        py::call_guard<py::gil_scoped_release>());
  m.def("uniform_grid", &uniform_grid, py::arg("lo"), py::arg("hi"), py::arg("n"));
  m.def(
      "bayes_omega",
      [](const CountRecord& r, const std::vector<double>& grid, double gd, double gu,
         const ModelParams& base, std::size_t snapshot_every) {
        return bayes_omega(r, grid, gd, gu, base, snapshot_every);
      },
      py::arg("record"), py::arg("grid"), py::arg("gamma_down"), py::arg("gamma_up"),
      py::arg("base"), py::arg("snapshot_every") = 0, py::call_guard<py::gil_scoped_release>());
  m.def(
      "bw_reestimate",
      [](const CountRecord& r, const ModelParams& g, bool coherent) {
        BwOptions o;
        o.coherent = coherent;
        return bw_reestimate(r, g, o);
      },
      py::arg("record"), py::arg("guess"), py::arg("coherent") = true,
      py::call_guard<py::gil_scoped_release>());
  m.def(
      "bw_iterate",
      [](const CountRecord& r, const ModelParams& g, int iterations) {
        return bw_iterate(r, g, iterations);
      },
      py::arg("record"), py::arg("guess"), py::arg("iterations"),
      py::call_guard<py::gil_scoped_release>());
  m.def(
      "hybrid_estimate",
      [](const CountRecord& r, const std::vector<double>& grid, const ModelParams& g, int n_inner,
         int n_outer, double tolerance) {
        return hybrid_estimate(r, grid, g, n_inner, n_outer, tolerance);
      },
      py::arg("record"), py::arg("grid"), py::arg("guess"), py::arg("n_inner") = 5,
      py::arg("n_outer") = 5, py::arg("tolerance") = 1e-3,
      py::call_guard<py::gil_scoped_release>());

  m.def(
      "read_count_record",
      [](const std::filesystem::path& p) { return read_count_record(p).record; }, py::arg("path"));
  m.def(
      "write_count_record",
      [](const std::filesystem::path& p, const CountRecord& r) { write_count_record(p, r); },
      py::arg("path"), py::arg("record"));
  m.def("file_digest", &file_digest, py::arg("path"));
}
