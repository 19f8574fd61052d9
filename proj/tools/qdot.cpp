#include <cmath>
#include <cstdlib>
#include <functional>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <fmt/core.h>

#include <qdot/estimation.hpp>
#include <qdot/io.hpp>
#include <qdot/smoother.hpp>

namespace fs = std::filesystem;
using nlohmann::json;
using namespace qdot;

namespace {

constexpr int kOk = 0;
constexpr int kUsage = 2;
constexpr int kNumerical = 3;

// Flag values land in `flags`; only flags given on the command line are
// copied over the configuration file (or defaults) afterwards.
class ConfigFlags {
 public:
  void attach(CLI::App& app) {
    app.add_option("--config", config_path_, "JSON run configuration")
        ->check(CLI::ExistingFile);
    add(app, "--omega", "Rabi frequency [rad/us]", &RunConfig::params, &ModelParams::omega);
    add(app, "--gamma-down", "charging rate [1/us]", &RunConfig::params, &ModelParams::gamma_down);
    add(app, "--gamma-up", "discharging rate [1/us]", &RunConfig::params, &ModelParams::gamma_up);
    add(app, "--r0", "sensor click rate, dot empty [1/us]", &RunConfig::params, &ModelParams::r0);
    add(app, "--r1", "sensor click rate, dot occupied [1/us]", &RunConfig::params, &ModelParams::r1);
    add(app, "--dt-sim", "simulation step [us]", &RunConfig::params, &ModelParams::dt_sim);
    add(app, "--bin-dt", "measurement bin [us]", &RunConfig::params, &ModelParams::bin_dt);
    add(app, "--duration", "record length [us]", &RunConfig::duration);
    add(app, "--seed", "root seed", &RunConfig::seed);
    add(app, "--threshold", "occupation threshold", &RunConfig::threshold);
    add(app, "--grid-lo", "lowest omega candidate [rad/us]", &RunConfig::omega_grid_lo);
    add(app, "--grid-hi", "highest omega candidate [rad/us]", &RunConfig::omega_grid_hi);
    add(app, "--grid-n", "number of omega candidates", &RunConfig::omega_grid_n);
    add(app, "--guess-omega", "starting omega [rad/us]", &RunConfig::guess_omega);
    add(app, "--guess-gamma-down", "starting charging rate [1/us]", &RunConfig::guess_gamma_down);
    add(app, "--guess-gamma-up", "starting discharging rate [1/us]", &RunConfig::guess_gamma_up);
    add(app, "--n-inner", "Baum-Welch sweeps per outer iteration", &RunConfig::n_inner);
    add(app, "--n-outer", "outer iterations", &RunConfig::n_outer);
    add(app, "--tolerance", "relative convergence tolerance", &RunConfig::tolerance);
    add(app, "--histogram-bins", "dwell histogram bins", &RunConfig::histogram_bins);
    add(app, "--snapshot-every", "likelihood snapshot spacing [bins]", &RunConfig::snapshot_every);
    add(app, "--in-memory-limit", "largest record smoothed in memory [bins]",
        &RunConfig::in_memory_limit);
    add(app, "--checkpoint-interval", "checkpoint spacing [bins]",
        &RunConfig::checkpoint_interval);
  }

  RunConfig resolve() const {
    RunConfig c = config_path_ ? load_config(*config_path_) : RunConfig{};
    for (const auto& apply : appliers_) apply(c);
    validate(c);
    return c;
  }

 private:
  template <class T>
  void add(CLI::App& app, const std::string& name, const std::string& help,
           T RunConfig::*field) {
    CLI::Option* opt = app.add_option(name, flags_.*field, help);
    appliers_.push_back([this, opt, field](RunConfig& c) {
      if (opt->count() > 0) c.*field = flags_.*field;
    });
  }
  template <class T>
  void add(CLI::App& app, const std::string& name, const std::string& help,
           ModelParams RunConfig::*group, T ModelParams::*field) {
    CLI::Option* opt = app.add_option(name, (flags_.*group).*field, help);
    appliers_.push_back([this, opt, group, field](RunConfig& c) {
      if (opt->count() > 0) (c.*group).*field = (flags_.*group).*field;
    });
  }

  RunConfig flags_;
  std::optional<std::string> config_path_;
  std::vector<std::function<void(RunConfig&)>> appliers_;
};

json provenance(const RunConfig& c, const json& inputs) {
  return json{{"config", to_json(c)}, {"config_sha256", config_digest(c)}, {"inputs", inputs}};
}

json input_entry(const fs::path& path) {
  return json{{"sha256", file_digest(path)}};
}

void announce_config(const RunConfig& c) {
  fmt::print("root seed: {}\n", c.seed);
  fmt::print("config sha256: {}\n", config_digest(c));
}

void announce_input(const char* role, const fs::path& path) {
  fmt::print("input {} {} sha256: {}\n", role, path.string(), file_digest(path));
}

void announce_output(const fs::path& path) {
  fmt::print("wrote {} sha256: {}\n", path.string(), file_digest(path));
}

int cmd_config(const RunConfig& c, const fs::path& out) {
  save_config(c, out);
  announce_config(c);
  announce_output(out);
  return kOk;
}

int cmd_simulate(const RunConfig& c, const fs::path& out) {
  const std::uint64_t seed = derive_seed(c.seed, SeedStream::Trajectory);
  announce_config(c);
  fmt::print("trajectory seed: {}\n", seed);
  const TrajectoryRecord rec = simulate_trajectory(c.params, c.duration, seed);
  write_trajectory(out, rec, provenance(c, json::object()));
  fmt::print("steps: {} jumps: {}\n", rec.steps(), rec.events.size());
  announce_output(out);
  return kOk;
}

int cmd_sense(const RunConfig& c, const fs::path& trajectory, const fs::path& out) {
  const std::uint64_t seed = derive_seed(c.seed, SeedStream::Sensor);
  announce_config(c);
  announce_input("trajectory", trajectory);
  fmt::print("sensor seed: {}\n", seed);
  const TrajectoryFile traj = read_trajectory(trajectory);
  const CountRecord rec = synthesize_counts(traj.record, c.params, seed);
  write_count_record(out, rec,
                     provenance(c, json{{"trajectory", input_entry(trajectory)}}));
  fmt::print("bins: {}\n", rec.counts.size());
  announce_output(out);
  return kOk;
}

SweepOptions sweep_options(const RunConfig& c) {
  SweepOptions s;
  s.in_memory_limit = c.in_memory_limit;
  s.checkpoint_interval = c.checkpoint_interval;
  return s;
}

CountFile load_counts(const fs::path& counts) {
  announce_input("counts", counts);
  CountFile f = read_count_record(counts);
  fmt::print("count record seed: {}\n", f.record.seed);
  return f;
}

int cmd_smooth(const RunConfig& c, const fs::path& counts, const fs::path& out) {
  announce_config(c);
  const CountFile f = load_counts(counts);
  const SmoothedTimeline tl = smooth(f.record, c.params, sweep_options(c));
  write_timeline(out, tl, c.threshold,
                 provenance(c, json{{"counts", input_entry(counts)}}));
  fmt::print("log-likelihood: {:.10g}\n", tl.total_log_likelihood);
  announce_output(out);
  return kOk;
}

json grid_json(const LikelihoodGrid& g) {
  json j{{"omega_candidates", g.candidates},
         {"argmax", g.argmax},
         {"best_omega", g.best()},
         {"posterior", g.posterior()},
         {"posterior_mean", g.posterior_mean()},
         {"posterior_width", g.posterior_width()}};
  json ll = json::array();
  for (double v : g.log_likelihood) ll.push_back(std::isfinite(v) ? json(v) : json(nullptr));
  j["log_likelihood"] = ll;
  return j;
}

ModelParams guess_params(const RunConfig& c) {
  ModelParams g = c.params;
  g.omega = c.guess_omega;
  g.gamma_down = c.guess_gamma_down;
  g.gamma_up = c.guess_gamma_up;
  return g;
}

int cmd_estimate(const RunConfig& c, const std::string& method, const fs::path& counts,
                 const fs::path& out, const std::optional<fs::path>& likelihood_csv) {
  announce_config(c);
  const CountFile f = load_counts(counts);
  const CountRecord& rec = f.record;
  const std::vector<double> grid = uniform_grid(c.omega_grid_lo, c.omega_grid_hi, c.omega_grid_n);
  json report{{"method", method}};
  std::optional<LikelihoodGrid> likelihood;

  if (method == "bayes") {
    LikelihoodGrid g =
        bayes_omega(rec, grid, c.params.gamma_down, c.params.gamma_up, c.params, c.snapshot_every);
    report["estimate"] = {{"omega_rad_per_us", g.best()},
                          {"gamma_down_per_us", c.params.gamma_down},
                          {"gamma_up_per_us", c.params.gamma_up}};
    report["grid"] = grid_json(g);
    fmt::print("omega: {:.6g}\n", g.best());
    likelihood = std::move(g);
  } else if (method == "baum-welch") {
    const ModelParams guess = guess_params(c);
    const RateEstimate r = bw_iterate(rec, guess, c.n_inner);
    json hist = json::array();
    for (const auto& e : r.history)
      hist.push_back({{"iteration", e.iteration},
                      {"gamma_down_per_us", e.gamma_down},
                      {"gamma_up_per_us", e.gamma_up}});
    report["estimate"] = {{"omega_rad_per_us", guess.omega},
                          {"gamma_down_per_us", r.gamma_down},
                          {"gamma_up_per_us", r.gamma_up}};
    report["history"] = hist;
    fmt::print("gamma_down: {:.6g} gamma_up: {:.6g}\n", r.gamma_down, r.gamma_up);
  } else {
    const HybridResult h =
        hybrid_estimate(rec, grid, guess_params(c), c.n_inner, c.n_outer, c.tolerance);
    json hist = json::array();
    for (const auto& s : h.history) {
      json e{{"outer", s.outer},
             {"phase", s.phase},
             {"omega_rad_per_us", s.omega},
             {"gamma_down_per_us", s.gamma_down},
             {"gamma_up_per_us", s.gamma_up}};
      if (s.phase == "bayes")
        e["log_likelihood"] = std::isfinite(s.log_likelihood) ? json(s.log_likelihood) : json(nullptr);
      hist.push_back(e);
    }
    report["estimate"] = {{"omega_rad_per_us", h.omega},
                          {"gamma_down_per_us", h.gamma_down},
                          {"gamma_up_per_us", h.gamma_up}};
    report["converged"] = h.converged;
    report["outer_iterations"] = h.outer_iterations;
    report["history"] = hist;
    if (!h.last_grid.candidates.empty()) report["grid"] = grid_json(h.last_grid);
    fmt::print("omega: {:.6g} gamma_down: {:.6g} gamma_up: {:.6g} converged: {}\n", h.omega,
               h.gamma_down, h.gamma_up, h.converged);
    if (!h.last_grid.candidates.empty()) likelihood = h.last_grid;
  }

  report["seeds"] = {{"root", c.seed}, {"count_record", rec.seed}};
  const json prov = provenance(c, json{{"counts", input_entry(counts)}});
  report.update(prov);
  write_json(out, report);
  announce_output(out);
  if (likelihood_csv) {
    if (!likelihood)
      throw std::invalid_argument("--likelihood-csv needs the bayes or hybrid method");
    write_likelihood_evolution(*likelihood_csv, *likelihood, prov);
    announce_output(*likelihood_csv);
  }
  return kOk;
}

int cmd_histogram(const RunConfig& c, const fs::path& timeline, const fs::path& out,
                  const std::optional<fs::path>& fit_out) {
  announce_config(c);
  announce_input("timeline", timeline);
  const TimelineFile tl = read_timeline(timeline);
  const DwellHistogram h = extract_dwells(tl.pqs, tl.bin_dt, c.threshold, c.histogram_bins);
  const json prov = provenance(c, json{{"timeline", input_entry(timeline)}});
  write_histogram(out, h, prov);
  fmt::print("occupied intervals: {} empty intervals: {}\n", h.occupied.size(), h.empty.size());
  announce_output(out);
  if (fit_out) {
    const DwellFit fit = fit_dwell_histogram(h);
    json j{{"omega_rad_per_us", fit.omega},
           {"gamma_up_per_us", fit.gamma_up},
           {"gamma_down_per_us", std::isfinite(fit.gamma_down) ? json(fit.gamma_down) : json(nullptr)},
           {"log_likelihood", fit.log_likelihood},
           {"occupied_intervals", fit.occupied_intervals},
           {"empty_intervals", fit.empty_intervals}};
    j.update(prov);
    write_json(*fit_out, j);
    fmt::print("omega: {:.6g} gamma_up: {:.6g}\n", fit.omega, fit.gamma_up);
    announce_output(*fit_out);
  }
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Driven quantum dot: trajectory simulation, charge sensing and inference"};
  app.require_subcommand(1);
  ConfigFlags flags;
  flags.attach(app);

  std::string out;
  std::string input;
  std::string method = "hybrid";
  std::optional<std::string> extra;

  CLI::App* config = app.add_subcommand("config", "write the resolved configuration");
  config->add_option("-o,--out", out, "configuration JSON")->required();

  CLI::App* simulate = app.add_subcommand("simulate", "simulate a quantum trajectory");
  simulate->add_option("-o,--out", out, "trajectory CSV")->required();

  CLI::App* sense = app.add_subcommand("sense", "synthesize sensor counts from a trajectory");
  sense->add_option("-t,--trajectory", input, "trajectory CSV")->required()->check(CLI::ExistingFile);
  sense->add_option("-o,--out", out, "count record CSV")->required();

  CLI::App* smooth_cmd = app.add_subcommand("smooth", "filter and smooth a count record");
  smooth_cmd->add_option("-c,--counts", input, "count record CSV")->required()->check(CLI::ExistingFile);
  smooth_cmd->add_option("-o,--out", out, "timeline CSV")->required();

  CLI::App* estimate = app.add_subcommand("estimate", "estimate parameters from a count record");
  estimate->add_option("-c,--counts", input, "count record CSV")->required()->check(CLI::ExistingFile);
  estimate->add_option("-o,--out", out, "report JSON")->required();
  estimate->add_option("-m,--method", method, "estimator")
      ->check(CLI::IsMember({"hybrid", "bayes", "baum-welch"}));
  estimate->add_option("--likelihood-csv", extra, "likelihood evolution CSV");

  CLI::App* histogram = app.add_subcommand("histogram", "dwell-time histogram from a timeline");
  histogram->add_option("-i,--timeline", input, "timeline CSV")->required()->check(CLI::ExistingFile);
  histogram->add_option("-o,--out", out, "histogram CSV")->required();
  histogram->add_option("--fit", extra, "dwell fit JSON");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kUsage;
  }

  const std::optional<fs::path> extra_path =
      extra ? std::optional<fs::path>(*extra) : std::nullopt;
  try {
    const RunConfig c = flags.resolve();
    if (config->parsed()) return cmd_config(c, out);
    if (simulate->parsed()) return cmd_simulate(c, out);
    if (sense->parsed()) return cmd_sense(c, input, out);
    if (smooth_cmd->parsed()) return cmd_smooth(c, input, out);
    if (estimate->parsed()) return cmd_estimate(c, method, input, out, extra_path);
    if (histogram->parsed()) return cmd_histogram(c, input, out, extra_path);
  } catch (const NumericalError& e) {
    std::cerr << "numerical failure: " << e.what() << '\n';
    return kNumerical;
  } catch (const FormatError& e) {
    std::cerr << "input error: " << e.what() << '\n';
    return kUsage;
  } catch (const std::invalid_argument& e) {
    std::cerr << "usage error: " << e.what() << '\n';
    return kUsage;
  } catch (const std::domain_error& e) {
    std::cerr << "usage error: " << e.what() << '\n';
    return kUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return EXIT_FAILURE;
  }
  return kUsage;
}
