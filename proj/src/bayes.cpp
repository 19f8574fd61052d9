#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "qdot/estimation.hpp"

namespace qdot {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

// Runs the filter and records the running log-likelihood at the requested
// bins. Never throws on underflow; the hypothesis just drops to -inf.
double run_candidate(const InferenceModel& model,
                     const std::vector<BinMeasurement>& weights,
                     std::size_t snapshot_every, std::vector<double>* trace) {
  Mat3 rho = model.initial.matrix();
  double total = 0.0;
  for (std::size_t k = 0; k < weights.size(); ++k) {
    if (std::isfinite(total)) {
      const BinUpdate u =
          apply_bin_measurement(DensityMatrix(model.propagator.apply(rho)),
                                weights[k]);
      if (!std::isfinite(u.log_likelihood)) {
        total = kNegInf;
      } else {
        rho = u.state.matrix();
        total += u.log_likelihood;
      }
    }
    if (trace && snapshot_every > 0 && (k + 1) % snapshot_every == 0)
      trace->push_back(total);
  }
  return total;
}

}  // namespace

std::vector<double> uniform_grid(double lo, double hi, std::size_t n) {
  if (n == 0) throw std::invalid_argument("grid needs at least one point");
  if (n == 1) return {lo};
  if (!(hi > lo)) throw std::invalid_argument("grid upper bound must exceed lower");
  std::vector<double> g(n);
  for (std::size_t i = 0; i < n; ++i)
    g[i] = lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(n - 1);
  return g;
}

std::vector<double> LikelihoodGrid::posterior() const {
  const double top = log_likelihood[argmax];
  std::vector<double> p(log_likelihood.size());
  double sum = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    p[i] = std::isfinite(log_likelihood[i]) ? std::exp(log_likelihood[i] - top) : 0.0;
    sum += p[i];
  }
  for (auto& x : p) x /= sum;
  return p;
}

double LikelihoodGrid::posterior_mean() const {
  const auto p = posterior();
  double m = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) m += p[i] * candidates[i];
  return m;
}

double LikelihoodGrid::posterior_width() const {
  const auto p = posterior();
  const double m = posterior_mean();
  double v = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i)
    v += p[i] * (candidates[i] - m) * (candidates[i] - m);
  return std::sqrt(v);
}

double record_log_likelihood(const CountRecord& record,
                             const InferenceModel& model) {
  check_consistent(record, model.bin_dt);
  return run_candidate(model, bin_measurements(record, model.mean0, model.mean1),
                       0, nullptr);
}

LikelihoodGrid bayes_omega(const CountRecord& record,
                           std::span<const double> grid, double gamma_down,
                           double gamma_up, const ModelParams& base,
                           std::size_t snapshot_every) {
  if (grid.empty()) throw std::invalid_argument("omega grid is empty");
  for (std::size_t i = 1; i < grid.size(); ++i)
    if (!(grid[i] > grid[i - 1]))
      throw std::invalid_argument("omega grid must be strictly increasing");
  check_consistent(record, base.bin_dt);

  const auto weights =
      bin_measurements(record, base.r0 * base.bin_dt, base.r1 * base.bin_dt);
  LikelihoodGrid out;
  out.candidates.assign(grid.begin(), grid.end());
  out.log_likelihood.resize(grid.size());
  std::vector<std::vector<double>> traces(grid.size());

  for (std::size_t c = 0; c < grid.size(); ++c) {
    ModelParams p = base;
    p.omega = grid[c];
    p.gamma_down = gamma_down;
    p.gamma_up = gamma_up;
    const InferenceModel model = InferenceModel::from_params(p);
    out.log_likelihood[c] =
        run_candidate(model, weights, snapshot_every, &traces[c]);
  }

  bool any = false;
  for (std::size_t c = 0; c < grid.size(); ++c) {
    if (!std::isfinite(out.log_likelihood[c])) continue;
    if (!any || out.log_likelihood[c] > out.log_likelihood[out.argmax])
      out.argmax = c;
    any = true;
  }
  if (!any)
    throw NumericalError("every omega candidate underflowed on this record");

  if (snapshot_every > 0) {
    const std::size_t ns = traces.front().size();
    out.snapshots.assign(ns, std::vector<double>(grid.size()));
    for (std::size_t s = 0; s < ns; ++s) {
      out.snapshot_times.push_back(static_cast<double>((s + 1) * snapshot_every) *
                                   record.bin_dt);
      for (std::size_t c = 0; c < grid.size(); ++c)
        out.snapshots[s][c] = traces[c][s];
    }
  }
  return out;
}

}  // namespace qdot
