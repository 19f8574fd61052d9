#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "qdot/model.hpp"
#include "qdot/sensor.hpp"
#include "qdot/smoother.hpp"

namespace qdot {

// ---------------------------------------------------------------------------
// Dwell times

/// Occupied-interval density
///   w(t) = -(2 omega^2 gamma_up / kappa^2) exp(-t gamma_down / 2)
///          (cos(t kappa / 2) - 1),   kappa = sqrt(4 omega^2 - gamma_up^2).
/// Requires 2 omega > max(gamma_up, gamma_down); returns 0 for t < 0.
double dwell_pdf(double t, double omega, double gamma_up, double gamma_down);

struct DwellHistogram {
  std::vector<double> occupied;  // us
  std::vector<double> empty;     // us
  std::vector<double> edges;     // histogram of `occupied`
  std::vector<std::int64_t> counts;
};

/// Maximal runs above (occupied) and at-or-below (empty) `threshold`; runs
/// touching either end of the record are dropped.
DwellHistogram extract_dwells(std::span<const double> occupation,
                              double bin_dt, double threshold = 0.5,
                              std::size_t histogram_bins = 50);
DwellHistogram extract_dwells(const SmoothedTimeline& timeline,
                              double threshold = 0.5,
                              std::size_t histogram_bins = 50);

/// Rate of an exponential fitted to `durations` by maximum likelihood.
double exponential_rate_mle(std::span<const double> durations);

struct DwellFit {
  double omega = 0.0;
  double gamma_up = 0.0;
  double gamma_down = 0.0;  // from the empty intervals; NaN if there are none
  double log_likelihood = 0.0;
  std::size_t occupied_intervals = 0;
  std::size_t empty_intervals = 0;
};

/// Maximum-likelihood fit of dwell_pdf to the raw occupied intervals, with
/// the decay rate tied (gamma_down = gamma_up inside the density so that it
/// stays normalized).
DwellFit fit_dwell_histogram(const DwellHistogram& hist);

// ---------------------------------------------------------------------------
// Bayesian grid over omega

std::vector<double> uniform_grid(double lo, double hi, std::size_t n);

struct LikelihoodGrid {
  std::vector<double> candidates;
  std::vector<double> log_likelihood;  // -inf for candidates that underflowed
  std::vector<double> snapshot_times;  // us, end of the snapshot bin
  std::vector<std::vector<double>> snapshots;  // [snapshot][candidate]
  std::size_t argmax = 0;  // ties go to the smaller candidate

  double best() const { return candidates[argmax]; }
  /// Uniform prior, normalized over the grid.
  std::vector<double> posterior() const;
  double posterior_mean() const;
  /// Posterior standard deviation over the grid.
  double posterior_width() const;
};

/// Filters the record once per candidate omega with the rates held fixed.
/// `base` supplies r0, r1, bin_dt. A snapshot of every candidate's running
/// log-likelihood is kept each `snapshot_every` bins (0 disables).
LikelihoodGrid bayes_omega(const CountRecord& record,
                           std::span<const double> grid, double gamma_down,
                           double gamma_up, const ModelParams& base,
                           std::size_t snapshot_every = 0);

/// Running log-likelihood of one hypothesis; -inf once any bin underflows.
double record_log_likelihood(const CountRecord& record,
                             const InferenceModel& model);

// ---------------------------------------------------------------------------
// Quantum-modified Baum-Welch

/// tr(|j><j| exp(L dt){|i><i| rho |i><i|} |j><j| E_next).
double bw_joint(const Mat3& rho, const Mat3& e_next, const Propagator& prop,
                BasisIndex i, BasisIndex j);

/// Row i, column j: gamma_ij * dt averaged over the record.
using TransitionTable = Eigen::Matrix3d;

struct BwOptions {
  /// false drops the Hamiltonian from the propagator inside bw_joint only.
  bool coherent = true;
  SweepOptions sweep;
};

/// Sum over bins of the joint table, each bin divided by the full two-bin
/// joint likelihood tr(exp(L dt){rho_k} F_{k+1}), then each row divided by
/// its sum. Rows for states that were never populated are NaN.
TransitionTable bw_transition_table(const CountRecord& record,
                                    const InferenceModel& model,
                                    const BwOptions& options = {});

struct RateEstimate {
  double gamma_down = 0.0;
  double gamma_up = 0.0;
  int iteration = 0;
  struct Entry {
    int iteration;
    double gamma_down;
    double gamma_up;
  };
  std::vector<Entry> history;  // history[0] is the starting guess
};

/// One re-estimation sweep under `guess`.
RateEstimate bw_reestimate(const CountRecord& record, const ModelParams& guess,
                           const BwOptions& options = {});

/// `iterations` sweeps, each feeding its rates into the next.
RateEstimate bw_iterate(const CountRecord& record, const ModelParams& guess,
                        int iterations, const BwOptions& options = {});

struct HybridStep {
  int outer = 0;
  std::string phase;  // "start", "baum-welch" or "bayes"
  double omega = 0.0;
  double gamma_down = 0.0;
  double gamma_up = 0.0;
  double log_likelihood = 0.0;  // only set for bayes steps
};

struct HybridResult {
  double omega = 0.0;
  double gamma_down = 0.0;
  double gamma_up = 0.0;
  bool converged = false;
  int outer_iterations = 0;
  std::vector<HybridStep> history;
  LikelihoodGrid last_grid;
};

/// Alternates n_inner Baum-Welch sweeps at fixed omega with a Bayesian grid
/// pick of omega at fixed rates, up to n_outer times or until the largest
/// relative parameter change drops below `tolerance`. Without convergence the
/// outer iterate with the highest log-likelihood is returned.
HybridResult hybrid_estimate(const CountRecord& record,
                             std::span<const double> omega_grid,
                             const ModelParams& guess, int n_inner = 5,
                             int n_outer = 5, double tolerance = 1e-3);

}  // namespace qdot
