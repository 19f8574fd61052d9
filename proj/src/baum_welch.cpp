#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>
#include <stdexcept>

#include "qdot/estimation.hpp"

namespace qdot {

namespace {

// diag(exp(L dt){|i><i|}) for each i: the only part of the propagated
// projection that the joint table reads.
Eigen::Matrix3d projected_transfer(const Propagator& prop) {
  Eigen::Matrix3d d;
  for (int i = 0; i < 3; ++i) {
    Mat3 proj = Mat3::Zero();
    proj(i, i) = 1.0;
    const Mat3 moved = prop.apply(proj);
    for (int j = 0; j < 3; ++j) d(i, j) = moved(j, j).real();
  }
  return d;
}

Eigen::Matrix3d joint_table(const Mat3& rho, const Mat3& e_next,
                            const Eigen::Matrix3d& transfer) {
  Eigen::Matrix3d c;
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j)
      c(i, j) = std::max(rho(i, i).real() * transfer(i, j) * e_next(j, j).real(), 0.0);
  return c;
}

double max_relative_change(const HybridStep& a, const HybridStep& b) {
  auto rel = [](double x, double y) {
    const double s = std::max(std::abs(x), std::abs(y));
    return s > 0.0 ? std::abs(x - y) / s : 0.0;
  };
  return std::max({rel(a.omega, b.omega), rel(a.gamma_down, b.gamma_down),
                   rel(a.gamma_up, b.gamma_up)});
}

}  // namespace

double bw_joint(const Mat3& rho, const Mat3& e_next, const Propagator& prop,
                BasisIndex i, BasisIndex j) {
  const Mat3 pi = projector(i);
  const Mat3 pj = projector(j);
  const Mat3 moved = prop.apply(pi * rho * pi);
  return std::max((pj * moved * pj * e_next).trace().real(), 0.0);
}

TransitionTable bw_transition_table(const CountRecord& record,
                                    const InferenceModel& model,
                                    const BwOptions& options) {
  const Eigen::Matrix3d transfer = projected_transfer(
      options.coherent ? model.propagator
                       : Propagator(incoherent_part(model.generator), model.bin_dt));
  Eigen::Matrix3d sum = Eigen::Matrix3d::Zero();
  forward_backward(
      record, model,
      [&](std::size_t, const Mat3& rho, const Mat3&, const Mat3* next) {
        if (!next) return;
        // Joint probability of the two bins given the whole record, so each
        // row sums to the smoothed population of the initial state.
        const double norm =
            (model.propagator.apply(rho) * (*next)).trace().real();
        if (norm > 0.0) sum += joint_table(rho, *next, transfer) / norm;
      },
      options.sweep);

  TransitionTable t;
  for (int i = 0; i < 3; ++i) {
    const double row = sum.row(i).sum();
    for (int j = 0; j < 3; ++j)
      t(i, j) = row > 0.0 ? sum(i, j) / row
                          : std::numeric_limits<double>::quiet_NaN();
  }
  return t;
}

RateEstimate bw_reestimate(const CountRecord& record, const ModelParams& guess,
                           const BwOptions& options) {
  const InferenceModel model = InferenceModel::from_params(guess);
  const TransitionTable t = bw_transition_table(record, model, options);
  const int empty = index_of(BasisIndex::Empty);
  const int down = index_of(BasisIndex::Down);
  const int up = index_of(BasisIndex::Up);
  if (std::isnan(t(empty, down)))
    throw NumericalError("Baum-Welch: the empty state is never populated");
  if (std::isnan(t(up, empty)))
    throw NumericalError("Baum-Welch: the spin-up state is never populated");
  RateEstimate r;
  r.gamma_down = t(empty, down) / guess.bin_dt;
  r.gamma_up = t(up, empty) / guess.bin_dt;
  r.iteration = 1;
  r.history = {{0, guess.gamma_down, guess.gamma_up},
               {1, r.gamma_down, r.gamma_up}};
  return r;
}

RateEstimate bw_iterate(const CountRecord& record, const ModelParams& guess,
                        int iterations, const BwOptions& options) {
  if (iterations < 1) throw std::invalid_argument("need at least one iteration");
  RateEstimate r;
  r.history.push_back({0, guess.gamma_down, guess.gamma_up});
  ModelParams p = guess;
  for (int n = 1; n <= iterations; ++n) {
    const RateEstimate step = bw_reestimate(record, p, options);
    p.gamma_down = step.gamma_down;
    p.gamma_up = step.gamma_up;
    r.history.push_back({n, p.gamma_down, p.gamma_up});
  }
  r.gamma_down = p.gamma_down;
  r.gamma_up = p.gamma_up;
  r.iteration = iterations;
  return r;
}

HybridResult hybrid_estimate(const CountRecord& record,
                             std::span<const double> omega_grid,
                             const ModelParams& guess, int n_inner,
                             int n_outer, double tolerance) {
  if (n_inner < 1 || n_outer < 1)
    throw std::invalid_argument("iteration counts must be >= 1");
  HybridResult out;
  ModelParams p = guess;
  HybridStep previous{0, "start", p.omega, p.gamma_down, p.gamma_up, 0.0};
  out.history.push_back(previous);
  HybridStep best{};
  bool have_best = false;

  for (int outer = 1; outer <= n_outer; ++outer) {
    const RateEstimate rates = bw_iterate(record, p, n_inner);
    p.gamma_down = rates.gamma_down;
    p.gamma_up = rates.gamma_up;
    out.history.push_back(
        {outer, "baum-welch", p.omega, p.gamma_down, p.gamma_up, 0.0});

    out.last_grid = bayes_omega(record, omega_grid, p.gamma_down, p.gamma_up, p);
    p.omega = out.last_grid.best();
    const HybridStep current{outer, "bayes", p.omega, p.gamma_down, p.gamma_up,
                             out.last_grid.log_likelihood[out.last_grid.argmax]};
    out.history.push_back(current);
    out.outer_iterations = outer;
    if (!have_best || current.log_likelihood > best.log_likelihood) {
      best = current;
      have_best = true;
    }
    if (max_relative_change(current, previous) < tolerance) {
      out.converged = true;
      break;
    }
    previous = current;
  }

  const HybridStep& pick = out.converged ? out.history.back() : best;
  out.omega = pick.omega;
  out.gamma_down = pick.gamma_down;
  out.gamma_up = pick.gamma_up;
  return out;
}

}  // namespace qdot
