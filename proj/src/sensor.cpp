#include "qdot/sensor.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <numbers>
#include <random>
#include <stdexcept>

namespace qdot {

namespace {

constexpr int kTableSize = 21;

// 0! .. 20!, all exactly representable.
constexpr std::array<double, kTableSize> make_factorials() {
  std::array<double, kTableSize> f{};
  f[0] = 1.0;
  for (int i = 1; i < kTableSize; ++i) f[i] = f[i - 1] * i;
  return f;
}

constexpr auto kFactorials = make_factorials();

// sqrt(a_i a_j) scaling of a matrix element for diagonal weights a.
inline void scale_by_weights(Mat3& m, double a0, double a1) {
  const double s01 = std::sqrt(a0 * a1);
  m(0, 0) *= a0;
  m(0, 1) *= s01;
  m(0, 2) *= s01;
  m(1, 0) *= s01;
  m(2, 0) *= s01;
  m(1, 1) *= a1;
  m(1, 2) *= a1;
  m(2, 1) *= a1;
  m(2, 2) *= a1;
}

}  // namespace

double log_factorial(std::int64_t m) {
  if (m < 0) throw std::invalid_argument("log_factorial of negative count");
  if (m < kTableSize) return std::log(kFactorials[m]);
  // Stirling series; truncation error below 1e-16 for m > 20.
  const double x = static_cast<double>(m);
  const double inv = 1.0 / x;
  const double inv2 = inv * inv;
  return x * std::log(x) - x + 0.5 * std::log(2.0 * std::numbers::pi * x) +
         inv * (1.0 / 12.0 - inv2 * (1.0 / 360.0 - inv2 * (1.0 / 1260.0 - inv2 / 1680.0)));
}

double poisson_log_pmf(std::int64_t m, double mean) {
  if (m < 0) return -std::numeric_limits<double>::infinity();
  if (mean == 0.0)
    return m == 0 ? 0.0 : -std::numeric_limits<double>::infinity();
  return static_cast<double>(m) * std::log(mean) - mean - log_factorial(m);
}

CountRecord synthesize_counts(const TrajectoryRecord& traj,
                              const ModelParams& p, std::uint64_t seed) {
  validate(p);
  const std::int64_t per_bin = p.steps_per_bin();
  if (std::abs(traj.params.dt_sim - p.dt_sim) > 1e-12 * p.dt_sim)
    throw std::invalid_argument("trajectory dt_sim does not match parameters");
  const std::int64_t steps = traj.steps();
  if (steps % per_bin != 0)
    throw std::invalid_argument(
        "trajectory duration is not a whole number of measurement bins");

  CountRecord rec;
  rec.bin_dt = p.bin_dt;
  rec.r0 = p.r0;
  rec.r1 = p.r1;
  rec.seed = seed;
  rec.duration = traj.duration;
  const std::int64_t bins = steps / per_bin;
  rec.counts.resize(bins);

  std::mt19937_64 rng(seed);
  for (std::int64_t b = 0; b < bins; ++b) {
    std::int64_t occupied_steps = 0;
    for (std::int64_t i = b * per_bin; i < (b + 1) * per_bin; ++i)
      occupied_steps += traj.occupancy[i];
    const double t_occ = occupied_steps * p.dt_sim;
    const double t_empty = (per_bin - occupied_steps) * p.dt_sim;
    const double mean = p.r0 * t_empty + p.r1 * t_occ;
    if (mean <= 0.0) {
      rec.counts[b] = 0;
      continue;
    }
    std::poisson_distribution<std::int64_t> dist(mean);
    rec.counts[b] = dist(rng);
  }
  return rec;
}

double current_from_counts(double m, double tau) {
  if (!(tau > 0.0)) throw std::invalid_argument("bin duration must be > 0");
  return m * kElementaryCharge / (tau * 1e-6) * 1e9;
}

ElementaryOutcome elementary_povm(const DensityMatrix& rho, bool clicked,
                                  double r0_dt, double r1_dt) {
  if (!(r0_dt >= 0.0 && r0_dt < 1.0 && r1_dt >= 0.0 && r1_dt < 1.0))
    throw std::invalid_argument("elementary POVM requires 0 <= r dt < 1");
  const double a0 = clicked ? r0_dt : 1.0 - r0_dt;
  const double a1 = clicked ? r1_dt : 1.0 - r1_dt;
  Mat3 m = rho.matrix();
  scale_by_weights(m, a0, a1);
  const double prob = m.trace().real();
  ElementaryOutcome out;
  out.probability = prob;
  out.state = prob > 0.0 ? DensityMatrix(m / prob) : rho;
  return out;
}

BinMeasurement poisson_bin_measurement(std::int64_t m, double mean0,
                                       double mean1) {
  if (m < 0) throw std::invalid_argument("negative count");
  return {poisson_log_pmf(m, mean0), poisson_log_pmf(m, mean1)};
}

BinUpdate apply_bin_measurement(const DensityMatrix& rho,
                                const BinMeasurement& w) {
  const double top = std::max(w.log_w0, w.log_w1);
  BinUpdate out;
  if (!std::isfinite(top)) {
    out.state = rho;
    out.likelihood = 0.0;
    out.log_likelihood = -std::numeric_limits<double>::infinity();
    out.underflow = true;
    return out;
  }
  const double a0 = std::exp(w.log_w0 - top);
  const double a1 = std::exp(w.log_w1 - top);
  Mat3 m = rho.matrix();
  scale_by_weights(m, a0, a1);
  const double rel = m(0, 0).real() + m(1, 1).real() + m(2, 2).real();
  if (!(rel > 0.0)) {
    out.state = rho;
    out.log_likelihood = -std::numeric_limits<double>::infinity();
    out.underflow = true;
    return out;
  }
  out.log_likelihood = top + std::log(rel);
  out.likelihood = std::exp(out.log_likelihood);
  out.underflow = out.log_likelihood < kLogUnderflow;
  out.state = DensityMatrix(repair_state(m / rel));
  return out;
}

BinUpdate bin_povm(const DensityMatrix& rho, std::int64_t m,
                   const ModelParams& p) {
  if (m < 0) throw std::invalid_argument("negative count");
  return apply_bin_measurement(
      rho, poisson_bin_measurement(m, p.r0 * p.bin_dt, p.r1 * p.bin_dt));
}

Mat3 weight_effect(const Mat3& e, const BinMeasurement& w) {
  const double top = std::max(w.log_w0, w.log_w1);
  if (!std::isfinite(top))
    throw NumericalError("bin measurement has zero weight for every state");
  Mat3 out = e;
  scale_by_weights(out, std::exp(w.log_w0 - top), std::exp(w.log_w1 - top));
  return out;
}

}  // namespace qdot
