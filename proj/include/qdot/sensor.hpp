#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "qdot/model.hpp"
#include "qdot/trajectory.hpp"

namespace qdot {

/// Elementary charge [C].
inline constexpr double kElementaryCharge = 1.602176634e-19;

/// Electron counts per measurement bin. The only thing inference may read.
struct CountRecord {
  double bin_dt = 0.01;  // us
  double r0 = 0.0;       // counts/us
  double r1 = 0.0;
  std::uint64_t seed = 0;
  double duration = 0.0;  // us
  std::vector<std::int64_t> counts;

  std::size_t bins() const { return counts.size(); }
};

CountRecord synthesize_counts(const TrajectoryRecord& traj,
                              const ModelParams& p, std::uint64_t seed);

/// I = m e / tau in nA, with tau in us.
double current_from_counts(double m, double tau);

double log_factorial(std::int64_t m);
/// log Poisson(m; mean). mean == 0 gives 0 for m == 0 and -inf otherwise.
double poisson_log_pmf(std::int64_t m, double mean);

struct ElementaryOutcome {
  DensityMatrix state;
  double probability = 0.0;
};

/// Single-electron click / no-click measurement over dt with operators
/// M_c = sqrt(r0 dt) Pi_0 + sqrt(r1 dt) Pi_1 and
/// M_nc = sqrt(1 - r0 dt) Pi_0 + sqrt(1 - r1 dt) Pi_1.
ElementaryOutcome elementary_povm(const DensityMatrix& rho, bool clicked,
                                  double r0_dt, double r1_dt);

/// Log weights of the bin operator M_m = sqrt(w0) Pi_0 + sqrt(w1) Pi_1.
struct BinMeasurement {
  double log_w0 = 0.0;
  double log_w1 = 0.0;
};

BinMeasurement poisson_bin_measurement(std::int64_t m, double mean0,
                                       double mean1);

/// Result of a bin update. `likelihood` is exp(log_likelihood) and may be 0
/// when the bin is too improbable; `underflow` flags likelihood < 1e-300.
/// The state update itself is done with weights relative to the larger one,
/// so it stays valid whenever log_likelihood is finite.
struct BinUpdate {
  DensityMatrix state;
  double likelihood = 0.0;
  double log_likelihood = 0.0;
  bool underflow = false;
};

inline constexpr double kLogUnderflow = -690.7755278982137;  // log(1e-300)

/// Generic two-weight bin operator, evaluated in log space.
BinUpdate apply_bin_measurement(const DensityMatrix& rho,
                                const BinMeasurement& w);

/// Poisson bin operator for m counts over one bin of `p`.
BinUpdate bin_povm(const DensityMatrix& rho, std::int64_t m,
                   const ModelParams& p);

/// Scales E -> M^dagger E M (unnormalized weights relative to the larger one).
Mat3 weight_effect(const Mat3& e, const BinMeasurement& w);

}  // namespace qdot
