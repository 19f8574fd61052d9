#pragma once

#include <cstdint>
#include <vector>

#include "qdot/model.hpp"

namespace qdot {

enum class JumpKind { ChargeIn, ChargeOut };

struct JumpEvent {
  double time = 0.0;  // end of the dt_sim step in which the jump fired
  JumpKind kind = JumpKind::ChargeIn;
  bool operator==(const JumpEvent&) const = default;
};

/// Ground-truth history. Dense samples live on the grid t_i = i * dt_sim,
/// i = 0..steps; occupancy[i] is the charge during [t_i, t_{i+1}) and a jump
/// that fires in step i shows up from sample i + 1 on.
struct TrajectoryRecord {
  ModelParams params;
  std::uint64_t seed = 0;
  double duration = 0.0;
  std::vector<JumpEvent> events;
  std::vector<double> p_up;
  std::vector<std::uint8_t> occupancy;

  std::int64_t steps() const {
    return static_cast<std::int64_t>(occupancy.size()) - 1;
  }
  double time(std::int64_t i) const { return i * params.dt_sim; }
};

struct NoJumpStep {
  DensityMatrix state;  // renormalized
  double p_in = 0.0;
  double p_out = 0.0;
};

/// exp(-i H_eff dt) for the non-Hermitian no-jump Hamiltonian, built once per
/// (params, dt) and reused for every step of a trajectory.
class NoJumpEvolution {
 public:
  NoJumpEvolution(const ModelParams& p, double dt);

  NoJumpStep step(const DensityMatrix& rho) const;
  const Mat3& kraus() const { return kraus_; }

 private:
  Mat3 kraus_;
  double gamma_down_dt_;
  double gamma_up_dt_;
};

NoJumpStep step_no_jump(const DensityMatrix& rho, const ModelParams& p,
                        double dt);

DensityMatrix apply_jump(JumpKind kind);

TrajectoryRecord simulate_trajectory(const ModelParams& p, double duration,
                                     std::uint64_t seed);

/// Majority occupancy of each block of `steps_per_bin` steps. Ties count as
/// occupied.
std::vector<std::uint8_t> bin_occupancy(const TrajectoryRecord& traj,
                                        std::int64_t steps_per_bin);

/// Number of dt_sim steps covering `duration`; throws if it is not a whole
/// number of steps.
std::int64_t step_count(double duration, double dt);

}  // namespace qdot
