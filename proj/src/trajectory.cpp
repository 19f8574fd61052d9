#include "qdot/trajectory.hpp"

#include <cmath>
#include <random>
#include <stdexcept>

#include <unsupported/Eigen/MatrixFunctions>

namespace qdot {

NoJumpEvolution::NoJumpEvolution(const ModelParams& p, double dt)
    : gamma_down_dt_(p.gamma_down * dt), gamma_up_dt_(p.gamma_up * dt) {
  const Mat3 cd = lowering_down();
  const Mat3 cu = lowering_up();
  const Mat3 decay = p.gamma_down * (cd * cd.adjoint()) +
                     p.gamma_up * (cu.adjoint() * cu);
  const Mat3 h_eff = build_hamiltonian(p.omega) - cplx(0.0, 0.5) * decay;
  kraus_ = (cplx(0.0, -dt) * h_eff).exp();
}

NoJumpStep NoJumpEvolution::step(const DensityMatrix& rho) const {
  NoJumpStep out;
  out.p_in = rho.population(BasisIndex::Empty) * gamma_down_dt_;
  out.p_out = rho.population(BasisIndex::Up) * gamma_up_dt_;
  out.state = DensityMatrix(
      repair_state(kraus_ * rho.matrix() * kraus_.adjoint()));
  return out;
}

NoJumpStep step_no_jump(const DensityMatrix& rho, const ModelParams& p,
                        double dt) {
  if (p.gamma_down * dt >= 0.1 || p.gamma_up * dt >= 0.1)
    throw std::invalid_argument("gamma * dt must stay below 0.1");
  return NoJumpEvolution(p, dt).step(rho);
}

DensityMatrix apply_jump(JumpKind kind) {
  return kind == JumpKind::ChargeIn ? DensityMatrix::basis(BasisIndex::Down)
                                    : DensityMatrix::basis(BasisIndex::Empty);
}

std::int64_t step_count(double duration, double dt) {
  if (!(duration >= 0.0)) throw std::invalid_argument("duration must be >= 0");
  const double n = duration / dt;
  const auto steps = std::llround(n);
  if (std::abs(n - static_cast<double>(steps)) > 1e-6)
    throw std::invalid_argument("duration must be a whole number of dt_sim steps");
  return steps;
}

TrajectoryRecord simulate_trajectory(const ModelParams& p, double duration,
                                     std::uint64_t seed) {
  validate(p, /*for_simulation=*/true);
  const std::int64_t steps = step_count(duration, p.dt_sim);

  TrajectoryRecord rec;
  rec.params = p;
  rec.seed = seed;
  rec.duration = duration;
  rec.p_up.resize(steps + 1);
  rec.occupancy.resize(steps + 1);

  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> uniform(0.0, 1.0);
  const NoJumpEvolution evolve(p, p.dt_sim);

  // The unravelling keeps a pure state, so the state vector is evolved
  // directly: rho = psi psi^dagger.
  using Vec3c = Eigen::Matrix<cplx, 3, 1>;
  const Mat3& kraus = evolve.kraus();
  const double gd_dt = p.gamma_down * p.dt_sim;
  const double gu_dt = p.gamma_up * p.dt_sim;
  Vec3c psi = Vec3c::Unit(index_of(BasisIndex::Empty));
  bool charged = false;
  rec.p_up[0] = 0.0;
  rec.occupancy[0] = 0;
  for (std::int64_t i = 0; i < steps; ++i) {
    const double p_in = std::norm(psi(0)) * gd_dt;
    const double p_out = std::norm(psi(2)) * gu_dt;
    psi = kraus * psi;
    psi /= psi.norm();
    const double u = uniform(rng);
    if (u < p_in + p_out) {
      const JumpKind kind = u < p_in ? JumpKind::ChargeIn : JumpKind::ChargeOut;
      psi = Vec3c::Unit(kind == JumpKind::ChargeIn ? index_of(BasisIndex::Down)
                                                   : index_of(BasisIndex::Empty));
      charged = kind == JumpKind::ChargeIn;
      rec.events.push_back({(i + 1) * p.dt_sim, kind});
    }
    rec.p_up[i + 1] = charged ? std::norm(psi(2)) : 0.0;
    rec.occupancy[i + 1] = charged ? 1 : 0;
  }
  return rec;
}

std::vector<std::uint8_t> bin_occupancy(const TrajectoryRecord& traj,
                                        std::int64_t steps_per_bin) {
  if (steps_per_bin <= 0)
    throw std::invalid_argument("steps_per_bin must be positive");
  const std::int64_t steps = traj.steps();
  if (steps % steps_per_bin != 0)
    throw std::invalid_argument("trajectory is not a whole number of bins");
  std::vector<std::uint8_t> out(static_cast<std::size_t>(steps / steps_per_bin));
  for (std::size_t b = 0; b < out.size(); ++b) {
    std::int64_t occ = 0;
    for (std::int64_t s = 0; s < steps_per_bin; ++s)
      occ += traj.occupancy[b * steps_per_bin + s];
    out[b] = 2 * occ >= steps_per_bin ? 1 : 0;
  }
  return out;
}

}  // namespace qdot
