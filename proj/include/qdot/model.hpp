#pragma once

#include <complex>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace qdot {

using cplx = std::complex<double>;
using Mat3 = Eigen::Matrix<cplx, 3, 3>;
using Vec9 = Eigen::Matrix<cplx, 9, 1>;
using Super = Eigen::Matrix<cplx, 9, 9>;

/// Raised when a numerical procedure cannot produce a meaningful answer
/// (likelihood underflow, optimizer failure, positivity loss beyond repair).
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Basis ordering used by every matrix and file in the toolkit.
enum class BasisIndex : int { Empty = 0, Down = 1, Up = 2 };

constexpr int index_of(BasisIndex b) { return static_cast<int>(b); }

inline constexpr BasisIndex kBasis[3] = {BasisIndex::Empty, BasisIndex::Down,
                                         BasisIndex::Up};

std::string to_string(BasisIndex b);

// Tolerances shared by the state checks.
inline constexpr double kHermitianTol = 1e-12;
inline constexpr double kTraceTol = 1e-9;
inline constexpr double kNegativeEigTol = 1e-10;

/// Trace-one, Hermitian, positive-semidefinite 3x3 state.
class DensityMatrix {
 public:
  DensityMatrix();  // empty dot |0><0|
  explicit DensityMatrix(const Mat3& m) : m_(m) {}

  static DensityMatrix basis(BasisIndex b);
  static DensityMatrix diagonal(double p_empty, double p_down, double p_up);

  const Mat3& matrix() const { return m_; }
  double population(BasisIndex b) const {
    return m_(index_of(b), index_of(b)).real();
  }
  /// rho_dd + rho_uu.
  double occupation() const { return m_(1, 1).real() + m_(2, 2).real(); }

 private:
  Mat3 m_;
};

/// Retrodiction matrix E(t). Hermitian and PSD but not trace-normalized by
/// the backward dynamics.
class EffectMatrix {
 public:
  EffectMatrix() : m_(Mat3::Identity()) {}
  explicit EffectMatrix(const Mat3& m) : m_(m) {}

  static EffectMatrix identity() { return EffectMatrix(); }
  const Mat3& matrix() const { return m_; }

 private:
  Mat3 m_;
};

/// Physical configuration. Frequencies are angular (rad/us), rates are 1/us,
/// QPC rates are counts/us, times are us.
struct ModelParams {
  double omega = 5.0;
  double gamma_down = 3.0;
  double gamma_up = 3.0;
  double r0 = 31210.0;
  double r1 = 24970.0;
  double dt_sim = 0.001;
  double bin_dt = 0.01;

  /// Number of simulation steps per measurement bin.
  std::int64_t steps_per_bin() const;
  bool operator==(const ModelParams&) const = default;
};

/// Throws std::invalid_argument when `p` violates the model constraints.
/// `for_simulation` adds the first-order jump-sampling bound gamma*dt < 0.1.
void validate(const ModelParams& p, bool for_simulation = false);

// Unit helpers. Frequencies quoted in MHz are taken as angular rad/us
// (factor 1), so dwell-time peaks sit at odd multiples of pi/omega.
constexpr double angular_from_mhz(double mhz) { return mhz; }
constexpr double rate_from_ghz(double ghz) { return ghz * 1e3; }

/// One dissipative channel rate * D[op].
struct Channel {
  double rate = 0.0;
  Mat3 op = Mat3::Zero();
};

/// Generator data: Hamiltonian plus dissipative channels.
struct Lindbladian {
  Mat3 hamiltonian = Mat3::Zero();
  std::vector<Channel> channels;
};

Mat3 build_hamiltonian(double omega);
/// c_down = |0><down|.
Mat3 lowering_down();
/// c_up = |0><up|.
Mat3 lowering_up();
/// Pi_0 and Pi_1 = |down><down| + |up><up|.
Mat3 projector_empty();
Mat3 projector_occupied();
Mat3 projector(BasisIndex b);

/// Charging through c_down^dagger at gamma_down, discharging through c_up at
/// gamma_up, drive at omega.
Lindbladian physical_lindbladian(const ModelParams& p);
/// Same channels with the Hamiltonian removed.
Lindbladian incoherent_part(const Lindbladian& l);

Mat3 apply_generator(const Lindbladian& l, const Mat3& rho);
Mat3 apply_adjoint_generator(const Lindbladian& l, const Mat3& e);

Mat3 lindblad_rhs(const DensityMatrix& rho, const ModelParams& p);
/// Deterministic part of the unravelled evolution; trace decays at
/// gamma_down*rho_00 + gamma_up*rho_uu.
Mat3 no_jump_rhs(const DensityMatrix& rho, const ModelParams& p);

/// Column-stacked superoperator: vec(rho)[i + 3j] = rho(i, j).
Super superoperator(const Lindbladian& l);

inline Vec9 vectorize(const Mat3& m) {
  return Eigen::Map<const Vec9>(m.data());
}
inline Mat3 unvectorize(const Vec9& v) { return Eigen::Map<const Mat3>(v.data()); }

/// exp(L tau) and its Hilbert-Schmidt adjoint exp(L^dagger tau).
class Propagator {
 public:
  Propagator(const Lindbladian& l, double tau);

  double tau() const { return tau_; }
  const Super& forward() const { return forward_; }
  const Super& adjoint() const { return adjoint_; }

  Mat3 apply(const Mat3& rho) const;
  Mat3 apply_adjoint(const Mat3& e) const;

 private:
  double tau_;
  Super forward_;
  Super adjoint_;
};

Propagator make_propagator(const ModelParams& p, double tau);
Propagator make_propagator(const Lindbladian& l, double tau);

/// Null vector of the generator normalized to unit trace. When the steady
/// state is not unique, returns the long-time limit reached from |0><0|.
DensityMatrix steady_state(const Lindbladian& l);

// State hygiene.
double hermiticity_error(const Mat3& m);
double min_eigenvalue(const Mat3& m);
/// Hermitizes, renormalizes to unit trace and projects small negative
/// eigenvalues (down to -1e-10) onto the PSD cone. Anything more negative
/// throws NumericalError.
Mat3 repair_state(const Mat3& m);
/// Hermitizes, projects tiny negative eigenvalues and scales to unit trace.
Mat3 repair_effect(const Mat3& m);

}  // namespace qdot
