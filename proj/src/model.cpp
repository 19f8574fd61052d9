#include "qdot/model.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include <unsupported/Eigen/MatrixFunctions>

namespace qdot {

namespace {

const cplx kI{0.0, 1.0};

// Eigenvalues in [-kNoiseFloor, 0) are rounding noise of rank-deficient
// states and are left alone.
constexpr double kNoiseFloor = 1e-13;

Mat3 hermitize(const Mat3& m) { return 0.5 * (m + m.adjoint()); }

Mat3 project_psd(const Mat3& m) {
  Eigen::SelfAdjointEigenSolver<Mat3> es(m);
  Eigen::Vector3d ev = es.eigenvalues().cwiseMax(0.0);
  return es.eigenvectors() * ev.asDiagonal() * es.eigenvectors().adjoint();
}

Mat3 dissipator(const Mat3& c, const Mat3& rho) {
  const Mat3 cd = c.adjoint();
  const Mat3 cdc = cd * c;
  return c * rho * cd - 0.5 * (cdc * rho + rho * cdc);
}

Mat3 adjoint_dissipator(const Mat3& c, const Mat3& e) {
  const Mat3 cd = c.adjoint();
  const Mat3 cdc = cd * c;
  return cd * e * c - 0.5 * (cdc * e + e * cdc);
}

}  // namespace

std::string to_string(BasisIndex b) {
  switch (b) {
    case BasisIndex::Empty: return "empty";
    case BasisIndex::Down: return "down";
    case BasisIndex::Up: return "up";
  }
  return "?";
}

DensityMatrix::DensityMatrix() : m_(Mat3::Zero()) { m_(0, 0) = 1.0; }

DensityMatrix DensityMatrix::basis(BasisIndex b) {
  Mat3 m = Mat3::Zero();
  m(index_of(b), index_of(b)) = 1.0;
  return DensityMatrix(m);
}

DensityMatrix DensityMatrix::diagonal(double p_empty, double p_down,
                                      double p_up) {
  Mat3 m = Mat3::Zero();
  m(0, 0) = p_empty;
  m(1, 1) = p_down;
  m(2, 2) = p_up;
  return DensityMatrix(m);
}

std::int64_t ModelParams::steps_per_bin() const {
  return std::llround(bin_dt / dt_sim);
}

void validate(const ModelParams& p, bool for_simulation) {
  auto fail = [](const std::string& what) {
    throw std::invalid_argument("invalid model parameters: " + what);
  };
  if (!(p.omega >= 0.0)) fail("omega must be >= 0");
  if (!(p.gamma_down >= 0.0) || !(p.gamma_up >= 0.0))
    fail("tunneling rates must be >= 0");
  if (!(p.r0 >= 0.0) || !(p.r1 >= 0.0)) fail("QPC rates must be >= 0");
  if (!(p.dt_sim > 0.0)) fail("dt_sim must be > 0");
  if (!(p.bin_dt > 0.0)) fail("bin_dt must be > 0");
  const double ratio = p.bin_dt / p.dt_sim;
  if (std::llround(ratio) < 1 ||
      std::abs(ratio - std::round(ratio)) > 1e-9 * ratio)
    fail("bin_dt must be an integer multiple of dt_sim");
  if (for_simulation &&
      (p.gamma_down * p.dt_sim >= 0.1 || p.gamma_up * p.dt_sim >= 0.1))
    fail("gamma * dt_sim must stay below 0.1");
}

Mat3 build_hamiltonian(double omega) {
  Mat3 h = Mat3::Zero();
  h(1, 2) = h(2, 1) = omega / 2.0;
  return h;
}

Mat3 lowering_down() {
  Mat3 c = Mat3::Zero();
  c(0, 1) = 1.0;
  return c;
}

Mat3 lowering_up() {
  Mat3 c = Mat3::Zero();
  c(0, 2) = 1.0;
  return c;
}

Mat3 projector(BasisIndex b) {
  Mat3 m = Mat3::Zero();
  m(index_of(b), index_of(b)) = 1.0;
  return m;
}

Mat3 projector_empty() { return projector(BasisIndex::Empty); }

Mat3 projector_occupied() {
  return projector(BasisIndex::Down) + projector(BasisIndex::Up);
}

Lindbladian physical_lindbladian(const ModelParams& p) {
  Lindbladian l;
  l.hamiltonian = build_hamiltonian(p.omega);
  l.channels.push_back({p.gamma_down, lowering_down().adjoint()});
  l.channels.push_back({p.gamma_up, lowering_up()});
  return l;
}

Lindbladian incoherent_part(const Lindbladian& l) {
  Lindbladian out = l;
  out.hamiltonian.setZero();
  return out;
}

Mat3 apply_generator(const Lindbladian& l, const Mat3& rho) {
  Mat3 out = -kI * (l.hamiltonian * rho - rho * l.hamiltonian);
  for (const auto& ch : l.channels) out += ch.rate * dissipator(ch.op, rho);
  return out;
}

Mat3 apply_adjoint_generator(const Lindbladian& l, const Mat3& e) {
  Mat3 out = kI * (l.hamiltonian * e - e * l.hamiltonian);
  for (const auto& ch : l.channels)
    out += ch.rate * adjoint_dissipator(ch.op, e);
  return out;
}

Mat3 lindblad_rhs(const DensityMatrix& rho, const ModelParams& p) {
  return apply_generator(physical_lindbladian(p), rho.matrix());
}

Mat3 no_jump_rhs(const DensityMatrix& rho, const ModelParams& p) {
  const Mat3 h = build_hamiltonian(p.omega);
  const Mat3& r = rho.matrix();
  const Mat3 cd = lowering_down();
  const Mat3 cu = lowering_up();
  const Mat3 in_term = cd * cd.adjoint();  // |0><0|
  const Mat3 out_term = cu.adjoint() * cu;  // |up><up|
  return -kI * (h * r - r * h) -
         0.5 * p.gamma_down * (in_term * r + r * in_term) -
         0.5 * p.gamma_up * (out_term * r + r * out_term);
}

Super superoperator(const Lindbladian& l) {
  // vec(A X B) = (B^T kron A) vec(X) for column stacking.
  const Mat3 id = Mat3::Identity();
  auto kron = [](const Mat3& a, const Mat3& b) {
    Super k;
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j) k.block<3, 3>(3 * i, 3 * j) = a(i, j) * b;
    return k;
  };
  Super s = -kI * (kron(id, l.hamiltonian) -
                   kron(l.hamiltonian.transpose(), id));
  for (const auto& ch : l.channels) {
    const Mat3 cdc = ch.op.adjoint() * ch.op;
    s += ch.rate * (kron(ch.op.conjugate(), ch.op) - 0.5 * kron(id, cdc) -
                    0.5 * kron(cdc.transpose(), id));
  }
  return s;
}

Propagator::Propagator(const Lindbladian& l, double tau) : tau_(tau) {
  if (!(tau > 0.0))
    throw std::invalid_argument("propagator duration must be > 0");
  const Super gen = superoperator(l) * cplx(tau, 0.0);
  forward_ = gen.exp();
  // <A, B> = tr(A^dagger B); the adjoint map is the conjugate transpose.
  adjoint_ = forward_.adjoint();
}

Mat3 Propagator::apply(const Mat3& rho) const {
  Mat3 out;
  Eigen::Map<Vec9>(out.data()) = forward_ * Eigen::Map<const Vec9>(rho.data());
  return out;
}

Mat3 Propagator::apply_adjoint(const Mat3& e) const {
  Mat3 out;
  Eigen::Map<Vec9>(out.data()) = adjoint_ * Eigen::Map<const Vec9>(e.data());
  return out;
}

Propagator make_propagator(const ModelParams& p, double tau) {
  return Propagator(physical_lindbladian(p), tau);
}

Propagator make_propagator(const Lindbladian& l, double tau) {
  return Propagator(l, tau);
}

DensityMatrix steady_state(const Lindbladian& l) {
  // Replace one equation of L vec(rho) = 0 by tr(rho) = 1.
  Super a = superoperator(l);
  Vec9 b = Vec9::Zero();
  a.row(0).setZero();
  for (int i = 0; i < 3; ++i) a(0, i + 3 * i) = 1.0;
  b(0) = 1.0;
  Eigen::FullPivLU<Super> lu(a);
  lu.setThreshold(1e-12);
  if (lu.rank() == 9) {
    return DensityMatrix(repair_state(unvectorize(lu.solve(b))));
  }
  double slowest = 0.0;
  for (const auto& ch : l.channels)
    if (ch.rate > 0.0) slowest = slowest == 0.0 ? ch.rate : std::min(slowest, ch.rate);
  const double horizon = slowest > 0.0 ? 200.0 / slowest : 1.0;
  Propagator long_time(l, horizon);
  return DensityMatrix(
      repair_state(long_time.apply(DensityMatrix().matrix())));
}

double hermiticity_error(const Mat3& m) {
  return (m - m.adjoint()).cwiseAbs().maxCoeff();
}

double min_eigenvalue(const Mat3& m) {
  // Closed-form eigenvalues of a Hermitian 3x3 via the trigonometric
  // solution of the characteristic cubic.
  const Mat3 h = hermitize(m);
  const double a00 = h(0, 0).real(), a11 = h(1, 1).real(), a22 = h(2, 2).real();
  const double p1 = std::norm(h(0, 1)) + std::norm(h(0, 2)) + std::norm(h(1, 2));
  const double q = (a00 + a11 + a22) / 3.0;
  if (p1 == 0.0) return std::min({a00, a11, a22});
  const double p2 = (a00 - q) * (a00 - q) + (a11 - q) * (a11 - q) +
                    (a22 - q) * (a22 - q) + 2.0 * p1;
  const double p = std::sqrt(p2 / 6.0);
  const Mat3 b = (h - q * Mat3::Identity()) / p;
  const double r = std::clamp(0.5 * b.determinant().real(), -1.0, 1.0);
  const double phi = std::acos(r) / 3.0;
  const double lo = q + 2.0 * p * std::cos(phi + 2.0 * std::numbers::pi / 3.0);
  // Near a degenerate pair the cubic loses about sqrt(eps) relative accuracy.
  if (std::abs(lo) < 1e-6 * (std::abs(q) + p)) {
    Eigen::SelfAdjointEigenSolver<Mat3> es(h, Eigen::EigenvaluesOnly);
    return es.eigenvalues()(0);
  }
  return lo;
}

namespace {

// True when h + floor * I admits a Cholesky factorization, i.e. every
// eigenvalue of h is at least -floor up to rounding.
bool above_floor(const Mat3& h, double floor) {
  return Eigen::LLT<Mat3>(h + floor * Mat3::Identity()).info() == Eigen::Success;
}

}  // namespace

Mat3 repair_state(const Mat3& m) {
  Mat3 h = hermitize(m);
  const double tr = h.trace().real();
  if (!(tr > 0.0) || !std::isfinite(tr))
    throw NumericalError("density matrix lost its trace");
  h /= tr;
  if (above_floor(h, kNoiseFloor)) return h;
  const double lo = min_eigenvalue(h);
  if (lo < -kNegativeEigTol)
    throw NumericalError("density matrix eigenvalue " + std::to_string(lo) +
                         " below -1e-10");
  if (lo < -kNoiseFloor) {
    h = project_psd(h);
    h /= h.trace().real();
  }
  return h;
}

Mat3 repair_effect(const Mat3& m) {
  Mat3 h = hermitize(m);
  const double tr = h.trace().real();
  if (!(tr > 0.0) || !std::isfinite(tr))
    throw NumericalError("effect matrix lost its trace");
  h /= tr;
  if (above_floor(h, kNoiseFloor)) return h;
  const double lo = min_eigenvalue(h);
  if (lo < -kNegativeEigTol)
    throw NumericalError("effect matrix eigenvalue below -1e-10");
  if (lo < -kNoiseFloor) {
    h = project_psd(h);
    h /= h.trace().real();
  }
  return h;
}

}  // namespace qdot
