#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <fmt/core.h>

#include <qdot/estimation.hpp>
#include <qdot/io.hpp>
#include <qdot/sensor.hpp>
#include <qdot/smoother.hpp>
#include <qdot/trajectory.hpp>

#include "oracles.hpp"

using namespace qdot;

namespace {

// Tolerances and sizes, fixed per criterion.
namespace tol {
// 1
constexpr double kSensorRelative = 0.02;
constexpr double kMeanCurrent0 = 5.000, kMeanCurrent1 = 4.000;  // nA
constexpr double kSigma0 = 0.28, kSigma1 = 0.26;                 // nA
constexpr std::size_t kSensorMinBins = 100'000;
// 2
constexpr int kEnsembleTrajectories = 10'000;
constexpr double kEnsembleDuration = 10.0;  // us
constexpr double kEnsembleSigmas = 3.0;
constexpr double kEnsembleFraction = 0.99;
// 3-7
constexpr int kSeeds = 20;
constexpr double kRecord = 1000.0;  // us
constexpr double kStrictFraction = 0.90;
// 4
constexpr double kEmptyRateRelative = 0.10;
constexpr double kOmegaLo = 4.5, kOmegaHi = 5.5;
constexpr double kDwellFraction = 0.80;
// 5
constexpr double kGridLo = 3.5, kGridHi = 6.5;
constexpr std::size_t kGridN = 60;
constexpr double kBayesFraction = 0.90;
constexpr int kWidthSeeds = 5;
constexpr double kWidthRatio = 0.5, kWidthRatioTol = 0.15;
constexpr double kFineLo = 4.6, kFineHi = 5.4;
constexpr std::size_t kFineN = 81;
// 6
constexpr double kFixedPointRelative = 0.10;
constexpr double kConvergeRelative = 0.15;
constexpr int kMaxIterations = 5;
constexpr double kConvergeFraction = 0.80;
// 7
constexpr int kInner = 5, kOuter = 5;
constexpr double kHybridRelative = 0.15;
constexpr double kHybridFraction = 0.80;
// 8
constexpr double kNormalization = 1e-9;
constexpr double kCompleteness = 1e-12;
constexpr double kClassical = 1e-6;
constexpr double kCoherenceShift = 0.01;
}  // namespace tol

const ModelParams kTruth{};  // omega 5, gamma 3/3, r0 tau 312.1, r1 tau 249.7

struct Sample {
  TrajectoryRecord trajectory;
  CountRecord counts;
};

Sample sample(const ModelParams& p, double duration, std::uint64_t seed) {
  Sample s;
  s.trajectory = simulate_trajectory(p, duration, derive_seed(seed, SeedStream::Trajectory));
  s.counts = synthesize_counts(s.trajectory, p, derive_seed(seed, SeedStream::Sensor));
  return s;
}

double rel(double value, double target) { return std::abs(value - target) / std::abs(target); }

bool report(int n, bool pass, const std::string& detail) {
  fmt::print("criterion {}: {} {}\n", n, pass ? "PASS" : "FAIL", detail);
  return pass;
}

// ---------------------------------------------------------------------------

bool sensor_statistics() {
  const Sample s = sample(kTruth, 4000.0, 1);
  const std::int64_t spb = kTruth.steps_per_bin();
  std::vector<double> seg[2];
  for (std::size_t b = 0; b < s.counts.counts.size(); ++b) {
    const auto first = s.trajectory.occupancy.begin() + b * spb;
    const auto last = first + spb;
    if (std::all_of(first, last, [&](auto o) { return o == *first; }))
      seg[*first].push_back(current_from_counts(s.counts.counts[b], kTruth.bin_dt));
  }
  auto stats = [](const std::vector<double>& v) {
    double m = 0.0, q = 0.0;
    for (double x : v) m += x;
    m /= v.size();
    for (double x : v) q += (x - m) * (x - m);
    return std::pair{m, std::sqrt(q / (v.size() - 1))};
  };
  const auto [m0, s0] = stats(seg[0]);
  const auto [m1, s1] = stats(seg[1]);
  const bool pass = seg[0].size() + seg[1].size() >= tol::kSensorMinBins &&
                    rel(m0, tol::kMeanCurrent0) <= tol::kSensorRelative &&
                    rel(m1, tol::kMeanCurrent1) <= tol::kSensorRelative &&
                    rel(s0, tol::kSigma0) <= tol::kSensorRelative &&
                    rel(s1, tol::kSigma1) <= tol::kSensorRelative;
  return report(1, pass,
                fmt::format("bins empty/occupied {}/{}; mean {:.4f}/{:.4f} nA; sd {:.4f}/{:.4f} nA "
                            "(targets 5.000/4.000, 0.28/0.26, rel tol {})",
                            seg[0].size(), seg[1].size(), m0, m1, s0, s1, tol::kSensorRelative));
}

bool ensemble_consistency() {
  const ModelParams p = kTruth;
  const int stride = 10;  // grid every 0.01 us
  const std::int64_t steps = step_count(tol::kEnsembleDuration, p.dt_sim);
  std::vector<double> mean(steps / stride + 1, 0.0);
  for (int s = 0; s < tol::kEnsembleTrajectories; ++s) {
    const TrajectoryRecord r =
        simulate_trajectory(p, tol::kEnsembleDuration, derive_seed(s + 1, SeedStream::Trajectory));
    for (std::size_t k = 0; k < mean.size(); ++k) mean[k] += r.occupancy[k * stride];
  }
  const oracle::Rates rates{p.omega, p.gamma_down, p.gamma_up};
  oracle::M3 rho = oracle::ket_bra(0, 0);
  const double h = p.dt_sim * stride;
  std::size_t inside = 0;
  double worst = 0.0;
  for (std::size_t k = 0; k < mean.size(); ++k) {
    const double pocc = rho(1, 1).real() + rho(2, 2).real();
    const double est = mean[k] / tol::kEnsembleTrajectories;
    const double se = std::sqrt(pocc * (1.0 - pocc) / tol::kEnsembleTrajectories);
    const double dev = std::abs(est - pocc);
    if (dev <= tol::kEnsembleSigmas * se) ++inside;
    if (se > 0.0) worst = std::max(worst, dev / se);
    rho = oracle::evolve(rho, h, rates, 20);
  }
  const double frac = static_cast<double>(inside) / mean.size();
  return report(2, frac >= tol::kEnsembleFraction,
                fmt::format("{}/{} grid points within 3 SE ({:.4f}, need {}); worst {:.2f} SE",
                            inside, mean.size(), frac, tol::kEnsembleFraction, worst));
}

bool smoothing_improves_assignment() {
  int not_worse = 0, strictly = 0;
  double sum_f = 0.0, sum_p = 0.0;
  for (int seed = 1; seed <= tol::kSeeds; ++seed) {
    const Sample s = sample(kTruth, tol::kRecord, seed);
    const auto truth = bin_occupancy(s.trajectory, kTruth.steps_per_bin());
    const SmoothedTimeline tl = smooth(s.counts, kTruth);
    const double f = misassignment_fraction(tl.filter_occupation, truth);
    const double q = misassignment_fraction(tl.pqs_occupation, truth);
    fmt::print("  seed {:2d}: filter {:.5f} pqs {:.5f}\n", seed, f, q);
    not_worse += q <= f;
    strictly += q < f;
    sum_f += f;
    sum_p += q;
  }
  const bool pass = not_worse == tol::kSeeds && strictly >= tol::kStrictFraction * tol::kSeeds;
  return report(3, pass,
                fmt::format("pqs <= filter on {}/{}, strictly lower on {}/{}; mean "
                            "misassignment filter {:.5f} pqs {:.5f}",
                            not_worse, tol::kSeeds, strictly, tol::kSeeds, sum_f / tol::kSeeds,
                            sum_p / tol::kSeeds));
}

bool dwell_physics() {
  int good = 0;
  for (int seed = 1; seed <= tol::kSeeds; ++seed) {
    const Sample s = sample(kTruth, tol::kRecord, seed);
    const SmoothedTimeline tl = smooth(s.counts, kTruth);
    const DwellHistogram h = extract_dwells(tl, 0.5);
    const double rate = exponential_rate_mle(h.empty);
    const DwellFit fit = fit_dwell_histogram(h);
    const bool ok = rel(rate, kTruth.gamma_down) <= tol::kEmptyRateRelative &&
                    fit.omega >= tol::kOmegaLo && fit.omega <= tol::kOmegaHi;
    fmt::print("  seed {:2d}: empty rate {:.4f} omega {:.4f} gamma {:.4f} ({} intervals) {}\n",
               seed, rate, fit.omega, fit.gamma_up, h.occupied.size(), ok ? "ok" : "miss");
    good += ok;
  }
  return report(4, good >= tol::kDwellFraction * tol::kSeeds,
                fmt::format("{}/{} seeds with empty rate within 10% of 3 and omega in [4.5, 5.5]",
                            good, tol::kSeeds));
}

bool bayesian_convergence() {
  const auto grid = uniform_grid(tol::kGridLo, tol::kGridHi, tol::kGridN);
  const double cell = grid[1] - grid[0];
  int hits = 0;
  double mean_best = 0.0;
  for (int seed = 1; seed <= tol::kSeeds; ++seed) {
    const Sample s = sample(kTruth, tol::kRecord, seed);
    const LikelihoodGrid g =
        bayes_omega(s.counts, grid, kTruth.gamma_down, kTruth.gamma_up, kTruth);
    const bool ok = std::abs(g.best() - kTruth.omega) <= cell + 1e-12;
    fmt::print("  seed {:2d}: argmax {:.4f} {}\n", seed, g.best(), ok ? "ok" : "miss");
    hits += ok;
    mean_best += g.best() / tol::kSeeds;
  }
  const bool argmax_ok = hits >= tol::kBayesFraction * tol::kSeeds;

  const auto fine = uniform_grid(tol::kFineLo, tol::kFineHi, tol::kFineN);
  double w1 = 0.0, w4 = 0.0;
  for (int seed = 1; seed <= tol::kWidthSeeds; ++seed) {
    const Sample a = sample(kTruth, tol::kRecord, 100 + seed);
    const Sample b = sample(kTruth, 4.0 * tol::kRecord, 200 + seed);
    const double wa =
        bayes_omega(a.counts, fine, kTruth.gamma_down, kTruth.gamma_up, kTruth).posterior_width();
    const double wb =
        bayes_omega(b.counts, fine, kTruth.gamma_down, kTruth.gamma_up, kTruth).posterior_width();
    fmt::print("  width seed {}: T {:.4f} 4T {:.4f}\n", seed, wa, wb);
    w1 += wa;
    w4 += wb;
  }
  const double ratio = w4 / w1;
  const bool ratio_ok = std::abs(ratio - tol::kWidthRatio) <= tol::kWidthRatioTol;
  return report(5, argmax_ok && ratio_ok,
                fmt::format("argmax within one cell ({:.4f}) of 5 on {}/{} (mean argmax {:.4f}); "
                            "width ratio 4T/T {:.3f} (target 0.5 +- 0.15)",
                            cell, hits, tol::kSeeds, mean_best, ratio));
}

bool baum_welch() {
  ModelParams start = kTruth;
  start.gamma_down = 2.0;
  start.gamma_up = 4.0;
  double sum_d = 0.0, sum_u = 0.0;
  int fixed_ok = 0, converged = 0;
  for (int seed = 1; seed <= tol::kSeeds; ++seed) {
    const Sample s = sample(kTruth, tol::kRecord, seed);
    const RateEstimate at = bw_reestimate(s.counts, kTruth);
    sum_d += at.gamma_down;
    sum_u += at.gamma_up;
    fixed_ok += rel(at.gamma_down, 3.0) <= tol::kFixedPointRelative &&
                rel(at.gamma_up, 3.0) <= tol::kFixedPointRelative;
    const RateEstimate it = bw_iterate(s.counts, start, tol::kMaxIterations);
    int reached = -1;
    for (const auto& e : it.history)
      if (e.iteration > 0 && rel(e.gamma_down, 3.0) <= tol::kConvergeRelative &&
          rel(e.gamma_up, 3.0) <= tol::kConvergeRelative) {
        reached = e.iteration;
        break;
      }
    converged += reached > 0;
    fmt::print("  seed {:2d}: at truth ({:.4f}, {:.4f}); from (2,4) after {} ({:.4f}, {:.4f}), "
               "within 15% at iteration {}\n",
               seed, at.gamma_down, at.gamma_up, tol::kMaxIterations, it.gamma_down, it.gamma_up,
               reached);
  }
  const double md = sum_d / tol::kSeeds, mu = sum_u / tol::kSeeds;
  const bool fixed_pass =
      rel(md, 3.0) <= tol::kFixedPointRelative && rel(mu, 3.0) <= tol::kFixedPointRelative;
  const bool conv_pass = converged >= tol::kConvergeFraction * tol::kSeeds;
  return report(6, fixed_pass && conv_pass,
                fmt::format("at truth mean ({:.4f}, {:.4f}), {}/{} seeds individually within "
                            "10%; from (2,4) within 15% in <= 5 iterations on {}/{}",
                            md, mu, fixed_ok, tol::kSeeds, converged, tol::kSeeds));
}

bool hybrid() {
  ModelParams start = kTruth;
  start.omega = 4.0;
  start.gamma_down = 2.0;
  start.gamma_up = 4.0;
  const auto grid = uniform_grid(tol::kGridLo, tol::kGridHi, tol::kGridN);
  int good = 0;
  for (int seed = 1; seed <= tol::kSeeds; ++seed) {
    const Sample s = sample(kTruth, tol::kRecord, seed);
    const HybridResult h = hybrid_estimate(s.counts, grid, start, tol::kInner, tol::kOuter);
    const bool ok = rel(h.omega, 5.0) <= tol::kHybridRelative &&
                    rel(h.gamma_down, 3.0) <= tol::kHybridRelative &&
                    rel(h.gamma_up, 3.0) <= tol::kHybridRelative;
    fmt::print("  seed {:2d}: omega {:.4f} gamma_down {:.4f} gamma_up {:.4f} outer {} {}\n", seed,
               h.omega, h.gamma_down, h.gamma_up, h.outer_iterations, ok ? "ok" : "miss");
    good += ok;
  }
  return report(7, good >= tol::kHybridFraction * tol::kSeeds,
                fmt::format("{}/{} seeds with all three parameters within 15%", good, tol::kSeeds));
}

// ---------------------------------------------------------------------------

InferenceModel incoherent_model(double a, double b, double tau, double r0, double r1) {
  Lindbladian l;
  l.channels.push_back({a, oracle::ket_bra(1, 0)});
  l.channels.push_back({b, oracle::ket_bra(0, 1)});
  return InferenceModel(l, tau, r0, r1);
}

bool property_suites() {
  std::vector<std::string> failures;
  auto check = [&](bool ok, const std::string& what) {
    fmt::print("  {:<58} {}\n", what, ok ? "ok" : "FAILED");
    if (!ok) failures.push_back(what);
  };

  {
    double worst = 0.0;
    for (double ratio = 1.5; ratio <= 20.0 + 1e-12; ratio += 0.5)
      for (double gamma : {0.5, 3.0, 12.0}) {
        const double omega = ratio * gamma / 2.0;
        auto f = [&](double t) { return dwell_pdf(t, omega, gamma, gamma); };
        // One oscillation period per panel out to exp(-40) of the envelope.
        const double period = 4.0 * M_PI / std::sqrt(4.0 * omega * omega - gamma * gamma);
        const double end = 80.0 / gamma;
        double total = 0.0;
        for (double a = 0.0; a < end; a += period)
          total += boost::math::quadrature::gauss_kronrod<double, 61>::integrate(
              f, a, std::min(a + period, end), 0);
        worst = std::max(worst, std::abs(total - 1.0));
      }
    check(worst <= tol::kNormalization,
          fmt::format("dwell density normalization (worst {:.2e})", worst));
  }

  {
    std::mt19937_64 rng(8);
    double worst = 0.0;
    for (int n = 0; n < 200; ++n) {
      const DensityMatrix rho(oracle::random_state(rng));
      const double r0 = std::uniform_real_distribution<double>(0.0, 0.9)(rng);
      const double r1 = std::uniform_real_distribution<double>(0.0, 0.9)(rng);
      const double pc = elementary_povm(rho, true, r0, r1).probability;
      const double pn = elementary_povm(rho, false, r0, r1).probability;
      worst = std::max(worst, std::abs(pc + pn - 1.0));
    }
    for (double mean0 : {0.5, 31.2, 312.1})
      for (double mean1 : {0.1, 24.9, 249.7}) {
        Eigen::Vector3d sum = Eigen::Vector3d::Zero();
        const double hi = std::max(mean0, mean1);
        const auto top = static_cast<std::int64_t>(hi + 20.0 * std::sqrt(hi) + 50.0);
        for (std::int64_t m = 0; m <= top; ++m) {
          const BinMeasurement w = poisson_bin_measurement(m, mean0, mean1);
          const double w0 = std::exp(w.log_w0), w1 = std::exp(w.log_w1);
          sum += Eigen::Vector3d(w0, w1, w1);
        }
        worst = std::max(worst, (sum - Eigen::Vector3d::Ones()).cwiseAbs().maxCoeff());
      }
    check(worst <= tol::kCompleteness, fmt::format("measurement completeness (worst {:.2e})", worst));
  }

  const Sample s = sample(kTruth, 200.0, 7);
  const InferenceModel model = InferenceModel::from_params(kTruth);
  {
    bool exact_pqs = true, exact_table = true;
    Eigen::Matrix3d plain = Eigen::Matrix3d::Zero(), scaled = Eigen::Matrix3d::Zero();
    const auto& prop = model.propagator;
    forward_backward(s.counts, model,
                     [&](std::size_t k, const Mat3& rho, const Mat3& e, const Mat3* next) {
                       const double c = std::ldexp(1.0, static_cast<int>(k % 81) - 40);
                       exact_pqs &= pqs_occupation(rho, (c * e).eval()) == pqs_occupation(rho, e);
                       if (!next) return;
                       const Mat3 f = *next;
                       const Mat3 fc = c * f;
                       const double n1 = (prop.apply(rho) * f).trace().real();
                       const double n2 = (prop.apply(rho) * fc).trace().real();
                       for (int i = 0; i < 3; ++i)
                         for (int j = 0; j < 3; ++j) {
                           plain(i, j) += bw_joint(rho, f, prop, BasisIndex(i), BasisIndex(j)) / n1;
                           scaled(i, j) += bw_joint(rho, fc, prop, BasisIndex(i), BasisIndex(j)) / n2;
                         }
                     });
    exact_table = plain == scaled;
    check(exact_pqs, "effect rescaling leaves smoothed occupation unchanged");
    check(exact_table, "effect rescaling leaves the transition table unchanged");
  }

  {
    const SmoothedTimeline tl = smooth(s.counts, kTruth);
    check(tl.pqs_occupation.back() == tl.filter_occupation.back(),
          "smoothed occupation equals the filter at the final bin");
  }

  {
    const oracle::Hmm hmm{3.0, 2.0, 312.1, 249.7, 0.01};
    const InferenceModel m = incoherent_model(hmm.a, hmm.b, hmm.tau, 31210, 24970);
    std::mt19937_64 rng(88);
    const auto t = hmm.transition();
    std::vector<std::int64_t> counts(50000);
    int st = std::bernoulli_distribution(hmm.stationary()(1))(rng);
    for (auto& c : counts) {
      st = std::bernoulli_distribution(t(st, 1))(rng);
      c = std::poisson_distribution<std::int64_t>(st ? hmm.mean1 : hmm.mean0)(rng);
    }
    CountRecord rec;
    rec.bin_dt = hmm.tau;
    rec.duration = counts.size() * hmm.tau;
    rec.counts = counts;
    const auto ref = oracle::forward_backward(hmm, counts);
    const SmoothedTimeline tl = smooth(rec, m);
    double worst = 0.0;
    for (std::size_t k = 0; k < counts.size(); ++k) {
      worst = std::max(worst, std::abs(tl.filter_occupation[k] - ref.filter[k]));
      worst = std::max(worst, std::abs(tl.pqs_occupation[k] - ref.smoothed[k]));
    }
    check(worst <= tol::kClassical,
          fmt::format("no-drive forward-backward vs classical chain (worst {:.2e})", worst));
    const TransitionTable q = bw_transition_table(rec, m);
    double bw = 0.0;
    for (int i = 0; i < 2; ++i)
      for (int j = 0; j < 2; ++j) bw = std::max(bw, rel(q(i, j), ref.reestimated(i, j)));
    check(bw <= tol::kClassical,
          fmt::format("no-drive Baum-Welch vs classical re-estimation (worst {:.2e})", bw));
  }

  {
    double worst = 0.0;
    for (int seed = 1; seed <= 5; ++seed) {
      const Sample r = sample(kTruth, tol::kRecord, seed);
      BwOptions inc;
      inc.coherent = false;
      const RateEstimate a = bw_reestimate(r.counts, kTruth);
      const RateEstimate b = bw_reestimate(r.counts, kTruth, inc);
      worst = std::max({worst, rel(b.gamma_down, a.gamma_down), rel(b.gamma_up, a.gamma_up)});
    }
    check(worst < tol::kCoherenceShift,
          fmt::format("coherent propagator part dropped: rate shift {:.2e}", worst));
  }

  return report(8, failures.empty(),
                failures.empty() ? std::string("all properties hold")
                                 : fmt::format("{} properties failed", failures.size()));
}

}  // namespace

int main(int argc, char** argv) {
  std::setvbuf(stdout, nullptr, _IOLBF, 0);
  const std::vector<std::function<bool()>> criteria{
      sensor_statistics, ensemble_consistency, smoothing_improves_assignment,
      dwell_physics,     bayesian_convergence, baum_welch,
      hybrid,            property_suites};
  std::vector<int> which;
  for (int i = 1; i < argc; ++i) which.push_back(std::atoi(argv[i]));
  if (which.empty())
    for (int i = 1; i <= static_cast<int>(criteria.size()); ++i) which.push_back(i);

  bool all = true;
  for (int n : which) {
    if (n < 1 || n > static_cast<int>(criteria.size())) {
      fmt::print(stderr, "no criterion {}\n", n);
      return 2;
    }
    const auto t0 = std::chrono::steady_clock::now();
    try {
      all &= criteria[n - 1]();
    } catch (const std::exception& e) {
      report(n, false, fmt::format("raised: {}", e.what()));
      all = false;
    }
    fmt::print("  ({:.1f} s)\n",
               std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count());
  }
  return all ? 0 : 1;
}
