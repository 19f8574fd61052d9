#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>

#include <boost/math/tools/minima.hpp>

#include "qdot/estimation.hpp"

namespace qdot {

namespace {

constexpr int kBrentBits = 40;
constexpr std::uintmax_t kBrentMaxIter = 200;

double dwell_log_likelihood(std::span<const double> t, double omega,
                            double gamma) {
  const double kappa2 = 4.0 * omega * omega - gamma * gamma;
  if (!(kappa2 > 0.0) || !(gamma > 0.0))
    return -std::numeric_limits<double>::infinity();
  const double kappa = std::sqrt(kappa2);
  const double log_pref = std::log(2.0 * omega * omega * gamma / kappa2);
  double sum = 0.0;
  for (double x : t) {
    const double osc = 1.0 - std::cos(0.5 * kappa * x);
    if (!(osc > 0.0)) return -std::numeric_limits<double>::infinity();
    sum += log_pref - 0.5 * gamma * x + std::log(osc);
  }
  return sum;
}

struct Profile {
  double gamma;
  double log_likelihood;
};

// Maximizes over gamma in (0, 2 omega) at fixed omega. The profile can have
// a second branch rising towards gamma -> 2 omega, so a coarse scan picks the
// bracket before Brent refines it.
Profile profile_gamma(std::span<const double> t, double omega) {
  constexpr int kGammaScan = 24;
  const double top = 2.0 * omega;
  auto neg_ll = [&](double gamma) {
    const double ll = dwell_log_likelihood(t, omega, gamma);
    return std::isfinite(ll) ? -ll : std::numeric_limits<double>::max();
  };
  int best = 0;
  double best_val = std::numeric_limits<double>::max();
  for (int i = 1; i < kGammaScan; ++i) {
    const double v = neg_ll(top * i / kGammaScan);
    if (v < best_val) best_val = v, best = i;
  }
  const double lo = best > 1 ? top * (best - 1) / kGammaScan : top * 1e-9;
  const double hi = best + 1 < kGammaScan ? top * (best + 1) / kGammaScan
                                          : top * (1.0 - 1e-9);
  std::uintmax_t iters = kBrentMaxIter;
  const auto [g, neg] =
      boost::math::tools::brent_find_minima(neg_ll, lo, hi, kBrentBits, iters);
  const double ll = dwell_log_likelihood(t, omega, g);
  return {g, ll};
}

// Same as profile_gamma but searched only inside [lo, hi].
Profile profile_gamma_in(std::span<const double> t, double omega, double lo,
                         double hi) {
  std::uintmax_t iters = kBrentMaxIter;
  const auto [g, neg] = boost::math::tools::brent_find_minima(
      [&](double gamma) {
        const double ll = dwell_log_likelihood(t, omega, gamma);
        return std::isfinite(ll) ? -ll : std::numeric_limits<double>::max();
      },
      lo, hi, kBrentBits, iters);
  return {g, dwell_log_likelihood(t, omega, g)};
}

}  // namespace

double dwell_pdf(double t, double omega, double gamma_up, double gamma_down) {
  if (!(2.0 * omega > std::max(gamma_up, gamma_down)))
    throw std::domain_error(
        "dwell_pdf requires 2 omega > max(gamma_up, gamma_down)");
  if (t < 0.0) return 0.0;
  const double kappa2 = 4.0 * omega * omega - gamma_up * gamma_up;
  const double kappa = std::sqrt(kappa2);
  return -(2.0 * omega * omega * gamma_up / kappa2) *
         std::exp(-0.5 * t * gamma_down) * (std::cos(0.5 * t * kappa) - 1.0);
}

DwellHistogram extract_dwells(std::span<const double> occupation,
                              double bin_dt, double threshold,
                              std::size_t histogram_bins) {
  if (!(threshold > 0.0 && threshold < 1.0))
    throw std::invalid_argument("threshold must lie in (0, 1)");
  DwellHistogram h;
  const std::size_t n = occupation.size();
  std::size_t start = 0;
  while (start < n) {
    const bool occ = occupation[start] > threshold;
    std::size_t end = start;
    while (end < n && (occupation[end] > threshold) == occ) ++end;
    if (start > 0 && end < n) {
      const double d = static_cast<double>(end - start) * bin_dt;
      (occ ? h.occupied : h.empty).push_back(d);
    }
    start = end;
  }

  const std::size_t nb = std::max<std::size_t>(histogram_bins, 1);
  const double top =
      h.occupied.empty() ? bin_dt
                         : *std::max_element(h.occupied.begin(), h.occupied.end());
  h.edges.resize(nb + 1);
  for (std::size_t i = 0; i <= nb; ++i) h.edges[i] = top * i / nb;
  h.counts.assign(nb, 0);
  for (double d : h.occupied) {
    auto idx = static_cast<std::size_t>(d / top * nb);
    h.counts[std::min(idx, nb - 1)]++;
  }
  return h;
}

DwellHistogram extract_dwells(const SmoothedTimeline& timeline,
                              double threshold, std::size_t histogram_bins) {
  return extract_dwells(timeline.pqs_occupation, timeline.bin_dt, threshold,
                        histogram_bins);
}

double exponential_rate_mle(std::span<const double> durations) {
  if (durations.empty())
    throw std::invalid_argument("no intervals to fit an exponential to");
  const double total = std::accumulate(durations.begin(), durations.end(), 0.0);
  if (!(total > 0.0)) throw std::invalid_argument("intervals must be > 0");
  return static_cast<double>(durations.size()) / total;
}

DwellFit fit_dwell_histogram(const DwellHistogram& hist) {
  const auto& t = hist.occupied;
  if (t.size() < 2)
    throw std::invalid_argument("dwell fit needs at least two occupied intervals");
  const auto [mn, mx] = std::minmax_element(t.begin(), t.end());
  if (!(*mx > *mn))
    throw std::invalid_argument(
        "all occupied intervals have the same length; omega is unidentifiable");

  const double mean = std::accumulate(t.begin(), t.end(), 0.0) / t.size();
  // Coarse geometric scan over omega on an evenly strided subsample.
  constexpr std::size_t kCoarseMax = 4000;
  std::vector<double> coarse;
  const std::size_t stride = (t.size() + kCoarseMax - 1) / kCoarseMax;
  for (std::size_t i = 0; i < t.size(); i += stride) coarse.push_back(t[i]);

  constexpr int kScan = 150;
  const double lo = 0.05 / mean;
  const double hi = 60.0 / mean;
  std::vector<double> omegas(kScan);
  std::vector<Profile> prof(kScan);
  int best = -1;
  for (int i = 0; i < kScan; ++i) {
    omegas[i] = lo * std::pow(hi / lo, static_cast<double>(i) / (kScan - 1));
    prof[i] = profile_gamma(coarse, omegas[i]);
    if (std::isfinite(prof[i].log_likelihood) &&
        (best < 0 || prof[i].log_likelihood > prof[best].log_likelihood))
      best = i;
  }
  if (best < 0)
    throw NumericalError("dwell fit: likelihood is zero for every omega scanned");

  // Refine on all intervals with gamma kept near the coarse optimum.
  const double g0 = prof[best].gamma;
  auto local = [&](double omega) {
    const double top = 2.0 * omega * (1.0 - 1e-9);
    return profile_gamma_in(t, omega, std::min(0.5 * g0, 0.5 * top),
                            std::min(2.0 * g0, top));
  };
  const double a = omegas[std::max(best - 1, 0)];
  const double b = omegas[std::min(best + 1, kScan - 1)];
  std::uintmax_t iters = kBrentMaxIter;
  const auto [omega_hat, neg] = boost::math::tools::brent_find_minima(
      [&](double omega) {
        const double ll = local(omega).log_likelihood;
        return std::isfinite(ll) ? -ll : std::numeric_limits<double>::max();
      },
      a, b, kBrentBits, iters);
  if (iters >= kBrentMaxIter)
    throw NumericalError("dwell fit: omega refinement did not converge");

  const Profile fin = local(omega_hat);
  const Profile at_scan = local(omegas[best]);
  DwellFit fit;
  if (fin.log_likelihood >= at_scan.log_likelihood) {
    fit.omega = omega_hat;
    fit.gamma_up = fin.gamma;
    fit.log_likelihood = fin.log_likelihood;
  } else {
    fit.omega = omegas[best];
    fit.gamma_up = at_scan.gamma;
    fit.log_likelihood = at_scan.log_likelihood;
  }
  if (!std::isfinite(fit.log_likelihood))
    throw NumericalError("dwell fit: refined likelihood is not finite");
  fit.occupied_intervals = t.size();
  fit.empty_intervals = hist.empty.size();
  fit.gamma_down = hist.empty.empty()
                       ? std::numeric_limits<double>::quiet_NaN()
                       : exponential_rate_mle(hist.empty);
  return fit;
}

}  // namespace qdot
