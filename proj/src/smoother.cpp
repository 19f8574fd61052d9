#include "qdot/smoother.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <stdexcept>

namespace qdot {

namespace {

struct ForwardResult {
  Mat3 state;
  double log_likelihood;
};

ForwardResult step_forward(const InferenceModel& model, const Mat3& rho,
                           const BinMeasurement& w, std::size_t k) {
  const BinUpdate u =
      apply_bin_measurement(DensityMatrix(model.propagator.apply(rho)), w);
  if (!std::isfinite(u.log_likelihood)) {
    std::ostringstream msg;
    msg << "likelihood underflow at bin " << k
        << ": the count is impossible under every state the filter allows;"
           " the model parameters are inconsistent with the record";
    throw NumericalError(msg.str());
  }
  return {u.state.matrix(), u.log_likelihood};
}

}  // namespace

InferenceModel::InferenceModel(const Lindbladian& gen, double bin_dt_,
                               double r0, double r1)
    : generator(gen),
      propagator(gen, bin_dt_),
      initial(steady_state(gen)),
      bin_dt(bin_dt_),
      mean0(r0 * bin_dt_),
      mean1(r1 * bin_dt_) {}

InferenceModel InferenceModel::from_params(const ModelParams& p) {
  validate(p);
  return InferenceModel(physical_lindbladian(p), p.bin_dt, p.r0, p.r1);
}

std::vector<BinMeasurement> bin_measurements(const CountRecord& record,
                                             double mean0, double mean1) {
  std::vector<BinMeasurement> out;
  out.reserve(record.counts.size());
  for (auto m : record.counts)
    out.push_back(poisson_bin_measurement(m, mean0, mean1));
  return out;
}

void check_consistent(const CountRecord& record, double bin_dt) {
  if (std::abs(record.bin_dt - bin_dt) > 1e-9 * bin_dt) {
    std::ostringstream msg;
    msg << "count record bin length " << record.bin_dt
        << " us does not match the configured bin_dt " << bin_dt << " us";
    throw std::invalid_argument(msg.str());
  }
}

FilterTimeline filter_forward(const CountRecord& record, const ModelParams& p) {
  return filter_forward(record, InferenceModel::from_params(p));
}

FilterTimeline filter_forward(const CountRecord& record,
                              const InferenceModel& model) {
  check_consistent(record, model.bin_dt);
  const auto weights = bin_measurements(record, model.mean0, model.mean1);
  FilterTimeline out;
  out.bin_dt = model.bin_dt;
  out.states.reserve(weights.size());
  out.log_likelihood_increments.reserve(weights.size());
  out.occupation.reserve(weights.size());
  Mat3 rho = model.initial.matrix();
  const Mat3 id = Mat3::Identity();
  for (std::size_t k = 0; k < weights.size(); ++k) {
    const auto r = step_forward(model, rho, weights[k], k);
    rho = r.state;
    out.states.emplace_back(rho);
    out.log_likelihood_increments.push_back(r.log_likelihood);
    out.occupation.push_back(pqs_occupation(rho, id));
    out.total_log_likelihood += r.log_likelihood;
  }
  return out;
}

std::vector<EffectMatrix> effect_backward(const CountRecord& record,
                                          const ModelParams& p) {
  return effect_backward(record, InferenceModel::from_params(p));
}

std::vector<EffectMatrix> effect_backward(const CountRecord& record,
                                          const InferenceModel& model) {
  check_consistent(record, model.bin_dt);
  const auto weights = bin_measurements(record, model.mean0, model.mean1);
  const std::size_t n = std::max<std::size_t>(weights.size(), 1);
  std::vector<EffectMatrix> out(n);
  Mat3 e = Mat3::Identity();
  for (std::size_t k = n - 1; k > 0; --k) {
    e = repair_effect(
        model.propagator.apply_adjoint(weight_effect(e, weights[k])));
    out[k - 1] = EffectMatrix(e);
  }
  return out;
}

double pqs_occupation(const DensityMatrix& rho, const EffectMatrix& e) {
  return pqs_occupation(rho.matrix(), e.matrix());
}

double pqs_occupation(const Mat3& rho, const Mat3& e) {
  const double empty = (rho(0, 0) * e(0, 0)).real();
  double occupied = 0.0;
  for (int i = 1; i < 3; ++i)
    for (int j = 1; j < 3; ++j) occupied += (rho(i, j) * e(j, i)).real();
  const double norm = empty + occupied;
  if (!(norm > 1e-300))
    throw NumericalError("degenerate past-quantum-state normalization");
  return std::clamp(occupied / norm, 0.0, 1.0);
}

double misassignment_fraction(std::span<const double> occupation,
                              std::span<const std::uint8_t> truth,
                              double threshold) {
  if (occupation.size() != truth.size())
    throw std::invalid_argument("timeline and truth lengths differ");
  if (occupation.empty()) return 0.0;
  std::size_t wrong = 0;
  for (std::size_t k = 0; k < truth.size(); ++k)
    if ((occupation[k] > threshold) != (truth[k] != 0)) ++wrong;
  return static_cast<double>(wrong) / static_cast<double>(truth.size());
}

double forward_backward(const CountRecord& record, const InferenceModel& model,
                        const SweepVisitor& visit,
                        const SweepOptions& options) {
  check_consistent(record, model.bin_dt);
  const auto weights = bin_measurements(record, model.mean0, model.mean1);
  const std::size_t n = weights.size();
  if (n == 0) return 0.0;

  const bool in_memory = n <= options.in_memory_limit;
  const std::size_t block =
      in_memory ? n : std::max<std::size_t>(options.checkpoint_interval, 1);

  // checkpoints[c] is the state entering bin c * block.
  std::vector<Mat3> checkpoints;
  std::vector<Mat3> states;
  if (in_memory) states.reserve(n);
  double total = 0.0;
  Mat3 rho = model.initial.matrix();
  for (std::size_t k = 0; k < n; ++k) {
    if (k % block == 0) checkpoints.push_back(rho);
    const auto r = step_forward(model, rho, weights[k], k);
    rho = r.state;
    total += r.log_likelihood;
    if (in_memory) states.push_back(rho);
  }

  Mat3 e = Mat3::Identity();
  Mat3 f_next;
  bool have_next = false;
  std::vector<Mat3> block_states;
  for (std::size_t c = checkpoints.size(); c-- > 0;) {
    const std::size_t begin = c * block;
    const std::size_t end = std::min(n, begin + block);
    const std::vector<Mat3>* local = &states;
    std::size_t offset = 0;
    if (!in_memory) {
      block_states.clear();
      Mat3 r = checkpoints[c];
      for (std::size_t k = begin; k < end; ++k) {
        r = step_forward(model, r, weights[k], k).state;
        block_states.push_back(r);
      }
      local = &block_states;
      offset = begin;
    }
    for (std::size_t k = end; k-- > begin;) {
      visit(k, (*local)[k - offset], e, have_next ? &f_next : nullptr);
      if (k > 0) {
        f_next = weight_effect(e, weights[k]);
        e = repair_effect(model.propagator.apply_adjoint(f_next));
        have_next = true;
      }
    }
  }
  return total;
}

SmoothedTimeline smooth(const CountRecord& record, const ModelParams& p,
                        const SweepOptions& options) {
  return smooth(record, InferenceModel::from_params(p), options);
}

SmoothedTimeline smooth(const CountRecord& record, const InferenceModel& model,
                        const SweepOptions& options) {
  const std::size_t n = record.counts.size();
  SmoothedTimeline out;
  out.bin_dt = model.bin_dt;
  out.filter_occupation.resize(n);
  out.pqs_occupation.resize(n);
  const bool keep_effects = n <= options.in_memory_limit;
  if (keep_effects) out.effects.resize(n);
  const Mat3 id = Mat3::Identity();
  out.total_log_likelihood = forward_backward(
      record, model,
      [&](std::size_t k, const Mat3& rho, const Mat3& e, const Mat3*) {
        out.filter_occupation[k] = pqs_occupation(rho, id);
        out.pqs_occupation[k] = pqs_occupation(rho, e);
        if (keep_effects) out.effects[k] = EffectMatrix(e);
      },
      options);
  if (n == 0) out.effects.assign(1, EffectMatrix::identity());
  return out;
}

}  // namespace qdot
