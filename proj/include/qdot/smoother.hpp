#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "qdot/model.hpp"
#include "qdot/sensor.hpp"

namespace qdot {

/// Everything the filter needs for one hypothesis: the generator, the bin
/// propagator built from it, the starting state and the QPC bin means.
struct InferenceModel {
  InferenceModel(const Lindbladian& generator, double bin_dt, double r0,
                 double r1);
  static InferenceModel from_params(const ModelParams& p);

  Lindbladian generator;
  Propagator propagator;
  DensityMatrix initial;  // steady state of `generator`
  double bin_dt;
  double mean0;  // r0 * bin_dt
  double mean1;
};

/// Per-bin log weights of a record under the model's QPC means.
std::vector<BinMeasurement> bin_measurements(const CountRecord& record,
                                             double mean0, double mean1);

/// Throws std::invalid_argument when the record's bin length differs from
/// the model's.
void check_consistent(const CountRecord& record, double bin_dt);

/// Filter output. states[k] is conditioned on bins 0..k and refers to the
/// end of bin k.
struct FilterTimeline {
  double bin_dt = 0.0;
  std::vector<DensityMatrix> states;
  std::vector<double> log_likelihood_increments;
  std::vector<double> occupation;
  double total_log_likelihood = 0.0;
};

FilterTimeline filter_forward(const CountRecord& record, const ModelParams& p);
FilterTimeline filter_forward(const CountRecord& record,
                              const InferenceModel& model);

/// effects[k] carries the information in bins k+1..K-1; effects.back() = I.
/// A zero-length record yields {I}.
std::vector<EffectMatrix> effect_backward(const CountRecord& record,
                                          const ModelParams& p);
std::vector<EffectMatrix> effect_backward(const CountRecord& record,
                                          const InferenceModel& model);

/// Retrodicted occupation with the coarse {Pi_0, Pi_1} measurement:
/// tr(Pi_1 rho Pi_1 E) / (tr(Pi_0 rho Pi_0 E) + tr(Pi_1 rho Pi_1 E)).
double pqs_occupation(const DensityMatrix& rho, const EffectMatrix& e);
double pqs_occupation(const Mat3& rho, const Mat3& e);

/// Fraction of bins where (p > threshold) disagrees with `truth`.
double misassignment_fraction(std::span<const double> occupation,
                              std::span<const std::uint8_t> truth,
                              double threshold = 0.5);

struct SweepOptions {
  /// Records up to this many bins keep the full timeline in memory.
  std::size_t in_memory_limit = 1'000'000;
  /// Checkpoint spacing for longer records.
  std::size_t checkpoint_interval = 1000;
};

struct SmoothedTimeline {
  double bin_dt = 0.0;
  std::vector<double> filter_occupation;
  std::vector<double> pqs_occupation;
  /// Empty when the record exceeded SweepOptions::in_memory_limit.
  std::vector<EffectMatrix> effects;
  double total_log_likelihood = 0.0;
};

SmoothedTimeline smooth(const CountRecord& record, const ModelParams& p,
                        const SweepOptions& options = {});
SmoothedTimeline smooth(const CountRecord& record, const InferenceModel& model,
                        const SweepOptions& options = {});

/// Backward visitor: called for k = K-1 down to 0 with the filtered state
/// rho_k, the normalized effect E_k, and the pre-propagation effect
/// F_{k+1} = M_{k+1}^dagger E_{k+1} M_{k+1} (nullptr at the last bin).
using SweepVisitor = std::function<void(std::size_t k, const Mat3& rho,
                                        const Mat3& effect,
                                        const Mat3* next_effect)>;

/// Runs the forward filter and the backward effect pass, calling `visit`
/// during the backward pass. Returns the total log-likelihood.
double forward_backward(const CountRecord& record, const InferenceModel& model,
                        const SweepVisitor& visit,
                        const SweepOptions& options = {});

}  // namespace qdot
