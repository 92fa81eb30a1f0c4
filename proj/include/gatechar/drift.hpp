// Copyright 2026 The gatechar Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include "gatechar/benchmark.hpp"
#include "gatechar/gst.hpp"

#include <json.hpp>

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <random>
#include <string>
#include <vector>

namespace gatechar {

enum class FluctuationKind {
  /// Relative change of the drive amplitude.
  kAmplitude,
  /// Qubit frequency offset in Hz.
  kFrequency,
};

enum class Correlation {
  /// Fresh draw for every gate.
  kPerGate,
  /// One draw held over a whole sequence.
  kPerSequence,
};

struct FluctuationSpec {
  FluctuationKind kind = FluctuationKind::kAmplitude;
  double sigma = 0.0;
  Correlation correlation = Correlation::kPerSequence;
  void validate() const;
};

/// Amplitude multiplier ~ N(1, sigma^2) or frequency offset ~ N(0, sigma^2).
double sample_fluctuation(const FluctuationSpec& spec, std::mt19937_64& rng);

/// Pulse and device with a parameter value applied: a multiplier on omega0
/// or an offset added to the qubit frequency.
std::pair<PulseParams, DeviceParams> apply_parameter(FluctuationKind kind, double value, const PulseParams& pulse,
                                                     const DeviceParams& dev);

struct FluctuationEPG {
  double epg = 0.0;
  double std_error = 0.0;
  int n_trials = 0;
};

/// Monte Carlo mean of 1 - F_avg between the fluctuated pulse and the
/// unperturbed one, decoherence off. Each trial is one gate, so the
/// correlation mode does not enter here.
FluctuationEPG fluctuation_epg(const FluctuationSpec& spec, const DeviceParams& dev, const PulseParams& pulse,
                               int n_trials, std::uint64_t seed, int workers = 0, int steps = kDefaultSteps);

/// Slow trajectory of one parameter over the execution order of a run,
/// position 0 at the first circuit and 1 at the last.
struct DriftSchedule {
  enum class Shape { kSinusoidal, kRandomWalk };
  Shape shape = Shape::kSinusoidal;
  FluctuationKind parameter = FluctuationKind::kAmplitude;
  /// Sinusoid amplitude, or random-walk step standard deviation.
  double amplitude = 0.0;
  /// Sinusoid periods over the run.
  double periods = 1.0;
  double phase = 0.0;
  /// Random-walk nodes over the run and their seed.
  int steps = 1000;
  std::uint64_t seed = 0;
  /// Largest admissible |value|; required for random walks.
  double bound = 0.0;

  /// Throws std::invalid_argument for unbounded or non-finite trajectories.
  void validate() const;
  /// Relative amplitude change or frequency offset (Hz) at `position`.
  /// Random walks interpolate linearly between their nodes.
  double value(double position) const;
  /// steps + 1 random-walk nodes starting at zero; empty for sinusoids.
  std::vector<double> walk_nodes() const;
};

/// Gate-set modifier for GST simulation. Amplitude drift over-rotates Gx and
/// Gy by value * pi/2; frequency drift adds a Z rotation accumulated over
/// `gate_time` to every gate. A zero value returns the gate set unchanged.
GateSetDrift gate_set_drift(DriftSchedule schedule, double gate_time = 22e-9);

/// Pulse-level RB under fluctuations. Per-sequence draws hold one value per
/// sequence; per-gate draws resample every Clifford from a Gaussian
/// quantized on `grid_points` nodes over +-4 sigma.
RBDataset run_fluctuating_rb(const SequenceSet& set, const PulseParams& pulse, const DeviceParams& dev,
                             const FluctuationSpec& spec, int shots, std::uint64_t seed, int workers = 0,
                             int grid_points = 129, int steps = kDefaultSteps);

/// Pulse-level RB with the parameter following `schedule` over sequence
/// execution order (length-major, as stored in the set).
RBDataset run_drifting_rb(const SequenceSet& set, const PulseParams& pulse, const DeviceParams& dev,
                          const DriftSchedule& schedule, int shots, std::uint64_t seed, int workers = 0,
                          int steps = kDefaultSteps);

/// Chi-square per degree of freedom of the survival means against the fit,
/// with the standard error of each mean over its sequences.
double reduced_chi_square(const RBDataset& data, const DecayFit& fit);

struct BudgetInputs {
  std::optional<Estimate> r_avg;
  std::optional<Estimate> r_prime_avg;
  std::optional<Estimate> r_dec_avg;
  std::optional<Estimate> gamma_avg;
  std::optional<double> coherence_limit;
  std::optional<Estimate> fluct_amp_epg;
  std::optional<Estimate> fluct_freq_epg;
};

struct ErrorBudget {
  BudgetInputs inputs;
  /// r_dec_avg / r_prime_avg.
  std::optional<Estimate> incoherent_fraction;
  /// r_prime_avg - r_dec_avg - gamma_avg.
  std::optional<Estimate> residual_coherent;
  /// False when the residual is below minus the summed uncertainties.
  bool consistent = true;
  /// Names of missing inputs.
  std::vector<std::string> gaps;
};

ErrorBudget assemble_budget(const BudgetInputs& inputs);

nlohmann::json budget_to_json(const ErrorBudget& budget);
/// Reads the input fields of a budget file; absent or null fields stay
/// missing. Throws std::invalid_argument on unknown keys.
BudgetInputs budget_inputs_from_json(const nlohmann::json& j);
void write_budget_table(std::ostream& out, const ErrorBudget& budget);

}  // namespace gatechar
