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

#include "gatechar/qop.hpp"

#include <limits>
#include <optional>
#include <span>
#include <vector>

namespace gatechar {

using Superop9 = Eigen::Matrix<Complex, 9, 9>;

/// Physical constants of the simulated transmon. Frequencies in Hz, times in
/// seconds. Infinite coherence times disable the corresponding dissipator.
struct DeviceParams {
  double f01 = 4.631e9;
  double anharm = -240e6;
  double t1 = 231e-6;
  double t2e = 204e-6;
  /// |2> -> |1> relaxation time; defaults to t1 / 2 when absent.
  std::optional<double> t1_12;
  /// Weight of the |2> level in the pure-dephasing operator diag(0, 1, xi).
  double dephasing_weight_2 = 2.0;
  /// Qubit frequency minus drive carrier frequency, Hz.
  double freq_offset = 0.0;
  bool decoherence = true;

  void validate() const;
  double anharm_rad() const;
  double t1_12_value() const { return t1_12.value_or(t1 / 2.0); }
  /// 1/T_phi = 1/T2E - 1/(2 T1).
  double dephasing_rate() const;

  static DeviceParams closed_system();
};

/// Cosine-envelope DRAG pulse. omega0 in rad/s, df in Hz, times in s.
struct PulseParams {
  double omega0 = 0.0;
  double tg = 20e-9;
  double alpha = 0.0;
  double df = 0.0;
  double tbuff = 2e-9;
  double phase = 0.0;

  void validate() const;
  double duration() const { return tg + tbuff; }

  /// Nominal-area X_{pi/2} with first-order leakage-cancelling DRAG weight.
  static PulseParams nominal_x90(double tg = 20e-9, double tbuff = 2e-9);
};

/// Exponential trailing-edge distortion: y = x + (a/tau) * (x conv e^{-t/tau}).
struct TailModel {
  double amplitude = 0.0;
  double tau = 3e-9;
  bool enabled() const { return amplitude != 0.0; }
};

/// Frame state manipulated by virtual-Z gates.
struct FrameState {
  double phase = 0.0;
};

/// Zero-duration frame update; subsequent pulses see their drive phase
/// shifted by `phase`.
void virtual_z(double phase, FrameState& frame);
PulseParams in_frame(PulseParams p, const FrameState& frame);

/// Integrator resolution.
inline constexpr int kDefaultSteps = 2000;

/// e^{i 2 pi df (t - tg/2)} (Omega(t) - i alpha Omega'(t) / Delta) e^{i phase};
/// zero outside [0, tg]. The detuning phase is referenced to the pulse centre.
Complex drag_waveform(double t, const PulseParams& p, const DeviceParams& dev);

/// Pulse-area condition for the cosine envelope: target_angle / tg.
double nominal_amplitude(double target_angle, double tg);

/// Rotating-frame RWA Hamiltonian (rad/s) for a given complex drive.
Mat3 hamiltonian_for_drive(Complex drive, const DeviceParams& dev);
Mat3 hamiltonian(double t, const PulseParams& p, const DeviceParams& dev);

/// Unitary over [0, tg + tbuff]; the buffer evolves undriven.
Mat3 propagate_schrodinger(const PulseParams& p, const DeviceParams& dev, int steps = kDefaultSteps);

/// Doubles the step count from `steps` until successive propagators agree to
/// `tolerance`; throws NumericalError with the residual at `max_steps`.
Mat3 propagate_schrodinger_converged(const PulseParams& p, const DeviceParams& dev,
                                     int steps = kDefaultSteps, int max_steps = 64000,
                                     double tolerance = 1e-9);

/// Direct density-matrix integration of the Lindblad equation over
/// [0, tg + tbuff]. Throws NumericalError on trace or positivity failure.
DensityMatrix3 propagate_lindblad(const PulseParams& p, const DeviceParams& dev, const DensityMatrix3& rho0,
                                  int steps = kDefaultSteps);

/// Column-stacked superoperator over [0, tg + tbuff].
Superop9 lindblad_superoperator(const PulseParams& p, const DeviceParams& dev, int steps = kDefaultSteps);

Mat3 apply_superop(const Superop9& s, const Mat3& rho);
Superop9 superop_from_unitary(const Mat3& u);

struct GateRealization {
  QubitChannel channel;
  /// Coherent (Schrodinger) propagator of the same pulse.
  Mat3 qutrit_unitary;
  double leak_per_gate = 0.0;
  Superop9 superop;
};

struct GateChannelOptions {
  int steps = kDefaultSteps;
  /// Cross-check the channel against direct propagation on random inputs.
  bool verify_linearity = false;
  int linearity_samples = 20;
  unsigned long long linearity_seed = 7;
};

GateRealization gate_channel(const PulseParams& p, const DeviceParams& dev, const GateChannelOptions& opts = {});

/// Qubit channel of a qutrit superoperator (PTM of the qubit block plus leak
/// rates).
QubitChannel qubit_channel_from_superop(const Superop9& s);

/// Coherent X_{pi/2} error: 1 - F_avg of the qubit block against the ideal
/// rotation, including leakage loss.
double coherent_gate_error(const Mat3& u, const Mat2& target);

struct CoherenceLimit {
  double master_equation = 0.0;
  /// (3 - 2 e^{-t/T2} - e^{-t/T1}) / 6 for the pulse duration.
  double idle_bound = 0.0;
  double duration = 0.0;
};

/// Infidelity of the dissipative channel relative to the coherent
/// realization of the same pulse (coherent error removed).
CoherenceLimit coherence_limit_epg(const DeviceParams& dev, const PulseParams& pulse);
CoherenceLimit coherence_limit_epg(const DeviceParams& dev, double tg, double tbuff = 0.0);

double idle_error_bound(const DeviceParams& dev, double duration);

/// Pulse train of identical pulses with per-pulse drive phases, optionally
/// with the trailing-edge distortion coupling neighbouring pulses.
class PulseTrain {
 public:
  PulseTrain(PulseParams pulse, DeviceParams dev, TailModel tail = {}, int steps = kDefaultSteps);

  /// Unitary of the whole train (closed-system evolution).
  Mat3 unitary(std::span<const double> phases) const;
  /// Final state of the train under Lindblad evolution.
  Mat3 evolve(std::span<const double> phases, const Mat3& rho0) const;

 private:
  Mat3 window_unitary(std::optional<double> prev_phase, double phase) const;
  Superop9 window_superop(std::optional<double> prev_phase, double phase) const;
  std::vector<Complex> window_drive(std::optional<double> prev_phase, double phase) const;

  PulseParams pulse_;
  DeviceParams dev_;
  TailModel tail_;
  int steps_;
  double dt_;
  int window_steps_;
};

}  // namespace gatechar
