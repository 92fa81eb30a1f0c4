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

#include "gatechar/transmon.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <limits>
#include <numbers>

using namespace gatechar;

namespace {

constexpr double kPi = std::numbers::pi;
constexpr Complex kI{0.0, 1.0};

PulseParams undriven(double tg) {
  PulseParams p;
  p.omega0 = 0.0;
  p.tg = tg;
  p.tbuff = 0.0;
  return p;
}

}  // namespace

TEST(DragWaveform, Examples) {
  const DeviceParams dev;
  PulseParams p;
  p.omega0 = 7.0e7;
  p.alpha = 1.0;
  EXPECT_EQ(drag_waveform(0.0, p, dev), Complex(0.0, 0.0));
  EXPECT_EQ(drag_waveform(-1e-9, p, dev), Complex(0.0, 0.0));
  EXPECT_EQ(drag_waveform(p.tg + 1e-9, p, dev), Complex(0.0, 0.0));

  const Complex mid = drag_waveform(p.tg / 2.0, p, dev);
  EXPECT_NEAR(mid.real(), 2.0 * p.omega0, 1e-6);
  EXPECT_NEAR(mid.imag(), 0.0, 1e-6);

  const Complex quarter = drag_waveform(p.tg / 4.0, p, dev);
  const double expected_imag = -(2.0 * kPi * p.omega0 / p.tg) / dev.anharm_rad();
  EXPECT_NEAR(quarter.real(), p.omega0, 1e-6);
  EXPECT_NEAR(quarter.imag(), expected_imag, 1e-6 * std::abs(expected_imag));
}

TEST(DragWaveform, DetuningPhaseIsReferencedToCentre) {
  const DeviceParams dev;
  PulseParams p;
  p.omega0 = 7.0e7;
  p.df = 3e6;
  const Complex mid = drag_waveform(p.tg / 2.0, p, dev);
  EXPECT_NEAR(mid.imag(), 0.0, 1e-6);
  const Complex early = drag_waveform(p.tg / 4.0, p, dev);
  EXPECT_NEAR(std::arg(early), -2.0 * kPi * p.df * p.tg / 4.0, 1e-12);
}

TEST(NominalAmplitude, Examples) {
  EXPECT_NEAR(nominal_amplitude(kPi / 2.0, 20e-9), 7.854e7, 1e3);
  EXPECT_NEAR(nominal_amplitude(kPi / 2.0, 20e-9) / (2.0 * kPi), 12.5e6, 1.0);
  EXPECT_NEAR(nominal_amplitude(kPi, 20e-9), 1.571e8, 1e5);
  EXPECT_THROW(nominal_amplitude(0.0, 20e-9), std::invalid_argument);
  EXPECT_THROW(nominal_amplitude(-1.0, 20e-9), std::invalid_argument);
}

TEST(Hamiltonian, UndrivenAndStructure) {
  const DeviceParams dev;
  const Mat3 h0 = hamiltonian(0.0, PulseParams::nominal_x90(), dev);
  Mat3 expected = Mat3::Zero();
  expected(2, 2) = dev.anharm_rad();
  EXPECT_LT((h0 - expected).cwiseAbs().maxCoeff(), 1e-6);

  const PulseParams p = PulseParams::nominal_x90();
  for (int k = 1; k < 40; ++k) {
    const double t = p.tg * k / 40.0;
    const Mat3 h = hamiltonian(t, p, dev);
    EXPECT_LT((h - h.adjoint()).cwiseAbs().maxCoeff(), 1e-9);
    EXPECT_NEAR(std::abs(h(1, 2)), std::sqrt(2.0) * std::abs(h(0, 1)), 1e-6);
  }
}

TEST(Schrodinger, FreeEvolution) {
  const DeviceParams dev;
  const Mat3 u = propagate_schrodinger(undriven(20e-9), dev);
  Mat3 expected = Mat3::Zero();
  expected(0, 0) = 1.0;
  expected(1, 1) = 1.0;
  expected(2, 2) = std::exp(-kI * dev.anharm_rad() * 20e-9);
  EXPECT_LT((u - expected).cwiseAbs().maxCoeff(), 1e-9);
}

TEST(Schrodinger, UnitarityAndConvergence) {
  const DeviceParams dev;
  PulseParams p = PulseParams::nominal_x90();
  p.df = -3.8e6;
  const Mat3 u = propagate_schrodinger(p, dev, 2000);
  const Mat3 u2 = propagate_schrodinger(p, dev, 4000);
  EXPECT_LT((u.adjoint() * u - Mat3::Identity()).norm(), 1e-9);
  EXPECT_LT((u - u2).cwiseAbs().maxCoeff(), 1e-9);
  EXPECT_NO_THROW(propagate_schrodinger_converged(p, dev));
  EXPECT_THROW(propagate_schrodinger_converged(p, dev, 2, 8, 1e-15), NumericalError);
}

TEST(Lindblad, PureRelaxation) {
  const DeviceParams dev;
  const double t = 5e-6;  // long enough to resolve the decay
  const DensityMatrix3 out = propagate_lindblad(undriven(t), dev, DensityMatrix3::basis_state(1), 4000);
  EXPECT_NEAR(out.matrix()(1, 1).real(), std::exp(-t / dev.t1), 1e-10);
}

TEST(Lindblad, CoherenceDecaysWithT2) {
  const DeviceParams dev;
  const double t = 5e-6;
  Mat2 plus;
  plus << 0.5, 0.5, 0.5, 0.5;
  const DensityMatrix3 out = propagate_lindblad(undriven(t), dev, DensityMatrix3::from_qubit(plus), 4000);
  EXPECT_NEAR(std::abs(out.matrix()(0, 1)), 0.5 * std::exp(-t / dev.t2e), 1e-10);
}

TEST(Lindblad, TracePreservedUnderDrive) {
  const DeviceParams dev;
  Mat2 mixed = Mat2::Identity() / 2.0;
  const DensityMatrix3 out =
      propagate_lindblad(PulseParams::nominal_x90(), dev, DensityMatrix3::from_qubit(mixed));
  EXPECT_NEAR(out.matrix().trace().real(), 1.0, 1e-9);
}

TEST(GateChannel, ClosedSystemIsUnitaryPtm) {
  const GateRealization g = gate_channel(PulseParams::nominal_x90(), DeviceParams::closed_system());
  EXPECT_NEAR((g.channel.ptm.transpose() * g.channel.ptm).trace(), 4.0, 1e-6);
  EXPECT_LT((g.qutrit_unitary.adjoint() * g.qutrit_unitary - Mat3::Identity()).norm(), 1e-9);
}

TEST(GateChannel, ZeroDriveMatchesDampingPtm) {
  const DeviceParams dev;
  const double t = 20e-9;
  const GateRealization g = gate_channel(undriven(t), dev);
  Ptm expected = Ptm::Zero();
  expected.diagonal() << 1.0, std::exp(-t / dev.t2e), std::exp(-t / dev.t2e), std::exp(-t / dev.t1);
  expected(3, 0) = 1.0 - std::exp(-t / dev.t1);
  // Free evolution in the rotating frame adds no qubit phase.
  EXPECT_LT((g.channel.ptm - expected).cwiseAbs().maxCoeff(), 1e-12);
  EXPECT_FALSE(g.channel.trace_decreasing);
}

TEST(GateChannel, LinearityAgainstDirectPropagation) {
  GateChannelOptions opts;
  opts.verify_linearity = true;
  EXPECT_NO_THROW(gate_channel(PulseParams::nominal_x90(), DeviceParams{}, opts));
}

TEST(GateChannel, DragSuppressesLeakage) {
  const DeviceParams dev = DeviceParams::closed_system();
  PulseParams drag = PulseParams::nominal_x90();
  PulseParams plain = drag;
  plain.alpha = 0.0;
  const double leak_drag = gate_channel(drag, dev).leak_per_gate;
  const double leak_plain = gate_channel(plain, dev).leak_per_gate;
  EXPECT_GT(leak_plain, 5.0 * leak_drag);
}

TEST(CoherenceLimit, NoDecoherenceGivesZero) {
  DeviceParams dev;
  dev.t1 = std::numeric_limits<double>::infinity();
  dev.t2e = std::numeric_limits<double>::infinity();
  const CoherenceLimit c = coherence_limit_epg(dev, 20e-9);
  EXPECT_NEAR(c.master_equation, 0.0, 1e-9);
  EXPECT_EQ(c.idle_bound, 0.0);
}

TEST(CoherenceLimit, DeviceValues) {
  const CoherenceLimit c = coherence_limit_epg(DeviceParams{}, 20e-9);
  EXPECT_NEAR(c.master_equation, 4.77e-5, 0.5e-5);
  EXPECT_NEAR(c.idle_bound, 4.71e-5, 0.005e-5);
  const CoherenceLimit with_buffer = coherence_limit_epg(DeviceParams{}, 20e-9, 2e-9);
  EXPECT_GT(with_buffer.master_equation, c.master_equation);
}

TEST(VirtualZ, FrameAlgebra) {
  FrameState f;
  virtual_z(0.0, f);
  EXPECT_EQ(f.phase, 0.0);
  virtual_z(0.3, f);
  virtual_z(0.4, f);
  FrameState g;
  virtual_z(0.7, g);
  EXPECT_NEAR(f.phase, g.phase, 1e-15);

  // A pulse in a frame rotated by pi is the conjugated pulse: X_{-pi/2}.
  const DeviceParams dev = DeviceParams::closed_system();
  const PulseParams p = PulseParams::nominal_x90(20e-9, 0.0);
  FrameState pi_frame;
  virtual_z(kPi, pi_frame);
  const Mat3 u0 = propagate_schrodinger(p, dev);
  const Mat3 upi = propagate_schrodinger(in_frame(p, pi_frame), dev);
  Mat3 z = Mat3::Zero();
  z.diagonal() << 1.0, std::exp(kI * kPi), std::exp(2.0 * kI * kPi);
  EXPECT_LT((upi - z.adjoint() * u0 * z).cwiseAbs().maxCoeff(), 1e-12);
  EXPECT_LT(unitary_distance(upi.topLeftCorner<2, 2>(), rx(-kPi / 2.0)), 1e-3);
}

TEST(PulseTrain, MatchesSinglePulsePropagation) {
  const DeviceParams dev = DeviceParams::closed_system();
  const PulseParams p = PulseParams::nominal_x90();
  const PulseTrain train(p, dev);
  const std::vector<double> phases = {0.0, kPi / 2.0};
  PulseParams p1 = p;
  p1.phase = kPi / 2.0;
  const Mat3 expected = propagate_schrodinger(p1, dev) * propagate_schrodinger(p, dev);
  EXPECT_LT((train.unitary(phases) - expected).cwiseAbs().maxCoeff(), 1e-12);
}
