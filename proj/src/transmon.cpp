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

#include <unsupported/Eigen/KroneckerProduct>

#include <algorithm>
#include <cmath>
#include <map>
#include <numbers>
#include <random>
#include <string>

namespace gatechar {

namespace {

constexpr Complex kI{0.0, 1.0};
constexpr double kTwoPi = 2.0 * std::numbers::pi;

double rate(double time) { return std::isfinite(time) ? 1.0 / time : 0.0; }

struct Dissipator {
  Superop9 generator = Superop9::Zero();
  std::vector<Mat3> collapse;
};

Dissipator make_dissipator(const DeviceParams& dev) {
  Dissipator d;
  if (!dev.decoherence) return d;
  Mat3 c = Mat3::Zero();
  c(0, 1) = std::sqrt(rate(dev.t1));
  d.collapse.push_back(c);
  c = Mat3::Zero();
  c(1, 2) = std::sqrt(rate(dev.t1_12_value()));
  d.collapse.push_back(c);
  c = Mat3::Zero();
  const double gphi = std::sqrt(2.0 * dev.dephasing_rate());
  c(1, 1) = gphi;
  c(2, 2) = gphi * dev.dephasing_weight_2;
  d.collapse.push_back(c);

  const Mat3 id = Mat3::Identity();
  for (const auto& op : d.collapse) {
    const Mat3 cdc = op.adjoint() * op;
    d.generator += Eigen::kroneckerProduct(op.conjugate(), op).eval();
    d.generator -= 0.5 * Eigen::kroneckerProduct(id, cdc).eval();
    d.generator -= 0.5 * Eigen::kroneckerProduct(cdc.transpose(), id).eval();
  }
  return d;
}

Superop9 hamiltonian_generator(const Mat3& h) {
  const Mat3 id = Mat3::Identity();
  return -kI * (Eigen::kroneckerProduct(id, h).eval() - Eigen::kroneckerProduct(h.transpose(), id).eval());
}

Eigen::Matrix<Complex, 9, 1> vec(const Mat3& m) { return Eigen::Map<const Eigen::Matrix<Complex, 9, 1>>(m.data()); }

Mat3 unvec(const Eigen::Matrix<Complex, 9, 1>& v) { return Eigen::Map<const Mat3>(v.data()); }

Mat3 lindblad_rhs(const Mat3& h, const std::vector<Mat3>& collapse, const Mat3& rho) {
  Mat3 out = -kI * (h * rho - rho * h);
  for (const auto& c : collapse) {
    const Mat3 cdc = c.adjoint() * c;
    out += c * rho * c.adjoint() - 0.5 * (cdc * rho + rho * cdc);
  }
  return out;
}

// The drift Hamiltonian is diagonal and carries the fast anharmonic phase, so
// each RK4 step runs in its interaction picture: the drift is applied exactly
// and only the drive is integrated. Every collapse operator is an
// eigenoperator of the drift, which leaves the dissipator frame-invariant.
Mat3 drift_phase(const Mat3& h, double s) {
  Mat3 d = Mat3::Zero();
  for (int i = 0; i < 3; ++i) d(i, i) = std::exp(-kI * h(i, i).real() * s);
  return d;
}

// Drive part of `h` seen from the drift frame at local time s.
Mat3 interaction_h(const Mat3& h, double s) {
  Mat3 v = h;
  for (int i = 0; i < 3; ++i) {
    v(i, i) = 0.0;
    for (int j = 0; j < 3; ++j) {
      if (i != j) v(i, j) *= std::exp(kI * (h(i, i).real() - h(j, j).real()) * s);
    }
  }
  return v;
}

// Classic RK4 with the drive sampled at t, t + dt/2, t + dt. `drive(t)` is
// evaluated in the integrator's local time.
template <class DriveFn>
Mat3 rk4_unitary(DriveFn&& drive, const DeviceParams& dev, double t0, int n, double dt, Mat3 u) {
  for (int k = 0; k < n; ++k) {
    const double t = t0 + k * dt;
    const Mat3 hm_full = hamiltonian_for_drive(drive(t + 0.5 * dt), dev);
    const Mat3 h0 = interaction_h(hamiltonian_for_drive(drive(t), dev), 0.0);
    const Mat3 hm = interaction_h(hm_full, 0.5 * dt);
    const Mat3 h1 = interaction_h(hamiltonian_for_drive(drive(t + dt), dev), dt);
    const Mat3 k1 = -kI * h0 * u;
    const Mat3 k2 = -kI * hm * (u + 0.5 * dt * k1);
    const Mat3 k3 = -kI * hm * (u + 0.5 * dt * k2);
    const Mat3 k4 = -kI * h1 * (u + dt * k3);
    u = drift_phase(hm_full, dt) * (u + dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4));
  }
  return u;
}

template <class DriveFn>
Superop9 rk4_superop(DriveFn&& drive, const DeviceParams& dev, const Superop9& diss, double t0, int n, double dt,
                     Superop9 s) {
  for (int k = 0; k < n; ++k) {
    const double t = t0 + k * dt;
    const Mat3 hm_full = hamiltonian_for_drive(drive(t + 0.5 * dt), dev);
    const Superop9 l0 = hamiltonian_generator(interaction_h(hamiltonian_for_drive(drive(t), dev), 0.0)) + diss;
    const Superop9 lm = hamiltonian_generator(interaction_h(hm_full, 0.5 * dt)) + diss;
    const Superop9 l1 = hamiltonian_generator(interaction_h(hamiltonian_for_drive(drive(t + dt), dev), dt)) + diss;
    const Superop9 k1 = l0 * s;
    const Superop9 k2 = lm * (s + 0.5 * dt * k1);
    const Superop9 k3 = lm * (s + 0.5 * dt * k2);
    const Superop9 k4 = l1 * (s + dt * k3);
    const Mat3 d = drift_phase(hm_full, dt);
    const Superop9 frame = Eigen::kroneckerProduct(d.conjugate(), d).eval();
    s = frame * (s + dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4));
  }
  return s;
}

template <class DriveFn>
Mat3 rk4_density(DriveFn&& drive, const DeviceParams& dev, const std::vector<Mat3>& collapse, double t0, int n,
                 double dt, Mat3 rho) {
  for (int k = 0; k < n; ++k) {
    const double t = t0 + k * dt;
    const Mat3 hm_full = hamiltonian_for_drive(drive(t + 0.5 * dt), dev);
    const Mat3 h0 = interaction_h(hamiltonian_for_drive(drive(t), dev), 0.0);
    const Mat3 hm = interaction_h(hm_full, 0.5 * dt);
    const Mat3 h1 = interaction_h(hamiltonian_for_drive(drive(t + dt), dev), dt);
    const Mat3 k1 = lindblad_rhs(h0, collapse, rho);
    const Mat3 k2 = lindblad_rhs(hm, collapse, rho + 0.5 * dt * k1);
    const Mat3 k3 = lindblad_rhs(hm, collapse, rho + 0.5 * dt * k2);
    const Mat3 k4 = lindblad_rhs(h1, collapse, rho + dt * k3);
    const Mat3 d = drift_phase(hm_full, dt);
    rho = d * (rho + dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)) * d.adjoint();
  }
  return rho;
}

// Step layout shared by all propagators: `steps` uniform steps over the
// pulse, then ceil(tbuff / dt) uniform steps over the buffer.
struct StepPlan {
  double dt_pulse;
  int buffer_steps;
  double dt_buffer;
};

StepPlan plan_steps(const PulseParams& p, int steps) {
  if (steps < 1) throw std::invalid_argument("propagation needs at least one step");
  StepPlan plan{p.tg / steps, 0, 0.0};
  if (p.tbuff > 0.0) {
    plan.buffer_steps = static_cast<int>(std::ceil(p.tbuff / plan.dt_pulse - 1e-9));
    plan.dt_buffer = p.tbuff / plan.buffer_steps;
  }
  return plan;
}

Mat3 free_evolution(const DeviceParams& dev, double duration) {
  const Mat3 h = hamiltonian_for_drive(Complex{0.0, 0.0}, dev);
  Mat3 u = Mat3::Zero();
  for (int i = 0; i < 3; ++i) u(i, i) = std::exp(-kI * h(i, i).real() * duration);
  return u;
}

void check_state(const Mat3& rho, const char* where) {
  const double trace_err = std::abs(rho.trace() - 1.0);
  if (trace_err > 1e-9) {
    throw NumericalError(std::string(where) + ": trace drift " + std::to_string(trace_err));
  }
  const Mat3 herm = 0.5 * (rho + rho.adjoint());
  Eigen::SelfAdjointEigenSolver<Mat3> es(herm, Eigen::EigenvaluesOnly);
  if (es.eigenvalues().minCoeff() < -1e-9) {
    throw NumericalError(std::string(where) + ": negative eigenvalue " + std::to_string(es.eigenvalues().minCoeff()));
  }
}

}  // namespace

void DeviceParams::validate() const {
  if (!(t1 > 0.0) || !(t2e > 0.0)) throw std::invalid_argument("DeviceParams: coherence times must be positive");
  if (t2e > 2.0 * t1 * (1.0 + 1e-12)) throw std::invalid_argument("DeviceParams: t2e must not exceed 2 t1");
  if (!(anharm < 0.0)) throw std::invalid_argument("DeviceParams: anharmonicity must be negative");
  if (t1_12 && !(*t1_12 > 0.0)) throw std::invalid_argument("DeviceParams: t1_12 must be positive");
  if (!(f01 > 0.0)) throw std::invalid_argument("DeviceParams: f01 must be positive");
}

double DeviceParams::anharm_rad() const { return kTwoPi * anharm; }

double DeviceParams::dephasing_rate() const { return std::max(0.0, rate(t2e) - 0.5 * rate(t1)); }

DeviceParams DeviceParams::closed_system() {
  DeviceParams d;
  d.decoherence = false;
  return d;
}

void PulseParams::validate() const {
  if (!(tg > 0.0)) throw std::invalid_argument("PulseParams: tg must be positive");
  if (tbuff < 0.0) throw std::invalid_argument("PulseParams: tbuff must be non-negative");
  if (omega0 < 0.0) throw std::invalid_argument("PulseParams: omega0 must be non-negative");
}

PulseParams PulseParams::nominal_x90(double tg, double tbuff) {
  PulseParams p;
  p.tg = tg;
  p.tbuff = tbuff;
  p.omega0 = nominal_amplitude(std::numbers::pi / 2.0, tg);
  p.alpha = -1.0;
  return p;
}

void virtual_z(double phase, FrameState& frame) { frame.phase += phase; }

PulseParams in_frame(PulseParams p, const FrameState& frame) {
  p.phase += frame.phase;
  return p;
}

Complex drag_waveform(double t, const PulseParams& p, const DeviceParams& dev) {
  if (t < 0.0 || t > p.tg) return {0.0, 0.0};
  const double w = kTwoPi / p.tg;
  const double envelope = p.omega0 * (1.0 - std::cos(w * t));
  const double derivative = p.omega0 * w * std::sin(w * t);
  const Complex shaped = envelope - kI * p.alpha * derivative / dev.anharm_rad();
  return std::exp(kI * (kTwoPi * p.df * (t - 0.5 * p.tg) + p.phase)) * shaped;
}

double nominal_amplitude(double target_angle, double tg) {
  if (!(target_angle > 0.0)) throw std::invalid_argument("nominal_amplitude: target angle must be positive");
  if (!(tg > 0.0)) throw std::invalid_argument("nominal_amplitude: tg must be positive");
  return target_angle / tg;
}

Mat3 hamiltonian_for_drive(Complex drive, const DeviceParams& dev) {
  const double delta = kTwoPi * dev.freq_offset;
  Mat3 h = Mat3::Zero();
  h(1, 1) = delta;
  h(2, 2) = dev.anharm_rad() + 2.0 * delta;
  h(0, 1) = 0.5 * drive;
  h(1, 2) = 0.5 * std::sqrt(2.0) * drive;
  h(1, 0) = std::conj(h(0, 1));
  h(2, 1) = std::conj(h(1, 2));
  return h;
}

Mat3 hamiltonian(double t, const PulseParams& p, const DeviceParams& dev) {
  return hamiltonian_for_drive(drag_waveform(t, p, dev), dev);
}

Mat3 propagate_schrodinger(const PulseParams& p, const DeviceParams& dev, int steps) {
  p.validate();
  const StepPlan plan = plan_steps(p, steps);
  auto drive = [&](double t) { return drag_waveform(t, p, dev); };
  Mat3 u = rk4_unitary(drive, dev, 0.0, steps, plan.dt_pulse, Mat3::Identity());
  if (p.tbuff > 0.0) u = free_evolution(dev, p.tbuff) * u;
  return u;
}

Mat3 propagate_schrodinger_converged(const PulseParams& p, const DeviceParams& dev, int steps, int max_steps,
                                     double tolerance) {
  Mat3 prev = propagate_schrodinger(p, dev, steps);
  double change = 0.0;
  for (int n = 2 * steps; n <= max_steps; n *= 2) {
    const Mat3 next = propagate_schrodinger(p, dev, n);
    change = (next - prev).cwiseAbs().maxCoeff();
    const double defect = (next.adjoint() * next - Mat3::Identity()).norm();
    if (change < tolerance && defect < tolerance) return next;
    prev = next;
  }
  throw NumericalError("propagate_schrodinger: no convergence at step cap, last change " + std::to_string(change));
}

DensityMatrix3 propagate_lindblad(const PulseParams& p, const DeviceParams& dev, const DensityMatrix3& rho0,
                                  int steps) {
  p.validate();
  dev.validate();
  const StepPlan plan = plan_steps(p, steps);
  const Dissipator diss = make_dissipator(dev);
  auto drive = [&](double t) { return drag_waveform(t, p, dev); };
  auto idle = [](double) { return Complex{0.0, 0.0}; };
  Mat3 rho = rk4_density(drive, dev, diss.collapse, 0.0, steps, plan.dt_pulse, rho0.matrix());
  rho = rk4_density(idle, dev, diss.collapse, 0.0, plan.buffer_steps, plan.dt_buffer, rho);
  check_state(rho, "propagate_lindblad");
  return DensityMatrix3(0.5 * (rho + rho.adjoint()));
}

Superop9 lindblad_superoperator(const PulseParams& p, const DeviceParams& dev, int steps) {
  p.validate();
  dev.validate();
  if (!dev.decoherence) return superop_from_unitary(propagate_schrodinger(p, dev, steps));
  const StepPlan plan = plan_steps(p, steps);
  const Dissipator diss = make_dissipator(dev);
  auto drive = [&](double t) { return drag_waveform(t, p, dev); };
  auto idle = [](double) { return Complex{0.0, 0.0}; };
  Superop9 s = rk4_superop(drive, dev, diss.generator, 0.0, steps, plan.dt_pulse, Superop9::Identity());
  return rk4_superop(idle, dev, diss.generator, 0.0, plan.buffer_steps, plan.dt_buffer, s);
}

Mat3 apply_superop(const Superop9& s, const Mat3& rho) { return unvec(s * vec(rho)); }

Superop9 superop_from_unitary(const Mat3& u) { return Eigen::kroneckerProduct(u.conjugate(), u).eval(); }

QubitChannel qubit_channel_from_superop(const Superop9& s) {
  const auto& basis = pauli_basis();
  QubitChannel c;
  Eigen::Vector4d leak_functional;
  for (int j = 0; j < 4; ++j) {
    Mat3 in = Mat3::Zero();
    in.topLeftCorner<2, 2>() = basis[j];
    const Mat3 out = apply_superop(s, in);
    const Mat2 q = out.topLeftCorner<2, 2>();
    for (int i = 0; i < 4; ++i) c.ptm(i, j) = (basis[i] * q).trace().real();
    leak_functional(j) = out(2, 2).real();
  }
  // Mean over the six cardinal states: only the identity component survives.
  c.leak_in = std::max(0.0, leak_functional(0) / std::sqrt(2.0));
  Mat3 two = Mat3::Zero();
  two(2, 2) = 1.0;
  const Mat3 out2 = apply_superop(s, two);
  c.leak_out = std::clamp(out2.topLeftCorner<2, 2>().trace().real(), 0.0, 1.0);
  c.trace_decreasing = !is_trace_preserving(c.ptm);
  return c;
}

GateRealization gate_channel(const PulseParams& p, const DeviceParams& dev, const GateChannelOptions& opts) {
  GateRealization g;
  g.qutrit_unitary = propagate_schrodinger(p, dev, opts.steps);
  g.superop = dev.decoherence ? lindblad_superoperator(p, dev, opts.steps) : superop_from_unitary(g.qutrit_unitary);
  g.channel = qubit_channel_from_superop(g.superop);
  g.leak_per_gate = g.channel.leak_in;

  if (opts.verify_linearity) {
    std::mt19937_64 rng(opts.linearity_seed);
    std::normal_distribution<double> normal;
    for (int k = 0; k < opts.linearity_samples; ++k) {
      Mat2 a;
      a << Complex(normal(rng), normal(rng)), Complex(normal(rng), normal(rng)), Complex(normal(rng), normal(rng)),
          Complex(normal(rng), normal(rng));
      Mat2 rho = a * a.adjoint();
      rho /= rho.trace().real();
      const Mat2 via_channel = apply_ptm(g.channel.ptm, rho);
      const DensityMatrix3 direct = propagate_lindblad(p, dev, DensityMatrix3::from_qubit(rho), opts.steps);
      if ((direct.qubit_block() - via_channel).cwiseAbs().maxCoeff() > 1e-8) {
        throw std::invalid_argument("gate_channel: channel does not reproduce direct propagation");
      }
    }
  }
  return g;
}

double coherent_gate_error(const Mat3& u, const Mat2& target) {
  const Mat2 m = u.topLeftCorner<2, 2>();
  const double overlap = std::norm((target.adjoint() * m).trace());
  const double kept = (m.adjoint() * m).trace().real();
  return 1.0 - (overlap + kept) / 6.0;
}

double idle_error_bound(const DeviceParams& dev, double duration) {
  return (3.0 - 2.0 * std::exp(-duration * rate(dev.t2e)) - std::exp(-duration * rate(dev.t1))) / 6.0;
}

CoherenceLimit coherence_limit_epg(const DeviceParams& dev, const PulseParams& pulse) {
  DeviceParams open = dev;
  open.decoherence = true;
  const Superop9 s = lindblad_superoperator(pulse, open, kDefaultSteps);
  const Mat3 u = propagate_schrodinger(pulse, open, kDefaultSteps);
  // Reference: the nearest unitary to the coherent qubit block (polar part).
  const Mat2 block = u.topLeftCorner<2, 2>();
  Eigen::JacobiSVD<Mat2> svd(block, Eigen::ComputeFullU | Eigen::ComputeFullV);
  const Mat2 polar = svd.matrixU() * svd.matrixV().adjoint();

  CoherenceLimit out;
  out.duration = pulse.duration();
  out.master_equation = 1.0 - average_gate_fidelity(qubit_channel_from_superop(s), QubitChannel::from_unitary(polar));
  out.idle_bound = idle_error_bound(dev, out.duration);
  return out;
}

CoherenceLimit coherence_limit_epg(const DeviceParams& dev, double tg, double tbuff) {
  return coherence_limit_epg(dev, PulseParams::nominal_x90(tg, tbuff));
}

// ---------------------------------------------------------------------------
// PulseTrain

PulseTrain::PulseTrain(PulseParams pulse, DeviceParams dev, TailModel tail, int steps)
    : pulse_(pulse), dev_(dev), tail_(tail), steps_(steps), dt_(pulse.tg / steps) {
  pulse_.validate();
  dev_.validate();
  if (tail_.enabled() && !(tail_.tau > 0.0)) throw std::invalid_argument("TailModel: tau must be positive");
  window_steps_ = steps_ + plan_steps(pulse_, steps_).buffer_steps;
}

// Drive samples on the half-step grid of one window (pulse plus buffer),
// including the tail of this pulse and of the previous one.
std::vector<Complex> PulseTrain::window_drive(std::optional<double> prev_phase, double phase) const {
  const StepPlan plan = plan_steps(pulse_, steps_);
  std::vector<double> times;
  times.reserve(2 * window_steps_ + 1);
  for (int k = 0; k <= 2 * steps_; ++k) times.push_back(0.5 * k * plan.dt_pulse);
  for (int k = 1; k <= 2 * plan.buffer_steps; ++k) times.push_back(pulse_.tg + 0.5 * k * plan.dt_buffer);

  PulseParams base = pulse_;
  base.phase = 0.0;
  std::vector<Complex> out(times.size());
  const Complex own = std::exp(kI * (phase + pulse_.phase));
  for (std::size_t k = 0; k < times.size(); ++k) out[k] = own * drag_waveform(times[k], base, dev_);
  if (!tail_.enabled()) return out;

  // Trapezoidal recursion for I(t) = int_0^t x(s) e^{-(t-s)/tau} ds.
  const double h = 0.5 * plan.dt_pulse;
  const double decay = std::exp(-h / tail_.tau);
  std::vector<Complex> conv(2 * steps_ + 1);
  conv[0] = 0.0;
  for (int k = 1; k <= 2 * steps_; ++k) {
    const Complex x0 = drag_waveform((k - 1) * h, base, dev_);
    const Complex x1 = drag_waveform(k * h, base, dev_);
    conv[k] = conv[k - 1] * decay + 0.5 * h * (x0 * decay + x1);
  }
  const Complex end_integral = conv.back();
  const double gain = tail_.amplitude / tail_.tau;
  const double window = pulse_.duration();
  for (std::size_t k = 0; k < times.size(); ++k) {
    const double t = times[k];
    Complex tail = (k <= static_cast<std::size_t>(2 * steps_)) ? conv[k] : end_integral * std::exp(-(t - pulse_.tg) / tail_.tau);
    tail *= own;
    if (prev_phase) {
      tail += std::exp(kI * (*prev_phase + pulse_.phase)) * end_integral *
              std::exp(-(t + window - pulse_.tg) / tail_.tau);
    }
    out[k] += gain * tail;
  }
  return out;
}

Mat3 PulseTrain::window_unitary(std::optional<double> prev_phase, double phase) const {
  const StepPlan plan = plan_steps(pulse_, steps_);
  const std::vector<Complex> samples = window_drive(prev_phase, phase);
  auto pulse_drive = [&](double t) { return samples[std::lround(2.0 * t / plan.dt_pulse)]; };
  Mat3 u = rk4_unitary(pulse_drive, dev_, 0.0, steps_, plan.dt_pulse, Mat3::Identity());
  if (plan.buffer_steps > 0) {
    auto buffer_drive = [&](double t) { return samples[2 * steps_ + std::lround(2.0 * t / plan.dt_buffer)]; };
    u = rk4_unitary(buffer_drive, dev_, 0.0, plan.buffer_steps, plan.dt_buffer, u);
  }
  return u;
}

Superop9 PulseTrain::window_superop(std::optional<double> prev_phase, double phase) const {
  if (!dev_.decoherence) return superop_from_unitary(window_unitary(prev_phase, phase));
  const StepPlan plan = plan_steps(pulse_, steps_);
  const std::vector<Complex> samples = window_drive(prev_phase, phase);
  const Dissipator diss = make_dissipator(dev_);
  auto pulse_drive = [&](double t) { return samples[std::lround(2.0 * t / plan.dt_pulse)]; };
  Superop9 s = rk4_superop(pulse_drive, dev_, diss.generator, 0.0, steps_, plan.dt_pulse, Superop9::Identity());
  if (plan.buffer_steps > 0) {
    auto buffer_drive = [&](double t) { return samples[2 * steps_ + std::lround(2.0 * t / plan.dt_buffer)]; };
    s = rk4_superop(buffer_drive, dev_, diss.generator, 0.0, plan.buffer_steps, plan.dt_buffer, s);
  }
  return s;
}

Mat3 PulseTrain::unitary(std::span<const double> phases) const {
  std::map<std::pair<double, double>, Mat3> cache;
  Mat3 total = Mat3::Identity();
  std::optional<double> prev;
  for (double phase : phases) {
    const double key_prev = (tail_.enabled() && prev) ? *prev : 1e300;
    const auto key = std::make_pair(key_prev, phase);
    auto it = cache.find(key);
    if (it == cache.end()) {
      it = cache.emplace(key, window_unitary(tail_.enabled() ? prev : std::nullopt, phase)).first;
    }
    total = it->second * total;
    prev = phase;
  }
  return total;
}

Mat3 PulseTrain::evolve(std::span<const double> phases, const Mat3& rho0) const {
  std::map<std::pair<double, double>, Superop9> cache;
  Eigen::Matrix<Complex, 9, 1> state = vec(rho0);
  std::optional<double> prev;
  for (double phase : phases) {
    const double key_prev = (tail_.enabled() && prev) ? *prev : 1e300;
    const auto key = std::make_pair(key_prev, phase);
    auto it = cache.find(key);
    if (it == cache.end()) {
      it = cache.emplace(key, window_superop(tail_.enabled() ? prev : std::nullopt, phase)).first;
    }
    state = it->second * state;
    prev = phase;
  }
  return unvec(state);
}

}  // namespace gatechar
