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

#include "gatechar/drift.hpp"

#include "gatechar/parallel.hpp"

#include <Eigen/SVD>

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <map>
#include <numbers>
#include <ostream>
#include <set>
#include <stdexcept>

namespace gatechar {

namespace {

constexpr double kPi = std::numbers::pi;

// Nearest unitary to the qubit block of a qutrit propagator.
Mat2 qubit_polar(const Mat3& u) {
  const Mat2 block = u.topLeftCorner<2, 2>();
  Eigen::JacobiSVD<Mat2> svd(block, Eigen::ComputeFullU | Eigen::ComputeFullV);
  return svd.matrixU() * svd.matrixV().adjoint();
}

LeakyState ground_state() {
  LeakyState s = LeakyState::Zero();
  s(0) = 1.0 / std::numbers::sqrt2;
  s(3) = 1.0 / std::numbers::sqrt2;
  return s;
}

double checked_probability(double p, const char* what) {
  if (!(p > -1e-9 && p < 1.0 + 1e-9)) throw NumericalError(std::string(what) + " out of range");
  return std::clamp(p, 0.0, 1.0);
}

struct Item {
  std::size_t length_index;
  std::size_t sequence_index;
};

std::vector<Item> items_of(const SequenceSet& set) {
  std::vector<Item> items;
  for (std::size_t l = 0; l < set.lengths.size(); ++l) {
    for (std::size_t s = 0; s < set.sequences[l].size(); ++s) items.push_back({l, s});
  }
  return items;
}

// Builds channels for every requested parameter value, then simulates each
// sequence with `value_of(item, gate)` choosing the value per Clifford.
RBDataset simulate_modulated(const SequenceSet& set, const PulseParams& pulse, const DeviceParams& dev,
                             FluctuationKind kind, const std::vector<double>& values,
                             const std::function<std::size_t(std::size_t, std::size_t)>& value_of, int shots,
                             std::uint64_t seed, int workers, int steps) {
  if (shots <= 0) throw std::invalid_argument("shots must be positive");
  std::vector<CliffordChannels> channels(values.size());
  parallel_for(static_cast<int>(values.size()), workers, [&](int k) {
    const auto [p, d] = apply_parameter(kind, values[static_cast<std::size_t>(k)], pulse, dev);
    channels[static_cast<std::size_t>(k)] = CliffordChannels::from_pulse(p, d, steps);
  });
  const auto items = items_of(set);
  RBDataset out;
  out.lengths = set.lengths;
  out.records.resize(items.size());
  parallel_for(static_cast<int>(items.size()), workers, [&](int i) {
    const auto [l, s] = items[static_cast<std::size_t>(i)];
    const auto& seq = set.sequences[l][s];
    LeakyState state = ground_state();
    for (std::size_t g = 0; g < seq.size(); ++g) state = channels[value_of(static_cast<std::size_t>(i), g)][seq[g]] * state;
    SequenceRecord r;
    r.length = set.lengths[l];
    r.index = static_cast<int>(s);
    r.shots = shots;
    r.survival = checked_probability((state(0) + state(3)) / std::numbers::sqrt2, "ground population");
    r.leaked = checked_probability(state(4), "leaked population");
    std::mt19937_64 rng(derive_seed(seed, {static_cast<std::uint64_t>(r.length), s, 1}));
    r.successes = std::binomial_distribution<int>(shots, r.survival)(rng);
    out.records[static_cast<std::size_t>(i)] = r;
  });
  return out;
}

double interpolate(const std::vector<double>& nodes, double position) {
  const double x = std::clamp(position, 0.0, 1.0) * static_cast<double>(nodes.size() - 1);
  const std::size_t k = std::min(static_cast<std::size_t>(x), nodes.size() - 2);
  const double t = x - static_cast<double>(k);
  return (1.0 - t) * nodes[k] + t * nodes[k + 1];
}

Estimate ratio(const Estimate& num, const Estimate& den) {
  const double f = num.value / den.value;
  const double rel = std::hypot(num.error / den.value, f * den.error / den.value);
  return {f, rel};
}

}  // namespace

void FluctuationSpec::validate() const {
  if (!(sigma >= 0.0) || !std::isfinite(sigma)) throw std::invalid_argument("FluctuationSpec: sigma must be >= 0");
}

double sample_fluctuation(const FluctuationSpec& spec, std::mt19937_64& rng) {
  spec.validate();
  const double mean = spec.kind == FluctuationKind::kAmplitude ? 1.0 : 0.0;
  if (spec.sigma == 0.0) return mean;
  return std::normal_distribution<double>(mean, spec.sigma)(rng);
}

std::pair<PulseParams, DeviceParams> apply_parameter(FluctuationKind kind, double value, const PulseParams& pulse,
                                                     const DeviceParams& dev) {
  PulseParams p = pulse;
  DeviceParams d = dev;
  if (kind == FluctuationKind::kAmplitude) {
    p.omega0 *= value;
  } else {
    d.freq_offset += value;
  }
  return {p, d};
}

FluctuationEPG fluctuation_epg(const FluctuationSpec& spec, const DeviceParams& dev, const PulseParams& pulse,
                               int n_trials, std::uint64_t seed, int workers, int steps) {
  spec.validate();
  if (n_trials < 1) throw std::invalid_argument("fluctuation_epg: n_trials must be positive");
  DeviceParams closed = dev;
  closed.decoherence = false;
  const Mat2 reference = qubit_polar(propagate_schrodinger(pulse, closed, steps));
  std::vector<double> errors(static_cast<std::size_t>(n_trials));
  parallel_for(n_trials, workers, [&](int k) {
    std::mt19937_64 rng(derive_seed(seed, {static_cast<std::uint64_t>(k)}));
    const double v = sample_fluctuation(spec, rng);
    const auto [p, d] = apply_parameter(spec.kind, v, pulse, closed);
    errors[static_cast<std::size_t>(k)] = coherent_gate_error(propagate_schrodinger(p, d, steps), reference);
  });
  FluctuationEPG out;
  out.n_trials = n_trials;
  double sum = 0.0;
  for (double e : errors) sum += e;
  out.epg = sum / n_trials;
  if (n_trials > 1) {
    double ss = 0.0;
    for (double e : errors) ss += (e - out.epg) * (e - out.epg);
    out.std_error = std::sqrt(ss / (n_trials - 1) / n_trials);
  }
  return out;
}

void DriftSchedule::validate() const {
  if (!std::isfinite(amplitude) || amplitude < 0.0) {
    throw std::invalid_argument("DriftSchedule: amplitude must be finite and >= 0");
  }
  if (!std::isfinite(periods) || !std::isfinite(phase)) throw std::invalid_argument("DriftSchedule: non-finite shape");
  double peak = amplitude;
  if (shape == Shape::kRandomWalk) {
    if (steps < 1) throw std::invalid_argument("DriftSchedule: random walk needs steps >= 1");
    if (!(bound > 0.0) || !std::isfinite(bound)) {
      throw std::invalid_argument("DriftSchedule: random walk needs a finite bound");
    }
    peak = 0.0;
    for (double v : walk_nodes()) peak = std::max(peak, std::abs(v));
    if (peak > bound) throw std::invalid_argument("DriftSchedule: trajectory exceeds its bound");
  } else if (bound > 0.0 && peak > bound) {
    throw std::invalid_argument("DriftSchedule: trajectory exceeds its bound");
  }
  if (parameter == FluctuationKind::kAmplitude && peak >= 1.0) {
    throw std::invalid_argument("DriftSchedule: relative amplitude drift must stay below 1");
  }
}

std::vector<double> DriftSchedule::walk_nodes() const {
  if (shape != Shape::kRandomWalk) return {};
  std::vector<double> nodes(static_cast<std::size_t>(steps) + 1, 0.0);
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> step(0.0, 1.0);
  for (std::size_t k = 1; k < nodes.size(); ++k) nodes[k] = nodes[k - 1] + amplitude * step(rng);
  return nodes;
}

double DriftSchedule::value(double position) const {
  if (shape == Shape::kSinusoidal) return amplitude * std::sin(2.0 * kPi * periods * position + phase);
  return interpolate(walk_nodes(), position);
}

GateSetDrift gate_set_drift(DriftSchedule schedule, double gate_time) {
  schedule.validate();
  const auto nodes = schedule.walk_nodes();
  return [schedule, nodes, gate_time](const GateSet& base, double position) {
    const double v = nodes.empty() ? schedule.value(position) : interpolate(nodes, position);
    if (v == 0.0) return base;
    GateSet gs = base;
    if (schedule.parameter == FluctuationKind::kAmplitude) {
      gs.gates[kGx] = ptm_from_unitary(rx(v * kPi / 2.0)) * gs.gates[kGx];
      gs.gates[kGy] = ptm_from_unitary(ry(v * kPi / 2.0)) * gs.gates[kGy];
    } else {
      const Ptm z = ptm_from_unitary(rz(2.0 * kPi * v * gate_time));
      for (auto& g : gs.gates) g = z * g;
    }
    return gs;
  };
}

RBDataset run_fluctuating_rb(const SequenceSet& set, const PulseParams& pulse, const DeviceParams& dev,
                             const FluctuationSpec& spec, int shots, std::uint64_t seed, int workers, int grid_points,
                             int steps) {
  spec.validate();
  if (grid_points < 3 || grid_points % 2 == 0) throw std::invalid_argument("grid_points must be odd and >= 3");
  const int half = grid_points / 2;
  const double node_step = spec.sigma > 0.0 ? 4.0 * spec.sigma / half : 0.0;
  const double mean = spec.kind == FluctuationKind::kAmplitude ? 1.0 : 0.0;
  auto node_of = [&](double draw) {
    if (node_step == 0.0) return 0;
    return std::clamp(static_cast<int>(std::lround((draw - mean) / node_step)), -half, half);
  };

  // Draw all node indices first so that only the visited nodes are built.
  const auto items = items_of(set);
  std::vector<std::vector<int>> nodes(items.size());
  std::set<int> used;
  for (std::size_t i = 0; i < items.size(); ++i) {
    const auto [l, s] = items[i];
    const auto& seq = set.sequences[l][s];
    std::mt19937_64 rng(derive_seed(seed, {static_cast<std::uint64_t>(set.lengths[l]), s, 2}));
    if (spec.correlation == Correlation::kPerSequence) {
      nodes[i].assign(1, node_of(sample_fluctuation(spec, rng)));
    } else {
      nodes[i].resize(seq.size());
      for (int& n : nodes[i]) n = node_of(sample_fluctuation(spec, rng));
    }
    used.insert(nodes[i].begin(), nodes[i].end());
  }
  std::vector<double> values;
  std::map<int, std::size_t> slot;
  for (int n : used) {
    slot[n] = values.size();
    values.push_back(mean + n * node_step);
  }
  std::vector<std::vector<std::size_t>> slots(items.size());
  for (std::size_t i = 0; i < items.size(); ++i) {
    for (int n : nodes[i]) slots[i].push_back(slot.at(n));
  }
  return simulate_modulated(
      set, pulse, dev, spec.kind, values,
      [&](std::size_t i, std::size_t g) { return slots[i].size() == 1 ? slots[i][0] : slots[i][g]; }, shots, seed,
      workers, steps);
}

RBDataset run_drifting_rb(const SequenceSet& set, const PulseParams& pulse, const DeviceParams& dev,
                          const DriftSchedule& schedule, int shots, std::uint64_t seed, int workers, int steps) {
  schedule.validate();
  const auto nodes = schedule.walk_nodes();
  const auto items = items_of(set);
  std::vector<double> values;
  std::map<double, std::size_t> slot;
  std::vector<std::size_t> slots(items.size());
  for (std::size_t i = 0; i < items.size(); ++i) {
    const double position = items.size() > 1 ? static_cast<double>(i) / static_cast<double>(items.size() - 1) : 0.0;
    const double v = nodes.empty() ? schedule.value(position) : interpolate(nodes, position);
    const double value = schedule.parameter == FluctuationKind::kAmplitude ? 1.0 + v : v;
    const auto [it, fresh] = slot.emplace(value, values.size());
    if (fresh) values.push_back(value);
    slots[i] = it->second;
  }
  return simulate_modulated(
      set, pulse, dev, schedule.parameter, values, [&](std::size_t i, std::size_t) { return slots[i]; }, shots,
      seed, workers, steps);
}

double reduced_chi_square(const RBDataset& data, const DecayFit& fit) {
  const int dof = static_cast<int>(data.lengths.size()) - 3;
  if (dof < 1) throw std::invalid_argument("reduced_chi_square: need more than 3 lengths");
  double chi2 = 0.0;
  for (int m : data.lengths) {
    std::vector<double> y;
    for (const auto& r : data.records) {
      if (r.length == m) y.push_back(static_cast<double>(r.successes) / r.shots);
    }
    if (y.size() < 2) throw std::invalid_argument("reduced_chi_square: need two sequences per length");
    double mean = 0.0;
    for (double v : y) mean += v;
    mean /= static_cast<double>(y.size());
    double ss = 0.0;
    for (double v : y) ss += (v - mean) * (v - mean);
    const double var_mean = ss / static_cast<double>(y.size() - 1) / static_cast<double>(y.size());
    const double resid = mean - fit.evaluate(m);
    // A floor of one shot-noise count keeps noiseless lengths finite.
    const double floor = 0.25 / (static_cast<double>(y.size()) * data.records.front().shots);
    chi2 += resid * resid / std::max(var_mean, floor);
  }
  return chi2 / dof;
}

ErrorBudget assemble_budget(const BudgetInputs& in) {
  ErrorBudget b;
  b.inputs = in;
  const std::pair<const char*, bool> present[] = {
      {"r_avg", in.r_avg.has_value()},
      {"r_prime_avg", in.r_prime_avg.has_value()},
      {"r_dec_avg", in.r_dec_avg.has_value()},
      {"gamma_avg", in.gamma_avg.has_value()},
      {"coherence_limit", in.coherence_limit.has_value()},
      {"fluct_amp_epg", in.fluct_amp_epg.has_value()},
      {"fluct_freq_epg", in.fluct_freq_epg.has_value()},
  };
  for (const auto& [name, ok] : present) {
    if (!ok) b.gaps.emplace_back(name);
  }
  if (in.r_prime_avg && in.r_dec_avg) {
    if (in.r_prime_avg->value != 0.0) {
      b.incoherent_fraction = ratio(*in.r_dec_avg, *in.r_prime_avg);
    } else if (in.r_dec_avg->value == 0.0) {
      b.incoherent_fraction = Estimate{0.0, 0.0};
    } else {
      b.gaps.emplace_back("incoherent_fraction (r_prime_avg is zero)");
    }
  }
  if (in.r_prime_avg && in.r_dec_avg && in.gamma_avg) {
    const double value = in.r_prime_avg->value - in.r_dec_avg->value - in.gamma_avg->value;
    const double error = std::sqrt(in.r_prime_avg->error * in.r_prime_avg->error +
                                   in.r_dec_avg->error * in.r_dec_avg->error +
                                   in.gamma_avg->error * in.gamma_avg->error);
    b.residual_coherent = Estimate{value, error};
    const double slack = in.r_prime_avg->error + in.r_dec_avg->error + in.gamma_avg->error;
    b.consistent = value >= -slack;
  }
  return b;
}

namespace {

nlohmann::json estimate_json(const std::optional<Estimate>& e) {
  if (!e) return nullptr;
  return {{"value", e->value}, {"error", e->error}};
}

std::optional<Estimate> estimate_from(const nlohmann::json& j, const char* key) {
  if (!j.contains(key) || j.at(key).is_null()) return std::nullopt;
  const auto& v = j.at(key);
  if (v.is_number()) return Estimate{v.get<double>(), 0.0};
  if (!v.is_object()) throw std::invalid_argument(std::string("budget input ") + key + " must be a number or object");
  for (const auto& [k, _] : v.items()) {
    if (k != "value" && k != "error") throw std::invalid_argument(std::string("unknown key in ") + key + ": " + k);
  }
  return Estimate{v.at("value").get<double>(), v.value("error", 0.0)};
}

}  // namespace

nlohmann::json budget_to_json(const ErrorBudget& b) {
  nlohmann::json j;
  j["r_avg"] = estimate_json(b.inputs.r_avg);
  j["r_prime_avg"] = estimate_json(b.inputs.r_prime_avg);
  j["r_dec_avg"] = estimate_json(b.inputs.r_dec_avg);
  j["gamma_avg"] = estimate_json(b.inputs.gamma_avg);
  j["coherence_limit"] = b.inputs.coherence_limit ? nlohmann::json(*b.inputs.coherence_limit) : nlohmann::json(nullptr);
  j["fluct_amp_epg"] = estimate_json(b.inputs.fluct_amp_epg);
  j["fluct_freq_epg"] = estimate_json(b.inputs.fluct_freq_epg);
  j["incoherent_fraction"] = estimate_json(b.incoherent_fraction);
  j["residual_coherent"] = estimate_json(b.residual_coherent);
  j["consistent"] = b.consistent;
  j["gaps"] = b.gaps;
  return j;
}

BudgetInputs budget_inputs_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw std::invalid_argument("budget inputs must be a JSON object");
  static const std::set<std::string> known = {"r_avg",           "r_prime_avg",   "r_dec_avg",     "gamma_avg",
                                              "coherence_limit", "fluct_amp_epg", "fluct_freq_epg"};
  for (const auto& [k, _] : j.items()) {
    if (!known.count(k)) throw std::invalid_argument("unknown budget input: " + k);
  }
  BudgetInputs in;
  in.r_avg = estimate_from(j, "r_avg");
  in.r_prime_avg = estimate_from(j, "r_prime_avg");
  in.r_dec_avg = estimate_from(j, "r_dec_avg");
  in.gamma_avg = estimate_from(j, "gamma_avg");
  if (auto c = estimate_from(j, "coherence_limit")) in.coherence_limit = c->value;
  in.fluct_amp_epg = estimate_from(j, "fluct_amp_epg");
  in.fluct_freq_epg = estimate_from(j, "fluct_freq_epg");
  return in;
}

void write_budget_table(std::ostream& out, const ErrorBudget& b) {
  auto row = [&](const std::string& name, const std::optional<Estimate>& e, double scale, const char* unit) {
    out << std::left << std::setw(44) << name;
    if (e) {
      out << std::right << std::fixed << std::setprecision(3) << std::setw(10) << e->value * scale << " +- "
          << std::setw(7) << e->error * scale << ' ' << unit;
    } else {
      out << std::right << std::setw(10) << "missing";
    }
    out << '\n';
  };
  const std::optional<Estimate> limit =
      b.inputs.coherence_limit ? std::optional<Estimate>(Estimate{*b.inputs.coherence_limit, 0.0}) : std::nullopt;
  row("total EPG r_avg", b.inputs.r_avg, 1e5, "e-5");
  row("total EPG, purity run r'_avg", b.inputs.r_prime_avg, 1e5, "e-5");
  row("decoherence lower bound r_dec_avg", b.inputs.r_dec_avg, 1e5, "e-5");
  row("coherence limit (master equation)", limit, 1e5, "e-5");
  row("leakage rate per gate Gamma_avg", b.inputs.gamma_avg, 1e5, "e-5");
  row("amplitude fluctuation EPG", b.inputs.fluct_amp_epg, 1e5, "e-5");
  row("frequency fluctuation EPG", b.inputs.fluct_freq_epg, 1e5, "e-5");
  row("residual coherent r' - r_dec - Gamma", b.residual_coherent, 1e5, "e-5");
  row("incoherent fraction r_dec / r'", b.incoherent_fraction, 100.0, "%");
  out.unsetf(std::ios::floatfield);
  if (!b.consistent) out << "warning: residual below minus the summed uncertainties\n";
  if (!b.gaps.empty()) {
    out << "gaps:";
    for (const auto& g : b.gaps) out << ' ' << g;
    out << '\n';
  }
}

}  // namespace gatechar
