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

#include "gatechar/benchmark.hpp"

#include "gatechar/least_squares.hpp"
#include "gatechar/parallel.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <iostream>
#include <limits>
#include <numeric>
#include <ostream>
#include <random>
#include <set>
#include <sstream>
#include <stdexcept>

namespace gatechar {

namespace {

const double kSqrt2 = std::sqrt(2.0);

LeakyState ground_state() {
  LeakyState s = LeakyState::Zero();
  s(0) = 1.0 / kSqrt2;
  s(3) = 1.0 / kSqrt2;
  return s;
}

struct WorkItem {
  int length_index;
  int sequence_index;
};

std::vector<WorkItem> work_items(const SequenceSet& set) {
  std::vector<WorkItem> items;
  for (std::size_t l = 0; l < set.lengths.size(); ++l) {
    for (std::size_t s = 0; s < set.sequences[l].size(); ++s) {
      items.push_back({static_cast<int>(l), static_cast<int>(s)});
    }
  }
  return items;
}

double clamp_probability(double p, const char* what, int length, int index) {
  if (!(p > -1e-9 && p < 1.0 + 1e-9)) {
    std::ostringstream msg;
    msg << what << " = " << p << " out of range for sequence (m=" << length << ", #" << index << ")";
    throw NumericalError(msg.str());
  }
  return std::clamp(p, 0.0, 1.0);
}

int sample_binomial(int shots, double p, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::binomial_distribution<int> dist(shots, p);
  return dist(rng);
}

// Interleaved slots are the odd positions before the recovery element.
LeakyState run_channel_sequence(const CliffordSequence& seq, const CliffordChannels& channels,
                                bool interleaved = false) {
  LeakyState s = ground_state();
  const bool override = interleaved && channels.interleaved.has_value();
  for (std::size_t i = 0; i < seq.size(); ++i) {
    const bool slot = override && i % 2 == 1 && i + 1 < seq.size();
    s = (slot ? *channels.interleaved : channels[seq[i]]) * s;
  }
  return s;
}

double sample_std(const std::vector<double>& v) {
  if (v.size() < 2) return 0.0;
  double shift = 0.0;
  for (double x : v) shift += x - v.front();
  const double mean_offset = shift / static_cast<double>(v.size());
  double ss = 0.0;
  for (double x : v) ss += (x - v.front() - mean_offset) * (x - v.front() - mean_offset);
  return std::sqrt(ss / static_cast<double>(v.size() - 1));
}

std::vector<double> means_of(const std::vector<std::vector<double>>& groups) {
  std::vector<double> out;
  for (const auto& g : groups) out.push_back(std::accumulate(g.begin(), g.end(), 0.0) / static_cast<double>(g.size()));
  return out;
}

std::vector<double> to_doubles(const std::vector<int>& v) { return std::vector<double>(v.begin(), v.end()); }

// Groups per-sequence values by length in the order of `lengths`.
template <class Record, class Value>
std::vector<std::vector<double>> group_by_length(const std::vector<int>& lengths, const std::vector<Record>& records,
                                                 Value value) {
  std::vector<std::vector<double>> groups(lengths.size());
  for (const auto& r : records) {
    const auto it = std::find(lengths.begin(), lengths.end(), r.length);
    if (it == lengths.end()) throw std::invalid_argument("record length not in the length grid");
    groups[static_cast<std::size_t>(it - lengths.begin())].push_back(value(r));
  }
  return groups;
}

}  // namespace

std::vector<int> RBConfig::default_lengths() { return {1, 30, 100, 300, 700, 1200, 2000, 3000, 4500}; }

void RBConfig::validate() const {
  if (lengths.empty()) throw std::invalid_argument("RBConfig: empty length list");
  for (std::size_t i = 0; i < lengths.size(); ++i) {
    if (lengths[i] <= 0) throw std::invalid_argument("RBConfig: lengths must be positive");
    if (i > 0 && lengths[i] <= lengths[i - 1]) throw std::invalid_argument("RBConfig: lengths must increase");
  }
  if (n_sequences <= 0) throw std::invalid_argument("RBConfig: n_sequences must be positive");
  if (shots <= 0) throw std::invalid_argument("RBConfig: shots must be positive");
}

SequenceSet gen_rb_sequences(const RBConfig& cfg) {
  cfg.validate();
  SequenceSet set;
  set.lengths = cfg.lengths;
  std::uniform_int_distribution<int> pick(0, CliffordGroup::kSize - 1);
  for (int m : cfg.lengths) {
    std::vector<CliffordSequence> per_length;
    for (int s = 0; s < cfg.n_sequences; ++s) {
      std::mt19937_64 rng(derive_seed(cfg.seed, {static_cast<std::uint64_t>(m), static_cast<std::uint64_t>(s), 0}));
      CliffordSequence seq(static_cast<std::size_t>(m));
      for (auto& c : seq) c = pick(rng);
      seq.push_back(inverse_for(seq));
      per_length.push_back(std::move(seq));
    }
    set.sequences.push_back(std::move(per_length));
  }
  return set;
}

bool is_interleave_target(int clifford_index) {
  if (clifford_index == 0) return true;
  const auto& group = clifford_group();
  for (Generator g : kGenerators) {
    if (group.find(generator_unitary(g)) == clifford_index) return true;
  }
  return false;
}

SequenceSet gen_irb_sequences(const RBConfig& cfg, int target) {
  if (target < 0 || target >= CliffordGroup::kSize) {
    throw std::invalid_argument("gen_irb_sequences: target is not a Clifford");
  }
  SequenceSet reference = gen_rb_sequences(cfg);
  reference.interleaved_target = target;
  for (auto& per_length : reference.sequences) {
    for (auto& seq : per_length) {
      CliffordSequence interleaved;
      for (std::size_t i = 0; i + 1 < seq.size(); ++i) {
        interleaved.push_back(seq[i]);
        interleaved.push_back(target);
      }
      interleaved.push_back(inverse_for(interleaved));
      seq = std::move(interleaved);
    }
  }
  return reference;
}

Ptm sequence_ptm(const CliffordSequence& seq) {
  Ptm r = Ptm::Identity();
  for (int c : seq) r = clifford_group().element(c).ptm.ptm * r;
  return r;
}

void SpamModel::validate() const {
  if (p0_given_0 < 0.0 || p0_given_0 > 1.0 || p0_given_1 < 0.0 || p0_given_1 > 1.0) {
    throw std::invalid_argument("SpamModel: assignment probabilities must lie in [0, 1]");
  }
}

LeakyTransfer rz_transfer(double angle) {
  LeakyTransfer t = LeakyTransfer::Identity();
  t.topLeftCorner<4, 4>() = rz_ptm(angle);
  return t;
}

LeakyTransfer phase_shifted(const LeakyTransfer& x90, double phase) {
  return rz_transfer(-phase) * x90 * rz_transfer(phase);
}

CliffordChannels CliffordChannels::ideal() {
  CliffordChannels c;
  for (const auto& e : clifford_group().elements()) {
    QubitChannel q = e.ptm;
    c.transfers_[e.index] = q.leaky_transfer();
  }
  return c;
}

CliffordChannels CliffordChannels::depolarizing(double q) {
  CliffordChannels c;
  const Ptm dep = QubitChannel::depolarizing(q).ptm;
  for (const auto& e : clifford_group().elements()) {
    QubitChannel ch;
    ch.ptm = dep * e.ptm.ptm;
    c.transfers_[e.index] = ch.leaky_transfer();
  }
  return c;
}

CliffordChannels CliffordChannels::from_generators(const std::array<LeakyTransfer, 4>& generators,
                                                   const LeakyTransfer& idle) {
  CliffordChannels c;
  const auto& group = clifford_group();
  for (int i = 0; i < CliffordGroup::kSize; ++i) {
    const auto& word = group.word(i);
    if (word.empty()) {
      c.transfers_[i] = idle;
      continue;
    }
    LeakyTransfer t = LeakyTransfer::Identity();
    for (Generator g : word) t = generators[static_cast<std::size_t>(g)] * t;
    c.transfers_[i] = t;
  }
  return c;
}

CliffordChannels CliffordChannels::from_gate_set(const QubitChannel& x90, const QubitChannel& y90,
                                                 const QubitChannel& idle) {
  const double pi = std::acos(-1.0);
  const LeakyTransfer x = x90.leaky_transfer();
  const LeakyTransfer y = y90.leaky_transfer();
  const std::array<LeakyTransfer, 4> gens = {x, phase_shifted(x, pi), y, phase_shifted(y, pi)};
  return from_generators(gens, idle.leaky_transfer());
}

CliffordChannels CliffordChannels::from_pulse(const PulseParams& x90, const DeviceParams& dev, int steps) {
  GateChannelOptions opts;
  opts.steps = steps;
  PulseParams base = x90;
  base.phase = 0.0;
  const LeakyTransfer x = gate_channel(base, dev, opts).channel.leaky_transfer();
  std::array<LeakyTransfer, 4> gens;
  for (Generator g : kGenerators) gens[static_cast<std::size_t>(g)] = phase_shifted(x, generator_phase(g));
  PulseParams idle = base;
  idle.omega0 = 0.0;
  idle.alpha = 0.0;
  idle.df = 0.0;
  return from_generators(gens, gate_channel(idle, dev, opts).channel.leaky_transfer());
}

RBDataset run_sequences(const SequenceSet& set, const CliffordChannels& channels, int shots, std::uint64_t seed,
                        const SpamModel& spam, int workers) {
  if (shots <= 0) throw std::invalid_argument("run_sequences: shots must be positive");
  spam.validate();
  const auto items = work_items(set);
  RBDataset out;
  out.lengths = set.lengths;
  out.records.resize(items.size());
  parallel_for(static_cast<int>(items.size()), workers, [&](int i) {
    const auto [l, s] = items[static_cast<std::size_t>(i)];
    const int m = set.lengths[static_cast<std::size_t>(l)];
    const LeakyState final = run_channel_sequence(set.sequences[l][s], channels, set.interleaved_target >= 0);
    SequenceRecord r;
    r.length = m;
    r.index = s;
    r.shots = shots;
    r.survival = clamp_probability((final(0) + final(3)) / kSqrt2, "ground population", m, s);
    r.leaked = clamp_probability(final(4), "leaked population", m, s);
    r.successes = sample_binomial(
        shots, spam.prob_zero(r.survival),
        derive_seed(seed, {static_cast<std::uint64_t>(m), static_cast<std::uint64_t>(s), 1}));
    out.records[static_cast<std::size_t>(i)] = r;
  });
  return out;
}

RBDataset run_sequences_pulse(const SequenceSet& set, const PulseParams& x90, const DeviceParams& dev, int shots,
                              std::uint64_t seed, const SpamModel& spam, int workers, int steps) {
  if (shots <= 0) throw std::invalid_argument("run_sequences_pulse: shots must be positive");
  spam.validate();
  std::array<Superop9, 4> gens;
  for (Generator g : kGenerators) {
    PulseParams p = x90;
    p.phase = generator_phase(g);
    gens[static_cast<std::size_t>(g)] = lindblad_superoperator(p, dev, steps);
  }
  PulseParams idle = x90;
  idle.omega0 = 0.0;
  idle.alpha = 0.0;
  idle.df = 0.0;
  idle.phase = 0.0;
  const Superop9 idle_superop = lindblad_superoperator(idle, dev, steps);
  std::array<Superop9, CliffordGroup::kSize> cliffords;
  for (int c = 0; c < CliffordGroup::kSize; ++c) {
    const auto& word = clifford_group().word(c);
    Superop9 s = word.empty() ? idle_superop : Superop9::Identity();
    for (Generator g : word) s = gens[static_cast<std::size_t>(g)] * s;
    cliffords[c] = s;
  }

  const auto items = work_items(set);
  RBDataset out;
  out.lengths = set.lengths;
  out.records.resize(items.size());
  parallel_for(static_cast<int>(items.size()), workers, [&](int i) {
    const auto [l, s] = items[static_cast<std::size_t>(i)];
    const int m = set.lengths[static_cast<std::size_t>(l)];
    Mat3 rho = DensityMatrix3::basis_state(0).matrix();
    for (int c : set.sequences[l][s]) rho = apply_superop(cliffords[c], rho);
    SequenceRecord r;
    r.length = m;
    r.index = s;
    r.shots = shots;
    r.survival = clamp_probability(rho(0, 0).real(), "ground population", m, s);
    r.leaked = clamp_probability(rho(2, 2).real(), "leaked population", m, s);
    r.successes = sample_binomial(
        shots, spam.prob_zero(r.survival),
        derive_seed(seed, {static_cast<std::uint64_t>(m), static_cast<std::uint64_t>(s), 1}));
    out.records[static_cast<std::size_t>(i)] = r;
  });
  return out;
}

double DecayFit::evaluate(double m) const {
  const double e = model == DecayModel::kExponential ? m : m - 1.0;
  return a * std::pow(p, e) + b;
}

DecayFit fit_decay(std::span<const double> m, std::span<const double> y, DecayModel model) {
  if (m.size() != y.size()) throw std::invalid_argument("fit_decay: m and y differ in length");
  if (std::set<double>(m.begin(), m.end()).size() < 4) {
    throw std::invalid_argument("fit_decay: at least 4 distinct lengths are required");
  }
  DecayFit fit;
  fit.model = model;
  const double shift = model == DecayModel::kExponential ? 0.0 : 1.0;
  const auto [lo_it, hi_it] = std::minmax_element(m.begin(), m.end());
  const double y_first = y[static_cast<std::size_t>(lo_it - m.begin())];
  const double y_last = y[static_cast<std::size_t>(hi_it - m.begin())];

  const auto [ymin, ymax] = std::minmax_element(y.begin(), y.end());
  if (*ymax - *ymin <= 1e-12 * std::max(1.0, std::abs(*ymax))) {
    fit.a = 0.0;
    fit.p = 1.0;
    fit.b = std::accumulate(y.begin(), y.end(), 0.0) / static_cast<double>(y.size());
    fit.residuals.assign(y.size(), 0.0);
    for (std::size_t i = 0; i < y.size(); ++i) fit.residuals[i] = y[i] - fit.b;
    fit.degenerate = true;
    fit.message = "degenerate fit: data show no decay (A = 0, p unidentifiable)";
    return fit;
  }

  // Initial guesses: endpoints for A and B, log-linear regression for p.
  double a0 = y_first - y_last;
  double b0 = y_last;
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  int n = 0;
  for (std::size_t i = 0; i < m.size(); ++i) {
    const double d = (y[i] - b0) / (a0 == 0.0 ? 1.0 : a0);
    if (d <= 0.0 || m[i] == *hi_it) continue;
    const double x = m[i] - shift;
    const double ly = std::log(d);
    sx += x;
    sy += ly;
    sxx += x * x;
    sxy += x * ly;
    ++n;
  }
  double p0 = 0.99;
  if (n >= 2 && n * sxx - sx * sx > 0.0) p0 = std::exp((n * sxy - sx * sy) / (n * sxx - sx * sx));
  p0 = std::clamp(p0, 1e-6, 1.0);
  a0 = std::clamp(a0, -1.0, 2.0);
  b0 = std::clamp(b0, -1.0, 2.0);

  LsqProblem problem;
  problem.residuals = [&](const Eigen::VectorXd& x) {
    Eigen::VectorXd r(static_cast<Eigen::Index>(m.size()));
    for (std::size_t i = 0; i < m.size(); ++i) r(i) = x(0) * std::pow(x(1), m[i] - shift) + x(2) - y[i];
    return r;
  };
  problem.jacobian = [&](const Eigen::VectorXd& x) {
    Eigen::MatrixXd j(static_cast<Eigen::Index>(m.size()), 3);
    for (std::size_t i = 0; i < m.size(); ++i) {
      const double e = m[i] - shift;
      const double pe = std::pow(x(1), e);
      j(i, 0) = pe;
      j(i, 1) = e == 0.0 ? 0.0 : x(0) * e * std::pow(x(1), e - 1.0);
      j(i, 2) = 1.0;
    }
    return j;
  };
  problem.lower = Eigen::Vector3d(-1.0, 1e-12, -1.0);
  problem.upper = Eigen::Vector3d(2.0, 1.0, 2.0);
  const LsqResult res = solve_least_squares(problem, Eigen::Vector3d(a0, p0, b0));

  fit.a = res.x(0);
  fit.p = res.x(1);
  fit.b = res.x(2);
  fit.residuals.assign(res.residuals.data(), res.residuals.data() + res.residuals.size());
  fit.rms_residual = std::sqrt(res.residuals.squaredNorm() / static_cast<double>(res.residuals.size()));
  fit.degenerate = std::abs(fit.a) < 1e-9;
  fit.ok = res.converged && res.x.allFinite() && fit.p > 0.0 && fit.p <= 1.0 && !fit.degenerate;
  if (!res.converged) fit.message = "fit did not converge";
  if (fit.degenerate) fit.message = "degenerate fit: amplitude vanishes, p unidentifiable";
  return fit;
}

BootstrapResult bootstrap(const std::vector<std::vector<double>>& per_length,
                          const std::function<std::vector<double>(const std::vector<double>&)>& refit,
                          int n_resamples, std::uint64_t seed) {
  for (const auto& g : per_length) {
    if (g.size() < 2) throw std::invalid_argument("bootstrap: at least 2 sequences per length are required");
  }
  BootstrapResult out;
  out.n_resamples = n_resamples;
  std::vector<std::vector<double>> samples;
  for (int r = 0; r < n_resamples; ++r) {
    std::mt19937_64 rng(derive_seed(seed, {static_cast<std::uint64_t>(r)}));
    std::vector<double> means;
    for (const auto& g : per_length) {
      std::uniform_int_distribution<std::size_t> pick(0, g.size() - 1);
      // Offsets from a pivot keep constant groups exactly constant.
      double sum = 0.0;
      for (std::size_t k = 0; k < g.size(); ++k) sum += g[pick(rng)] - g.front();
      means.push_back(g.front() + sum / static_cast<double>(g.size()));
    }
    try {
      std::vector<double> params = refit(means);
      if (std::all_of(params.begin(), params.end(), [](double v) { return std::isfinite(v); })) {
        samples.push_back(std::move(params));
      } else {
        ++out.failures;
      }
    } catch (const std::exception&) {
      ++out.failures;
    }
  }
  if (samples.empty()) return out;
  for (std::size_t k = 0; k < samples.front().size(); ++k) {
    std::vector<double> column;
    for (const auto& s : samples) column.push_back(s[k]);
    out.std_errors.push_back(sample_std(column));
  }
  return out;
}

double epc_from_p(double p, int d) {
  if (!(p > 0.0 && p <= 1.0)) throw std::invalid_argument("epc_from_p: p must lie in (0, 1]");
  return (1.0 - p) * (1.0 - 1.0 / d);
}

double epg_avg(double r_clif) { return r_clif / kPulsesPerClifford; }

double epg_interleaved(double p_int, double p_ref, int d) {
  if (!(p_int > 0.0 && p_int <= 1.0) || !(p_ref > 0.0 && p_ref <= 1.0)) {
    throw std::invalid_argument("epg_interleaved: decay parameters must lie in (0, 1]");
  }
  const double r = (1.0 - p_int / p_ref) * (1.0 - 1.0 / d);
  if (r < 0.0) {
    std::clog << "warning: negative interleaved error rate " << r << " (p_int > p_ref, statistical fluctuation)\n";
  }
  return r;
}

RBAnalysis analyze_rb(const RBDataset& data, int n_resamples, std::uint64_t seed) {
  RBAnalysis out;
  out.lengths = data.lengths;
  const auto groups = group_by_length(data.lengths, data.records, [](const SequenceRecord& r) {
    return static_cast<double>(r.successes) / static_cast<double>(r.shots);
  });
  out.mean_survival = means_of(groups);
  const std::vector<double> m = to_doubles(data.lengths);
  out.fit = fit_decay(m, out.mean_survival);
  if (n_resamples > 0) {
    const BootstrapResult bs = bootstrap(
        groups,
        [&](const std::vector<double>& means) {
          const DecayFit f = fit_decay(m, means);
          return std::vector<double>{f.a, f.p, f.b};
        },
        n_resamples, seed);
    if (bs.std_errors.size() == 3) {
      out.fit.a_err = bs.std_errors[0];
      out.fit.p_err = bs.std_errors[1];
      out.fit.b_err = bs.std_errors[2];
    }
  }
  out.r_clif = {epc_from_p(out.fit.p), out.fit.p_err / 2.0};
  out.r_avg = {epg_avg(out.r_clif.value), epg_avg(out.r_clif.error)};
  return out;
}

Estimate interleaved_rate(const DecayFit& interleaved, const DecayFit& reference, int d) {
  const double pi = interleaved.p, pr = reference.p;
  const double scale = 1.0 - 1.0 / d;
  const double di = scale / pr;
  const double dr = scale * pi / (pr * pr);
  return {epg_interleaved(pi, pr, d), std::hypot(di * interleaved.p_err, dr * reference.p_err)};
}

PBResult purity_benchmark(const RBConfig& cfg, const CliffordChannels& channels, const PBOptions& opts,
                          const SpamModel& spam, int workers) {
  spam.validate();
  const SequenceSet set = gen_rb_sequences(cfg);
  const auto items = work_items(set);
  RBDataset survival;
  survival.lengths = set.lengths;
  survival.records.resize(items.size());
  PBResult out;
  out.lengths = set.lengths;
  out.records.resize(items.size());
  parallel_for(static_cast<int>(items.size()), workers, [&](int i) {
    const auto [l, s] = items[static_cast<std::size_t>(i)];
    const int m = set.lengths[static_cast<std::size_t>(l)];
    const LeakyState final = run_channel_sequence(set.sequences[l][s], channels);
    const auto um = static_cast<std::uint64_t>(m);
    const auto us = static_cast<std::uint64_t>(s);
    SequenceRecord r;
    r.length = m;
    r.index = s;
    r.shots = cfg.shots;
    r.survival = clamp_probability((final(0) + final(3)) / kSqrt2, "ground population", m, s);
    r.leaked = clamp_probability(final(4), "leaked population", m, s);
    r.successes = sample_binomial(cfg.shots, spam.prob_zero(r.survival), derive_seed(cfg.seed, {um, us, 1}));
    survival.records[static_cast<std::size_t>(i)] = r;

    double purity = 0.0;
    if (opts.tomography == Tomography::kExact) {
      purity = final.head<4>().squaredNorm();
    } else {
      // Pauli expectations from +-1 outcomes in the X, Y and Z bases.
      double sum_sq = 0.0;
      for (int k = 1; k <= 3; ++k) {
        const double p_plus = clamp_probability((final(0) + final(k)) / kSqrt2, "basis probability", m, s);
        const int plus = sample_binomial(opts.tomography_shots, p_plus,
                                         derive_seed(cfg.seed, {um, us, 2, static_cast<std::uint64_t>(k)}));
        const double e = 2.0 * plus / opts.tomography_shots - 1.0;
        sum_sq += e * e;
      }
      purity = 0.5 * (1.0 + sum_sq);
    }
    out.records[static_cast<std::size_t>(i)] = {m, s, purity};
  });

  out.rb = analyze_rb(survival, opts.n_resamples, derive_seed(cfg.seed, {3}));
  const auto groups = group_by_length(out.lengths, out.records, [](const PurityRecord& r) { return r.purity; });
  out.mean_purity = means_of(groups);
  const std::vector<double> m = to_doubles(out.lengths);
  out.purity_fit = fit_decay(m, out.mean_purity, DecayModel::kShiftedExponential);
  if (opts.n_resamples > 0) {
    const BootstrapResult bs = bootstrap(
        groups,
        [&](const std::vector<double>& means) {
          const DecayFit f = fit_decay(m, means, DecayModel::kShiftedExponential);
          return std::vector<double>{f.a, f.p, f.b};
        },
        opts.n_resamples, derive_seed(cfg.seed, {4}));
    if (bs.std_errors.size() == 3) {
      out.purity_fit.a_err = bs.std_errors[0];
      out.purity_fit.p_err = bs.std_errors[1];
      out.purity_fit.b_err = bs.std_errors[2];
    }
  }
  const double u = out.purity_fit.p;
  if (!(u > 0.0 && u <= 1.0)) {
    out.purity_fit.ok = false;
    out.purity_fit.message = "unitarity outside (0, 1]";
  }
  out.u = {u, out.purity_fit.p_err};
  const double su = std::sqrt(u);
  out.r_dec_clif = {(1.0 - su) / 2.0, out.purity_fit.p_err / (4.0 * su)};
  out.r_dec_avg = {epg_avg(out.r_dec_clif.value), epg_avg(out.r_dec_clif.error)};
  out.incoherent_fraction = out.rb.r_avg.value != 0.0 ? out.r_dec_avg.value / out.rb.r_avg.value : 0.0;
  return out;
}

double leakage_model(double m, double gamma, double p2_inf, double p2_0) {
  const double e = std::exp(-gamma * m);
  return p2_inf * (1.0 - e) + p2_0 * e;
}

double LeakageFit::evaluate(double m) const {
  return leakage_model(m, gamma_clif.value, p2_inf.value, p2_0.value);
}

LeakageFit leakage_fit(std::span<const double> m, std::span<const double> p2) {
  if (m.size() != p2.size()) throw std::invalid_argument("leakage_fit: m and p2 differ in length");
  if (m.size() < 4) throw std::invalid_argument("leakage_fit: at least 4 points are required");
  for (double v : p2) {
    if (!(v >= 0.0 && v <= 1.0)) throw std::invalid_argument("leakage_fit: p2 values must lie in [0, 1]");
  }
  const auto n = static_cast<Eigen::Index>(m.size());

  // Quadratic expansion P0 + G (Pinf - P0) m - G^2 (Pinf - P0) m^2 / 2 seeds
  // the nonlinear fit.
  const double m_max = *std::max_element(m.begin(), m.end());
  Eigen::MatrixXd vander(n, 3);
  Eigen::VectorXd yv(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double x = m[static_cast<std::size_t>(i)] / m_max;
    vander.row(i) << 1.0, x, x * x;
    yv(i) = p2[static_cast<std::size_t>(i)];
  }
  const Eigen::Vector3d c = vander.colPivHouseholderQr().solve(yv);
  double p0 = c(0);
  double gamma = 1.0 / m_max;
  double pinf = *std::max_element(p2.begin(), p2.end());
  if (c(1) > 0.0 && c(2) < 0.0) {
    gamma = -2.0 * c(2) / c(1) / m_max;
    pinf = p0 + c(1) / (gamma * m_max);
  }
  gamma = std::clamp(gamma, 1e-12, 10.0);
  pinf = std::clamp(pinf, 0.0, 1.0);
  p0 = std::clamp(p0, -1.0, 1.0);

  LsqProblem problem;
  problem.residuals = [&](const Eigen::VectorXd& x) {
    Eigen::VectorXd r(n);
    for (Eigen::Index i = 0; i < n; ++i) {
      r(i) = leakage_model(m[static_cast<std::size_t>(i)], x(0), x(1), x(2)) - p2[static_cast<std::size_t>(i)];
    }
    return r;
  };
  problem.jacobian = [&](const Eigen::VectorXd& x) {
    Eigen::MatrixXd j(n, 3);
    for (Eigen::Index i = 0; i < n; ++i) {
      const double mi = m[static_cast<std::size_t>(i)];
      const double e = std::exp(-x(0) * mi);
      j(i, 0) = (x(1) - x(2)) * mi * e;
      j(i, 1) = 1.0 - e;
      j(i, 2) = e;
    }
    return j;
  };
  problem.lower = Eigen::Vector3d(0.0, 0.0, -1.0);
  problem.upper = Eigen::Vector3d(10.0, 1.0, 1.0);
  LsqOptions opts;
  opts.max_iterations = 2000;
  const LsqResult res = solve_least_squares(problem, Eigen::Vector3d(gamma, pinf, p0), opts);

  LeakageFit fit;
  fit.gamma_clif.value = res.x(0);
  fit.p2_inf.value = res.x(1);
  fit.p2_0.value = res.x(2);
  fit.gamma_avg.value = epg_avg(fit.gamma_clif.value);
  if (const auto cov = res.covariance()) {
    fit.gamma_clif.error = std::sqrt(std::max(0.0, (*cov)(0, 0)));
    fit.p2_inf.error = std::sqrt(std::max(0.0, (*cov)(1, 1)));
    fit.p2_0.error = std::sqrt(std::max(0.0, (*cov)(2, 2)));
    fit.gamma_avg.error = epg_avg(fit.gamma_clif.error);
  }
  fit.rms_residual = std::sqrt(res.residuals.squaredNorm() / static_cast<double>(n));
  fit.ok = res.converged && res.x.allFinite() && res.x(0) > 0.0;
  if (!fit.ok) fit.message = res.x(0) <= 0.0 ? "no feasible leakage rate for the data" : "fit did not converge";
  return fit;
}

LeakageAnalysis analyze_leakage(std::vector<int> lengths, std::vector<LeakageRecord> records, int n_resamples,
                                std::uint64_t seed) {
  LeakageAnalysis out;
  out.lengths = std::move(lengths);
  out.records = std::move(records);
  const auto groups = group_by_length(out.lengths, out.records, [](const LeakageRecord& r) {
    return static_cast<double>(r.leak_counts) / static_cast<double>(r.shots);
  });
  out.mean_p2 = means_of(groups);
  const std::vector<double> m = to_doubles(out.lengths);
  out.fit = leakage_fit(m, out.mean_p2);
  if (n_resamples > 0) {
    const BootstrapResult bs = bootstrap(
        groups,
        [&](const std::vector<double>& means) {
          const LeakageFit f = leakage_fit(m, means);
          return std::vector<double>{f.gamma_clif.value, f.p2_inf.value, f.p2_0.value};
        },
        n_resamples, seed);
    if (bs.std_errors.size() == 3) {
      out.fit.gamma_clif.error = bs.std_errors[0];
      out.fit.p2_inf.error = bs.std_errors[1];
      out.fit.p2_0.error = bs.std_errors[2];
      out.fit.gamma_avg.error = epg_avg(bs.std_errors[0]);
    }
  }
  return out;
}

LeakageAnalysis leakage_benchmark(const RBConfig& cfg, const CliffordChannels& channels, int n_resamples,
                                  int workers) {
  const SequenceSet set = gen_rb_sequences(cfg);
  const auto items = work_items(set);
  std::vector<LeakageRecord> records(items.size());
  parallel_for(static_cast<int>(items.size()), workers, [&](int i) {
    const auto [l, s] = items[static_cast<std::size_t>(i)];
    const int m = set.lengths[static_cast<std::size_t>(l)];
    const LeakyState final = run_channel_sequence(set.sequences[l][s], channels);
    const double p2 = clamp_probability(final(4), "leaked population", m, s);
    const int counts = sample_binomial(
        cfg.shots, p2, derive_seed(cfg.seed, {static_cast<std::uint64_t>(m), static_cast<std::uint64_t>(s), 5}));
    records[static_cast<std::size_t>(i)] = {m, s, cfg.shots, counts};
  });
  return analyze_leakage(set.lengths, std::move(records), n_resamples, derive_seed(cfg.seed, {6}));
}

void write_rb_csv(std::ostream& out, const RBDataset& data) {
  out << "length,index,shots,successes\n";
  for (const auto& r : data.records) out << r.length << ',' << r.index << ',' << r.shots << ',' << r.successes << '\n';
}

void write_leakage_csv(std::ostream& out, const LeakageAnalysis& data) {
  out << "length,index,shots,leak_counts\n";
  for (const auto& r : data.records) out << r.length << ',' << r.index << ',' << r.shots << ',' << r.leak_counts << '\n';
}

void write_purity_csv(std::ostream& out, const PBResult& data) {
  out << "length,index,purity\n";
  out << std::setprecision(17);
  for (const auto& r : data.records) out << r.length << ',' << r.index << ',' << r.purity << '\n';
}

void write_fit_curve_csv(std::ostream& out, const std::vector<int>& lengths, const std::vector<double>& means,
                         const std::function<double(double)>& curve) {
  if (lengths.size() != means.size()) throw std::invalid_argument("write_fit_curve_csv: size mismatch");
  out << "m,mean,fit\n";
  out << std::setprecision(17);
  for (std::size_t i = 0; i < lengths.size(); ++i) {
    out << lengths[i] << ',' << means[i] << ',' << curve(static_cast<double>(lengths[i])) << '\n';
  }
}

}  // namespace gatechar
