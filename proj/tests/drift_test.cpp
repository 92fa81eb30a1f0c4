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

#include <gtest/gtest.h>

#include <array>
#include <cmath>
#include <limits>
#include <numbers>
#include <sstream>

using namespace gatechar;

namespace {

constexpr double kPi = std::numbers::pi;

PulseParams calibrated() {
  PulseParams p = PulseParams::nominal_x90();
  p.omega0 = 77651734.6;
  p.df = -3814943.3;
  p.alpha = -1.0134643;
  return p;
}

// Single-gate error at a fixed parameter offset. For an error quadratic in
// the offset, the Gaussian mean at sigma equals this value at offset sigma.
double error_at(FluctuationKind kind, double offset) {
  DeviceParams dev = DeviceParams::closed_system();
  PulseParams p = calibrated();
  if (kind == FluctuationKind::kAmplitude) {
    p.omega0 *= 1.0 + offset;
  } else {
    dev.freq_offset = offset;
  }
  return coherent_gate_error(propagate_schrodinger(p, dev), rx(kPi / 2));
}

RBConfig small_rb() {
  RBConfig cfg;
  cfg.lengths = {1, 100, 300, 700, 1200, 2000, 3000};
  cfg.n_sequences = 10;
  cfg.seed = 21;
  return cfg;
}

BudgetInputs published() {
  BudgetInputs in;
  in.r_avg = Estimate{7.42e-5, 0.04e-5};
  in.r_prime_avg = Estimate{9.42e-5, 0.09e-5};
  in.r_dec_avg = Estimate{4.62e-5, 0.04e-5};
  in.gamma_avg = Estimate{1.16e-5, 0.04e-5};
  in.coherence_limit = 4.77e-5;
  in.fluct_amp_epg = Estimate{0.2e-5, 0.0};
  in.fluct_freq_epg = Estimate{0.1e-5, 0.0};
  return in;
}

}  // namespace

TEST(SampleFluctuation, ZeroSigmaIsExact) {
  std::mt19937_64 rng(1);
  EXPECT_EQ(sample_fluctuation({FluctuationKind::kAmplitude, 0.0}, rng), 1.0);
  EXPECT_EQ(sample_fluctuation({FluctuationKind::kFrequency, 0.0}, rng), 0.0);
}

TEST(SampleFluctuation, MomentsMatch) {
  std::mt19937_64 rng(2);
  const int n = 100000;
  const FluctuationSpec spec{FluctuationKind::kAmplitude, 0.003};
  double sum = 0.0, sum2 = 0.0;
  for (int k = 0; k < n; ++k) {
    const double v = sample_fluctuation(spec, rng);
    sum += v;
    sum2 += v * v;
  }
  const double mean = sum / n;
  const double sd = std::sqrt(sum2 / n - mean * mean);
  EXPECT_NEAR(mean, 1.0, 5 * 0.003 / std::sqrt(n));
  EXPECT_NEAR(sd / 0.003, 1.0, 0.02);
}

TEST(SampleFluctuation, RejectsNegativeSigma) {
  std::mt19937_64 rng(3);
  EXPECT_THROW(sample_fluctuation({FluctuationKind::kFrequency, -1.0}, rng), std::invalid_argument);
}

TEST(ApplyParameter, ScalesAmplitudeAndShiftsFrequency) {
  const auto [p, d] = apply_parameter(FluctuationKind::kAmplitude, 1.01, calibrated(), DeviceParams{});
  EXPECT_DOUBLE_EQ(p.omega0, 1.01 * calibrated().omega0);
  EXPECT_EQ(d.freq_offset, 0.0);
  const auto [p2, d2] = apply_parameter(FluctuationKind::kFrequency, 1e5, calibrated(), DeviceParams{});
  EXPECT_EQ(p2.omega0, calibrated().omega0);
  EXPECT_EQ(d2.freq_offset, 1e5);
}

TEST(FluctuationEPG, ZeroSigmaGivesZero) {
  const auto r = fluctuation_epg({FluctuationKind::kAmplitude, 0.0}, DeviceParams{}, calibrated(), 10, 1);
  EXPECT_LT(r.epg, 1e-10);
}

TEST(FluctuationEPG, MatchesQuadraticOracle) {
  for (auto [kind, sigma] : {std::pair{FluctuationKind::kAmplitude, 0.003}, {FluctuationKind::kFrequency, 1e5}}) {
    const auto r = fluctuation_epg({kind, sigma}, DeviceParams{}, calibrated(), 400, 5);
    const double oracle = error_at(kind, sigma);
    EXPECT_NEAR(r.epg, oracle, 4 * r.std_error + 0.02 * oracle) << static_cast<int>(kind);
  }
}

TEST(FluctuationEPG, AmplitudeMatchesRotationFormula) {
  // Over-rotation by e pi/2 costs (e pi/2)^2 / 6 on average.
  const double sigma = 0.003;
  const auto r = fluctuation_epg({FluctuationKind::kAmplitude, sigma}, DeviceParams{}, calibrated(), 400, 9);
  const double analytic = std::pow(sigma * kPi / 2, 2) / 6.0;
  EXPECT_NEAR(r.epg / analytic, 1.0, 0.15);
}

TEST(FluctuationEPG, QuadraticScalingWithIndependentDraws) {
  for (auto [kind, sigma] : {std::pair{FluctuationKind::kAmplitude, 0.0025}, {FluctuationKind::kFrequency, 5e4}}) {
    const auto a = fluctuation_epg({kind, sigma}, DeviceParams{}, calibrated(), 400, 31);
    const auto b = fluctuation_epg({kind, 2 * sigma}, DeviceParams{}, calibrated(), 400, 32);
    const double ratio = b.epg / a.epg;
    EXPECT_GE(ratio, 3.5);
    EXPECT_LE(ratio, 4.5);
  }
}

TEST(FluctuationEPG, IndependentOfWorkers) {
  const FluctuationSpec spec{FluctuationKind::kFrequency, 1e5};
  const auto a = fluctuation_epg(spec, DeviceParams{}, calibrated(), 16, 4, 1);
  const auto b = fluctuation_epg(spec, DeviceParams{}, calibrated(), 16, 4, 3);
  EXPECT_EQ(a.epg, b.epg);
  EXPECT_EQ(a.std_error, b.std_error);
}

TEST(DriftSchedule, SinusoidValues) {
  DriftSchedule s;
  s.amplitude = 1e-3;
  EXPECT_EQ(s.value(0.0), 0.0);
  EXPECT_NEAR(s.value(0.25), 1e-3, 1e-15);
  EXPECT_NEAR(s.value(0.75), -1e-3, 1e-15);
}

TEST(DriftSchedule, RandomWalkIsSeededAndInterpolated) {
  DriftSchedule s;
  s.shape = DriftSchedule::Shape::kRandomWalk;
  s.amplitude = 1.0;
  s.steps = 4;
  s.bound = 100.0;
  const auto nodes = s.walk_nodes();
  ASSERT_EQ(nodes.size(), 5u);
  EXPECT_EQ(nodes.front(), 0.0);
  EXPECT_EQ(nodes, s.walk_nodes());
  EXPECT_DOUBLE_EQ(s.value(0.5), nodes[2]);
  EXPECT_DOUBLE_EQ(s.value(0.125), 0.5 * (nodes[0] + nodes[1]));
}

TEST(DriftSchedule, RejectsUnboundedTrajectories) {
  DriftSchedule walk;
  walk.shape = DriftSchedule::Shape::kRandomWalk;
  walk.amplitude = 1e3;
  EXPECT_THROW(walk.validate(), std::invalid_argument);
  walk.parameter = FluctuationKind::kFrequency;
  walk.bound = std::numeric_limits<double>::infinity();
  EXPECT_THROW(walk.validate(), std::invalid_argument);
  walk.bound = 1e3;
  EXPECT_THROW(walk.validate(), std::invalid_argument);
  walk.bound = 1e9;
  EXPECT_NO_THROW(walk.validate());

  DriftSchedule sine;
  sine.amplitude = std::numeric_limits<double>::infinity();
  EXPECT_THROW(sine.validate(), std::invalid_argument);
  sine.amplitude = 1.5;
  EXPECT_THROW(sine.validate(), std::invalid_argument);
  EXPECT_THROW(gate_set_drift(sine), std::invalid_argument);
}

TEST(GateSetDrift, AmplitudeOverRotatesDrivenGates) {
  DriftSchedule s;
  s.amplitude = 2e-3;
  const auto drift = gate_set_drift(s);
  const GateSet base = GateSet::ideal();
  const GateSet g = drift(base, 0.25);
  EXPECT_LT((g.gates[kGx] - ptm_from_unitary(rx(kPi / 2 * 1.002))).norm(), 1e-12);
  EXPECT_LT((g.gates[kGy] - ptm_from_unitary(ry(kPi / 2 * 1.002))).norm(), 1e-12);
  EXPECT_EQ(g.gates[kGi], base.gates[kGi]);
}

TEST(GateSetDrift, FrequencyAddsZRotation) {
  DriftSchedule s;
  s.parameter = FluctuationKind::kFrequency;
  s.amplitude = 1e5;
  const auto drift = gate_set_drift(s, 20e-9);
  const GateSet g = drift(GateSet::ideal(), 0.25);
  const Ptm z = ptm_from_unitary(rz(2 * kPi * 1e5 * 20e-9));
  EXPECT_LT((g.gates[kGi] - z).norm(), 1e-12);
  EXPECT_LT((g.gates[kGx] - z * ptm_from_unitary(rx(kPi / 2))).norm(), 1e-12);
}

TEST(GateSetDrift, ZeroAmplitudeIsBitExact) {
  const GSTDesign design = build_design(16, 256);
  GateSet source = GateSet::ideal();
  source.gates[kGx] = QubitChannel::depolarizing(1e-3).ptm * source.gates[kGx];
  DriftSchedule s;
  s.amplitude = 0.0;
  const GSTDataset a = simulate_dataset(design, source, 7);
  const GSTDataset b = simulate_dataset(design, source, 7, gate_set_drift(s));
  EXPECT_EQ(a.counts0, b.counts0);
}

TEST(DriftingRB, ZeroAmplitudeIsBitExact) {
  const RBConfig cfg = small_rb();
  const auto set = gen_rb_sequences(cfg);
  const DeviceParams dev;
  const RBDataset base = run_sequences(set, CliffordChannels::from_pulse(calibrated(), dev), 1024, 3);
  DriftSchedule s;
  const RBDataset drifted = run_drifting_rb(set, calibrated(), dev, s, 1024, 3);
  ASSERT_EQ(base.records.size(), drifted.records.size());
  for (std::size_t i = 0; i < base.records.size(); ++i) {
    EXPECT_EQ(base.records[i].successes, drifted.records[i].successes);
    EXPECT_EQ(base.records[i].survival, drifted.records[i].survival);
  }
}

TEST(DriftingRB, FrequencyRandomWalkBreaksExponentialDecay) {
  const RBConfig cfg = small_rb();
  const auto set = gen_rb_sequences(cfg);
  const DeviceParams dev;
  DriftSchedule walk;
  walk.shape = DriftSchedule::Shape::kRandomWalk;
  walk.parameter = FluctuationKind::kFrequency;
  walk.amplitude = 3e4;
  walk.steps = static_cast<int>(cfg.lengths.size()) * cfg.n_sequences;
  walk.bound = 5e6;
  walk.seed = 3;
  const RBDataset drifted = run_drifting_rb(set, calibrated(), dev, walk, 1024, 5);
  const RBAnalysis a = analyze_rb(drifted, 50, 1);
  EXPECT_GT(reduced_chi_square(drifted, a.fit), 1.5);

  const RBDataset base = run_sequences(set, CliffordChannels::from_pulse(calibrated(), dev), 1024, 5);
  const RBAnalysis b = analyze_rb(base, 50, 1);
  EXPECT_LT(reduced_chi_square(base, b.fit), 1.5);
}

TEST(FluctuatingRB, ZeroSigmaIsBitExactInBothModes) {
  const RBConfig cfg = small_rb();
  const auto set = gen_rb_sequences(cfg);
  const DeviceParams dev;
  const RBDataset base = run_sequences(set, CliffordChannels::from_pulse(calibrated(), dev), 512, 8);
  for (Correlation c : {Correlation::kPerGate, Correlation::kPerSequence}) {
    const RBDataset f = run_fluctuating_rb(set, calibrated(), dev, {FluctuationKind::kAmplitude, 0.0, c}, 512, 8);
    for (std::size_t i = 0; i < base.records.size(); ++i) {
      EXPECT_EQ(base.records[i].successes, f.records[i].successes);
    }
  }
}

TEST(FluctuatingRB, PerGateMeanMatchesAveragedChannels) {
  // Independent draws per Clifford: the expected survival of a sequence is
  // the survival under the Gaussian-weighted mean of each Clifford channel.
  RBConfig cfg = small_rb();
  cfg.lengths = {1, 100, 300, 700};
  cfg.n_sequences = 40;
  const auto set = gen_rb_sequences(cfg);
  const DeviceParams dev = DeviceParams::closed_system();
  const double sigma = 0.01;
  const int grid = 33, half = grid / 2;
  const double step = 4.0 * sigma / half;
  std::array<LeakyTransfer, CliffordGroup::kSize> mean{};
  for (auto& t : mean) t.setZero();
  auto cdf = [&](double x) { return 0.5 * std::erfc(-x / (sigma * std::numbers::sqrt2)); };
  for (int k = -half; k <= half; ++k) {
    const double lo = k == -half ? 0.0 : cdf((k - 0.5) * step);
    const double hi = k == half ? 1.0 : cdf((k + 0.5) * step);
    PulseParams p = calibrated();
    p.omega0 *= 1.0 + k * step;
    const CliffordChannels ch = CliffordChannels::from_pulse(p, dev);
    for (int c = 0; c < CliffordGroup::kSize; ++c) mean[c] += (hi - lo) * ch[c];
  }
  const FluctuationSpec spec{FluctuationKind::kAmplitude, sigma, Correlation::kPerGate};
  const RBDataset f = run_fluctuating_rb(set, calibrated(), dev, spec, 1024, 8, 0, grid);
  std::size_t i = 0;
  for (std::size_t l = 0; l < set.lengths.size(); ++l) {
    std::vector<double> diff;
    double oracle_mean = 0.0;
    for (const auto& seq : set.sequences[l]) {
      LeakyState s = LeakyState::Zero();
      s(0) = s(3) = 1.0 / std::numbers::sqrt2;
      for (int c : seq) s = mean[c] * s;
      const double oracle = (s(0) + s(3)) / std::numbers::sqrt2;
      oracle_mean += oracle / static_cast<double>(set.sequences[l].size());
      diff.push_back(f.records[i++].survival - oracle);
    }
    double m = 0.0, ss = 0.0;
    for (double d : diff) m += d;
    m /= static_cast<double>(diff.size());
    for (double d : diff) ss += (d - m) * (d - m);
    const double se = std::sqrt(ss / static_cast<double>(diff.size() - 1) / static_cast<double>(diff.size()));
    EXPECT_LT(std::abs(m), 4 * se + 1e-9) << "m = " << set.lengths[l];
    if (set.lengths[l] == 700) EXPECT_LT(oracle_mean, 0.98);
  }
}

TEST(FluctuatingRB, BothModesLowerSurvivalAndAreSeeded) {
  RBConfig cfg = small_rb();
  cfg.lengths = {1, 100, 300, 700};
  cfg.n_sequences = 40;
  const auto set = gen_rb_sequences(cfg);
  const DeviceParams dev = DeviceParams::closed_system();
  const RBDataset base = run_sequences(set, CliffordChannels::from_pulse(calibrated(), dev), 1024, 8);
  auto long_mean = [](const RBDataset& d) {
    double s = 0.0;
    int n = 0;
    for (const auto& r : d.records) {
      if (r.length == 700) {
        s += r.survival;
        ++n;
      }
    }
    return s / n;
  };
  for (Correlation c : {Correlation::kPerGate, Correlation::kPerSequence}) {
    const FluctuationSpec spec{FluctuationKind::kAmplitude, 0.01, c};
    const RBDataset f = run_fluctuating_rb(set, calibrated(), dev, spec, 1024, 8, 0, 33);
    EXPECT_LT(long_mean(f), long_mean(base) - 0.01) << static_cast<int>(c);
    const RBDataset again = run_fluctuating_rb(set, calibrated(), dev, spec, 1024, 8, 2, 33);
    for (std::size_t i = 0; i < f.records.size(); ++i) EXPECT_EQ(f.records[i].successes, again.records[i].successes);
  }
}

TEST(Budget, PublishedNumbersGiveIncoherentFraction) {
  const ErrorBudget b = assemble_budget(published());
  ASSERT_TRUE(b.incoherent_fraction);
  EXPECT_NEAR(100 * b.incoherent_fraction->value, 49.04, 0.005);
  ASSERT_TRUE(b.residual_coherent);
  EXPECT_NEAR(b.residual_coherent->value, 9.42e-5 - 4.62e-5 - 1.16e-5, 1e-20);
  EXPECT_TRUE(b.consistent);
  EXPECT_TRUE(b.gaps.empty());
  std::ostringstream table;
  write_budget_table(table, b);
  EXPECT_NE(table.str().find("49.045"), std::string::npos) << table.str();
}

TEST(Budget, IdentitiesHoldExactly) {
  const BudgetInputs in = published();
  const ErrorBudget b = assemble_budget(in);
  EXPECT_EQ(b.incoherent_fraction->value, in.r_dec_avg->value / in.r_prime_avg->value);
  EXPECT_EQ(b.residual_coherent->value, in.r_prime_avg->value - in.r_dec_avg->value - in.gamma_avg->value);
}

TEST(Budget, AllZeroInputsGiveZeroBudget) {
  BudgetInputs in;
  in.r_avg = in.r_prime_avg = in.r_dec_avg = in.gamma_avg = in.fluct_amp_epg = in.fluct_freq_epg = Estimate{};
  in.coherence_limit = 0.0;
  const ErrorBudget b = assemble_budget(in);
  EXPECT_EQ(b.incoherent_fraction->value, 0.0);
  EXPECT_EQ(b.residual_coherent->value, 0.0);
  EXPECT_TRUE(b.gaps.empty());
}

TEST(Budget, MissingInputsBecomeGaps) {
  const ErrorBudget empty = assemble_budget({});
  EXPECT_EQ(empty.gaps.size(), 7u);
  EXPECT_FALSE(empty.incoherent_fraction);
  EXPECT_FALSE(empty.residual_coherent);
  BudgetInputs in = published();
  in.gamma_avg.reset();
  const ErrorBudget b = assemble_budget(in);
  EXPECT_TRUE(b.incoherent_fraction);
  EXPECT_FALSE(b.residual_coherent);
  ASSERT_EQ(b.gaps.size(), 1u);
  EXPECT_EQ(b.gaps.front(), "gamma_avg");
}

TEST(Budget, FlagsNegativeResidual) {
  BudgetInputs in = published();
  in.r_dec_avg = Estimate{9.0e-5, 0.01e-5};
  EXPECT_FALSE(assemble_budget(in).consistent);
}

TEST(Budget, JsonRoundTrip) {
  const ErrorBudget b = assemble_budget(published());
  const nlohmann::json j = budget_to_json(b);
  nlohmann::json inputs = j;
  for (const char* k : {"incoherent_fraction", "residual_coherent", "consistent", "gaps"}) inputs.erase(k);
  const ErrorBudget again = assemble_budget(budget_inputs_from_json(inputs));
  EXPECT_EQ(budget_to_json(again), j);
  EXPECT_THROW(budget_inputs_from_json({{"r_avg", 1e-4}, {"bogus", 1}}), std::invalid_argument);
  EXPECT_EQ(budget_inputs_from_json({{"r_avg", 1e-4}}).r_avg->value, 1e-4);
}

TEST(Budget, DecoherenceOnlyDeviceLeavesNoCoherentResidual) {
  const DeviceParams dev;
  const CliffordChannels channels = CliffordChannels::from_pulse(calibrated(), dev);
  RBConfig cfg;
  cfg.seed = 13;
  const PBResult pb = purity_benchmark(cfg, channels, {Tomography::kExact, 1024, 200});
  const LeakageAnalysis leak = leakage_benchmark(cfg, channels, 200);
  BudgetInputs in;
  in.r_prime_avg = pb.rb.r_avg;
  in.r_dec_avg = pb.r_dec_avg;
  in.gamma_avg = leak.fit.gamma_avg;
  const ErrorBudget b = assemble_budget(in);
  ASSERT_TRUE(b.residual_coherent);
  EXPECT_TRUE(b.consistent);
  EXPECT_LT(std::abs(b.residual_coherent->value), 3 * b.residual_coherent->error + 1e-6)
      << b.residual_coherent->value << " +- " << b.residual_coherent->error;
  EXPECT_GT(b.incoherent_fraction->value, 0.8);
}
