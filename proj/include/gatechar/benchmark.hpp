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

#include "gatechar/clifford.hpp"
#include "gatechar/qop.hpp"
#include "gatechar/transmon.hpp"

#include <array>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace gatechar {

/// Mean physical pulses per Clifford under the census convention.
inline constexpr double kPulsesPerClifford = 53.0 / 24.0;

struct RBConfig {
  std::vector<int> lengths = default_lengths();
  int n_sequences = 20;
  int shots = 1024;
  std::uint64_t seed = 0;

  void validate() const;
  static std::vector<int> default_lengths();
};

using CliffordSequence = std::vector<int>;

/// Sequences grouped by nominal length; sequences[i] belong to lengths[i].
struct SequenceSet {
  std::vector<int> lengths;
  std::vector<std::vector<CliffordSequence>> sequences;
  /// Clifford index of the interleaved gate, or -1 for reference RB.
  int interleaved_target = -1;
};

/// m random Cliffords followed by the recovery element.
SequenceSet gen_rb_sequences(const RBConfig& cfg);
/// The same random Cliffords as gen_rb_sequences with `target` after each;
/// the recovery element is recomputed.
SequenceSet gen_irb_sequences(const RBConfig& cfg, int target);
/// True for I, X+-90, Y+-90.
bool is_interleave_target(int clifford_index);
/// Ideal PTM product of a sequence.
Ptm sequence_ptm(const CliffordSequence& seq);

/// Readout assignment probabilities; leaked population reads as |1>.
struct SpamModel {
  double p0_given_0 = 1.0;
  double p0_given_1 = 0.0;
  void validate() const;
  double prob_zero(double pop0) const { return p0_given_0 * pop0 + p0_given_1 * (1.0 - pop0); }
};

/// 5x5 leaky transfer matrices of the 24 Cliffords.
class CliffordChannels {
 public:
  static CliffordChannels ideal();
  /// Ideal Clifford followed by depolarizing(q), no leakage.
  static CliffordChannels depolarizing(double q);
  /// Programs composed from per-generator transfers (enum order) and the
  /// idle transfer.
  static CliffordChannels from_generators(const std::array<LeakyTransfer, 4>& generators, const LeakyTransfer& idle);
  /// Generators as frame-rotated copies of the X_{pi/2} and Y_{pi/2}
  /// channels; X-90 and Y-90 are the Z(pi)-conjugates.
  static CliffordChannels from_gate_set(const QubitChannel& x90, const QubitChannel& y90, const QubitChannel& idle);
  /// Physical pulse at every generator phase; identity is an undriven slot
  /// of the same duration.
  static CliffordChannels from_pulse(const PulseParams& x90, const DeviceParams& dev, int steps = kDefaultSteps);

  const LeakyTransfer& operator[](int index) const { return transfers_.at(index); }

  /// Replaces the Clifford table entry at the interleaved slots of IRB
  /// sequences, e.g. to model an ideal interleaved gate.
  std::optional<LeakyTransfer> interleaved;

 private:
  std::array<LeakyTransfer, CliffordGroup::kSize> transfers_{};
};

LeakyTransfer rz_transfer(double angle);
/// Transfer of a pulse played in a frame rotated by `phase`.
LeakyTransfer phase_shifted(const LeakyTransfer& x90, double phase);

struct SequenceRecord {
  int length = 0;
  int index = 0;
  int shots = 0;
  int successes = 0;
  /// Ground-state probability before shot sampling.
  double survival = 0.0;
  /// |2> population before sampling.
  double leaked = 0.0;
};

struct RBDataset {
  std::vector<int> lengths;
  std::vector<SequenceRecord> records;
};

/// Channel-level simulation with binomial sampling. Seeds derive from
/// (seed, length, sequence index) so results do not depend on `workers`.
RBDataset run_sequences(const SequenceSet& set, const CliffordChannels& channels, int shots, std::uint64_t seed,
                        const SpamModel& spam = {}, int workers = 0);
/// Pulse-level simulation: full qutrit density matrix propagated through the
/// Lindblad superoperator of every physical pulse.
RBDataset run_sequences_pulse(const SequenceSet& set, const PulseParams& x90, const DeviceParams& dev, int shots,
                              std::uint64_t seed, const SpamModel& spam = {}, int workers = 0,
                              int steps = kDefaultSteps);

enum class DecayModel {
  kExponential,         // A p^m + B
  kShiftedExponential,  // A u^{m-1} + B
};

struct DecayFit {
  double a = 0.0, p = 0.0, b = 0.0;
  /// Bootstrap standard errors (zero until a bootstrap is run).
  double a_err = 0.0, p_err = 0.0, b_err = 0.0;
  std::vector<double> residuals;
  double rms_residual = 0.0;
  bool ok = false;
  bool degenerate = false;
  std::string message;
  DecayModel model = DecayModel::kExponential;

  double evaluate(double m) const;
};

/// Bounded least-squares fit; failures are flagged in the result.
DecayFit fit_decay(std::span<const double> m, std::span<const double> y,
                   DecayModel model = DecayModel::kExponential);

struct BootstrapResult {
  std::vector<double> std_errors;
  int n_resamples = 0;
  /// Resamples whose refit threw; excluded from the statistics.
  int failures = 0;
};

/// Resamples the per-length values with replacement, passes the per-length
/// means to `refit`, and reports the standard deviation of each output.
BootstrapResult bootstrap(const std::vector<std::vector<double>>& per_length,
                          const std::function<std::vector<double>(const std::vector<double>&)>& refit,
                          int n_resamples, std::uint64_t seed);

double epc_from_p(double p, int d = 2);
double epg_avg(double r_clif);
/// (1 - p_int/p_ref)(1 - 1/d); negative values are returned with a warning.
double epg_interleaved(double p_int, double p_ref, int d = 2);

struct Estimate {
  double value = 0.0;
  double error = 0.0;
};

struct RBAnalysis {
  std::vector<int> lengths;
  std::vector<double> mean_survival;
  DecayFit fit;
  Estimate r_clif;
  Estimate r_avg;
};

RBAnalysis analyze_rb(const RBDataset& data, int n_resamples = 1000, std::uint64_t seed = 0);

/// Interleaved EPG with error propagated from both decay fits.
Estimate interleaved_rate(const DecayFit& interleaved, const DecayFit& reference, int d = 2);

enum class Tomography { kExact, kShots };

struct PBOptions {
  Tomography tomography = Tomography::kExact;
  /// Shots per measurement basis in kShots mode.
  int tomography_shots = 1024;
  int n_resamples = 1000;
};

struct PurityRecord {
  int length = 0;
  int index = 0;
  double purity = 0.0;
};

struct PBResult {
  std::vector<int> lengths;
  std::vector<double> mean_purity;
  std::vector<PurityRecord> records;
  DecayFit purity_fit;
  /// RB analysis of the same sequences (survival channel).
  RBAnalysis rb;
  Estimate u;
  Estimate r_dec_clif;
  Estimate r_dec_avg;
  /// r_dec_avg / r_avg of the same dataset.
  double incoherent_fraction = 0.0;
};

PBResult purity_benchmark(const RBConfig& cfg, const CliffordChannels& channels, const PBOptions& opts = {},
                          const SpamModel& spam = {}, int workers = 0);

struct LeakageFit {
  Estimate gamma_clif;
  Estimate gamma_avg;
  Estimate p2_inf;
  Estimate p2_0;
  double rms_residual = 0.0;
  bool ok = false;
  std::string message;

  double evaluate(double m) const;
};

double leakage_model(double m, double gamma, double p2_inf, double p2_0);
LeakageFit leakage_fit(std::span<const double> m, std::span<const double> p2);

struct LeakageRecord {
  int length = 0;
  int index = 0;
  int shots = 0;
  int leak_counts = 0;
};

struct LeakageAnalysis {
  std::vector<int> lengths;
  std::vector<double> mean_p2;
  std::vector<LeakageRecord> records;
  LeakageFit fit;
};

LeakageAnalysis leakage_benchmark(const RBConfig& cfg, const CliffordChannels& channels, int n_resamples = 1000,
                                  int workers = 0);
/// Fit with bootstrap errors over the per-sequence leak fractions.
LeakageAnalysis analyze_leakage(std::vector<int> lengths, std::vector<LeakageRecord> records, int n_resamples,
                                std::uint64_t seed);

void write_rb_csv(std::ostream& out, const RBDataset& data);
void write_leakage_csv(std::ostream& out, const LeakageAnalysis& data);
void write_purity_csv(std::ostream& out, const PBResult& data);
/// Fitted curve on the length grid next to the measured means.
void write_fit_curve_csv(std::ostream& out, const std::vector<int>& lengths, const std::vector<double>& means,
                         const std::function<double(double)>& curve);

}  // namespace gatechar
