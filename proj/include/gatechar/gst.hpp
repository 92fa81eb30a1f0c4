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
#include "gatechar/qop.hpp"
#include "gatechar/transmon.hpp"

#include <array>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace gatechar {

/// Gate labels of the tomographic gate set.
enum GateLabel : int { kGi = 0, kGx = 1, kGy = 2 };

/// Gates in time order.
using GateString = std::vector<int>;

/// "Gx:Gy:Gi"; the empty string prints as "{}".
std::string format_gate_string(const GateString& s);
GateString parse_gate_string(const std::string& text);

std::vector<GateString> default_fiducials();
std::vector<GateString> default_germs();

struct GSTCircuit {
  GateString gates;
  int prep = 0;
  /// Germ index, or -1 for the fiducial-pair (Gram) block.
  int germ = -1;
  int reps = 0;
  int meas = 0;
  /// Depth at which the gate string first appears (0 for the Gram block).
  int depth = 0;
};

struct GSTDesign {
  std::vector<GateString> fiducials;
  std::vector<GateString> germs;
  std::vector<int> depths;
  int shots = 1024;
  /// Unique circuits in execution order: Gram block, then depth-major.
  std::vector<GSTCircuit> circuits;
  /// Circuit count before deduplication.
  std::size_t raw_count = 0;

  /// Index of a circuit by gate string, or -1.
  int find(const GateString& s) const;

 private:
  friend GSTDesign build_design(int, int, std::vector<GateString>, std::vector<GateString>);
  std::map<GateString, int> index_;
};

/// Repetitions floor(L / len(germ)), at least 1, for L = 1, 2, 4, ...,
/// max_depth.
GSTDesign build_design(int max_depth, int shots, std::vector<GateString> fiducials = default_fiducials(),
                       std::vector<GateString> germs = default_germs());

/// Gate set in the normalized Pauli basis.
struct GateSet {
  std::array<Ptm, 3> gates;
  PauliVector rho;
  PauliVector effect;

  static GateSet ideal();

  QubitChannel gate(int label) const;
  Mat2 rho_matrix() const;
  MeasurementEffect measurement() const;
  Ptm string_ptm(const GateString& s) const;
  double probability(const GateString& s) const;
  /// G -> M G M^-1, rho -> M rho, E -> E M^-1.
  GateSet gauge_transform(const Eigen::Matrix4d& m) const;
};

/// Probabilities of every design circuit with germ powers shared.
std::vector<double> circuit_probabilities(const GateSet& gs, const GSTDesign& design);

struct GSTDataset {
  std::vector<double> shots;
  /// Outcome-0 counts; non-integer for exact (infinite-shot) data.
  std::vector<double> counts0;
  bool exact = false;

  double frequency(std::size_t i) const { return counts0[i] / shots[i]; }
};

/// Gate set seen by the circuit executed at `position` in [0, 1] of the run.
using GateSetDrift = std::function<GateSet(const GateSet& base, double position)>;

GSTDataset simulate_dataset(const GSTDesign& design, const GateSet& source, std::uint64_t seed,
                            const GateSetDrift& drift = {}, int workers = 0);
/// Frequencies equal to the model probabilities, weighted by design shots.
GSTDataset exact_dataset(const GSTDesign& design, const GateSet& source);

/// Tomographic gate set of the simulated transmon: X_{pi/2} pulse, the same
/// pulse in a frame rotated for Y_{pi/2}, an undriven slot, ideal SPAM.
GateSet gate_set_from_pulse(const PulseParams& x90, const DeviceParams& dev);

struct GramReport {
  /// gram(i, j): frequency of outcome 0 for F_i followed by F_j.
  Eigen::MatrixXd gram;
  Eigen::VectorXd singular_values;
  int rank = 0;
  double condition = 0.0;
  double noise_floor = 0.0;
  bool complete = false;
};

GramReport gram_matrix(const GSTDesign& design, const GSTDataset& data);

/// Linear-inversion estimate, gauge-fixed to `target`. Throws NumericalError
/// when the fiducial frame is singular.
GateSet lgst(const GSTDesign& design, const GSTDataset& data, const GateSet& target = GateSet::ideal());

struct GaugeOptions {
  double gate_weight = 1.0;
  double spam_weight = 0.1;
  /// Restrict M to the trace-preserving subgroup (first row e_0).
  bool tp_only = false;
  /// Steps with cond(M) above this are rejected.
  double max_condition = 1e6;
};

struct GaugeResult {
  GateSet gates;
  Eigen::Matrix4d m = Eigen::Matrix4d::Identity();
  double distance = 0.0;
};

GaugeResult gauge_optimize(const GateSet& estimate, const GateSet& target, const GaugeOptions& opts = {},
                           const Eigen::Matrix4d& initial = Eigen::Matrix4d::Identity());

/// Weighted squared distance minimized by gauge_optimize.
double gauge_distance(const GateSet& a, const GateSet& b, const GaugeOptions& opts = {});

struct MLEOptions {
  bool cptp = true;
  int max_iterations = 200;
  double tolerance = 1e-8;
  /// Fit circuits of depth <= L for each L in turn.
  bool iterative = true;
  /// Gauge reference for the TP solution before it is projected onto CPTP
  /// maps; the ideal gate set when absent.
  std::optional<GateSet> gauge_target;
};

struct GateSetEstimate {
  GateSet gates;
  double log_likelihood = 0.0;
  bool cptp = false;
  bool converged = false;
  int iterations = 0;
  std::string message;
  /// Fit after each depth stage: circuits of depth <= stage_depths[i]. The
  /// last entry is the final estimate.
  std::vector<int> stage_depths;
  std::vector<GateSet> stage_gates;
};

/// sum_c N_c [f log p + (1 - f) log(1 - p)] over circuits of depth <= max_depth.
double log_likelihood(const GateSet& gs, const GSTDesign& design, const GSTDataset& data, int max_depth = 1 << 30);

GateSetEstimate mle_optimize(const GSTDesign& design, const GSTDataset& data, const GateSet& seed,
                             const MLEOptions& opts = {});

/// Non-gauge parameters of a single-qubit TP gate set with three gates.
inline constexpr int kGateSetParameters = 31;

struct ViolationDepth {
  int depth = 0;
  int n_circuits = 0;
  double two_delta_logl = 0.0;
  double k = 0.0;
  double n_sigma = 0.0;
};

struct ViolationReport {
  /// 2 Delta logL per circuit and its single-circuit score (d - 1)/sqrt(2).
  std::vector<double> circuit_deviance;
  std::vector<double> circuit_score;
  /// Cumulative: entry L scores all circuits of depth <= L.
  std::vector<ViolationDepth> per_depth;
  double two_delta_logl = 0.0;
  double k = 0.0;
  double n_sigma = 0.0;
};

/// Every depth is scored with the same gate set. Throws
/// std::invalid_argument when k <= 0.
ViolationReport model_violation(const GateSet& estimate, const GSTDesign& design, const GSTDataset& data,
                                int n_parameters = kGateSetParameters);
/// Depth L is scored with the stage fit to circuits of depth <= L, so slow
/// drift shows up at the depths where it first becomes resolvable.
ViolationReport model_violation(const GateSetEstimate& estimate, const GSTDesign& design, const GSTDataset& data,
                                int n_parameters = kGateSetParameters);

/// RB on Cliffords compiled from the gate set's X, Y and idle gates.
RBAnalysis rb_from_gateset(const GateSet& gs, const RBConfig& cfg, int n_resamples = 1000, int workers = 0);

struct GSTResult {
  GramReport gram;
  GateSet lgst;
  GateSetEstimate mle;
  /// MLE estimate gauge-fixed to the target.
  GateSet estimate;
  ViolationReport violation;
};

/// Gram check, LGST seed, gauge fix, MLE, gauge fix, violation score.
GSTResult run_gst(const GSTDesign& design, const GSTDataset& data, const GateSet& target = GateSet::ideal(),
                  const MLEOptions& opts = {});

double ptm_frobenius_error(const Ptm& a, const Ptm& b);

void write_circuit_list(std::ostream& out, const GSTDesign& design);
void write_gst_dataset_csv(std::ostream& out, const GSTDesign& design, const GSTDataset& data);
std::string gate_set_to_json(const GateSet& gs, double log_likelihood = 0.0);
GateSet gate_set_from_json(const std::string& text);
void write_violation_csv(std::ostream& out, const ViolationReport& report);

}  // namespace gatechar
