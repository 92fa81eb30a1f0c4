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

#include "gatechar/transmon.hpp"

#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

namespace gatechar {

struct ScanOptions {
  int steps = kDefaultSteps;
  /// 0 for exact populations, otherwise shots per sweep point.
  int shots = 0;
  std::uint64_t seed = 0;
  int workers = 0;
};

/// Populations after a pulse sequence over one or two swept parameters.
struct CalibScan {
  std::string parameter;
  std::vector<double> values;
  /// Second sweep axis of 2D scans; empty otherwise.
  std::string parameter2;
  std::vector<double> values2;
  /// n_pi for amplitude scans, pulse pairs otherwise.
  int repetitions = 0;
  /// Row-major over (values2, values): index j * values.size() + i.
  std::vector<double> p1;
  std::vector<double> p2;

  std::vector<double> column(std::size_t j) const;
};

struct Extremum {
  double position = 0.0;
  double value = 0.0;
  std::size_t index = 0;
  /// False when the extreme sample sits on the sweep boundary.
  bool interior = false;
};

/// Extreme sample refined by the parabola through it and its neighbours.
Extremum find_peak(std::span<const double> x, std::span<const double> y);
Extremum find_dip(std::span<const double> x, std::span<const double> y);

/// Full width of the central fringe at half height between the extremum and
/// the opposite extreme of the sweep. NaN when a side never crosses.
double fringe_width(std::span<const double> x, std::span<const double> y, bool peak);

/// 2 n_pi X_{pi/2} pulses per point; n_pi must be odd.
CalibScan amp_scan(const PulseParams& base, int n_pi, std::span<const double> omega0, const DeviceParams& dev,
                   const ScanOptions& opts = {});
/// n_pairs repetitions of (X_pi, X_-pi), each X_pi being two X_{pi/2} pulses.
CalibScan detuning_scan(const PulseParams& base, int n_pairs, std::span<const double> df, const DeviceParams& dev,
                        const ScanOptions& opts = {});
/// n_pairs repetitions of (X_{pi/2}, X_{-pi/2}) over a DRAG-weight sweep.
/// The composite X_pi of the detuning scan cancels a phase error symmetric
/// about the pulse; this sequence accumulates it.
CalibScan drag_scan(const PulseParams& base, int n_pairs, std::span<const double> alpha, const DeviceParams& dev,
                    const ScanOptions& opts = {});
/// (X_pi, X_-pi) pairs over a DRAG-weight by buffer-time grid.
CalibScan buffer_scan(const PulseParams& base, std::span<const double> alpha, std::span<const double> tbuff,
                      const DeviceParams& dev, const TailModel& tail = {}, int n_pairs = 50,
                      const ScanOptions& opts = {});

/// Spread (max - min) over t_buff columns of the P1 dip position in alpha.
double pattern_shift(const CalibScan& buffer);

struct CalibOptions {
  std::vector<int> n_pi = {1, 11, 51};
  std::vector<int> n_pairs = {50, 100, 200};
  int max_rounds = 5;
  int points = 21;
  /// Convergence tolerances on the per-round parameter change.
  double omega0_rtol = 1e-6;
  double df_tol = 10.0;
  double alpha_tol = 1e-5;
  ScanOptions scan;
};

struct CalibRound {
  int round = 0;
  double omega0 = 0.0;
  double df = 0.0;
  double alpha = 0.0;
  /// 1 - F_avg of the coherent pulse against X_{pi/2}.
  double coherent_error = 0.0;
  double leak_per_gate = 0.0;
};

struct CalibResult {
  PulseParams pulse;
  std::vector<CalibRound> history;
  bool converged = false;
  std::string message;
};

/// Average |2> population after one pulse, over |0> and |1> inputs.
double coherent_leakage(const PulseParams& p, const DeviceParams& dev, int steps = kDefaultSteps);

/// Rounds of amplitude scans (growing n_pi), detuning scans (growing N)
/// and a leakage minimization in alpha, until parameters stop moving.
CalibResult closed_loop_calibrate(const DeviceParams& dev, const PulseParams& initial, const CalibOptions& opts = {});

void write_scan_csv(std::ostream& out, const CalibScan& scan);

}  // namespace gatechar
