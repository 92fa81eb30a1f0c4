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

#include "gatechar/calib.hpp"

#include "gatechar/parallel.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <iomanip>
#include <limits>
#include <numbers>
#include <ostream>
#include <random>
#include <stdexcept>

namespace gatechar {

namespace {

constexpr double kPi = std::numbers::pi;

void check_sweep(std::span<const double> v, const char* what) {
  if (v.empty()) throw std::invalid_argument(std::string(what) + ": empty sweep");
  if (!std::is_sorted(v.begin(), v.end())) throw std::invalid_argument(std::string(what) + ": sweep must be sorted");
}

std::vector<double> pair_phases(int n_pairs) {
  std::vector<double> phases;
  phases.reserve(4 * static_cast<std::size_t>(n_pairs));
  for (int k = 0; k < n_pairs; ++k) phases.insert(phases.end(), {0.0, 0.0, kPi, kPi});
  return phases;
}

// Populations of |1> and |2> after the train acts on |0>.
std::pair<double, double> populations(const PulseParams& p, const DeviceParams& dev, const TailModel& tail,
                                      std::span<const double> phases, int steps) {
  const PulseTrain train(p, dev, tail, steps);
  if (!dev.decoherence) {
    const Mat3 u = train.unitary(phases);
    return {std::norm(u(1, 0)), std::norm(u(2, 0))};
  }
  Mat3 rho0 = Mat3::Zero();
  rho0(0, 0) = 1.0;
  const Mat3 rho = train.evolve(phases, rho0);
  return {rho(1, 1).real(), rho(2, 2).real()};
}

// Fills scan.p1/p2 with `point(i, j)` evaluated on every grid point.
void run_grid(CalibScan& scan, const ScanOptions& opts,
              const std::function<std::pair<double, double>(std::size_t, std::size_t)>& point) {
  const std::size_t n1 = scan.values.size();
  const std::size_t n2 = std::max<std::size_t>(1, scan.values2.size());
  scan.p1.assign(n1 * n2, 0.0);
  scan.p2.assign(n1 * n2, 0.0);
  parallel_for(static_cast<int>(n1 * n2), opts.workers, [&](int k) {
    const std::size_t i = static_cast<std::size_t>(k) % n1;
    const std::size_t j = static_cast<std::size_t>(k) / n1;
    auto [p1, p2] = point(i, j);
    p1 = std::clamp(p1, 0.0, 1.0);
    p2 = std::clamp(p2, 0.0, 1.0 - p1);
    if (opts.shots > 0) {
      std::mt19937_64 rng(derive_seed(opts.seed, {i, j}));
      const int n1c = std::binomial_distribution<int>(opts.shots, p1)(rng);
      const double rest = 1.0 - p1;
      const int n2c = rest > 0.0 ? std::binomial_distribution<int>(opts.shots - n1c, std::min(1.0, p2 / rest))(rng) : 0;
      p1 = static_cast<double>(n1c) / opts.shots;
      p2 = static_cast<double>(n2c) / opts.shots;
    }
    scan.p1[static_cast<std::size_t>(k)] = p1;
    scan.p2[static_cast<std::size_t>(k)] = p2;
  });
}

Extremum find_extremum(std::span<const double> x, std::span<const double> y, bool peak) {
  if (x.size() != y.size() || x.empty()) throw std::invalid_argument("find_extremum: mismatched or empty data");
  const auto it = peak ? std::max_element(y.begin(), y.end()) : std::min_element(y.begin(), y.end());
  Extremum e;
  e.index = static_cast<std::size_t>(it - y.begin());
  e.position = x[e.index];
  e.value = y[e.index];
  e.interior = e.index > 0 && e.index + 1 < y.size();
  if (!e.interior) return e;
  const double x0 = x[e.index - 1], x1 = x[e.index], x2 = x[e.index + 1];
  const double y0 = y[e.index - 1], y1 = y[e.index], y2 = y[e.index + 1];
  const double d1 = (y1 - y0) / (x1 - x0);
  const double d2 = (y2 - y1) / (x2 - x1);
  const double curvature = (d2 - d1) / (x2 - x0);
  if (curvature == 0.0) return e;
  const double vertex = 0.5 * (x0 + x1) - d1 / (2.0 * curvature);
  if (vertex < x0 || vertex > x2) return e;
  e.position = vertex;
  e.value = y1 + d1 * (vertex - x1) + curvature * (vertex - x0) * (vertex - x1);
  return e;
}

std::vector<double> linspace(double lo, double hi, int n) {
  std::vector<double> v(static_cast<std::size_t>(n));
  for (int k = 0; k < n; ++k) v[static_cast<std::size_t>(k)] = lo + (hi - lo) * k / (n - 1);
  return v;
}

// Repeated sweeps around `center`, narrowing the span by 4 each time the
// extremum is bracketed and recentring otherwise.
double zoom(const std::function<std::vector<double>(const std::vector<double>&)>& measure, double center, double span,
            bool peak, int points, int levels) {
  for (int level = 0, recentres = 0; level < levels;) {
    const auto grid = linspace(center - span, center + span, points);
    const auto y = measure(grid);
    const Extremum e = find_extremum(grid, y, peak);
    center = e.position;
    if (e.interior) {
      span /= 4.0;
      ++level;
    } else if (++recentres > 8) {
      break;
    }
  }
  return center;
}

}  // namespace

CalibScan drag_scan(const PulseParams& base, int n_pairs, std::span<const double> alpha, const DeviceParams& dev,
                    const ScanOptions& opts);

namespace {

// The pair sequence vanishes on a second detuning branch where each pulse
// carries a phase error symmetric about it. Every dark dip in a wide sweep is
// refined and the one that also darkens the (X_{pi/2}, X_{-pi/2}) sequence
// wins.
double select_detuning_branch(const PulseParams& p, int n_pairs, const DeviceParams& dev, const CalibOptions& opts) {
  const double half_span = 6e6;
  const int points = 121;
  const auto grid = linspace(p.df - half_span, p.df + half_span, points);
  const auto y = detuning_scan(p, n_pairs, grid, dev, opts.scan).p1;
  double best = p.df;
  double best_score = std::numeric_limits<double>::infinity();
  const double step = grid[1] - grid[0];
  for (std::size_t k = 1; k + 1 < y.size(); ++k) {
    if (!(y[k] <= y[k - 1] && y[k] < y[k + 1] && y[k] < 0.1)) continue;
    PulseParams q = p;
    q.df = zoom([&](const std::vector<double>& g) { return detuning_scan(q, n_pairs, g, dev, opts.scan).p1; },
                grid[k], 2.0 * step, false, opts.points, 2);
    const double alpha[] = {q.alpha};
    const double score = drag_scan(q, n_pairs, alpha, dev, opts.scan).p1.front();
    if (score < best_score) {
      best_score = score;
      best = q.df;
    }
  }
  return best;
}

}  // namespace

std::vector<double> CalibScan::column(std::size_t j) const {
  const std::size_t n = values.size();
  return {p1.begin() + static_cast<std::ptrdiff_t>(j * n), p1.begin() + static_cast<std::ptrdiff_t>((j + 1) * n)};
}

Extremum find_peak(std::span<const double> x, std::span<const double> y) { return find_extremum(x, y, true); }

Extremum find_dip(std::span<const double> x, std::span<const double> y) { return find_extremum(x, y, false); }

double fringe_width(std::span<const double> x, std::span<const double> y, bool peak) {
  const Extremum e = find_extremum(x, y, peak);
  const double opposite = peak ? *std::min_element(y.begin(), y.end()) : *std::max_element(y.begin(), y.end());
  const double half = 0.5 * (y[e.index] + opposite);
  auto beyond = [&](double v) { return peak ? v < half : v > half; };
  auto crossing = [&](std::size_t a, std::size_t b) {
    return x[a] + (half - y[a]) * (x[b] - x[a]) / (y[b] - y[a]);
  };
  double left = std::numeric_limits<double>::quiet_NaN();
  double right = left;
  for (std::size_t k = e.index; k > 0; --k) {
    if (beyond(y[k - 1])) {
      left = crossing(k - 1, k);
      break;
    }
  }
  for (std::size_t k = e.index; k + 1 < y.size(); ++k) {
    if (beyond(y[k + 1])) {
      right = crossing(k, k + 1);
      break;
    }
  }
  return right - left;
}

CalibScan amp_scan(const PulseParams& base, int n_pi, std::span<const double> omega0, const DeviceParams& dev,
                   const ScanOptions& opts) {
  if (n_pi < 1 || n_pi % 2 == 0) throw std::invalid_argument("amp_scan: n_pi must be a positive odd number");
  check_sweep(omega0, "amp_scan");
  CalibScan scan;
  scan.parameter = "omega0";
  scan.values.assign(omega0.begin(), omega0.end());
  scan.repetitions = n_pi;
  const std::vector<double> phases(2 * static_cast<std::size_t>(n_pi), 0.0);
  run_grid(scan, opts, [&](std::size_t i, std::size_t) {
    PulseParams p = base;
    p.omega0 = scan.values[i];
    return populations(p, dev, {}, phases, opts.steps);
  });
  return scan;
}

CalibScan detuning_scan(const PulseParams& base, int n_pairs, std::span<const double> df, const DeviceParams& dev,
                        const ScanOptions& opts) {
  if (n_pairs < 1) throw std::invalid_argument("detuning_scan: n_pairs must be positive");
  check_sweep(df, "detuning_scan");
  CalibScan scan;
  scan.parameter = "df";
  scan.values.assign(df.begin(), df.end());
  scan.repetitions = n_pairs;
  const auto phases = pair_phases(n_pairs);
  run_grid(scan, opts, [&](std::size_t i, std::size_t) {
    PulseParams p = base;
    p.df = scan.values[i];
    return populations(p, dev, {}, phases, opts.steps);
  });
  return scan;
}

CalibScan drag_scan(const PulseParams& base, int n_pairs, std::span<const double> alpha, const DeviceParams& dev,
                    const ScanOptions& opts) {
  if (n_pairs < 1) throw std::invalid_argument("drag_scan: n_pairs must be positive");
  check_sweep(alpha, "drag_scan");
  CalibScan scan;
  scan.parameter = "alpha";
  scan.values.assign(alpha.begin(), alpha.end());
  scan.repetitions = n_pairs;
  std::vector<double> phases;
  for (int k = 0; k < n_pairs; ++k) phases.insert(phases.end(), {0.0, kPi});
  run_grid(scan, opts, [&](std::size_t i, std::size_t) {
    PulseParams p = base;
    p.alpha = scan.values[i];
    return populations(p, dev, {}, phases, opts.steps);
  });
  return scan;
}

CalibScan buffer_scan(const PulseParams& base, std::span<const double> alpha, std::span<const double> tbuff,
                      const DeviceParams& dev, const TailModel& tail, int n_pairs, const ScanOptions& opts) {
  if (n_pairs < 1) throw std::invalid_argument("buffer_scan: n_pairs must be positive");
  check_sweep(alpha, "buffer_scan");
  check_sweep(tbuff, "buffer_scan");
  CalibScan scan;
  scan.parameter = "alpha";
  scan.values.assign(alpha.begin(), alpha.end());
  scan.parameter2 = "tbuff";
  scan.values2.assign(tbuff.begin(), tbuff.end());
  scan.repetitions = n_pairs;
  const auto phases = pair_phases(n_pairs);
  run_grid(scan, opts, [&](std::size_t i, std::size_t j) {
    PulseParams p = base;
    p.alpha = scan.values[i];
    p.tbuff = scan.values2[j];
    return populations(p, dev, tail, phases, opts.steps);
  });
  return scan;
}

double pattern_shift(const CalibScan& buffer) {
  if (buffer.values2.empty()) throw std::invalid_argument("pattern_shift: not a 2D scan");
  double lo = std::numeric_limits<double>::infinity();
  double hi = -lo;
  for (std::size_t j = 0; j < buffer.values2.size(); ++j) {
    const auto col = buffer.column(j);
    const double pos = find_dip(buffer.values, col).position;
    lo = std::min(lo, pos);
    hi = std::max(hi, pos);
  }
  return hi - lo;
}

double coherent_leakage(const PulseParams& p, const DeviceParams& dev, int steps) {
  DeviceParams closed = dev;
  closed.decoherence = false;
  const Mat3 u = propagate_schrodinger(p, closed, steps);
  return 0.5 * (std::norm(u(2, 0)) + std::norm(u(2, 1)));
}

CalibResult closed_loop_calibrate(const DeviceParams& dev, const PulseParams& initial, const CalibOptions& opts) {
  if (opts.max_rounds < 1 || opts.points < 5) throw std::invalid_argument("closed_loop_calibrate: bad options");
  DeviceParams closed = dev;
  closed.decoherence = false;
  CalibResult res;
  PulseParams p = initial;
  p.phase = 0.0;
  const int levels = 3;

  for (int round = 1; round <= opts.max_rounds; ++round) {
    const PulseParams prev = p;
    for (int n : opts.n_pi) {
      p.omega0 = zoom(
          [&](const std::vector<double>& grid) { return amp_scan(p, n, grid, dev, opts.scan).p1; }, p.omega0,
          0.4 / n * p.omega0, true, opts.points, levels);
    }
    if (round == 1) p.df = select_detuning_branch(p, opts.n_pairs.front(), dev, opts);
    for (int n : opts.n_pairs) {
      // The pair-sequence dip narrows roughly as 1/N; 50 pairs resolve about
      // a megahertz.
      const double span = 1.5e6 * 50.0 / n;
      p.df = zoom([&](const std::vector<double>& grid) { return detuning_scan(p, n, grid, dev, opts.scan).p1; },
                  p.df, span, false, opts.points, levels);
    }
    p.alpha = zoom(
        [&](const std::vector<double>& grid) {
          std::vector<double> y(grid.size());
          parallel_for(static_cast<int>(grid.size()), opts.scan.workers, [&](int k) {
            PulseParams q = p;
            q.alpha = grid[static_cast<std::size_t>(k)];
            y[static_cast<std::size_t>(k)] = coherent_leakage(q, dev, opts.scan.steps);
          });
          return y;
        },
        p.alpha, 0.3, false, opts.points, levels + 1);

    CalibRound r;
    r.round = round;
    r.omega0 = p.omega0;
    r.df = p.df;
    r.alpha = p.alpha;
    r.coherent_error = coherent_gate_error(propagate_schrodinger(p, closed, opts.scan.steps), rx(kPi / 2.0));
    r.leak_per_gate = coherent_leakage(p, dev, opts.scan.steps);
    res.history.push_back(r);

    const bool settled = std::abs(p.omega0 - prev.omega0) <= opts.omega0_rtol * std::abs(prev.omega0) &&
                         std::abs(p.df - prev.df) <= opts.df_tol && std::abs(p.alpha - prev.alpha) <= opts.alpha_tol;
    if (settled) {
      res.converged = true;
      break;
    }
  }
  res.pulse = p;
  res.message = res.converged ? "converged in " + std::to_string(res.history.size()) + " rounds"
                              : "parameters still moving after " + std::to_string(opts.max_rounds) + " rounds";
  return res;
}

void write_scan_csv(std::ostream& out, const CalibScan& scan) {
  const bool two_d = !scan.values2.empty();
  out << scan.parameter << ',';
  if (two_d) out << scan.parameter2 << ',';
  out << "repetitions,p1,p2\n" << std::setprecision(12);
  const std::size_t n2 = two_d ? scan.values2.size() : 1;
  for (std::size_t j = 0; j < n2; ++j) {
    for (std::size_t i = 0; i < scan.values.size(); ++i) {
      const std::size_t k = j * scan.values.size() + i;
      out << scan.values[i] << ',';
      if (two_d) out << scan.values2[j] << ',';
      out << scan.repetitions << ',' << scan.p1[k] << ',' << scan.p2[k] << '\n';
    }
  }
}

}  // namespace gatechar
