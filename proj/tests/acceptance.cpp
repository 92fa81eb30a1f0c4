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

// Acceptance run: one PASS/FAIL line per criterion, exit status 1 if any
// criterion fails.

#include "gatechar/benchmark.hpp"
#include "gatechar/calib.hpp"
#include "gatechar/clifford.hpp"
#include "gatechar/drift.hpp"
#include "gatechar/gst.hpp"
#include "gatechar/parallel.hpp"
#include "gatechar/pipeline.hpp"
#include "gatechar/transmon.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <exception>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <numbers>
#include <random>
#include <sstream>
#include <string>
#include <vector>

namespace gatechar {
namespace {

namespace fs = std::filesystem;

constexpr double kPi = std::numbers::pi;

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* format, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, format, args...);
  return buf;
}

// Closed-loop fixed point at the default device.
PulseParams calibrated_pulse(double tbuff = 2e-9) {
  PulseParams p = PulseParams::nominal_x90(20e-9, tbuff);
  p.omega0 = 77651734.6;
  p.df = -3814943.3;
  p.alpha = -1.0134643;
  return p;
}

// Over-rotated, depolarized gates with imperfect preparation and readout.
GateSet generating_model() { return pipeline::SyntheticGateSet{}.build(); }

double max_gate_error(const GateSet& a, const GateSet& b) {
  double e = 0.0;
  for (int g = 0; g < 3; ++g) e = std::max(e, ptm_frobenius_error(a.gates[g], b.gates[g]));
  return e;
}

double elapsed(std::chrono::steady_clock::time_point start) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

Outcome coherence_limit() {
  const auto start = std::chrono::steady_clock::now();
  const CoherenceLimit c = coherence_limit_epg(DeviceParams{}, 20e-9);
  const double t = elapsed(start);
  const bool me = std::abs(c.master_equation - 4.77e-5) <= 0.5e-5;
  const bool idle = std::abs(c.idle_bound - 4.71e-5) < 0.005e-5;
  return {me && idle && t < 60.0,
          fmt("master equation %.3e (4.77e-5 +- 0.5e-5), idle bound %.4e (4.71e-5), %.1f s", c.master_equation,
              c.idle_bound, t)};
}

Outcome rb_consistency() {
  const auto start = std::chrono::steady_clock::now();
  const DeviceParams dev;
  const PulseParams pulse = calibrated_pulse(0.0);
  const double limit = coherence_limit_epg(dev, 20e-9).master_equation;
  RBConfig cfg;
  cfg.n_sequences = 20;
  cfg.shots = 1024;
  cfg.seed = 2026;
  const CliffordChannels channels = CliffordChannels::from_pulse(pulse, dev);
  const RBDataset data = run_sequences(gen_rb_sequences(cfg), channels, cfg.shots, derive_seed(cfg.seed, {1}));
  const RBAnalysis a = analyze_rb(data, 1000, derive_seed(cfg.seed, {2}));
  const double t = elapsed(start);
  const double coherent = coherent_gate_error(propagate_schrodinger(pulse, DeviceParams::closed_system()), rx(kPi / 2));
  const bool ok = a.fit.ok && a.r_avg.error > 0.0 && std::abs(a.r_avg.value - limit) <= 2.0 * a.r_avg.error && t < 600.0;
  return {ok, fmt("r_avg %.3e +- %.2e vs limit %.3e (%.2f sigma), lengths to %d, pulse coherent error %.1e, %.1f s",
                  a.r_avg.value, a.r_avg.error, limit, (a.r_avg.value - limit) / a.r_avg.error, cfg.lengths.back(),
                  coherent, t)};
}

Outcome census() {
  int total = 0;
  for (const auto& row : decomposition_census()) total += row.pulse_count;
  const double mean = clifford_group().mean_pulse_count();
  return {total == 53 && mean == 53.0 / 24.0, fmt("%d pulses over 24 Cliffords, mean %.4f", total, mean)};
}

Outcome depolarizing_oracle() {
  std::string detail;
  bool ok = true;
  for (double q : {1e-4, 1e-3}) {
    // (1 - p)(1 - 1/d) with p = 1 - q and d = 2.
    const double analytic = q * (1.0 - 1.0 / 2.0);
    RBConfig cfg;
    cfg.seed = q < 5e-4 ? 41 : 42;
    const CliffordChannels channels = CliffordChannels::depolarizing(q);
    const RBAnalysis rb = analyze_rb(run_sequences(gen_rb_sequences(cfg), channels, cfg.shots, derive_seed(cfg.seed, {1})),
                                     1000, derive_seed(cfg.seed, {2}));
    RBConfig pcfg = cfg;
    pcfg.n_sequences = 100;
    PBOptions opts;
    opts.tomography = Tomography::kShots;
    const PBResult pb = purity_benchmark(pcfg, channels, opts);
    const bool rb_ok = std::abs(rb.r_clif.value - analytic) <= 2.0 * rb.r_clif.error;
    const bool pb_ok = std::abs(pb.r_dec_clif.value - analytic) <= 2.0 * pb.r_dec_clif.error;
    ok = ok && rb_ok && pb_ok;
    detail += fmt("q=%.0e: EPC %.4e RB %.4e+-%.1e, PB %.4e+-%.1e; ", q, analytic, rb.r_clif.value, rb.r_clif.error,
                  pb.r_dec_clif.value, pb.r_dec_clif.error);
  }
  return {ok, detail};
}

Outcome leakage_recovery() {
  const double gamma = 2.57e-5, pinf = 0.01, p0 = 0.0;
  const std::vector<int> lengths = RBConfig::default_lengths();
  std::vector<double> m, y;
  for (int k : lengths) {
    m.push_back(k);
    y.push_back(leakage_model(k, gamma, pinf, p0));
  }
  const LeakageFit exact = leakage_fit(m, y);
  const double exact_err = std::max({std::abs(exact.gamma_clif.value - gamma), std::abs(exact.p2_inf.value - pinf),
                                     std::abs(exact.p2_0.value - p0)});
  std::vector<LeakageRecord> records;
  std::mt19937_64 rng(55);
  for (int k : lengths) {
    std::binomial_distribution<int> counts(1024, leakage_model(k, gamma, pinf, p0));
    for (int s = 0; s < 20; ++s) records.push_back({k, s, 1024, counts(rng)});
  }
  const LeakageAnalysis noisy = analyze_leakage(lengths, records, 1000, 56);
  const Estimate g = noisy.fit.gamma_clif;
  const bool ok = exact.ok && exact_err <= 1e-8 && noisy.fit.ok && std::abs(g.value - gamma) <= 2.0 * g.error;
  return {ok, fmt("noiseless max parameter error %.1e; 1024-shot Gamma %.3e +- %.2e vs %.3e", exact_err, g.value,
                  g.error, gamma)};
}

Outcome interleaved_identities() {
  RBConfig cfg;
  cfg.seed = 61;
  CliffordChannels noisy = CliffordChannels::depolarizing(1e-3);
  const int x90 = clifford_group().find(rx(kPi / 2));
  noisy.interleaved = CliffordChannels::ideal()[x90];
  const RBAnalysis ref = analyze_rb(run_sequences(gen_rb_sequences(cfg), noisy, cfg.shots, 1), 1000, 2);
  const RBAnalysis irb = analyze_rb(run_sequences(gen_irb_sequences(cfg, x90), noisy, cfg.shots, 3), 1000, 4);
  const Estimate r = interleaved_rate(irb.fit, ref.fit);
  const double same = epg_interleaved(0.999672, 0.999672);
  const bool ok = r.error > 0.0 && std::abs(r.value) <= 2.0 * r.error && same == 0.0;
  return {ok, fmt("noiseless X90 r_gate %.2e +- %.2e; p_int = p_ref gives %.1f", r.value, r.error, same)};
}

struct GstRun {
  GSTDesign design;
  GSTResult result;
};

// Shared with the RB-from-GST criterion.
const GstRun& desk_gst() {
  static const GstRun run = [] {
    GstRun r{build_design(256, 1024), {}};
    r.result = run_gst(r.design, simulate_dataset(r.design, generating_model(), 7));
    return r;
  }();
  return run;
}

Outcome gst_self_consistency() {
  const auto start = std::chrono::steady_clock::now();
  const GateSet truth = generating_model();
  const GstRun& run = desk_gst();
  GaugeOptions tp;
  tp.tp_only = true;
  const double err = max_gate_error(gauge_optimize(run.result.mle.gates, truth, tp).gates, truth);
  const double t = elapsed(start);
  const GSTDesign small = build_design(8, 1024);
  const GateSet seed = lgst(small, exact_dataset(small, truth));
  const double lgst_err = max_gate_error(gauge_optimize(seed, truth).gates, truth);
  const bool ok = err < 1e-3 && lgst_err < 1e-9 && t < 900.0;
  return {ok, fmt("max PTM error after MLE %.2e (< 1e-3), noiseless LGST %.1e (< 1e-9), %zu circuits, %.1f s", err,
                  lgst_err, run.design.circuits.size(), t)};
}

Outcome model_violation_drift() {
  const GateSet truth = generating_model();
  const GSTDesign design = build_design(4096, 1024);
  const GSTResult null_run = run_gst(design, simulate_dataset(design, truth, 11));
  DriftSchedule drift;
  drift.amplitude = 1e-3;
  drift.periods = 1.0;
  const GSTResult drift_run = run_gst(design, simulate_dataset(design, truth, 11, gate_set_drift(drift)));
  double null_max = 0.0, early_max = -1e300, late_min = 1e300;
  for (const auto& d : null_run.violation.per_depth) null_max = std::max(null_max, std::abs(d.n_sigma));
  std::string late;
  for (const auto& d : drift_run.violation.per_depth) {
    if (d.depth < 256) {
      early_max = std::max(early_max, d.n_sigma);
    } else {
      late_min = std::min(late_min, d.n_sigma);
      late += fmt("%d:%.1f ", d.depth, d.n_sigma);
    }
  }
  const bool ok = null_max <= 3.0 && early_max <= 3.0 && late_min > 3.0;
  return {ok, fmt("no drift max |N_sigma| %.2f; 0.1%% drift: max N_sigma below depth 256 %.2f, depth>=256 %s", null_max,
                  early_max, late.c_str())};
}

Outcome calibration_sensitivity() {
  const DeviceParams dev;
  const PulseParams pulse = calibrated_pulse();
  std::vector<double> widths;
  for (int n : {50, 100, 200}) {
    std::vector<double> df;
    const double half = 1.5e6 * 50.0 / n;
    for (int i = 0; i <= 60; ++i) df.push_back(pulse.df - half + 2.0 * half * i / 60);
    const CalibScan s = detuning_scan(pulse, n, df, dev);
    widths.push_back(fringe_width(s.values, s.p1, false));
  }
  const bool narrowing = widths[0] > widths[1] && widths[1] > widths[2];

  const DeviceParams closed = DeviceParams::closed_system();
  std::vector<double> alpha, tbuff;
  for (int i = 0; i <= 40; ++i) alpha.push_back(pulse.alpha - 1e-4 + 2e-4 * i / 40);
  for (int k = 0; k <= 9; ++k) tbuff.push_back(k * 1e-9);
  const double step = alpha[1] - alpha[0];
  const double shift_off = pattern_shift(buffer_scan(pulse, alpha, tbuff, closed));
  const double shift_on = pattern_shift(buffer_scan(pulse, alpha, tbuff, closed, TailModel{0.01, 3e-9}));
  const bool buffer = shift_off < step && shift_on > step;

  const CalibResult loop = closed_loop_calibrate(closed, PulseParams::nominal_x90());
  const double error = loop.history.empty() ? 1.0 : loop.history.back().coherent_error;
  const bool ok = narrowing && buffer && loop.converged && error < 1e-6;
  return {ok, fmt("dip widths %.0f > %.0f > %.0f Hz; buffer shift tail off %.1e / on %.1e (step %.1e); closed loop "
                  "error %.1e in %zu rounds",
                  widths[0], widths[1], widths[2], shift_off, shift_on, step, error, loop.history.size())};
}

Outcome fluctuation_budget() {
  const DeviceParams dev;
  const PulseParams pulse = calibrated_pulse();
  const int trials = 2000;
  FluctuationSpec amp{FluctuationKind::kAmplitude, 0.003};
  FluctuationSpec freq{FluctuationKind::kFrequency, 0.1e6};
  const double e_amp = fluctuation_epg(amp, dev, pulse, trials, 101).epg;
  const double e_freq = fluctuation_epg(freq, dev, pulse, trials, 102).epg;
  amp.sigma *= 2.0;
  freq.sigma *= 2.0;
  const double ratio_amp = fluctuation_epg(amp, dev, pulse, trials, 101).epg / e_amp;
  const double ratio_freq = fluctuation_epg(freq, dev, pulse, trials, 102).epg / e_freq;
  const bool amp_ok = e_amp >= 0.1e-5 && e_amp <= 0.4e-5;
  const bool freq_ok = e_freq >= 0.05e-5 && e_freq <= 0.2e-5;
  const auto in_band = [](double r) { return r >= 3.5 && r <= 4.5; };
  const bool ok = amp_ok && freq_ok && in_band(ratio_amp) && in_band(ratio_freq);
  return {ok, fmt("amplitude 0.3%%: %.2e in [0.1, 0.4]e-5 %s; frequency 0.1 MHz: %.2e in [0.05, 0.2]e-5 %s; "
                  "scaling ratios %.2f / %.2f",
                  e_amp, amp_ok ? "yes" : "NO", e_freq, freq_ok ? "yes" : "NO", ratio_amp, ratio_freq)};
}

Outcome rb_from_gst() {
  const GateSet truth = generating_model();
  const GstRun& run = desk_gst();
  RBConfig cfg;
  cfg.seed = 71;
  const RBAnalysis sim = rb_from_gateset(run.result.estimate, cfg, 1000);
  const RBAnalysis direct = rb_from_gateset(truth, cfg, 1000);
  const double gap = (sim.r_avg.value - direct.r_avg.value) / direct.r_avg.value;
  return {std::abs(gap) <= 0.30, fmt("r_sim %.4e vs direct %.4e (gap %+.1f%%)", sim.r_avg.value, direct.r_avg.value,
                                     100.0 * gap)};
}

std::map<std::string, std::string> stage_files(const fs::path& root) {
  std::map<std::string, std::string> out;
  for (const auto& e : fs::recursive_directory_iterator(root)) {
    if (!e.is_regular_file()) continue;
    const std::string rel = fs::relative(e.path(), root).generic_string();
    // The manifest carries timestamps; the echoed configs record the output path.
    if (rel == "manifest.json" || rel == "config.json" || rel == "calibrate/calibrated_config.json") continue;
    out[rel] = pipeline::file_sha256(e.path());
  }
  return out;
}

Outcome determinism() {
  const fs::path root = fs::temp_directory_path() / "gatechar_acceptance_determinism";
  fs::remove_all(root);
  fs::create_directories(root);
  nlohmann::json cfg = {
      {"schema_version", 1},
      {"seed", 20260101},
      {"device", nlohmann::json::object()},
      {"pulse", {{"omega0", 77651734.6}, {"df", -3814943.3}, {"alpha", -1.0134643}}},
      {"calibration", {{"plot_points", 21}}},
      {"benchmark", {{"n_resamples", 300}, {"pb_sequences", 40}}},
      {"gst", {{"source", "synthetic"}, {"max_depth", 64}, {"rb_sequences", 10}}},
      {"fluctuations", {{{"kind", "amplitude"}, {"sigma", 0.003}, {"trials", 300}},
                        {{"kind", "frequency"}, {"sigma", 1e5}, {"trials", 300}}}}};
  const fs::path config = root / "config.json";
  std::ofstream(config) << cfg.dump(2);
  const auto cli = [](std::vector<std::string> args) {
    args.insert(args.begin(), "gatechar");
    std::vector<const char*> argv;
    for (const auto& a : args) argv.push_back(a.c_str());
    return pipeline::run_cli(static_cast<int>(argv.size()), argv.data());
  };
  std::vector<std::map<std::string, std::string>> runs;
  int failures = 0;
  for (const char* name : {"run_a", "run_b"}) {
    const fs::path out = root / name;
    failures += cli({"calibrate", "--config", config.string(), "--out", out.string()}) != 0;
    const std::string calibrated = (out / "calibrate" / "calibrated_config.json").string();
    for (const char* stage : {"rb", "irb", "pb", "gst", "drift", "budget"}) {
      failures += cli({stage, "--config", calibrated, "--out", out.string()}) != 0;
    }
    runs.push_back(stage_files(out));
  }
  fs::remove_all(root);
  std::size_t differing = 0;
  for (const auto& [file, digest] : runs[0]) differing += !runs[1].contains(file) || runs[1].at(file) != digest;
  const bool ok = failures == 0 && runs[0].size() == runs[1].size() && differing == 0 && runs[0].size() > 30;
  return {ok, fmt("%zu dataset/summary files over 7 stages, %zu differing, %d failed stage runs", runs[0].size(),
                  differing, failures)};
}

}  // namespace
}  // namespace gatechar

int main() {
  using gatechar::Outcome;
  const std::vector<std::pair<const char*, std::function<Outcome()>>> criteria = {
      {"coherence limit", gatechar::coherence_limit},
      {"RB consistency", gatechar::rb_consistency},
      {"pulse-count census", gatechar::census},
      {"depolarizing oracle", gatechar::depolarizing_oracle},
      {"leakage fit recovery", gatechar::leakage_recovery},
      {"interleaved identities", gatechar::interleaved_identities},
      {"GST self-consistency", gatechar::gst_self_consistency},
      {"model violation", gatechar::model_violation_drift},
      {"calibration sensitivity", gatechar::calibration_sensitivity},
      {"fluctuation budget", gatechar::fluctuation_budget},
      {"RB from GST", gatechar::rb_from_gst},
      {"determinism", gatechar::determinism},
  };
  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    failed += !o.pass;
    std::printf("%s %2zu %s: %s\n", o.pass ? "PASS" : "FAIL", i + 1, criteria[i].first, o.detail.c_str());
    std::fflush(stdout);
  }
  std::printf("%zu of %zu criteria passed\n", criteria.size() - failed, criteria.size());
  return failed == 0 ? 0 : 1;
}
