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

#include "gatechar/pipeline.hpp"

#include "gatechar/parallel.hpp"

#include <openssl/evp.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <ctime>
#include <fstream>
#include <functional>
#include <iomanip>
#include <iostream>
#include <map>
#include <numbers>
#include <set>
#include <sstream>

namespace gatechar::pipeline {
namespace {

namespace fs = std::filesystem;
using nlohmann::json;

constexpr double kPi = std::numbers::pi;
/// Average gate fidelity of the reference decay drawn next to RB data.
constexpr double kGuideFidelity = 0.9999;

class PrerequisiteError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Typed access to one JSON object; finish() rejects keys never asked for.
class Section {
 public:
  Section(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw SchemaError(path_ + ": expected an object");
  }

  std::string key_path(const std::string& key) const { return path_ + "." + key; }

  const json* find(const std::string& key) {
    used_.insert(key);
    const auto it = j_.find(key);
    if (it == j_.end() || it->is_null()) return nullptr;
    return &*it;
  }

  const json& require(const std::string& key) {
    const json* v = find(key);
    if (v == nullptr) throw SchemaError(key_path(key) + ": required");
    return *v;
  }

  double number(const std::string& key, double fallback) {
    const json* v = find(key);
    if (v == nullptr) return fallback;
    if (!v->is_number()) throw SchemaError(key_path(key) + ": expected a number");
    const double x = v->get<double>();
    if (!std::isfinite(x)) throw SchemaError(key_path(key) + ": not finite");
    return x;
  }

  std::optional<double> optional_number(const std::string& key) {
    if (find(key) == nullptr) return std::nullopt;
    return number(key, 0.0);
  }

  int integer(const std::string& key, int fallback) {
    const json* v = find(key);
    if (v == nullptr) return fallback;
    if (!v->is_number_integer()) throw SchemaError(key_path(key) + ": expected an integer");
    const auto x = v->get<long long>();
    if (x < std::numeric_limits<int>::min() || x > std::numeric_limits<int>::max()) {
      throw SchemaError(key_path(key) + ": out of range");
    }
    return static_cast<int>(x);
  }

  std::uint64_t unsigned_integer(const json& v, const std::string& key) const {
    if (!v.is_number_unsigned()) {
      if (v.is_number_integer() && v.get<long long>() >= 0) return v.get<std::uint64_t>();
      throw SchemaError(key_path(key) + ": expected a non-negative integer");
    }
    return v.get<std::uint64_t>();
  }

  bool boolean(const std::string& key, bool fallback) {
    const json* v = find(key);
    if (v == nullptr) return fallback;
    if (!v->is_boolean()) throw SchemaError(key_path(key) + ": expected a boolean");
    return v->get<bool>();
  }

  std::string string(const std::string& key, const std::string& fallback) {
    const json* v = find(key);
    if (v == nullptr) return fallback;
    if (!v->is_string()) throw SchemaError(key_path(key) + ": expected a string");
    return v->get<std::string>();
  }

  std::string choice(const std::string& key, const std::string& fallback, std::initializer_list<const char*> allowed) {
    const std::string s = string(key, fallback);
    for (const char* a : allowed) {
      if (s == a) return s;
    }
    std::string list;
    for (const char* a : allowed) list += std::string(list.empty() ? "" : ", ") + a;
    throw SchemaError(key_path(key) + ": expected one of " + list);
  }

  std::vector<int> int_list(const std::string& key, std::vector<int> fallback) {
    const json* v = find(key);
    if (v == nullptr) return fallback;
    if (!v->is_array()) throw SchemaError(key_path(key) + ": expected an array of integers");
    std::vector<int> out;
    for (const auto& e : *v) {
      if (!e.is_number_integer()) throw SchemaError(key_path(key) + ": expected an array of integers");
      out.push_back(e.get<int>());
    }
    return out;
  }

  void finish() const {
    for (const auto& [k, v] : j_.items()) {
      if (!used_.contains(k)) throw SchemaError(key_path(k) + ": unknown key");
    }
  }

 private:
  const json& j_;
  std::string path_;
  std::set<std::string> used_;
};

template <class Fn>
void validated(const std::string& path, Fn&& fn) {
  try {
    fn();
  } catch (const std::invalid_argument& e) {
    throw SchemaError(path + ": " + e.what());
  }
}

DeviceParams parse_device(const json& j) {
  Section s(j, "config.device");
  DeviceParams d;
  d.f01 = s.number("f01", d.f01);
  d.anharm = s.number("anharm", d.anharm);
  d.t1 = s.number("t1", d.t1);
  d.t2e = s.number("t2e", d.t2e);
  d.t1_12 = s.optional_number("t1_12");
  d.dephasing_weight_2 = s.number("dephasing_weight_2", d.dephasing_weight_2);
  d.freq_offset = s.number("freq_offset", d.freq_offset);
  d.decoherence = s.boolean("decoherence", d.decoherence);
  s.finish();
  validated("config.device", [&] { d.validate(); });
  return d;
}

PulseParams parse_pulse(const json& j, const std::string& path) {
  Section s(j, path);
  const double tg = s.number("tg", 20e-9);
  const double tbuff = s.number("tbuff", 2e-9);
  validated(path, [&] {
    if (!(tg > 0.0) || tbuff < 0.0) throw std::invalid_argument("tg must be positive and tbuff non-negative");
  });
  PulseParams p = PulseParams::nominal_x90(tg, tbuff);
  p.omega0 = s.number("omega0", p.omega0);
  p.alpha = s.number("alpha", p.alpha);
  p.df = s.number("df", p.df);
  p.phase = s.number("phase", p.phase);
  s.finish();
  validated(path, [&] { p.validate(); });
  return p;
}

json pulse_to_json(const PulseParams& p) {
  return {{"omega0", p.omega0}, {"tg", p.tg},       {"alpha", p.alpha},
          {"df", p.df},         {"tbuff", p.tbuff}, {"phase", p.phase}};
}

json device_to_json(const DeviceParams& d) {
  json j = {{"f01", d.f01},
            {"anharm", d.anharm},
            {"t1", d.t1},
            {"t2e", d.t2e},
            {"dephasing_weight_2", d.dephasing_weight_2},
            {"freq_offset", d.freq_offset},
            {"decoherence", d.decoherence}};
  if (d.t1_12) j["t1_12"] = *d.t1_12;
  return j;
}

FluctuationKind parse_kind(const std::string& s) {
  return s == "amplitude" ? FluctuationKind::kAmplitude : FluctuationKind::kFrequency;
}

const char* kind_name(FluctuationKind k) { return k == FluctuationKind::kAmplitude ? "amplitude" : "frequency"; }

CalibrationConfig parse_calibration(const json& j) {
  Section s(j, "config.calibration");
  CalibrationConfig c;
  CalibOptions& o = c.options;
  o.n_pi = s.int_list("n_pi", o.n_pi);
  o.n_pairs = s.int_list("n_pairs", o.n_pairs);
  o.max_rounds = s.integer("max_rounds", o.max_rounds);
  o.points = s.integer("points", o.points);
  o.omega0_rtol = s.number("omega0_rtol", o.omega0_rtol);
  o.df_tol = s.number("df_tol", o.df_tol);
  o.alpha_tol = s.number("alpha_tol", o.alpha_tol);
  o.scan.shots = s.integer("scan_shots", o.scan.shots);
  c.plot_points = s.integer("plot_points", c.plot_points);
  if (const json* t = s.find("tail")) {
    Section ts(*t, "config.calibration.tail");
    c.tail.amplitude = ts.number("amplitude", 0.0);
    c.tail.tau = ts.number("tau", c.tail.tau);
    ts.finish();
    if (!(c.tail.tau > 0.0)) throw SchemaError("config.calibration.tail.tau: must be positive");
  }
  s.finish();
  const auto positive_odd = [](const std::vector<int>& v) {
    return !v.empty() && std::all_of(v.begin(), v.end(), [](int n) { return n > 0 && n % 2 == 1; });
  };
  const auto positive = [](const std::vector<int>& v) {
    return !v.empty() && std::all_of(v.begin(), v.end(), [](int n) { return n > 0; });
  };
  if (!positive_odd(o.n_pi)) throw SchemaError("config.calibration.n_pi: expected positive odd integers");
  if (!positive(o.n_pairs)) throw SchemaError("config.calibration.n_pairs: expected positive integers");
  if (o.max_rounds < 1) throw SchemaError("config.calibration.max_rounds: must be >= 1");
  if (o.points < 5) throw SchemaError("config.calibration.points: must be >= 5");
  if (c.plot_points < 5) throw SchemaError("config.calibration.plot_points: must be >= 5");
  if (o.scan.shots < 0) throw SchemaError("config.calibration.scan_shots: must be >= 0");
  if (!(o.omega0_rtol > 0.0 && o.df_tol > 0.0 && o.alpha_tol > 0.0)) {
    throw SchemaError("config.calibration: tolerances must be positive");
  }
  return c;
}

BenchmarkConfig parse_benchmark(const json& j) {
  Section s(j, "config.benchmark");
  BenchmarkConfig b;
  b.rb.lengths = s.int_list("lengths", b.rb.lengths);
  b.rb.n_sequences = s.integer("n_sequences", b.rb.n_sequences);
  b.rb.shots = s.integer("shots", b.rb.shots);
  b.n_resamples = s.integer("n_resamples", b.n_resamples);
  b.pulse_level = s.choice("mode", "channel", {"channel", "pulse"}) == "pulse";
  b.pb_sequences = s.integer("pb_sequences", b.pb_sequences);
  b.tomography = s.choice("tomography", "exact", {"exact", "shots"}) == "shots" ? Tomography::kShots : Tomography::kExact;
  b.tomography_shots = s.integer("tomography_shots", b.tomography_shots);
  s.finish();
  validated("config.benchmark", [&] { b.rb.validate(); });
  if (b.n_resamples < 0) throw SchemaError("config.benchmark.n_resamples: must be >= 0");
  if (b.pb_sequences < 1) throw SchemaError("config.benchmark.pb_sequences: must be >= 1");
  if (b.tomography_shots < 1) throw SchemaError("config.benchmark.tomography_shots: must be >= 1");
  return b;
}

DriftSchedule parse_drift(const json& j, std::uint64_t master_seed) {
  Section s(j, "config.gst.drift");
  DriftSchedule d;
  d.shape = s.choice("shape", "sinusoidal", {"sinusoidal", "random_walk"}) == "random_walk"
                ? DriftSchedule::Shape::kRandomWalk
                : DriftSchedule::Shape::kSinusoidal;
  d.parameter = parse_kind(s.choice("parameter", "amplitude", {"amplitude", "frequency"}));
  d.amplitude = s.number("amplitude", d.amplitude);
  d.periods = s.number("periods", d.periods);
  d.phase = s.number("phase", d.phase);
  d.steps = s.integer("steps", d.steps);
  d.bound = s.number("bound", d.bound);
  if (const json* v = s.find("seed")) {
    d.seed = s.unsigned_integer(*v, "seed");
  } else {
    d.seed = stage_seed(master_seed, "gst/drift");
  }
  s.finish();
  validated("config.gst.drift", [&] { d.validate(); });
  return d;
}

json drift_to_json(const DriftSchedule& d) {
  return {{"shape", d.shape == DriftSchedule::Shape::kRandomWalk ? "random_walk" : "sinusoidal"},
          {"parameter", kind_name(d.parameter)},
          {"amplitude", d.amplitude},
          {"periods", d.periods},
          {"phase", d.phase},
          {"steps", d.steps},
          {"bound", d.bound},
          {"seed", d.seed}};
}

GSTConfig parse_gst(const json& j, std::uint64_t master_seed) {
  Section s(j, "config.gst");
  GSTConfig g;
  g.max_depth = s.integer("max_depth", g.max_depth);
  g.shots = s.integer("shots", g.shots);
  g.synthetic = s.choice("source", "pulse", {"pulse", "synthetic"}) == "synthetic";
  if (const json* m = s.find("model")) {
    Section ms(*m, "config.gst.model");
    g.model.over_rotation = ms.number("over_rotation", g.model.over_rotation);
    g.model.depolarizing = ms.number("depolarizing", g.model.depolarizing);
    g.model.prep_error = ms.number("prep_error", g.model.prep_error);
    g.model.readout_error = ms.number("readout_error", g.model.readout_error);
    ms.finish();
    const auto unit = [](double x) { return x >= 0.0 && x <= 1.0; };
    if (!unit(g.model.depolarizing) || !unit(g.model.prep_error) || !unit(g.model.readout_error)) {
      throw SchemaError("config.gst.model: probabilities must lie in [0, 1]");
    }
  }
  if (const json* d = s.find("drift")) g.drift = parse_drift(*d, master_seed);
  g.rb_sequences = s.integer("rb_sequences", g.rb_sequences);
  s.finish();
  if (g.max_depth < 1 || (g.max_depth & (g.max_depth - 1)) != 0) {
    throw SchemaError("config.gst.max_depth: must be a power of two");
  }
  if (g.shots < 1) throw SchemaError("config.gst.shots: must be >= 1");
  if (g.rb_sequences < 1) throw SchemaError("config.gst.rb_sequences: must be >= 1");
  return g;
}

FluctuationRun parse_fluctuation(const json& j, const std::string& path) {
  Section s(j, path);
  FluctuationRun f;
  f.spec.kind = parse_kind(s.choice("kind", "", {"amplitude", "frequency"}));
  f.spec.sigma = s.number("sigma", 0.0);
  f.spec.correlation = s.choice("correlation", "per_sequence", {"per_sequence", "per_gate"}) == "per_gate"
                           ? Correlation::kPerGate
                           : Correlation::kPerSequence;
  f.trials = s.integer("trials", f.trials);
  f.scaling = s.boolean("scaling", f.scaling);
  s.finish();
  validated(path, [&] { f.spec.validate(); });
  if (f.trials < 2) throw SchemaError(path + ".trials: must be >= 2");
  return f;
}

std::string utc_now() {
  const std::time_t t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  std::ostringstream os;
  os << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ");
  return os.str();
}

json estimate_json(const Estimate& e) { return {{"value", e.value}, {"error", e.error}}; }

json fit_json(const DecayFit& f) {
  return {{"model", f.model == DecayModel::kExponential ? "A*p^m+B" : "A*u^(m-1)+B"},
          {"a", f.a},
          {"p", f.p},
          {"b", f.b},
          {"a_err", f.a_err},
          {"p_err", f.p_err},
          {"b_err", f.b_err},
          {"rms_residual", f.rms_residual},
          {"ok", f.ok},
          {"degenerate", f.degenerate},
          {"message", f.message}};
}

json rb_json(const RBAnalysis& a) {
  return {{"lengths", a.lengths},
          {"mean_survival", a.mean_survival},
          {"fit", fit_json(a.fit)},
          {"r_clif", estimate_json(a.r_clif)},
          {"r_avg", estimate_json(a.r_avg)}};
}

json read_json(const fs::path& p) {
  std::ifstream in(p);
  if (!in) throw PrerequisiteError("cannot read " + p.string());
  return json::parse(in);
}

std::optional<Estimate> estimate_from(const json& j) {
  if (!j.is_object() || !j.contains("value")) return std::nullopt;
  return Estimate{j.at("value").get<double>(), j.value("error", 0.0)};
}

// Standard error of the survival mean at each length.
std::vector<double> survival_sem(const RBDataset& data) {
  std::vector<double> out;
  for (int m : data.lengths) {
    std::vector<double> f;
    for (const auto& r : data.records) {
      if (r.length == m) f.push_back(static_cast<double>(r.successes) / r.shots);
    }
    double mean = 0.0;
    for (double x : f) mean += x;
    mean /= static_cast<double>(f.size());
    double var = 0.0;
    for (double x : f) var += (x - mean) * (x - mean);
    out.push_back(f.size() > 1 ? std::sqrt(var / static_cast<double>(f.size() - 1) / static_cast<double>(f.size())) : 0.0);
  }
  return out;
}

// Decay with the same A, B at the depolarizing parameter of the guide fidelity.
double guide_p() {
  const double r_clif = (1.0 - kGuideFidelity) * kPulsesPerClifford;
  return 1.0 - 2.0 * r_clif;
}

void write_rb_plot(std::ostream& out, const RBDataset& data, const RBAnalysis& a) {
  const std::vector<double> sem = survival_sem(data);
  const double pg = guide_p();
  out << "m,mean,sem,fit,guide_0.9999\n" << std::setprecision(17);
  for (std::size_t i = 0; i < a.lengths.size(); ++i) {
    const double m = a.lengths[i];
    out << a.lengths[i] << ',' << a.mean_survival[i] << ',' << sem[i] << ',' << a.fit.evaluate(m) << ','
        << a.fit.a * std::pow(pg, m) + a.fit.b << '\n';
  }
}

void write_rb_curve(std::ostream& out, const RBAnalysis& a, int samples = 200) {
  const double pg = guide_p();
  const double max_m = a.lengths.empty() ? 1.0 : a.lengths.back();
  out << "m,fit,guide_0.9999\n" << std::setprecision(17);
  for (int k = 0; k <= samples; ++k) {
    const double m = max_m * k / samples;
    out << m << ',' << a.fit.evaluate(m) << ',' << a.fit.a * std::pow(pg, m) + a.fit.b << '\n';
  }
}

}  // namespace

GateSet SyntheticGateSet::build() const {
  GateSet gs = GateSet::ideal();
  const Ptm dep = QubitChannel::depolarizing(depolarizing).ptm;
  gs.gates[kGi] = dep;
  gs.gates[kGx] = dep * ptm_from_unitary(rx(kPi / 2 + over_rotation));
  gs.gates[kGy] = dep * ptm_from_unitary(ry(kPi / 2 + over_rotation));
  gs.rho = to_pauli_vector((Mat2() << 1.0 - prep_error, 0, 0, prep_error).finished());
  gs.effect = to_pauli_vector((Mat2() << 1.0 - readout_error, 0, 0, readout_error).finished());
  return gs;
}

RunConfig parse_config(const json& j) {
  Section s(j, "config");
  const json& version = s.require("schema_version");
  if (!version.is_number_integer() || version.get<int>() != kSchemaVersion) {
    throw SchemaError("config.schema_version: expected " + std::to_string(kSchemaVersion));
  }
  RunConfig cfg;
  cfg.seed = s.unsigned_integer(s.require("seed"), "seed");
  cfg.output_dir = s.string("output_dir", cfg.output_dir);
  if (cfg.output_dir.empty()) throw SchemaError("config.output_dir: must not be empty");
  cfg.steps = s.integer("steps", cfg.steps);
  if (cfg.steps < 10) throw SchemaError("config.steps: must be >= 10");
  cfg.device = parse_device(s.require("device"));
  const json& pulse = s.require("pulse");
  if (pulse.is_string()) {
    if (pulse.get<std::string>() != "calibrate") throw SchemaError("config.pulse: expected an object or \"calibrate\"");
  } else {
    cfg.pulse = parse_pulse(pulse, "config.pulse");
  }
  if (const json* c = s.find("calibration")) cfg.calibration = parse_calibration(*c);
  if (const json* b = s.find("benchmark")) cfg.benchmark = parse_benchmark(*b);
  cfg.benchmark.rb.seed = cfg.seed;
  if (const json* g = s.find("gst")) {
    cfg.gst = parse_gst(*g, cfg.seed);
  }
  if (const json* f = s.find("fluctuations")) {
    if (!f->is_array()) throw SchemaError("config.fluctuations: expected an array");
    for (std::size_t i = 0; i < f->size(); ++i) {
      cfg.fluctuations.push_back(parse_fluctuation((*f)[i], "config.fluctuations[" + std::to_string(i) + "]"));
    }
  }
  if (const json* b = s.find("budget")) {
    Section bs(*b, "config.budget");
    if (bs.find("inputs") != nullptr) cfg.budget_inputs = bs.string("inputs", "");
    bs.finish();
  }
  s.finish();
  return cfg;
}

RunConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open config " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw SchemaError(path.string() + ": " + e.what());
  }
  return parse_config(j);
}

json config_to_json(const RunConfig& cfg) {
  json j;
  j["schema_version"] = kSchemaVersion;
  j["seed"] = cfg.seed;
  j["output_dir"] = cfg.output_dir;
  j["steps"] = cfg.steps;
  j["device"] = device_to_json(cfg.device);
  j["pulse"] = cfg.pulse ? pulse_to_json(*cfg.pulse) : json("calibrate");
  const CalibOptions& o = cfg.calibration.options;
  j["calibration"] = {{"n_pi", o.n_pi},
                      {"n_pairs", o.n_pairs},
                      {"max_rounds", o.max_rounds},
                      {"points", o.points},
                      {"omega0_rtol", o.omega0_rtol},
                      {"df_tol", o.df_tol},
                      {"alpha_tol", o.alpha_tol},
                      {"scan_shots", o.scan.shots},
                      {"plot_points", cfg.calibration.plot_points},
                      {"tail", {{"amplitude", cfg.calibration.tail.amplitude}, {"tau", cfg.calibration.tail.tau}}}};
  const BenchmarkConfig& b = cfg.benchmark;
  j["benchmark"] = {{"lengths", b.rb.lengths},
                    {"n_sequences", b.rb.n_sequences},
                    {"shots", b.rb.shots},
                    {"n_resamples", b.n_resamples},
                    {"mode", b.pulse_level ? "pulse" : "channel"},
                    {"pb_sequences", b.pb_sequences},
                    {"tomography", b.tomography == Tomography::kShots ? "shots" : "exact"},
                    {"tomography_shots", b.tomography_shots}};
  const GSTConfig& g = cfg.gst;
  j["gst"] = {{"max_depth", g.max_depth},
              {"shots", g.shots},
              {"source", g.synthetic ? "synthetic" : "pulse"},
              {"model",
               {{"over_rotation", g.model.over_rotation},
                {"depolarizing", g.model.depolarizing},
                {"prep_error", g.model.prep_error},
                {"readout_error", g.model.readout_error}}},
              {"rb_sequences", g.rb_sequences}};
  if (g.drift) j["gst"]["drift"] = drift_to_json(*g.drift);
  j["fluctuations"] = json::array();
  for (const auto& f : cfg.fluctuations) {
    j["fluctuations"].push_back({{"kind", kind_name(f.spec.kind)},
                                 {"sigma", f.spec.sigma},
                                 {"correlation", f.spec.correlation == Correlation::kPerGate ? "per_gate" : "per_sequence"},
                                 {"trials", f.trials},
                                 {"scaling", f.scaling}});
  }
  j["budget"] = json::object();
  if (cfg.budget_inputs) j["budget"]["inputs"] = *cfg.budget_inputs;
  return j;
}

std::string sha256_hex(std::string_view data) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(data.data(), data.size(), digest, &len, EVP_sha256(), nullptr) != 1) {
    throw std::runtime_error("SHA-256 failed");
  }
  std::ostringstream os;
  os << std::hex << std::setfill('0');
  for (unsigned int i = 0; i < len; ++i) os << std::setw(2) << static_cast<int>(digest[i]);
  return os.str();
}

std::string file_sha256(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return sha256_hex(buf.str());
}

void apply_overrides(RunConfig& cfg, const Overrides& o) {
  if (o.seed) {
    const bool derived_drift_seed = cfg.gst.drift && cfg.gst.drift->seed == stage_seed(cfg.seed, "gst/drift");
    cfg.seed = *o.seed;
    cfg.benchmark.rb.seed = *o.seed;
    if (derived_drift_seed) cfg.gst.drift->seed = stage_seed(cfg.seed, "gst/drift");
  }
  if (o.out) {
    if (o.out->empty()) throw SchemaError("--out: must not be empty");
    cfg.output_dir = *o.out;
  }
  if (o.shots) {
    if (*o.shots < 1) throw SchemaError("--shots: must be >= 1");
    cfg.benchmark.rb.shots = *o.shots;
    cfg.gst.shots = *o.shots;
  }
}

std::string gate_name(InterleavedGate g) {
  switch (g) {
    case InterleavedGate::kI:
      return "I";
    case InterleavedGate::kXhalf:
      return "Xhalf";
    case InterleavedGate::kXneghalf:
      return "Xneghalf";
    case InterleavedGate::kYhalf:
      return "Yhalf";
    case InterleavedGate::kYneghalf:
      return "Yneghalf";
  }
  return "?";
}

InterleavedGate parse_gate(std::string_view name) {
  for (auto g : {InterleavedGate::kI, InterleavedGate::kXhalf, InterleavedGate::kXneghalf, InterleavedGate::kYhalf,
                 InterleavedGate::kYneghalf}) {
    if (gate_name(g) == name) return g;
  }
  throw SchemaError("unknown interleaved gate '" + std::string(name) + "'");
}

int clifford_index(InterleavedGate g) {
  const auto& group = clifford_group();
  switch (g) {
    case InterleavedGate::kI:
      return group.find(Mat2::Identity());
    case InterleavedGate::kXhalf:
      return group.find(rx(kPi / 2));
    case InterleavedGate::kXneghalf:
      return group.find(rx(-kPi / 2));
    case InterleavedGate::kYhalf:
      return group.find(ry(kPi / 2));
    case InterleavedGate::kYneghalf:
      return group.find(ry(-kPi / 2));
  }
  throw std::invalid_argument("clifford_index: bad gate");
}

struct Pipeline::Stage {
  std::string name;
  fs::path root;
  fs::path dir;
  std::uint64_t seed = 0;
  std::string config_text;
  json inputs = json::object();
  json outputs = json::object();
  json flags = json::array();
  std::string started = utc_now();

  Stage(const RunConfig& cfg, std::string stage_name) : name(std::move(stage_name)), root(cfg.output_dir) {
    dir = root / name;
    seed = stage_seed(cfg.seed, name);
    fs::remove_all(dir);
    fs::create_directories(dir);
    config_text = config_to_json(cfg).dump(2) + "\n";
    std::ofstream(root / "config.json", std::ios::binary) << config_text;
    inputs["config.json"] = sha256_hex(config_text);
  }

  std::string relative(const fs::path& p) const { return fs::relative(p, root).generic_string(); }

  void write(const std::string& file, const std::function<void(std::ostream&)>& fill) {
    std::ostringstream os;
    fill(os);
    const std::string text = os.str();
    const fs::path p = dir / file;
    std::ofstream out(p, std::ios::binary);
    out << text;
    if (!out) throw std::runtime_error("cannot write " + p.string());
    outputs[relative(p)] = sha256_hex(text);
  }

  void write_json(const std::string& file, const json& j) {
    write(file, [&](std::ostream& os) { os << j.dump(2) << '\n'; });
  }

  // Keyed relative to the output directory when inside it.
  void input(const fs::path& p) {
    const std::string rel = relative(p);
    inputs[rel.rfind("..", 0) == 0 ? p.string() : rel] = file_sha256(p);
  }

  void flag(const std::string& message) { flags.push_back(message); }

  int finish(int code) {
    const fs::path manifest_path = root / "manifest.json";
    json manifest = json::object();
    if (fs::exists(manifest_path)) {
      try {
        manifest = read_json(manifest_path);
      } catch (const std::exception&) {
        manifest = json::object();
      }
    }
    manifest["artifact_version"] = kArtifactVersion;
    manifest["schema_version"] = kSchemaVersion;
    manifest["stages"][name] = {{"config_sha256", sha256_hex(config_text)},
                                {"stage_seed", seed},
                                {"exit_code", code},
                                {"flags", flags},
                                {"inputs", inputs},
                                {"outputs", outputs},
                                {"started", started},
                                {"finished", utc_now()}};
    std::ofstream(manifest_path, std::ios::binary) << manifest.dump(2) << '\n';
    for (const auto& f : flags) std::cerr << name << ": " << f.get<std::string>() << '\n';
    return code;
  }
};

Pipeline::Pipeline(RunConfig cfg, int workers) : cfg_(std::move(cfg)), workers_(workers) {
  if (workers_ > 0) set_default_workers(workers_);
}

PulseParams Pipeline::resolve_pulse(Stage& stage) const {
  if (cfg_.pulse) return *cfg_.pulse;
  const fs::path p = fs::path(cfg_.output_dir) / "calibrate" / "calibrated_pulse.json";
  if (!fs::exists(p)) {
    throw PrerequisiteError("pulse is \"calibrate\" but " + p.string() + " does not exist; run `calibrate` first");
  }
  stage.input(p);
  return parse_pulse(read_json(p), p.string());
}

CliffordChannels Pipeline::channels_for(const PulseParams& pulse) const {
  return CliffordChannels::from_pulse(pulse, cfg_.device, cfg_.steps);
}

int Pipeline::calibrate() {
  Stage stage(cfg_, "calibrate");
  const DeviceParams& dev = cfg_.device;
  const PulseParams initial = cfg_.pulse.value_or(PulseParams::nominal_x90());
  CalibOptions opts = cfg_.calibration.options;
  opts.scan.steps = cfg_.steps;
  opts.scan.seed = derive_seed(stage.seed, {0});
  opts.scan.workers = workers_;
  const CalibResult result = closed_loop_calibrate(dev, initial, opts);
  const PulseParams& p = result.pulse;

  stage.write_json("calibrated_pulse.json", pulse_to_json(p));
  RunConfig calibrated = cfg_;
  calibrated.pulse = p;
  stage.write_json("calibrated_config.json", config_to_json(calibrated));
  stage.write("calibration_history.csv", [&](std::ostream& os) {
    os << "round,omega0,df,alpha,coherent_error,leak_per_gate\n" << std::setprecision(17);
    for (const auto& r : result.history) {
      os << r.round << ',' << r.omega0 << ',' << r.df << ',' << r.alpha << ',' << r.coherent_error << ','
         << r.leak_per_gate << '\n';
    }
  });

  // Plot data around the calibrated point.
  ScanOptions plot = opts.scan;
  const int n = cfg_.calibration.plot_points;
  const auto grid = [n](double center, double half_span) {
    std::vector<double> v(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) v[static_cast<std::size_t>(i)] = center + half_span * (2.0 * i / (n - 1) - 1.0);
    return v;
  };
  json widths = json::object();
  for (int n_pi : opts.n_pi) {
    plot.seed = derive_seed(stage.seed, {1, static_cast<std::uint64_t>(n_pi)});
    const CalibScan s = amp_scan(p, n_pi, grid(p.omega0, 0.4 / n_pi * p.omega0), dev, plot);
    stage.write("amp_scan_npi" + std::to_string(n_pi) + ".csv", [&](std::ostream& os) { write_scan_csv(os, s); });
  }
  for (int pairs : opts.n_pairs) {
    plot.seed = derive_seed(stage.seed, {2, static_cast<std::uint64_t>(pairs)});
    const CalibScan s = detuning_scan(p, pairs, grid(p.df, 1.5e6 * 50.0 / pairs), dev, plot);
    widths[std::to_string(pairs)] = fringe_width(s.values, s.p1, false);
    stage.write("detuning_scan_N" + std::to_string(pairs) + ".csv", [&](std::ostream& os) { write_scan_csv(os, s); });
  }
  plot.seed = derive_seed(stage.seed, {3});
  const std::vector<double> tbuff = {0.0, 2e-9, 4e-9, 6e-9, 8e-9};
  const CalibScan buffer = buffer_scan(p, grid(p.alpha, 1e-4), tbuff, dev, cfg_.calibration.tail, 50, plot);
  stage.write("buffer_scan.csv", [&](std::ostream& os) { write_scan_csv(os, buffer); });

  const double error = result.history.empty() ? std::nan("") : result.history.back().coherent_error;
  json summary = {{"converged", result.converged},
                  {"message", result.message},
                  {"rounds", result.history.size()},
                  {"pulse", pulse_to_json(p)},
                  {"coherent_error", error},
                  {"nominal_omega0", nominal_amplitude(kPi / 2, p.tg)},
                  {"omega0_relative_shift", p.omega0 / nominal_amplitude(kPi / 2, p.tg) - 1.0},
                  {"detuning_fringe_widths", widths},
                  {"buffer_pattern_shift", pattern_shift(buffer)},
                  {"tail", {{"amplitude", cfg_.calibration.tail.amplitude}, {"tau", cfg_.calibration.tail.tau}}}};
  stage.write_json("calibration_summary.json", summary);
  if (!result.converged) {
    stage.write_json("calibration_diagnostics.json",
                     {{"message", result.message}, {"max_rounds", opts.max_rounds}, {"last_round", result.history.empty() ? json() : json{
                         {"omega0", result.history.back().omega0},
                         {"df", result.history.back().df},
                         {"alpha", result.history.back().alpha}}}});
    stage.flag("calibration did not converge: " + result.message);
    return stage.finish(kExitFit);
  }
  return stage.finish(kExitOk);
}

int Pipeline::rb() {
  Stage stage(cfg_, "rb");
  const PulseParams pulse = resolve_pulse(stage);
  RBConfig rc = cfg_.benchmark.rb;
  rc.seed = stage_seed(cfg_.seed, "rb/sequences");
  const SequenceSet set = gen_rb_sequences(rc);
  const std::uint64_t shot_seed = derive_seed(stage.seed, {0});
  const RBDataset data = cfg_.benchmark.pulse_level
                             ? run_sequences_pulse(set, pulse, cfg_.device, rc.shots, shot_seed, {}, workers_, cfg_.steps)
                             : run_sequences(set, channels_for(pulse), rc.shots, shot_seed, {}, workers_);
  const RBAnalysis a = analyze_rb(data, cfg_.benchmark.n_resamples, derive_seed(stage.seed, {1}));
  const CoherenceLimit limit = coherence_limit_epg(cfg_.device, pulse);

  stage.write("rb_dataset.csv", [&](std::ostream& os) { write_rb_csv(os, data); });
  stage.write("rb_plot.csv", [&](std::ostream& os) { write_rb_plot(os, data, a); });
  stage.write("rb_curve.csv", [&](std::ostream& os) { write_rb_curve(os, a); });
  json summary = rb_json(a);
  summary["coherence_limit_epg"] = limit.master_equation;
  summary["idle_bound_epg"] = limit.idle_bound;
  summary["r_avg_minus_limit_sigma"] =
      a.r_avg.error > 0.0 ? (a.r_avg.value - limit.master_equation) / a.r_avg.error : std::nan("");
  summary["guide_fidelity"] = kGuideFidelity;
  summary["guide_p"] = guide_p();
  stage.write_json("rb_fit.json", summary);
  if (!a.fit.ok) {
    stage.flag("RB fit failed: " + a.fit.message);
    return stage.finish(kExitFit);
  }
  return stage.finish(kExitOk);
}

int Pipeline::irb(const std::vector<InterleavedGate>& gates) {
  Stage stage(cfg_, "irb");
  const PulseParams pulse = resolve_pulse(stage);
  RBConfig rc = cfg_.benchmark.rb;
  rc.seed = stage_seed(cfg_.seed, "rb/sequences");
  std::optional<CliffordChannels> channels;
  if (!cfg_.benchmark.pulse_level) channels = channels_for(pulse);
  const auto run = [&](const SequenceSet& set, std::uint64_t seed) {
    return channels ? run_sequences(set, *channels, rc.shots, seed, {}, workers_)
                    : run_sequences_pulse(set, pulse, cfg_.device, rc.shots, seed, {}, workers_, cfg_.steps);
  };

  // Reference with the sequences and shot stream of the rb stage.
  const RBDataset ref_data = run(gen_rb_sequences(rc), derive_seed(stage_seed(cfg_.seed, "rb"), {0}));
  const RBAnalysis ref = analyze_rb(ref_data, cfg_.benchmark.n_resamples, derive_seed(stage_seed(cfg_.seed, "rb"), {1}));
  stage.write("reference_dataset.csv", [&](std::ostream& os) { write_rb_csv(os, ref_data); });
  stage.write("reference_plot.csv", [&](std::ostream& os) { write_rb_plot(os, ref_data, ref); });

  json summary = {{"reference", rb_json(ref)}, {"gates", json::object()}};
  bool ok = ref.fit.ok;
  if (!ref.fit.ok) stage.flag("reference fit failed: " + ref.fit.message);
  std::map<std::string, double> rates;
  for (InterleavedGate g : gates) {
    const std::string name = gate_name(g);
    const SequenceSet set = gen_irb_sequences(rc, clifford_index(g));
    const std::uint64_t seed = stage_seed(cfg_.seed, "irb/" + name);
    const RBDataset data = run(set, derive_seed(seed, {0}));
    const RBAnalysis a = analyze_rb(data, cfg_.benchmark.n_resamples, derive_seed(seed, {1}));
    const Estimate r = interleaved_rate(a.fit, ref.fit);
    stage.write("irb_" + name + "_dataset.csv", [&](std::ostream& os) { write_rb_csv(os, data); });
    stage.write("irb_" + name + "_plot.csv", [&](std::ostream& os) { write_rb_plot(os, data, a); });
    summary["gates"][name] = {{"clifford_index", clifford_index(g)},
                              {"fit", fit_json(a.fit)},
                              {"mean_survival", a.mean_survival},
                              {"r_gate", estimate_json(r)},
                              {"negative_rate", r.value < 0.0}};
    if (r.value < 0.0) stage.flag(name + ": negative interleaved rate (statistical fluctuation)");
    if (!a.fit.ok) {
      ok = false;
      stage.flag(name + ": interleaved fit failed: " + a.fit.message);
    }
    rates[name] = r.value;
  }
  if (rates.contains("I") && rates.size() > 1) {
    bool lowest = true;
    for (const auto& [name, r] : rates) lowest = lowest && (name == "I" || rates["I"] <= r);
    summary["identity_lowest"] = lowest;
  }
  stage.write_json("irb_summary.json", summary);
  return stage.finish(ok ? kExitOk : kExitFit);
}

int Pipeline::pb() {
  Stage stage(cfg_, "pb");
  const PulseParams pulse = resolve_pulse(stage);
  const CliffordChannels channels = channels_for(pulse);
  RBConfig rc = cfg_.benchmark.rb;
  rc.n_sequences = cfg_.benchmark.pb_sequences;
  rc.seed = derive_seed(stage.seed, {0});
  PBOptions opts;
  opts.tomography = cfg_.benchmark.tomography;
  opts.tomography_shots = cfg_.benchmark.tomography_shots;
  opts.n_resamples = cfg_.benchmark.n_resamples;
  const PBResult r = purity_benchmark(rc, channels, opts, {}, workers_);
  RBConfig lc = rc;
  lc.seed = derive_seed(stage.seed, {1});
  const LeakageAnalysis leak = leakage_benchmark(lc, channels, cfg_.benchmark.n_resamples, workers_);

  stage.write("pb_purity.csv", [&](std::ostream& os) { write_purity_csv(os, r); });
  stage.write("pb_purity_plot.csv", [&](std::ostream& os) {
    write_fit_curve_csv(os, r.lengths, r.mean_purity, [&](double m) { return r.purity_fit.evaluate(m); });
  });
  stage.write("pb_survival_plot.csv", [&](std::ostream& os) {
    write_fit_curve_csv(os, r.rb.lengths, r.rb.mean_survival, [&](double m) { return r.rb.fit.evaluate(m); });
  });
  stage.write("leakage_dataset.csv", [&](std::ostream& os) { write_leakage_csv(os, leak); });
  stage.write("leakage_plot.csv", [&](std::ostream& os) {
    write_fit_curve_csv(os, leak.lengths, leak.mean_p2, [&](double m) { return leak.fit.evaluate(m); });
  });
  const bool u_ok = r.u.value > 0.0 && r.u.value <= 1.0;
  json summary = {{"purity_fit", fit_json(r.purity_fit)},
                  {"u", estimate_json(r.u)},
                  {"u_in_range", u_ok},
                  {"r_dec_clif", estimate_json(r.r_dec_clif)},
                  {"r_dec_avg", estimate_json(r.r_dec_avg)},
                  {"survival", rb_json(r.rb)},
                  {"r_prime_clif", estimate_json(r.rb.r_clif)},
                  {"r_prime_avg", estimate_json(r.rb.r_avg)},
                  {"incoherent_fraction", r.incoherent_fraction},
                  {"leakage",
                   {{"ok", leak.fit.ok},
                    {"message", leak.fit.message},
                    {"gamma_clif", estimate_json(leak.fit.gamma_clif)},
                    {"gamma_avg", estimate_json(leak.fit.gamma_avg)},
                    {"p2_inf", estimate_json(leak.fit.p2_inf)},
                    {"p2_0", estimate_json(leak.fit.p2_0)},
                    {"mean_p2", leak.mean_p2}}}};
  stage.write_json("pb_fit.json", summary);
  bool ok = true;
  if (!r.purity_fit.ok || !u_ok) {
    ok = false;
    stage.flag("purity fit failed: " + r.purity_fit.message);
  }
  if (!r.rb.fit.ok) {
    ok = false;
    stage.flag("survival fit failed: " + r.rb.fit.message);
  }
  if (!leak.fit.ok) {
    ok = false;
    stage.flag("leakage fit failed: " + leak.fit.message);
  }
  return stage.finish(ok ? kExitOk : kExitFit);
}

int Pipeline::gst() {
  Stage stage(cfg_, "gst");
  const GSTConfig& g = cfg_.gst;
  GateSet source;
  if (g.synthetic) {
    source = g.model.build();
  } else {
    source = gate_set_from_pulse(resolve_pulse(stage), cfg_.device);
  }
  const GSTDesign design = build_design(g.max_depth, g.shots);
  GateSetDrift drift;
  if (g.drift) drift = gate_set_drift(*g.drift);
  const GSTDataset data = simulate_dataset(design, source, derive_seed(stage.seed, {0}), drift, workers_);
  const GSTResult result = run_gst(design, data);

  GaugeOptions go;
  go.tp_only = true;
  const GateSet vs_source = gauge_optimize(result.mle.gates, source, go).gates;
  json gate_errors = json::object();
  double max_error = 0.0;
  for (int k = 0; k < 3; ++k) {
    const double e = ptm_frobenius_error(vs_source.gates[static_cast<std::size_t>(k)], source.gates[static_cast<std::size_t>(k)]);
    gate_errors[std::array{"Gi", "Gx", "Gy"}[static_cast<std::size_t>(k)]] = e;
    max_error = std::max(max_error, e);
  }

  RBConfig rc = cfg_.benchmark.rb;
  rc.n_sequences = g.rb_sequences;
  rc.seed = derive_seed(stage.seed, {1});
  const RBAnalysis sim = rb_from_gateset(result.estimate, rc, cfg_.benchmark.n_resamples, workers_);
  const RBAnalysis direct = rb_from_gateset(source, rc, cfg_.benchmark.n_resamples, workers_);

  stage.write("gst_circuits.txt", [&](std::ostream& os) { write_circuit_list(os, design); });
  stage.write("gst_dataset.csv", [&](std::ostream& os) { write_gst_dataset_csv(os, design, data); });
  stage.write("gst_estimate.json", [&](std::ostream& os) { os << gate_set_to_json(result.estimate, result.mle.log_likelihood) << '\n'; });
  stage.write("gst_lgst.json", [&](std::ostream& os) { os << gate_set_to_json(result.lgst) << '\n'; });
  stage.write("gst_violation.csv", [&](std::ostream& os) { write_violation_csv(os, result.violation); });

  json per_depth = json::array();
  double max_abs = 0.0;
  for (const auto& d : result.violation.per_depth) {
    per_depth.push_back({{"depth", d.depth}, {"n_sigma", d.n_sigma}});
    max_abs = std::max(max_abs, std::abs(d.n_sigma));
  }
  json summary = {{"source", g.synthetic ? "synthetic" : "pulse"},
                  {"drift", g.drift.has_value()},
                  {"circuits", design.circuits.size()},
                  {"raw_circuits", design.raw_count},
                  {"gram_rank", result.gram.rank},
                  {"gram_complete", result.gram.complete},
                  {"mle_converged", result.mle.converged},
                  {"mle_iterations", result.mle.iterations},
                  {"mle_message", result.mle.message},
                  {"log_likelihood", result.mle.log_likelihood},
                  {"gate_errors_vs_source", gate_errors},
                  {"max_gate_error_vs_source", max_error},
                  {"violation_per_depth", per_depth},
                  {"violation_total_n_sigma", result.violation.n_sigma},
                  {"max_abs_n_sigma", max_abs},
                  {"r_sim", rb_json(sim)},
                  {"r_direct", rb_json(direct)},
                  {"r_sim_relative_gap",
                   direct.r_avg.value != 0.0 ? (sim.r_avg.value - direct.r_avg.value) / direct.r_avg.value : std::nan("")}};
  const fs::path rb_fit = fs::path(cfg_.output_dir) / "rb" / "rb_fit.json";
  if (fs::exists(rb_fit)) {
    stage.input(rb_fit);
    summary["rb_stage_r_avg"] = read_json(rb_fit).at("r_avg");
  }
  stage.write_json("gst_summary.json", summary);
  bool ok = true;
  if (!result.mle.converged) {
    ok = false;
    stage.flag("MLE did not converge: " + result.mle.message);
  }
  if (!result.gram.complete) stage.flag("fiducial Gram matrix is rank deficient");
  return stage.finish(ok ? kExitOk : kExitFit);
}

int Pipeline::drift() {
  Stage stage(cfg_, "drift");
  const PulseParams pulse = resolve_pulse(stage);
  json entries = json::array();
  json summary = json::object();
  for (std::size_t i = 0; i < cfg_.fluctuations.size(); ++i) {
    const FluctuationRun& f = cfg_.fluctuations[i];
    const std::uint64_t seed = derive_seed(stage.seed, {i});
    const FluctuationEPG e = fluctuation_epg(f.spec, cfg_.device, pulse, f.trials, seed, workers_, cfg_.steps);
    json entry = {{"kind", kind_name(f.spec.kind)},
                  {"sigma", f.spec.sigma},
                  {"correlation", f.spec.correlation == Correlation::kPerGate ? "per_gate" : "per_sequence"},
                  {"trials", e.n_trials},
                  {"epg", e.epg},
                  {"std_error", e.std_error}};
    if (f.scaling) {
      FluctuationSpec doubled = f.spec;
      doubled.sigma *= 2.0;
      const FluctuationEPG e2 = fluctuation_epg(doubled, cfg_.device, pulse, f.trials, seed, workers_, cfg_.steps);
      entry["epg_2sigma"] = e2.epg;
      entry["scaling_ratio"] = e.epg > 0.0 ? e2.epg / e.epg : std::nan("");
    }
    entries.push_back(entry);
    const std::string key = f.spec.kind == FluctuationKind::kAmplitude ? "fluct_amp_epg" : "fluct_freq_epg";
    if (!summary.contains(key)) summary[key] = estimate_json({e.epg, e.std_error});
  }
  summary["entries"] = entries;
  stage.write_json("drift_summary.json", summary);
  stage.write("drift_epg.csv", [&](std::ostream& os) {
    os << "kind,sigma,trials,epg,std_error\n" << std::setprecision(17);
    for (const auto& e : entries) {
      os << e.at("kind").get<std::string>() << ',' << e.at("sigma").get<double>() << ',' << e.at("trials").get<int>()
         << ',' << e.at("epg").get<double>() << ',' << e.at("std_error").get<double>() << '\n';
    }
  });
  return stage.finish(kExitOk);
}

int Pipeline::budget() {
  Stage stage(cfg_, "budget");
  BudgetInputs in;
  json missing = json::array();
  if (cfg_.budget_inputs) {
    const fs::path p = *cfg_.budget_inputs;
    stage.input(p);
    try {
      in = budget_inputs_from_json(read_json(p));
    } catch (const std::invalid_argument& e) {
      throw SchemaError(p.string() + ": " + e.what());
    } catch (const json::exception& e) {
      throw SchemaError(p.string() + ": " + e.what());
    }
  } else {
    const fs::path root = cfg_.output_dir;
    const auto load = [&](const char* stage_name, const char* file) -> std::optional<json> {
      const fs::path p = root / stage_name / file;
      if (!fs::exists(p)) {
        missing.push_back(std::string(stage_name) + "/" + file);
        return std::nullopt;
      }
      stage.input(p);
      return read_json(p);
    };
    if (const auto rb = load("rb", "rb_fit.json")) in.r_avg = estimate_from(rb->at("r_avg"));
    if (const auto pb = load("pb", "pb_fit.json")) {
      in.r_prime_avg = estimate_from(pb->at("r_prime_avg"));
      in.r_dec_avg = estimate_from(pb->at("r_dec_avg"));
      if (pb->at("leakage").at("ok").get<bool>()) in.gamma_avg = estimate_from(pb->at("leakage").at("gamma_avg"));
    }
    if (const auto dr = load("drift", "drift_summary.json")) {
      if (dr->contains("fluct_amp_epg")) in.fluct_amp_epg = estimate_from(dr->at("fluct_amp_epg"));
      if (dr->contains("fluct_freq_epg")) in.fluct_freq_epg = estimate_from(dr->at("fluct_freq_epg"));
    }
    std::optional<PulseParams> pulse = cfg_.pulse;
    const fs::path cal = root / "calibrate" / "calibrated_pulse.json";
    if (!pulse && fs::exists(cal)) {
      stage.input(cal);
      pulse = parse_pulse(read_json(cal), cal.string());
    }
    if (pulse) {
      in.coherence_limit = coherence_limit_epg(cfg_.device, *pulse).master_equation;
    } else {
      missing.push_back("calibrate/calibrated_pulse.json");
    }
  }
  const ErrorBudget b = assemble_budget(in);
  json j = budget_to_json(b);
  j["missing_stage_outputs"] = missing;
  stage.write_json("budget.json", j);
  stage.write("budget_table.txt", [&](std::ostream& os) {
    write_budget_table(os, b);
    for (const auto& m : missing) os << "missing stage output: " << m.get<std::string>() << '\n';
  });
  for (const auto& m : missing) stage.flag("missing stage output " + m.get<std::string>());
  if (!b.consistent) stage.flag("residual coherent error is significantly negative");
  return stage.finish(kExitOk);
}

}  // namespace gatechar::pipeline
