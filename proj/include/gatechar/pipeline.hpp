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
#include "gatechar/calib.hpp"
#include "gatechar/drift.hpp"
#include "gatechar/gst.hpp"
#include "gatechar/transmon.hpp"

#include <json.hpp>

#include <cstdint>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace gatechar::pipeline {

inline constexpr int kSchemaVersion = 1;
inline constexpr const char* kArtifactVersion = "1.0.0";

enum ExitCode : int {
  kExitOk = 0,
  /// Missing prerequisite or I/O failure.
  kExitRuntime = 1,
  kExitSchema = 2,
  /// Fit, optimizer or calibration failure; outputs are still written.
  kExitFit = 3,
};

class SchemaError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct BenchmarkConfig {
  RBConfig rb;
  int n_resamples = 1000;
  /// Channel-level simulation, or full pulse propagation per sequence.
  bool pulse_level = false;
  int pb_sequences = 100;
  Tomography tomography = Tomography::kExact;
  int tomography_shots = 1024;
};

/// Depolarized, over-rotated gate set with imperfect SPAM.
struct SyntheticGateSet {
  double over_rotation = 1e-3;
  double depolarizing = 5e-4;
  /// |1> weight of the prepared state and of the outcome-0 effect.
  double prep_error = 0.01;
  double readout_error = 0.02;
  GateSet build() const;
};

struct GSTConfig {
  int max_depth = 256;
  int shots = 1024;
  /// Gates from the pulse simulation, or the synthetic model.
  bool synthetic = false;
  SyntheticGateSet model;
  std::optional<DriftSchedule> drift;
  /// Sequences per length for the RB re-simulation of the estimate.
  int rb_sequences = 20;
};

struct CalibrationConfig {
  CalibOptions options;
  /// Points per plot-data scan.
  int plot_points = 41;
  TailModel tail;
};

struct FluctuationRun {
  FluctuationSpec spec;
  int trials = 2000;
  /// Also evaluate 2 sigma with the same draws and report the ratio.
  bool scaling = true;
};

struct RunConfig {
  std::uint64_t seed = 0;
  std::string output_dir = "out";
  DeviceParams device;
  /// Absent when the config asks for "calibrate".
  std::optional<PulseParams> pulse;
  int steps = kDefaultSteps;
  CalibrationConfig calibration;
  BenchmarkConfig benchmark;
  GSTConfig gst;
  std::vector<FluctuationRun> fluctuations;
  /// Budget inputs file used instead of prior stage outputs.
  std::optional<std::string> budget_inputs;
};

/// Throws SchemaError on unknown keys, wrong types, a missing seed or device
/// section, or values rejected by the module validators.
RunConfig parse_config(const nlohmann::json& j);
RunConfig load_config(const std::filesystem::path& path);
/// Canonical form with every default filled in.
nlohmann::json config_to_json(const RunConfig& cfg);

std::string sha256_hex(std::string_view data);
std::string file_sha256(const std::filesystem::path& path);

struct Overrides {
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out;
  std::optional<int> shots;
  int workers = 0;
};

void apply_overrides(RunConfig& cfg, const Overrides& o);

enum class InterleavedGate { kI, kXhalf, kXneghalf, kYhalf, kYneghalf };

std::string gate_name(InterleavedGate g);
/// Throws SchemaError for unknown names.
InterleavedGate parse_gate(std::string_view name);
int clifford_index(InterleavedGate g);

/// Stage runner. Each stage writes to <output_dir>/<stage>/ and records
/// its inputs and outputs with SHA-256 digests in <output_dir>/manifest.json.
/// Stage seeds are stage_seed(seed, label).
class Pipeline {
 public:
  explicit Pipeline(RunConfig cfg, int workers = 0);

  int calibrate();
  int rb();
  int irb(const std::vector<InterleavedGate>& gates);
  int pb();
  int gst();
  int budget();
  int drift();

  const RunConfig& config() const { return cfg_; }
  std::filesystem::path output_dir() const { return cfg_.output_dir; }

 private:
  struct Stage;
  PulseParams resolve_pulse(Stage& stage) const;
  CliffordChannels channels_for(const PulseParams& pulse) const;

  RunConfig cfg_;
  int workers_ = 0;
};

/// Command-line entry point; returns the process exit status.
int run_cli(int argc, const char* const* argv);

}  // namespace gatechar::pipeline
