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

#include <CLI11.hpp>

#include <iostream>

namespace gatechar::pipeline {

int run_cli(int argc, const char* const* argv) {
  CLI::App app{"Single-qubit gate characterization pipeline", "gatechar"};
  app.require_subcommand(1, 1);
  app.fallthrough();

  std::string config_path;
  std::uint64_t seed = 0;
  std::string out;
  int shots = 0;
  Overrides o;
  app.add_option("--config", config_path, "JSON run configuration")->required();
  auto* seed_opt = app.add_option("--seed", seed, "Master seed, overriding the config");
  auto* out_opt = app.add_option("--out", out, "Output directory, overriding the config");
  app.add_option("--workers", o.workers, "Worker threads (results do not depend on it)")
      ->check(CLI::NonNegativeNumber);
  auto* shots_opt = app.add_option("--shots", shots, "Shots per circuit for RB and GST")->check(CLI::PositiveNumber);

  app.add_subcommand("calibrate", "Closed-loop pulse calibration and scan plot data");
  app.add_subcommand("rb", "Reference randomized benchmarking");
  auto* irb = app.add_subcommand("irb", "Interleaved randomized benchmarking");
  std::vector<std::string> gate_names;
  irb->add_option("--gate", gate_names, "Interleaved gate (repeatable; default: all)")
      ->check(CLI::IsMember({"I", "Xhalf", "Xneghalf", "Yhalf", "Yneghalf"}));
  app.add_subcommand("pb", "Purity benchmarking and leakage fit");
  app.add_subcommand("gst", "Gate set tomography and RB re-simulation");
  app.add_subcommand("budget", "Error budget from prior stage outputs");
  app.add_subcommand("drift", "Fluctuation error per gate");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitSchema;
  }
  if (*seed_opt) o.seed = seed;
  if (*out_opt) o.out = out;
  if (*shots_opt) o.shots = shots;

  try {
    RunConfig cfg = load_config(config_path);
    apply_overrides(cfg, o);
    Pipeline p(std::move(cfg), o.workers);
    const std::string cmd = app.get_subcommands().front()->get_name();
    if (cmd == "calibrate") return p.calibrate();
    if (cmd == "rb") return p.rb();
    if (cmd == "irb") {
      std::vector<InterleavedGate> gates;
      for (const auto& n : gate_names) gates.push_back(parse_gate(n));
      if (gates.empty()) {
        gates = {InterleavedGate::kI, InterleavedGate::kXhalf, InterleavedGate::kXneghalf, InterleavedGate::kYhalf,
                 InterleavedGate::kYneghalf};
      }
      return p.irb(gates);
    }
    if (cmd == "pb") return p.pb();
    if (cmd == "gst") return p.gst();
    if (cmd == "budget") return p.budget();
    return p.drift();
  } catch (const SchemaError& e) {
    std::cerr << "schema error: " << e.what() << '\n';
    return kExitSchema;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitRuntime;
  }
}

}  // namespace gatechar::pipeline
