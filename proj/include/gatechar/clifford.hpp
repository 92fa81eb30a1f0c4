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

#include "gatechar/qop.hpp"

#include <array>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

namespace gatechar {

/// Quarter turns available as single physical pulses. Each is an X_{pi/2}
/// played in a rotated frame.
enum class Generator { kX90 = 0, kXm90 = 1, kY90 = 2, kYm90 = 3 };

inline constexpr std::array<Generator, 4> kGenerators = {Generator::kX90, Generator::kXm90, Generator::kY90,
                                                         Generator::kYm90};

std::string generator_name(Generator g);
Mat2 generator_unitary(Generator g);
/// Drive phase of the X_{pi/2} pulse realizing `g`: a pulse with phase phi
/// implements Rz(-phi) X_{pi/2} Rz(phi).
double generator_phase(Generator g);

struct CliffordElement {
  int index = 0;
  Mat2 unitary;
  QubitChannel ptm;
};

struct PulseItem {
  enum class Kind { kPulse, kVirtualZ, kIdle };
  Kind kind = Kind::kPulse;
  /// Frame rotation for kVirtualZ; unused otherwise.
  double angle = 0.0;
};

struct PulseProgram {
  std::vector<PulseItem> items;
  /// Physical X_{pi/2} pulses plus physical idles.
  int pulse_count = 0;

  int x90_count() const;
  bool has_idle() const;
  /// Composed unitary with virtual-Z(theta) read as Rz(theta).
  Mat2 unitary() const;
  /// Frame phase seen by each physical pulse, in program order.
  std::vector<double> pulse_phases() const;
};

struct CensusRow {
  int index = 0;
  std::string word;
  int pulse_count = 0;
};

/// The 24-element single-qubit Clifford group. Index 0 is the identity;
/// the remaining elements are numbered in breadth-first discovery order
/// over the generators, so index 1..4 are X90, X-90, Y90, Y-90.
class CliffordGroup {
 public:
  static constexpr int kSize = 24;

  CliffordGroup();

  const std::vector<CliffordElement>& elements() const { return elements_; }
  const CliffordElement& element(int index) const;

  /// Index of the Clifford performing `first` then `second`.
  int compose(int first, int second) const;
  int inverse(int index) const;
  /// Index of the element equal to `u` up to global phase; throws
  /// std::invalid_argument if `u` is not a Clifford.
  int find(const Mat2& u) const;

  /// Minimal generator word, in application order.
  const std::vector<Generator>& word(int index) const;
  PulseProgram compile(int index) const;
  std::vector<CensusRow> census() const;
  double mean_pulse_count() const;

 private:
  std::vector<CliffordElement> elements_;
  std::vector<std::vector<Generator>> words_;
  std::array<std::array<int, kSize>, kSize> compose_{};
  std::array<int, kSize> inverse_{};
};

/// Process-wide immutable table; safe for concurrent readers.
const CliffordGroup& clifford_group();

PulseProgram compile(const CliffordElement& c);

/// Element that returns the composed `sequence` to the identity.
int inverse_for(std::span<const int> sequence);

std::vector<CensusRow> decomposition_census();
void write_census_csv(std::ostream& out, const std::vector<CensusRow>& rows);

}  // namespace gatechar
