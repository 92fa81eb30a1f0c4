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

#include "gatechar/clifford.hpp"

#include <cmath>
#include <deque>
#include <numbers>
#include <ostream>
#include <stdexcept>

namespace gatechar {

namespace {

constexpr double kPi = std::numbers::pi;

bool same_up_to_phase(const Mat2& a, const Mat2& b) {
  return unitary_distance(a, b) < 1e-10;
}

}  // namespace

std::string generator_name(Generator g) {
  switch (g) {
    case Generator::kX90:
      return "X90";
    case Generator::kXm90:
      return "X-90";
    case Generator::kY90:
      return "Y90";
    case Generator::kYm90:
      return "Y-90";
  }
  throw std::logic_error("unknown generator");
}

double generator_phase(Generator g) {
  switch (g) {
    case Generator::kX90:
      return 0.0;
    case Generator::kXm90:
      return kPi;
    case Generator::kY90:
      return -kPi / 2.0;
    case Generator::kYm90:
      return kPi / 2.0;
  }
  throw std::logic_error("unknown generator");
}

Mat2 generator_unitary(Generator g) {
  const double phi = generator_phase(g);
  return rz(-phi) * rx(kPi / 2.0) * rz(phi);
}

int PulseProgram::x90_count() const {
  int n = 0;
  for (const auto& item : items) n += item.kind == PulseItem::Kind::kPulse;
  return n;
}

bool PulseProgram::has_idle() const {
  for (const auto& item : items) {
    if (item.kind == PulseItem::Kind::kIdle) return true;
  }
  return false;
}

Mat2 PulseProgram::unitary() const {
  Mat2 u = Mat2::Identity();
  for (const auto& item : items) {
    switch (item.kind) {
      case PulseItem::Kind::kPulse:
        u = rx(kPi / 2.0) * u;
        break;
      case PulseItem::Kind::kVirtualZ:
        u = rz(item.angle) * u;
        break;
      case PulseItem::Kind::kIdle:
        break;
    }
  }
  return u;
}

std::vector<double> PulseProgram::pulse_phases() const {
  std::vector<double> phases;
  double frame = 0.0;
  for (const auto& item : items) {
    if (item.kind == PulseItem::Kind::kVirtualZ) frame += item.angle;
    if (item.kind == PulseItem::Kind::kPulse) phases.push_back(frame);
  }
  return phases;
}

CliffordGroup::CliffordGroup() {
  // Breadth-first search; generators are tried in enum order, so the first
  // word reaching an element is the lexicographically smallest minimal one.
  elements_.push_back({0, Mat2::Identity(), QubitChannel::identity()});
  words_.push_back({});
  std::deque<int> queue = {0};
  while (!queue.empty()) {
    const int parent = queue.front();
    queue.pop_front();
    for (Generator g : kGenerators) {
      const Mat2 u = generator_unitary(g) * elements_[parent].unitary;
      bool seen = false;
      for (const auto& e : elements_) seen = seen || same_up_to_phase(e.unitary, u);
      if (seen) continue;
      const int index = static_cast<int>(elements_.size());
      elements_.push_back({index, u, QubitChannel::from_unitary(u)});
      auto w = words_[parent];
      w.push_back(g);
      words_.push_back(std::move(w));
      queue.push_back(index);
    }
  }
  if (elements_.size() != kSize) throw std::logic_error("Clifford search did not close at 24 elements");

  for (int a = 0; a < kSize; ++a) {
    for (int b = 0; b < kSize; ++b) {
      compose_[a][b] = find(elements_[b].unitary * elements_[a].unitary);
    }
  }
  for (int a = 0; a < kSize; ++a) {
    for (int b = 0; b < kSize; ++b) {
      if (compose_[a][b] == 0) inverse_[a] = b;
    }
  }
}

const CliffordElement& CliffordGroup::element(int index) const {
  if (index < 0 || index >= kSize) throw std::out_of_range("Clifford index out of range");
  return elements_[index];
}

int CliffordGroup::compose(int first, int second) const {
  element(first);
  element(second);
  return compose_[first][second];
}

int CliffordGroup::inverse(int index) const {
  element(index);
  return inverse_[index];
}

int CliffordGroup::find(const Mat2& u) const {
  for (const auto& e : elements_) {
    if (same_up_to_phase(e.unitary, u)) return e.index;
  }
  throw std::invalid_argument("unitary is not a single-qubit Clifford");
}

const std::vector<Generator>& CliffordGroup::word(int index) const {
  element(index);
  return words_[index];
}

PulseProgram CliffordGroup::compile(int index) const {
  PulseProgram program;
  const auto& w = word(index);
  if (w.empty()) {
    // The identity is played as one idle slot of pulse duration.
    program.items.push_back({PulseItem::Kind::kIdle, 0.0});
    program.pulse_count = 1;
    return program;
  }
  double frame = 0.0;
  for (Generator g : w) {
    const double phi = generator_phase(g);
    if (phi != frame) program.items.push_back({PulseItem::Kind::kVirtualZ, phi - frame});
    program.items.push_back({PulseItem::Kind::kPulse, 0.0});
    frame = phi;
  }
  if (frame != 0.0) program.items.push_back({PulseItem::Kind::kVirtualZ, -frame});
  program.pulse_count = static_cast<int>(w.size());
  return program;
}

std::vector<CensusRow> CliffordGroup::census() const {
  std::vector<CensusRow> rows;
  for (int i = 0; i < kSize; ++i) {
    CensusRow row;
    row.index = i;
    for (Generator g : words_[i]) row.word += (row.word.empty() ? "" : " ") + generator_name(g);
    if (row.word.empty()) row.word = "I";
    row.pulse_count = compile(i).pulse_count;
    rows.push_back(row);
  }
  return rows;
}

double CliffordGroup::mean_pulse_count() const {
  double sum = 0.0;
  for (const auto& row : census()) sum += row.pulse_count;
  return sum / kSize;
}

const CliffordGroup& clifford_group() {
  static const CliffordGroup group;
  return group;
}

PulseProgram compile(const CliffordElement& c) { return clifford_group().compile(c.index); }

int inverse_for(std::span<const int> sequence) {
  if (sequence.empty()) throw std::invalid_argument("inverse_for: empty sequence");
  const auto& group = clifford_group();
  int total = 0;
  for (int c : sequence) total = group.compose(total, c);
  return group.inverse(total);
}

std::vector<CensusRow> decomposition_census() { return clifford_group().census(); }

void write_census_csv(std::ostream& out, const std::vector<CensusRow>& rows) {
  out << "index,word,pulse_count\n";
  int sum = 0;
  for (const auto& row : rows) {
    out << row.index << ',' << row.word << ',' << row.pulse_count << '\n';
    sum += row.pulse_count;
  }
  out << "# convention: X90/X-90/Y90/Y-90 each one physical pulse, Z not free, identity one idle\n";
  out << "# total," << sum << ",mean," << static_cast<double>(sum) / static_cast<double>(rows.size()) << '\n';
}

}  // namespace gatechar
