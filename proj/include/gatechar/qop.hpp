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

#include <Eigen/Dense>

#include <array>
#include <complex>
#include <functional>
#include <stdexcept>
#include <string>

namespace gatechar {

using Complex = std::complex<double>;
using Mat2 = Eigen::Matrix2cd;
using Mat3 = Eigen::Matrix3cd;
using Mat4c = Eigen::Matrix4cd;
using Ptm = Eigen::Matrix4d;
using PauliVector = Eigen::Vector4d;
/// Qubit Pauli vector plus the |2> population: (v_I, v_X, v_Y, v_Z, p2).
using LeakyState = Eigen::Matrix<double, 5, 1>;
using LeakyTransfer = Eigen::Matrix<double, 5, 5>;

/// Raised when numerical integration or decomposition produces an
/// unphysical result beyond tolerance.
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

namespace tol {
inline constexpr double kTrace = 1e-12;
inline constexpr double kEigen = 1e-10;
inline constexpr double kPositivity = 1e-9;
inline constexpr double kTracePreserving = 1e-9;
}  // namespace tol

/// Normalized Pauli basis {I, X, Y, Z} / sqrt(2).
const std::array<Mat2, 4>& pauli_basis();

PauliVector to_pauli_vector(const Mat2& op);
Mat2 from_pauli_vector(const PauliVector& v);

/// 3x3 density matrix of the transmon truncated to {|0>, |1>, |2>}.
class DensityMatrix3 {
 public:
  /// Validates hermiticity, unit trace and positivity.
  explicit DensityMatrix3(const Mat3& elements);

  static DensityMatrix3 basis_state(int level);
  /// Embeds a qubit density matrix into the lower 2x2 block.
  static DensityMatrix3 from_qubit(const Mat2& rho);

  const Mat3& matrix() const { return elements_; }
  Mat2 qubit_block() const { return elements_.topLeftCorner<2, 2>(); }

 private:
  Mat3 elements_;
};

/// POVM element for the ground-state outcome; 0 <= E <= I.
class MeasurementEffect {
 public:
  explicit MeasurementEffect(const Mat2& effect);
  static MeasurementEffect ground();
  const Mat2& matrix() const { return effect_; }
  PauliVector pauli_vector() const { return to_pauli_vector(effect_); }

 private:
  Mat2 effect_;
};

/// Pauli-transfer-matrix channel on the qubit subspace with scalar leakage
/// bookkeeping. leak_in: fraction of qubit population moved to |2> per
/// application; leak_out: fraction of |2> population returned (to |1>).
struct QubitChannel {
  Ptm ptm = Ptm::Identity();
  double leak_in = 0.0;
  double leak_out = 0.0;
  /// Set when the PTM first row deviates from (1,0,0,0) because of leakage.
  bool trace_decreasing = false;

  static QubitChannel identity() { return {}; }
  static QubitChannel from_unitary(const Mat2& u);
  static QubitChannel depolarizing(double q);

  /// 5x5 linear map on LeakyState implementing the scalar leakage model.
  /// For a channel not flagged trace_decreasing the qubit block is scaled
  /// by (1 - leak_in) so that total population is conserved.
  LeakyTransfer leaky_transfer() const;
};

Ptm ptm_from_unitary(const Mat2& u);

/// Tomography of a known linear map. Throws std::invalid_argument when the
/// map is detectably non-linear.
QubitChannel ptm_from_map(const std::function<Mat2(const Mat2&)>& apply);

Mat2 apply_ptm(const Ptm& ptm, const Mat2& rho);

/// (Tr[R_ideal^T R] / 2 + 1) / 3 for d = 2.
double average_gate_fidelity(const QubitChannel& actual, const QubitChannel& ideal);

/// Choi matrix J = sum_ab |a><b| (x) L(|a><b|), trace 2 for TP maps.
Mat4c choi_from_ptm(const Ptm& ptm);
Ptm ptm_from_choi(const Mat4c& choi);
double min_choi_eigenvalue(const Ptm& ptm);
bool is_completely_positive(const Ptm& ptm, double tolerance = tol::kPositivity);
bool is_trace_preserving(const Ptm& ptm, double tolerance = tol::kTracePreserving);

double purity(const Mat2& rho);
double purity(const DensityMatrix3& rho);
double leak_population(const DensityMatrix3& rho);

/// Z rotation exp(-i angle sigma_z / 2).
Mat2 rz(double angle);
Mat2 rx(double angle);
Mat2 ry(double angle);
Ptm rz_ptm(double angle);

/// Phase-insensitive distance 1 - |Tr(a^dag b)| / 2 between qubit unitaries.
double unitary_distance(const Mat2& a, const Mat2& b);

}  // namespace gatechar
