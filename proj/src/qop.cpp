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

#include "gatechar/qop.hpp"

#include <cmath>
#include <numbers>

namespace gatechar {

namespace {

constexpr Complex kI{0.0, 1.0};

Eigen::Vector4cd to_pauli_vector_complex(const Mat2& op) {
  Eigen::Vector4cd v;
  const auto& basis = pauli_basis();
  for (int i = 0; i < 4; ++i) v(i) = (basis[i] * op).trace();
  return v;
}

Mat2 from_pauli_vector_complex(const Eigen::Vector4cd& v) {
  Mat2 out = Mat2::Zero();
  const auto& basis = pauli_basis();
  for (int i = 0; i < 4; ++i) out += v(i) * basis[i];
  return out;
}

void check_hermitian(const Eigen::MatrixXcd& m, const char* what) {
  if ((m - m.adjoint()).cwiseAbs().maxCoeff() > 1e-10) {
    throw std::invalid_argument(std::string(what) + ": matrix is not Hermitian");
  }
}

}  // namespace

const std::array<Mat2, 4>& pauli_basis() {
  static const std::array<Mat2, 4> basis = [] {
    const double s = 1.0 / std::sqrt(2.0);
    std::array<Mat2, 4> b;
    b[0] << s, 0, 0, s;
    b[1] << 0, s, s, 0;
    b[2] << 0, -kI * s, kI * s, 0;
    b[3] << s, 0, 0, -s;
    return b;
  }();
  return basis;
}

PauliVector to_pauli_vector(const Mat2& op) {
  return to_pauli_vector_complex(op).real();
}

Mat2 from_pauli_vector(const PauliVector& v) {
  return from_pauli_vector_complex(v.cast<Complex>());
}

DensityMatrix3::DensityMatrix3(const Mat3& elements) : elements_(elements) {
  check_hermitian(elements_, "DensityMatrix3");
  if (std::abs(elements_.trace() - 1.0) > tol::kTrace * 1e3) {
    throw std::invalid_argument("DensityMatrix3: trace deviates from 1");
  }
  Eigen::SelfAdjointEigenSolver<Mat3> es(elements_, Eigen::EigenvaluesOnly);
  if (es.eigenvalues().minCoeff() < -tol::kEigen) {
    throw std::invalid_argument("DensityMatrix3: negative eigenvalue");
  }
}

DensityMatrix3 DensityMatrix3::basis_state(int level) {
  if (level < 0 || level > 2) throw std::invalid_argument("basis_state: level must be 0, 1 or 2");
  Mat3 m = Mat3::Zero();
  m(level, level) = 1.0;
  return DensityMatrix3(m);
}

DensityMatrix3 DensityMatrix3::from_qubit(const Mat2& rho) {
  Mat3 m = Mat3::Zero();
  m.topLeftCorner<2, 2>() = rho;
  return DensityMatrix3(m);
}

MeasurementEffect::MeasurementEffect(const Mat2& effect) : effect_(effect) {
  check_hermitian(effect_, "MeasurementEffect");
  Eigen::SelfAdjointEigenSolver<Mat2> es(effect_, Eigen::EigenvaluesOnly);
  if (es.eigenvalues().minCoeff() < -tol::kEigen || es.eigenvalues().maxCoeff() > 1.0 + tol::kEigen) {
    throw std::invalid_argument("MeasurementEffect: eigenvalues outside [0, 1]");
  }
}

MeasurementEffect MeasurementEffect::ground() {
  Mat2 e = Mat2::Zero();
  e(0, 0) = 1.0;
  return MeasurementEffect(e);
}

Ptm ptm_from_unitary(const Mat2& u) {
  Ptm r;
  const auto& basis = pauli_basis();
  for (int j = 0; j < 4; ++j) {
    const Mat2 out = u * basis[j] * u.adjoint();
    for (int i = 0; i < 4; ++i) r(i, j) = (basis[i] * out).trace().real();
  }
  return r;
}

QubitChannel QubitChannel::from_unitary(const Mat2& u) {
  QubitChannel c;
  c.ptm = ptm_from_unitary(u);
  return c;
}

QubitChannel QubitChannel::depolarizing(double q) {
  if (q < 0.0 || q > 4.0 / 3.0) throw std::invalid_argument("depolarizing: q out of range");
  QubitChannel c;
  c.ptm.diagonal() << 1.0, 1.0 - q, 1.0 - q, 1.0 - q;
  return c;
}

LeakyTransfer QubitChannel::leaky_transfer() const {
  const double s = 1.0 / std::sqrt(2.0);
  LeakyTransfer t = LeakyTransfer::Zero();
  t.topLeftCorner<4, 4>() = trace_decreasing ? ptm : Ptm((1.0 - leak_in) * ptm);
  // Returning population lands in |1><1| = (I - Z) / 2.
  t(0, 4) = leak_out * s;
  t(3, 4) = -leak_out * s;
  // Tr(qubit block) = sqrt(2) v_I.
  t(4, 0) = leak_in * std::sqrt(2.0);
  t(4, 4) = 1.0 - leak_out;
  return t;
}

QubitChannel ptm_from_map(const std::function<Mat2(const Mat2&)>& apply) {
  const auto& basis = pauli_basis();
  QubitChannel c;
  std::array<Mat2, 4> outputs;
  for (int j = 0; j < 4; ++j) {
    outputs[j] = apply(basis[j]);
    for (int i = 0; i < 4; ++i) c.ptm(i, j) = (basis[i] * outputs[j]).trace().real();
  }
  // Linearity probe on fixed Hermitian combinations of the basis.
  const std::array<PauliVector, 2> probes = {PauliVector(0.7, -0.3, 0.45, 0.2),
                                             PauliVector(0.2, 0.55, -0.6, 0.35)};
  double scale = 0.0;
  for (const auto& o : outputs) scale = std::max(scale, o.cwiseAbs().maxCoeff());
  for (const auto& p : probes) {
    const Mat2 direct = apply(from_pauli_vector(p));
    Mat2 combined = Mat2::Zero();
    for (int j = 0; j < 4; ++j) combined += p(j) * outputs[j];
    if ((direct - combined).cwiseAbs().maxCoeff() > 1e-9 * std::max(1.0, scale)) {
      throw std::invalid_argument("ptm_from_map: map is not linear");
    }
  }
  c.trace_decreasing = !is_trace_preserving(c.ptm);
  return c;
}

Mat2 apply_ptm(const Ptm& ptm, const Mat2& rho) {
  return from_pauli_vector_complex(ptm.cast<Complex>() * to_pauli_vector_complex(rho));
}

double average_gate_fidelity(const QubitChannel& actual, const QubitChannel& ideal) {
  return ((ideal.ptm.transpose() * actual.ptm).trace() / 2.0 + 1.0) / 3.0;
}

Mat4c choi_from_ptm(const Ptm& ptm) {
  Mat4c choi = Mat4c::Zero();
  const Eigen::Matrix4cd r = ptm.cast<Complex>();
  for (int a = 0; a < 2; ++a) {
    for (int b = 0; b < 2; ++b) {
      Mat2 unit = Mat2::Zero();
      unit(a, b) = 1.0;
      const Mat2 out = from_pauli_vector_complex(r * to_pauli_vector_complex(unit));
      choi.block<2, 2>(2 * a, 2 * b) = out;
    }
  }
  return choi;
}

Ptm ptm_from_choi(const Mat4c& choi) {
  const auto& basis = pauli_basis();
  Ptm r;
  for (int j = 0; j < 4; ++j) {
    // L(X) = sum_ab X_ab L(|a><b|)
    Mat2 out = Mat2::Zero();
    for (int a = 0; a < 2; ++a)
      for (int b = 0; b < 2; ++b) out += basis[j](a, b) * choi.block<2, 2>(2 * a, 2 * b);
    for (int i = 0; i < 4; ++i) r(i, j) = (basis[i] * out).trace().real();
  }
  return r;
}

double min_choi_eigenvalue(const Ptm& ptm) {
  const Mat4c choi = choi_from_ptm(ptm);
  const Mat4c herm = 0.5 * (choi + choi.adjoint());
  Eigen::SelfAdjointEigenSolver<Mat4c> es(herm, Eigen::EigenvaluesOnly);
  return es.eigenvalues().minCoeff();
}

bool is_completely_positive(const Ptm& ptm, double tolerance) {
  return min_choi_eigenvalue(ptm) >= -tolerance;
}

bool is_trace_preserving(const Ptm& ptm, double tolerance) {
  return std::abs(ptm(0, 0) - 1.0) <= tolerance && ptm.row(0).tail<3>().cwiseAbs().maxCoeff() <= tolerance;
}

double purity(const Mat2& rho) {
  if (std::abs(rho.trace() - 1.0) > 1e-6) throw std::invalid_argument("purity: trace deviates from 1");
  return (rho * rho).trace().real();
}

double purity(const DensityMatrix3& rho) {
  return (rho.matrix() * rho.matrix()).trace().real();
}

double leak_population(const DensityMatrix3& rho) { return rho.matrix()(2, 2).real(); }

Mat2 rz(double angle) {
  Mat2 m = Mat2::Zero();
  m(0, 0) = std::exp(-kI * angle / 2.0);
  m(1, 1) = std::exp(kI * angle / 2.0);
  return m;
}

Mat2 rx(double angle) {
  Mat2 m;
  const double c = std::cos(angle / 2.0);
  const double s = std::sin(angle / 2.0);
  m << c, -kI * s, -kI * s, c;
  return m;
}

Mat2 ry(double angle) {
  Mat2 m;
  const double c = std::cos(angle / 2.0);
  const double s = std::sin(angle / 2.0);
  m << c, -s, s, c;
  return m;
}

Ptm rz_ptm(double angle) {
  Ptm r = Ptm::Identity();
  r(1, 1) = std::cos(angle);
  r(1, 2) = -std::sin(angle);
  r(2, 1) = std::sin(angle);
  r(2, 2) = std::cos(angle);
  return r;
}

double unitary_distance(const Mat2& a, const Mat2& b) {
  return 1.0 - std::abs((a.adjoint() * b).trace()) / 2.0;
}

}  // namespace gatechar
