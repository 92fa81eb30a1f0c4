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

#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <random>

using namespace gatechar;

namespace {

constexpr Complex kI{0.0, 1.0};

Mat2 random_unitary(std::mt19937_64& rng) {
  std::normal_distribution<double> n;
  Mat2 a;
  a << Complex(n(rng), n(rng)), Complex(n(rng), n(rng)), Complex(n(rng), n(rng)), Complex(n(rng), n(rng));
  Eigen::HouseholderQR<Mat2> qr(a);
  return qr.householderQ();
}

Mat2 random_state(std::mt19937_64& rng) {
  std::normal_distribution<double> n;
  Mat2 a;
  a << Complex(n(rng), n(rng)), Complex(n(rng), n(rng)), Complex(n(rng), n(rng)), Complex(n(rng), n(rng));
  Mat2 rho = a * a.adjoint();
  return rho / rho.trace();
}

// Amplitude damping followed by pure dephasing, written directly as Kraus
// operators (independent of any PTM machinery).
Mat2 damp_kraus(const Mat2& rho, double t, double t1, double t2) {
  const double gamma = 1.0 - std::exp(-t / t1);
  Mat2 k0 = Mat2::Zero(), k1 = Mat2::Zero();
  k0(0, 0) = 1.0;
  k0(1, 1) = std::sqrt(1.0 - gamma);
  k1(0, 1) = std::sqrt(gamma);
  const Mat2 damped = k0 * rho * k0.adjoint() + k1 * rho * k1.adjoint();
  const double tphi_factor = std::exp(-t / t2) / std::exp(-t / (2.0 * t1));
  const double p = 0.5 * (1.0 - tphi_factor);
  Mat2 z = Mat2::Zero();
  z(0, 0) = 1.0;
  z(1, 1) = -1.0;
  return (1.0 - p) * damped + p * z * damped * z;
}

}  // namespace

TEST(PtmFromMap, IdentityMapGivesIdentity) {
  const QubitChannel c = ptm_from_map([](const Mat2& r) { return r; });
  EXPECT_LT((c.ptm - Ptm::Identity()).cwiseAbs().maxCoeff(), 1e-14);
  EXPECT_FALSE(c.trace_decreasing);
}

TEST(PtmFromMap, QuarterTurnAboutZ) {
  Mat2 s = Mat2::Zero();
  s(0, 0) = 1.0;
  s(1, 1) = kI;
  const QubitChannel c = ptm_from_map([&](const Mat2& r) { return Mat2(s * r * s.adjoint()); });
  Ptm expected = Ptm::Zero();
  expected(0, 0) = 1.0;
  expected(3, 3) = 1.0;
  expected(2, 1) = 1.0;   // X -> Y
  expected(1, 2) = -1.0;  // Y -> -X
  EXPECT_LT((c.ptm - expected).cwiseAbs().maxCoeff(), 1e-14);
}

TEST(PtmFromMap, DampingChannelIsAffineDiagonal) {
  const double t = 20e-9, t1 = 231e-6, t2 = 204e-6;
  const QubitChannel c = ptm_from_map([&](const Mat2& r) { return damp_kraus(r, t, t1, t2); });
  EXPECT_NEAR(c.ptm(0, 0), 1.0, 1e-15);
  EXPECT_NEAR(c.ptm(1, 1), std::exp(-t / t2), 1e-14);
  EXPECT_NEAR(c.ptm(2, 2), std::exp(-t / t2), 1e-14);
  EXPECT_NEAR(c.ptm(3, 3), std::exp(-t / t1), 1e-14);
  EXPECT_NEAR(c.ptm(3, 0), 1.0 - std::exp(-t / t1), 1e-14);
  // Bloch-vector reproduction on a random input.
  std::mt19937_64 rng(3);
  const Mat2 rho = random_state(rng);
  EXPECT_LT((apply_ptm(c.ptm, rho) - damp_kraus(rho, t, t1, t2)).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(PtmFromMap, RejectsNonLinearMap) {
  auto squaring = [](const Mat2& r) { return Mat2(r * r); };
  EXPECT_THROW(ptm_from_map(squaring), std::invalid_argument);
}

TEST(PtmFromMap, RoundTripOnRandomChannels) {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int trial = 0; trial < 50; ++trial) {
    // Random CPTP channel: mixture of two unitaries followed by depolarizing.
    const Ptm a = ptm_from_unitary(random_unitary(rng));
    const Ptm b = ptm_from_unitary(random_unitary(rng));
    const double w = u(rng);
    const Ptm r = QubitChannel::depolarizing(0.3 * u(rng)).ptm * (w * a + (1.0 - w) * b);
    const QubitChannel back = ptm_from_map([&](const Mat2& x) { return apply_ptm(r, x); });
    EXPECT_LT((back.ptm - r).cwiseAbs().maxCoeff(), 1e-10);
    EXPECT_TRUE(is_completely_positive(r));
    EXPECT_TRUE(is_trace_preserving(r));
  }
}

TEST(AverageGateFidelity, Examples) {
  std::mt19937_64 rng(5);
  for (int k = 0; k < 20; ++k) {
    const QubitChannel u = QubitChannel::from_unitary(random_unitary(rng));
    EXPECT_NEAR(average_gate_fidelity(u, u), 1.0, 1e-12);
  }
  const double t = 20e-9, t1 = 231e-6, t2 = 204e-6;
  const QubitChannel damp = ptm_from_map([&](const Mat2& r) { return damp_kraus(r, t, t1, t2); });
  const double r = (3.0 - 2.0 * std::exp(-t / t2) - std::exp(-t / t1)) / 6.0;
  EXPECT_NEAR(average_gate_fidelity(damp, QubitChannel::identity()), 1.0 - r, 1e-15);
  EXPECT_NEAR(r, 4.71e-5, 0.005e-5);
  EXPECT_NEAR(average_gate_fidelity(QubitChannel::depolarizing(1.0), QubitChannel::identity()), 0.5, 1e-15);
}

TEST(Purity, Examples) {
  Mat2 pure = Mat2::Zero();
  pure(0, 0) = 1.0;
  EXPECT_DOUBLE_EQ(purity(pure), 1.0);
  EXPECT_DOUBLE_EQ(purity(Mat2(Mat2::Identity() / 2.0)), 0.5);
  Mat2 d = Mat2::Zero();
  d(0, 0) = 0.9;
  d(1, 1) = 0.1;
  EXPECT_NEAR(purity(d), 0.82, 1e-15);
  Mat2 bad = Mat2::Identity();
  EXPECT_THROW(purity(bad), std::invalid_argument);
}

TEST(Purity, InvariantUnderUnitaryConjugation) {
  std::mt19937_64 rng(9);
  for (int k = 0; k < 50; ++k) {
    const Mat2 rho = random_state(rng);
    const Mat2 u = random_unitary(rng);
    EXPECT_NEAR(purity(rho), purity(Mat2(u * rho * u.adjoint())), 1e-12);
  }
}

TEST(LeakPopulation, Examples) {
  EXPECT_EQ(leak_population(DensityMatrix3::basis_state(0)), 0.0);
  EXPECT_EQ(leak_population(DensityMatrix3::basis_state(2)), 1.0);
  Mat3 m = Mat3::Zero();
  m.diagonal() << 0.989, 0.01, 0.001;
  EXPECT_NEAR(leak_population(DensityMatrix3(m)), 0.001, 1e-15);
  EXPECT_NEAR(purity(DensityMatrix3(m)), 0.989 * 0.989 + 1e-4 + 1e-6, 1e-15);
}

TEST(DensityMatrix3, RejectsInvalid) {
  Mat3 m = Mat3::Zero();
  m(0, 0) = 0.5;
  EXPECT_THROW(DensityMatrix3{m}, std::invalid_argument);
  m.diagonal() << 1.2, -0.2, 0.0;
  EXPECT_THROW(DensityMatrix3{m}, std::invalid_argument);
}

TEST(Choi, PositivityDetectsTranspose) {
  Ptm transpose = Ptm::Identity();
  transpose(2, 2) = -1.0;  // rho -> rho^T flips Y
  EXPECT_FALSE(is_completely_positive(transpose));
  EXPECT_TRUE(is_completely_positive(Ptm::Identity()));
  EXPECT_NEAR(min_choi_eigenvalue(QubitChannel::depolarizing(1.0).ptm), 0.5, 1e-12);
  std::mt19937_64 rng(1);
  const Ptm r = ptm_from_unitary(random_unitary(rng));
  EXPECT_LT((ptm_from_choi(choi_from_ptm(r)) - r).cwiseAbs().maxCoeff(), 1e-12);
  EXPECT_NEAR(choi_from_ptm(r).trace().real(), 2.0, 1e-12);
}

TEST(QubitChannel, UnitaryPtmIsOrthogonal) {
  std::mt19937_64 rng(2);
  const Ptm r = ptm_from_unitary(random_unitary(rng));
  EXPECT_NEAR((r.transpose() * r).trace(), 4.0, 1e-12);
}

TEST(QubitChannel, LeakyTransferConservesPopulation) {
  QubitChannel c = QubitChannel::depolarizing(0.01);
  c.leak_in = 1e-3;
  c.leak_out = 0.02;
  LeakyState s;
  s << 1.0 / std::sqrt(2.0), 0.0, 0.0, 1.0 / std::sqrt(2.0), 0.0;
  for (int k = 0; k < 100; ++k) {
    s = c.leaky_transfer() * s;
    EXPECT_NEAR(std::sqrt(2.0) * s(0) + s(4), 1.0, 1e-12);
  }
  EXPECT_GT(s(4), 0.0);
}

TEST(Rotations, MatchPtmConvention) {
  const double a = 0.37;
  EXPECT_LT((ptm_from_unitary(rz(a)) - rz_ptm(a)).cwiseAbs().maxCoeff(), 1e-14);
  EXPECT_LT(unitary_distance(rx(std::numbers::pi), Mat2(kI * rx(std::numbers::pi))), 1e-15);
}
