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

#include <functional>
#include <optional>

namespace gatechar {

/// Box-constrained nonlinear least squares, minimizing 0.5 |r(x)|^2.
struct LsqProblem {
  std::function<Eigen::VectorXd(const Eigen::VectorXd&)> residuals;
  /// Analytic Jacobian; central differences are used when absent.
  std::function<Eigen::MatrixXd(const Eigen::VectorXd&)> jacobian;
  Eigen::VectorXd lower;
  Eigen::VectorXd upper;
};

struct LsqOptions {
  int max_iterations = 500;
  double ftol = 1e-15;
  double xtol = 1e-13;
  double gtol = 1e-15;
  double initial_lambda = 1e-3;
  /// Relative step for finite-difference Jacobians.
  double fd_step = 1e-7;
};

struct LsqResult {
  Eigen::VectorXd x;
  Eigen::VectorXd residuals;
  Eigen::MatrixXd jacobian;
  double cost = 0.0;
  int iterations = 0;
  bool converged = false;

  /// Asymptotic covariance s^2 (J^T J)^{-1}; empty when J^T J is singular
  /// or there are no residual degrees of freedom.
  std::optional<Eigen::MatrixXd> covariance() const;
};

/// Projected Levenberg-Marquardt with Marquardt diagonal scaling. Bounds are
/// enforced by clipping each trial point; unbounded sides use +-infinity.
LsqResult solve_least_squares(const LsqProblem& problem, Eigen::VectorXd x0, const LsqOptions& opts = {});

Eigen::MatrixXd finite_difference_jacobian(const std::function<Eigen::VectorXd(const Eigen::VectorXd&)>& f,
                                           const Eigen::VectorXd& x, double rel_step = 1e-7);

}  // namespace gatechar
