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

#include "gatechar/least_squares.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace gatechar {

namespace {

Eigen::VectorXd clip(const Eigen::VectorXd& x, const LsqProblem& p) {
  Eigen::VectorXd out = x;
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    if (p.lower.size()) out(i) = std::max(out(i), p.lower(i));
    if (p.upper.size()) out(i) = std::min(out(i), p.upper(i));
  }
  return out;
}

bool all_finite(const Eigen::VectorXd& v) { return v.allFinite(); }

}  // namespace

Eigen::MatrixXd finite_difference_jacobian(const std::function<Eigen::VectorXd(const Eigen::VectorXd&)>& f,
                                           const Eigen::VectorXd& x, double rel_step) {
  Eigen::MatrixXd jac;
  for (Eigen::Index j = 0; j < x.size(); ++j) {
    const double h = rel_step * std::max(1.0, std::abs(x(j)));
    Eigen::VectorXd xp = x, xm = x;
    xp(j) += h;
    xm(j) -= h;
    const Eigen::VectorXd diff = (f(xp) - f(xm)) / (2.0 * h);
    if (j == 0) jac.resize(diff.size(), x.size());
    jac.col(j) = diff;
  }
  return jac;
}

std::optional<Eigen::MatrixXd> LsqResult::covariance() const {
  const Eigen::Index n = residuals.size();
  const Eigen::Index k = x.size();
  if (n <= k) return std::nullopt;
  const Eigen::MatrixXd jtj = jacobian.transpose() * jacobian;
  Eigen::FullPivLU<Eigen::MatrixXd> lu(jtj);
  if (!lu.isInvertible()) return std::nullopt;
  const double s2 = 2.0 * cost / static_cast<double>(n - k);
  return Eigen::MatrixXd(s2 * lu.inverse());
}

LsqResult solve_least_squares(const LsqProblem& problem, Eigen::VectorXd x0, const LsqOptions& opts) {
  if (!problem.residuals) throw std::invalid_argument("solve_least_squares: residual function required");
  const Eigen::Index k = x0.size();
  if ((problem.lower.size() && problem.lower.size() != k) || (problem.upper.size() && problem.upper.size() != k)) {
    throw std::invalid_argument("solve_least_squares: bound dimensions do not match x0");
  }
  auto jac_at = [&](const Eigen::VectorXd& x) {
    return problem.jacobian ? problem.jacobian(x) : finite_difference_jacobian(problem.residuals, x, opts.fd_step);
  };

  LsqResult res;
  res.x = clip(x0, problem);
  res.residuals = problem.residuals(res.x);
  if (!all_finite(res.residuals)) throw std::invalid_argument("solve_least_squares: non-finite initial residuals");
  res.cost = 0.5 * res.residuals.squaredNorm();
  res.jacobian = jac_at(res.x);

  double lambda = opts.initial_lambda;
  for (res.iterations = 0; res.iterations < opts.max_iterations; ++res.iterations) {
    const Eigen::VectorXd grad = res.jacobian.transpose() * res.residuals;
    if (grad.cwiseAbs().maxCoeff() <= opts.gtol) {
      res.converged = true;
      break;
    }
    const Eigen::MatrixXd jtj = res.jacobian.transpose() * res.jacobian;
    Eigen::VectorXd scale = jtj.diagonal().cwiseMax(1e-300);

    bool accepted = false;
    bool small_step = false;
    for (int attempt = 0; attempt < 60 && !accepted; ++attempt) {
      Eigen::MatrixXd a = jtj;
      a.diagonal() += lambda * scale;
      const Eigen::VectorXd step = a.ldlt().solve(-grad);
      const Eigen::VectorXd trial = clip(res.x + step, problem);
      const Eigen::VectorXd actual_step = trial - res.x;
      if (actual_step.norm() <= opts.xtol * (opts.xtol + res.x.norm())) {
        small_step = true;
        break;
      }
      const Eigen::VectorXd r = problem.residuals(trial);
      const double cost = all_finite(r) ? 0.5 * r.squaredNorm() : std::numeric_limits<double>::infinity();
      if (cost < res.cost) {
        const double reduction = (res.cost - cost) / std::max(res.cost, 1e-300);
        res.x = trial;
        res.residuals = r;
        res.cost = cost;
        res.jacobian = jac_at(res.x);
        lambda = std::max(lambda / 3.0, 1e-12);
        accepted = true;
        if (reduction <= opts.ftol) small_step = true;
      } else {
        lambda *= 4.0;
      }
    }
    // No trial point improved the cost even at large damping: the iterate is
    // a minimum to working precision.
    if (small_step || !accepted) {
      res.converged = true;
      break;
    }
  }
  return res;
}

}  // namespace gatechar
