#pragma once

// Reference solutions:
//  * the a posteriori discrete optimum, i.e. the schedule minimizing the
//    left-point discretized cost when the whole parameter path is known;
//  * the residual of the large-risk-aversion RHS optimality condition (n = 1).

#include "rhmc/common.hpp"
#include "rhmc/market.hpp"
#include "rhmc/strategies.hpp"

#include <Eigen/Cholesky>
#include <Eigen/LU>

#include <cmath>

namespace rhmc {

/// minimize v^T H v subject to W v = X, with v the asset-major stacked
/// velocities (v_1(t_0..t_{M-1}), ..., v_n(t_0..t_{M-1})).
struct QPSystem {
  Eigen::MatrixXd hessian;      // dt Xi_block + lambda dt^3 Sigma_block
  Eigen::MatrixXd constraints;  // n x (M n); row i is -dt on asset i's slots
  Eigen::VectorXd rhs;          // initial inventory
  double dt = 0.0;
  int steps = 0;
};

struct QPSolution {
  Eigen::VectorXd velocity;
  Eigen::VectorXd multipliers;  // from the KKT system [2H W^T; W 0][v; mu] = [0; X]
};

template <int Dim>
QPSystem build_qp(const MarketPath<Dim>& path, const Vec<Dim>& x0, double lambda) {
  const TimeGrid& grid = path.grid();
  const int m = grid.steps();
  const int n = static_cast<int>(x0.size());
  if (path.first_step() != 0 || path.last_step() < m - 1) throw DimensionMismatch("build_qp: path does not cover grid");
  if (path.impact(0).dim() != n) throw DimensionMismatch("build_qp: x0 size");
  const double dt = grid.dt();

  QPSystem qp;
  qp.dt = dt;
  qp.steps = m;
  qp.hessian = Eigen::MatrixXd::Zero(m * n, m * n);
  // cumulative[k](i, j) = sum_{r <= k} Sigma_ij(t_r)
  std::vector<Eigen::MatrixXd> cumulative(m);
  Eigen::MatrixXd running = Eigen::MatrixXd::Zero(n, n);
  for (int k = 0; k < m; ++k) {
    running += path.cov(k).matrix();
    cumulative[k] = running;
  }
  const double risk = lambda * dt * dt * dt;
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) {
      auto block = qp.hessian.block(i * m, j * m, m, m);
      for (int k = 0; k < m; ++k) {
        block(k, k) += dt * path.impact(k).matrix()(i, j);
        for (int l = 0; l < m; ++l) block(k, l) += risk * cumulative[std::min(k, l)](i, j);
      }
    }
  }
  qp.hessian = 0.5 * (qp.hessian + qp.hessian.transpose()).eval();
  qp.constraints = Eigen::MatrixXd::Zero(n, m * n);
  for (int i = 0; i < n; ++i) qp.constraints.row(i).segment(i * m, m).setConstant(-dt);
  qp.rhs = x0;
  return qp;
}

/// Constraint elimination: the last velocity of each asset is expressed
/// through the others and the reduced SPD system is solved by Cholesky.
inline Eigen::VectorXd solve_qp_eliminated(const QPSystem& qp) {
  const int m = qp.steps;
  const int n = static_cast<int>(qp.rhs.size());
  const int free = (m - 1) * n;
  // v = P z + q
  Eigen::MatrixXd P = Eigen::MatrixXd::Zero(m * n, free);
  Eigen::VectorXd q = Eigen::VectorXd::Zero(m * n);
  for (int i = 0; i < n; ++i) {
    for (int k = 0; k < m - 1; ++k) {
      P(i * m + k, i * (m - 1) + k) = 1.0;
      P(i * m + m - 1, i * (m - 1) + k) = -1.0;
    }
    q(i * m + m - 1) = -qp.rhs(i) / qp.dt;
  }
  if (free == 0) return q;
  const Eigen::MatrixXd HP = qp.hessian * P;
  Eigen::LLT<Eigen::MatrixXd> llt(P.transpose() * HP);
  if (llt.info() != Eigen::Success) throw NumericalFailure("discrete optimum: reduced Hessian not positive definite");
  const Eigen::VectorXd z = llt.solve(-(HP.transpose() * q));
  return P * z + q;
}

/// Range-space solution of the KKT system using the Cholesky factor of H;
/// falls back to constraint elimination if H does not factor.
inline QPSolution solve_qp(const QPSystem& qp) {
  const Eigen::MatrixXd& W = qp.constraints;
  QPSolution sol;
  Eigen::LLT<Eigen::MatrixXd> hllt(qp.hessian);
  if (hllt.info() == Eigen::Success) {
    const Eigen::MatrixXd Y = hllt.solve(W.transpose());  // H^{-1} W^T
    Eigen::LLT<Eigen::MatrixXd> sllt(W * Y);
    if (sllt.info() == Eigen::Success) {
      const Eigen::VectorXd s = sllt.solve(qp.rhs);
      sol.velocity = Y * s;
      sol.multipliers = -2.0 * s;
      if (sol.velocity.allFinite()) return sol;
    }
  }
  sol.velocity = solve_qp_eliminated(qp);
  // least-squares multipliers from the stationarity rows
  const Eigen::VectorXd g = -2.0 * qp.hessian * sol.velocity;
  sol.multipliers = (W * W.transpose()).ldlt().solve(W * g);
  return sol;
}

template <int Dim>
Schedule<Dim> schedule_from_velocity(const TimeGrid& grid, const Vec<Dim>& x0, const Eigen::VectorXd& v) {
  const int m = grid.steps();
  const int n = static_cast<int>(x0.size());
  Schedule<Dim> s{grid, {}};
  s.inventory.reserve(m + 1);
  s.inventory.push_back(x0);
  for (int k = 0; k < m - 1; ++k) {
    Vec<Dim> vk(n);
    for (int i = 0; i < n; ++i) vk(i) = v(i * m + k);
    s.inventory.push_back(s.inventory.back() + grid.dt() * vk);
  }
  s.inventory.push_back(Vec<Dim>::Zero(n));
  return s;
}

/// Non-causal optimum of the discretized objective given the full path.
template <int Dim>
Schedule<Dim> discrete_optimal(const MarketPath<Dim>& path, const Vec<Dim>& x0, double lambda) {
  const QPSystem qp = build_qp(path, x0, lambda);
  return schedule_from_velocity<Dim>(path.grid(), x0, solve_qp(qp).velocity);
}

/// Residual of the single-asset condition under which RHS becomes optimal as
/// lambda sigma_bar^2 / eta_bar grows; drivers 1 (volatility) and 2 (liquidity).
inline double rhs_residual(const MarketModel& model, double xi1, double xi2) {
  if (model.assets() != 1) throw ConfigError("rhs_residual: single-asset model required");
  const auto& p = model.params();
  const double d1 = p.delta(0), d2 = p.delta(1);
  const double b1 = p.beta(0), b2 = p.beta(1);
  const double vr = p.varrho(0, 1);
  return 0.5 * vr * b1 * b2 * std::sqrt(d2 / d1) * d2 - 0.5 * xi1 + 0.5 * (d1 * d1 * d1) / (d2 * d2) * b1 * b1 -
         (d2 * d2 / d1) * xi2 + 0.125 * b2 * b2 * d2;
}

}  // namespace rhmc
