#pragma once

#include "rhmc/common.hpp"
#include "rhmc/market.hpp"
#include "rhmc/strategies.hpp"

#include <algorithm>
#include <cmath>
#include <span>

namespace rhmc {

/// Left-point discretized mean-variance cost of a schedule on a path.
struct CostReport {
  double total = 0.0;
  double impact_term = 0.0;  // dt * sum v_k^T Xi(t_k) v_k
  double risk_term = 0.0;    // dt * lambda * sum x_k^T Sigma(t_k) x_k
  Eigen::VectorXd per_step;
};

namespace detail {
template <int Dim>
void check_grid(const Schedule<Dim>& schedule, const MarketPath<Dim>& path) {
  if (!(schedule.grid == path.grid())) throw DimensionMismatch("schedule and path use different grids");
  if (static_cast<int>(schedule.inventory.size()) != schedule.grid.steps() + 1)
    throw DimensionMismatch("schedule: inventory length");
  if (path.first_step() != 0 || path.last_step() < schedule.grid.steps() - 1)
    throw DimensionMismatch("path does not cover the schedule");
}
}  // namespace detail

template <int Dim>
CostReport path_cost(const Schedule<Dim>& schedule, const MarketPath<Dim>& path, double lambda) {
  detail::check_grid(schedule, path);
  const int steps = schedule.grid.steps();
  const double dt = schedule.grid.dt();
  CostReport r;
  r.per_step.resize(steps);
  for (int k = 0; k < steps; ++k) {
    const Vec<Dim> v = schedule.velocity(k);
    const Vec<Dim>& x = schedule.inventory[k];
    const double impact = dt * v.dot(path.impact(k).matrix() * v);
    const double risk = dt * lambda * x.dot(path.cov(k).matrix() * x);
    r.impact_term += impact;
    r.risk_term += risk;
    r.per_step(k) = impact + risk;
  }
  r.total = r.impact_term + r.risk_term;
  return r;
}

/// Realized slippage with simulated price increments (rows from sample_prices):
/// sum_k x_k^T dS_k + dt sum_k v_k^T Xi(t_k) v_k.
template <int Dim>
double realized_cost(const Schedule<Dim>& schedule, const MarketPath<Dim>& path, const Eigen::MatrixXd& increments) {
  detail::check_grid(schedule, path);
  const int steps = schedule.grid.steps();
  if (increments.rows() != steps || increments.cols() != schedule.inventory.front().size())
    throw DimensionMismatch("realized_cost: increments shape");
  const double dt = schedule.grid.dt();
  double c = 0.0;
  for (int k = 0; k < steps; ++k) {
    const Vec<Dim> v = schedule.velocity(k);
    c += schedule.inventory[k].dot(increments.row(k).transpose());
    c += dt * v.dot(path.impact(k).matrix() * v);
  }
  return c;
}

struct Summary {
  double mean = 0.0;
  double std_error = 0.0;
  double min = 0.0;
  double max = 0.0;
  std::size_t count = 0;
};

/// Sample statistics, summed in input order.
inline Summary aggregate(std::span<const double> xs) {
  if (xs.empty()) throw std::invalid_argument("aggregate: empty sample");
  Summary s;
  s.count = xs.size();
  s.min = s.max = xs.front();
  double sum = 0.0;
  for (double x : xs) {
    sum += x;
    s.min = std::min(s.min, x);
    s.max = std::max(s.max, x);
  }
  s.mean = sum / static_cast<double>(xs.size());
  if (xs.size() > 1) {
    double ss = 0.0;
    for (double x : xs) ss += (x - s.mean) * (x - s.mean);
    s.std_error = std::sqrt(ss / static_cast<double>(xs.size() - 1) / static_cast<double>(xs.size()));
  }
  return s;
}

}  // namespace rhmc
