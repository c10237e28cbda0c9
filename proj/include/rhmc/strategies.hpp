#pragma once

// Execution strategies on a realized market path:
//   CC      - static schedule from the parameters observed at t = 0
//   RHS     - rolling horizon: re-solve the static problem at every step
//   RHMC-I  - one-step minimization against a simulated continuation cost
//             under RHS
//   RHMC-II - same, with the continuation cost under CC frozen at t_{k+1}

#include "rhmc/common.hpp"
#include "rhmc/lowdisc.hpp"
#include "rhmc/market.hpp"
#include "rhmc/matfun.hpp"

#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace rhmc {

enum class StrategyKind { CC, RHS, RHMC_I, RHMC_II };

inline std::string_view to_string(StrategyKind k) {
  switch (k) {
    case StrategyKind::CC: return "CC";
    case StrategyKind::RHS: return "RHS";
    case StrategyKind::RHMC_I: return "RHMC_I";
    case StrategyKind::RHMC_II: return "RHMC_II";
  }
  return "?";
}

inline std::optional<StrategyKind> parse_strategy(std::string_view s) {
  for (auto k : {StrategyKind::CC, StrategyKind::RHS, StrategyKind::RHMC_I, StrategyKind::RHMC_II})
    if (s == to_string(k)) return k;
  return std::nullopt;
}

/// Inventory x_k (shares left) on every grid point.
template <int Dim>
struct Schedule {
  TimeGrid grid;
  std::vector<Vec<Dim>> inventory;  // M + 1 entries

  Vec<Dim> velocity(int k) const { return (inventory.at(k + 1) - inventory.at(k)) / grid.dt(); }

  /// M x n matrix of per-step velocities.
  Eigen::MatrixXd velocities() const {
    const int n = static_cast<int>(inventory.front().size());
    Eigen::MatrixXd v(grid.steps(), n);
    for (int k = 0; k < grid.steps(); ++k) v.row(k) = velocity(k).transpose();
    return v;
  }
};

/// Expected future-cost quadratic form: E[cost from t_{k+1}] = x^T abar x dt.
template <int Dim>
struct ContinuationMatrix {
  Mat<Dim> abar;
};

template <int Dim>
Schedule<Dim> cc_schedule(const Vec<Dim>& x0, const TimeGrid& grid, const SymPosDef<Dim>& xi0,
                          const SymPosDef<Dim>& sigma0, double lambda) {
  if (x0.size() != xi0.dim()) throw DimensionMismatch("cc_schedule: x0 size");
  const ProductSpectrum<Dim> sp = product_spectrum(xi0, sigma0, lambda, grid.horizon());
  Schedule<Dim> s{grid, {}};
  s.inventory.reserve(grid.steps() + 1);
  s.inventory.push_back(x0);
  for (int k = 1; k < grid.steps(); ++k)
    s.inventory.push_back(sp.apply(detail::omega_diag(sp, grid.time(k), grid.horizon())) * x0);
  s.inventory.push_back(Vec<Dim>::Zero(x0.size()));
  return s;
}

/// x_{k+1} = Omega(dt, T - t_k, Xi(t_k), Sigma(t_k)) x_k.
template <int Dim>
Vec<Dim> rhs_step(const Vec<Dim>& xk, int k, const TimeGrid& grid, const SymPosDef<Dim>& xi_k,
                  const SymPosDef<Dim>& sigma_k, double lambda) {
  if (k < 0 || k >= grid.steps()) throw std::out_of_range("rhs_step: step index");
  if (k == grid.steps() - 1) return Vec<Dim>::Zero(xk.size());
  return propagator_omega(grid.dt(), grid.remaining(k), xi_k, sigma_k, lambda) * xk;
}

namespace detail {

template <int Dim>
void check_scenarios(int k, const TimeGrid& grid, const std::vector<MarketPath<Dim>>& scenarios) {
  if (k < 0 || k >= grid.steps()) throw std::out_of_range("continuation: step index");
  if (k == grid.steps() - 1) return;
  if (scenarios.empty()) throw std::invalid_argument("continuation: no scenarios");
  for (const auto& s : scenarios)
    if (s.first_step() > k + 1 || s.last_step() < grid.steps() - 1)
      throw std::out_of_range("continuation: scenario does not cover steps k+1..M-1");
}

}  // namespace detail

/// Continuation matrix with RHS as the continuation policy:
/// mean over scenarios of sum_{l=1}^{M-k-1} V_l^T [D_l^T Xi D_l + lambda Sigma] V_l,
/// D_l = (Omega_{k+l} - I)/dt, V_1 = I, V_{l+1} = Omega_{k+l} V_l.
template <int Dim>
ContinuationMatrix<Dim> rhmc_abar_I(int k, const TimeGrid& grid, double lambda,
                                    const std::vector<MarketPath<Dim>>& scenarios) {
  detail::check_scenarios(k, grid, scenarios);
  const int n = Dim != Eigen::Dynamic ? Dim
                : scenarios.empty()  ? 0
                                     : scenarios.front().impact(scenarios.front().first_step()).dim();
  ContinuationMatrix<Dim> out{Mat<Dim>::Zero(n, n)};
  if (k == grid.steps() - 1) return out;
  const double dt = grid.dt();
  const Mat<Dim> eye = Mat<Dim>::Identity(n, n);
  for (const auto& path : scenarios) {
    Mat<Dim> v = eye;
    for (int j = k + 1; j < grid.steps(); ++j) {
      const auto& xi = path.impact(j);
      const auto& sigma = path.cov(j);
      const Mat<Dim> omega = propagator_omega(dt, grid.remaining(j), xi, sigma, lambda);
      const Mat<Dim> dv = (omega - eye) / dt;
      const Mat<Dim> q = dv.transpose() * xi.matrix() * dv + lambda * sigma.matrix();
      out.abar.noalias() += v.transpose() * q * v;
      v = (omega * v).eval();
    }
  }
  out.abar /= static_cast<double>(scenarios.size());
  out.abar = 0.5 * (out.abar + out.abar.transpose());
  return out;
}

/// Continuation matrix with CC frozen at the sampled t_{k+1} state:
/// mean over scenarios of sum_{l=1}^{M-k-1} [W_l'^T Xi(t_{k+l}) W_l' + lambda W_l^T Sigma(t_{k+l}) W_l],
/// W_l = Omega(t_{k+l} - t_{k+1}, T - t_{k+1}, Xi(t_{k+1}), Sigma(t_{k+1})).
template <int Dim>
ContinuationMatrix<Dim> rhmc_abar_II(int k, const TimeGrid& grid, double lambda,
                                     const std::vector<MarketPath<Dim>>& scenarios) {
  detail::check_scenarios(k, grid, scenarios);
  const int n = Dim != Eigen::Dynamic ? Dim
                : scenarios.empty()  ? 0
                                     : scenarios.front().impact(scenarios.front().first_step()).dim();
  ContinuationMatrix<Dim> out{Mat<Dim>::Zero(n, n)};
  if (k == grid.steps() - 1) return out;
  const double dt = grid.dt();
  const double tau = grid.remaining(k + 1);
  for (const auto& path : scenarios) {
    const ProductSpectrum<Dim> sp = product_spectrum(path.impact(k + 1), path.cov(k + 1), lambda, tau);
    for (int l = 1; l < grid.steps() - k; ++l) {
      const double s = (l - 1) * dt;
      const Mat<Dim> om = sp.apply(detail::omega_diag(sp, s, tau));
      const Mat<Dim> op = sp.apply(detail::omega_prime_diag(sp, s, tau));
      out.abar.noalias() += op.transpose() * path.impact(k + l).matrix() * op;
      out.abar.noalias() += lambda * (om.transpose() * path.cov(k + l).matrix() * om);
    }
  }
  out.abar /= static_cast<double>(scenarios.size());
  out.abar = 0.5 * (out.abar + out.abar.transpose());
  return out;
}

/// Minimizer of the one-step cost plus continuation:
/// (Xi(t_k) + abar dt^2) x_{k+1} = Xi(t_k) x_k; x_M = 0 on the last step.
template <int Dim>
Vec<Dim> rhmc_step(const Vec<Dim>& xk, int k, const TimeGrid& grid, const SymPosDef<Dim>& xi_k,
                   const ContinuationMatrix<Dim>& abar) {
  if (k < 0 || k >= grid.steps()) throw std::out_of_range("rhmc_step: step index");
  if (k == grid.steps() - 1) return Vec<Dim>::Zero(xk.size());
  const double dt = grid.dt();
  const Mat<Dim> system = xi_k.matrix() + abar.abar * (dt * dt);
  Eigen::LLT<Mat<Dim>> llt(system);
  if (llt.info() != Eigen::Success) throw NumericalFailure("rhmc_step: system matrix not positive definite");
  return llt.solve(xi_k.matrix() * xk);
}

/// Scenario set for decision step k: branches from the observed drivers at
/// t_k and runs to t_{M-1}, consuming (M-k-1) d normals per scenario.
template <int Dim>
std::vector<MarketPath<Dim>> sample_scenarios(const MarketModel& model, const TimeGrid& grid, int k,
                                              const Eigen::VectorXd& observed_xi, const NoiseSpec& noise) {
  const int end = grid.steps() - 1;
  const NoiseBlock normals = noise.normals((end - k) * model.drivers(), k);
  return sample_paths<Dim>(model, grid, observed_xi, k, end, normals);
}

/// Runs one strategy over a realized path. Only states at steps <= k are read
/// when deciding x_{k+1}.
template <int Dim>
Schedule<Dim> run_strategy(StrategyKind kind, const Vec<Dim>& x0, const MarketPath<Dim>& path,
                           const MarketModel& model, const NoiseSpec& inner) {
  const TimeGrid& grid = path.grid();
  const double lambda = model.lambda();
  if (x0.size() != model.assets()) throw DimensionMismatch("run_strategy: x0 size");
  if (kind == StrategyKind::CC) return cc_schedule<Dim>(x0, grid, path.impact(0), path.cov(0), lambda);

  Schedule<Dim> s{grid, {}};
  s.inventory.reserve(grid.steps() + 1);
  s.inventory.push_back(x0);
  for (int k = 0; k < grid.steps(); ++k) {
    const Vec<Dim>& xk = s.inventory.back();
    Vec<Dim> next;
    if (kind == StrategyKind::RHS || k == grid.steps() - 1) {
      next = rhs_step<Dim>(xk, k, grid, path.impact(k), path.cov(k), lambda);
    } else {
      const auto scenarios = sample_scenarios<Dim>(model, grid, k, path.drivers(k), inner);
      const ContinuationMatrix<Dim> abar = kind == StrategyKind::RHMC_I ? rhmc_abar_I<Dim>(k, grid, lambda, scenarios)
                                                                        : rhmc_abar_II<Dim>(k, grid, lambda, scenarios);
      next = rhmc_step<Dim>(xk, k, grid, path.impact(k), abar);
    }
    s.inventory.push_back(std::move(next));
  }
  return s;
}

}  // namespace rhmc
