#pragma once

// Stochastic liquidity and volatility: n(n+3)/2 correlated Ornstein-Uhlenbeck
// drivers xi mapped to the impact matrix Xi(t) and price covariance Sigma(t).
//
// Driver layout (0-based): xi[k] drives sigma_k for k < n; the liquidity
// entry eta_{kl}, l <= k, is driven by xi[n + k(k+1)/2 + l] (mirrored for l > k).

#include "rhmc/common.hpp"
#include "rhmc/lowdisc.hpp"

#include <Eigen/Eigenvalues>

#include <cmath>
#include <string>
#include <utility>
#include <vector>

namespace rhmc {

class MarketModel {
 public:
  struct Params {
    Eigen::VectorXd sigma_bar;  // mean volatilities
    Eigen::MatrixXd eta_bar;    // mean impact coefficients (symmetric)
    Eigen::MatrixXd rho;        // asset price correlation
    Eigen::VectorXd delta;      // driver relaxation times
    Eigen::VectorXd beta;       // driver dispersions
    Eigen::MatrixXd varrho;     // driver correlation
    double lambda = 0.0;        // risk aversion
    Eigen::VectorXd xi0;        // initial drivers; empty means zero
  };

  /// Validates everything the simulators and solvers rely on. Throws
  /// ConfigError naming the offending field.
  explicit MarketModel(Params p) : p_(std::move(p)) {
    const int n = static_cast<int>(p_.sigma_bar.size());
    if (n < 1) throw ConfigError("sigma_bar: need at least one asset");
    const int d = n * (n + 3) / 2;
    auto require = [](bool ok, const std::string& msg) {
      if (!ok) throw ConfigError(msg);
    };
    require(p_.eta_bar.rows() == n && p_.eta_bar.cols() == n, "eta_bar: expected n x n");
    require(p_.rho.rows() == n && p_.rho.cols() == n, "rho: expected n x n");
    require(p_.delta.size() == d, "delta: expected n(n+3)/2 entries");
    require(p_.beta.size() == d, "beta: expected n(n+3)/2 entries");
    require(p_.varrho.rows() == d && p_.varrho.cols() == d, "varrho: expected d x d with d = n(n+3)/2");
    if (p_.xi0.size() == 0) p_.xi0 = Eigen::VectorXd::Zero(d);
    require(p_.xi0.size() == d, "xi0: expected n(n+3)/2 entries");
    require(p_.lambda >= 0.0 && std::isfinite(p_.lambda), "lambda: must be finite and nonnegative");
    require((p_.sigma_bar.array() > 0.0).all(), "sigma_bar: must be positive");
    require((p_.delta.array() > 0.0).all(), "delta: must be positive");
    require((p_.beta.array() >= 0.0).all(), "beta: must be nonnegative");
    require(is_symmetric(p_.eta_bar), "eta_bar: must be symmetric");
    require((p_.eta_bar.diagonal().array() > 0.0).all(), "eta_bar: diagonal must be positive");
    require((p_.eta_bar.array() >= 0.0).all(), "eta_bar: entries must be nonnegative");
    require(is_correlation(p_.rho), "rho: must be symmetric with unit diagonal");
    require(is_correlation(p_.varrho), "varrho: must be symmetric with unit diagonal");

    Eigen::LLT<Eigen::MatrixXd> rho_llt(p_.rho);
    require(rho_llt.info() == Eigen::Success, "rho: must be positive definite");
    Eigen::LLT<Eigen::MatrixXd> eta_llt(p_.eta_bar);
    require(eta_llt.info() == Eigen::Success, "eta_bar: must be positive definite");
    require(semidefinite_cholesky(p_.varrho, driver_factor_), "varrho: must be positive semidefinite");
  }

  int assets() const { return static_cast<int>(p_.sigma_bar.size()); }
  int drivers() const { return assets() * (assets() + 3) / 2; }
  const Params& params() const { return p_; }
  double lambda() const { return p_.lambda; }
  const Eigen::VectorXd& initial_drivers() const { return p_.xi0; }

  /// Lower factor F with F F^T = varrho (semidefinite allowed).
  const Eigen::MatrixXd& driver_factor() const { return driver_factor_; }

  int liquidity_index(int k, int l) const {
    if (l > k) std::swap(k, l);
    return assets() + k * (k + 1) / 2 + l;
  }

  /// Mean-level covariance, entries sigma_bar_k sigma_bar_l rho_kl.
  Eigen::MatrixXd mean_covariance() const {
    return p_.sigma_bar.asDiagonal() * p_.rho * p_.sigma_bar.asDiagonal();
  }

  MarketModel with_lambda(double lambda) const {
    Params q = p_;
    q.lambda = lambda;
    return MarketModel(std::move(q));
  }

 private:
  static bool is_symmetric(const Eigen::MatrixXd& m) {
    return (m - m.transpose()).cwiseAbs().maxCoeff() <= 1e-12 * std::max(1.0, m.cwiseAbs().maxCoeff());
  }
  static bool is_correlation(const Eigen::MatrixXd& m) {
    return is_symmetric(m) && (m.diagonal().array() - 1.0).abs().maxCoeff() < 1e-12 &&
           (m.array().abs() <= 1.0 + 1e-12).all();
  }

  // Outer-product Cholesky that tolerates zero pivots (e.g. perfectly
  // anti-correlated drivers).
  static bool semidefinite_cholesky(const Eigen::MatrixXd& a, Eigen::MatrixXd& l) {
    const Eigen::Index d = a.rows();
    l = Eigen::MatrixXd::Zero(d, d);
    constexpr double tol = 1e-12;
    for (Eigen::Index j = 0; j < d; ++j) {
      double diag = a(j, j) - l.row(j).head(j).squaredNorm();
      if (diag < -tol) return false;
      if (diag <= tol) {
        for (Eigen::Index i = j + 1; i < d; ++i)
          if (std::abs(a(i, j) - l.row(i).head(j).dot(l.row(j).head(j))) > 1e-9) return false;
        continue;
      }
      l(j, j) = std::sqrt(diag);
      for (Eigen::Index i = j + 1; i < d; ++i) l(i, j) = (a(i, j) - l.row(i).head(j).dot(l.row(j).head(j))) / l(j, j);
    }
    return true;
  }

  Params p_;
  Eigen::MatrixXd driver_factor_;
};

/// Same mean levels, with the two n = 1 drivers tied so that sigma^2 * eta
/// stays constant: delta_2 = delta_1, beta_2 = 2 beta_1, varrho_12 = -1 and
/// xi^2(0) = -2 xi^1(0).
inline MarketModel coordinated_variation_model(const MarketModel& base) {
  if (base.assets() != 1) throw ConfigError("coordinated variation is defined for a single asset");
  MarketModel::Params p = base.params();
  p.delta(1) = p.delta(0);
  p.beta(1) = 2.0 * p.beta(0);
  p.varrho << 1.0, -1.0, -1.0, 1.0;
  p.xi0(1) = -2.0 * p.xi0(0);
  return MarketModel(std::move(p));
}

/// Exact OU transition over a fixed step, with the per-driver constants cached.
class OuStepper {
 public:
  OuStepper(const MarketModel& model, double dt) : factor_(&model.driver_factor()) {
    if (!(dt > 0.0)) throw std::invalid_argument("OU step must be positive");
    const auto& p = model.params();
    decay_ = (-dt / p.delta.array()).exp();
    scale_ = p.beta.array() * (-(-2.0 * dt / p.delta.array()).unaryExpr([](double x) { return std::expm1(x); }) / 2.0).sqrt();
  }

  /// xi_next = xi * exp(-dt/delta) + s * z with z already correlated.
  template <typename In, typename Z>
  Eigen::VectorXd transition(const Eigen::MatrixBase<In>& xi, const Eigen::MatrixBase<Z>& z) const {
    return (decay_.array() * xi.array() + scale_.array() * z.array()).matrix();
  }

  /// Correlates i.i.d. standard normals with the driver factor.
  template <typename G>
  Eigen::VectorXd correlate(const Eigen::MatrixBase<G>& iid) const {
    return (*factor_) * iid;
  }

  const Eigen::VectorXd& decay() const { return decay_; }
  const Eigen::VectorXd& noise_scale() const { return scale_; }

 private:
  const Eigen::MatrixXd* factor_;
  Eigen::VectorXd decay_;
  Eigen::VectorXd scale_;
};

/// One exact OU step; `z` are correlated standard normals.
inline Eigen::VectorXd ou_transition(const Eigen::VectorXd& xi_now, double dt, const MarketModel& model,
                                     const Eigen::VectorXd& z) {
  if (xi_now.size() != model.drivers() || z.size() != model.drivers())
    throw DimensionMismatch("ou_transition: driver vector size");
  return OuStepper(model, dt).transition(xi_now, z);
}

template <int Dim>
struct MarketState {
  SymPosDef<Dim> impact;  // Xi
  SymPosDef<Dim> cov;     // Sigma
  bool projected = false;  // Xi needed the PD projection
};

/// Xi and Sigma implied by the driver vector. Xi falls back to a projection
/// onto the PD cone (eigenvalues floored at 1e-10 trace/n) when the
/// exponential scaling of its entries breaks definiteness.
template <int Dim>
MarketState<Dim> build_state(const Eigen::Ref<const Eigen::VectorXd>& xi, const MarketModel& model) {
  const int n = model.assets();
  if (Dim != Eigen::Dynamic && Dim != n) throw DimensionMismatch("build_state: template dimension differs from model");
  if (xi.size() != model.drivers()) throw DimensionMismatch("build_state: driver vector size");
  const auto& p = model.params();

  Vec<Dim> vol(n);
  for (int k = 0; k < n; ++k) vol(k) = p.sigma_bar(k) * std::exp(xi(k));
  Mat<Dim> cov(n, n);
  Mat<Dim> impact(n, n);
  for (int k = 0; k < n; ++k) {
    for (int l = 0; l <= k; ++l) {
      cov(k, l) = cov(l, k) = vol(k) * vol(l) * p.rho(k, l);
      impact(k, l) = impact(l, k) = p.eta_bar(k, l) * std::exp(xi(model.liquidity_index(k, l)));
    }
  }

  MarketState<Dim> out;
  if (!SymPosDef<Dim>::try_make(cov, out.cov)) throw NotPositiveDefinite("build_state: covariance not positive definite");
  if (!SymPosDef<Dim>::try_make(impact, out.impact)) {
    Eigen::SelfAdjointEigenSolver<Mat<Dim>> es(impact);
    const double floor = 1e-10 * impact.trace() / n;
    const Vec<Dim> ev = es.eigenvalues().cwiseMax(floor);
    const Mat<Dim> fixed = es.eigenvectors() * ev.asDiagonal() * es.eigenvectors().transpose();
    out.impact = SymPosDef<Dim>::checked(Mat<Dim>(0.5 * (fixed + fixed.transpose())));
    out.projected = true;
  }
  return out;
}

/// Driver values and derived states on steps first..last of a grid.
template <int Dim>
class MarketPath {
 public:
  MarketPath(TimeGrid grid, int first_step, Eigen::MatrixXd drivers, std::vector<MarketState<Dim>> states)
      : grid_(grid), first_(first_step), xi_(std::move(drivers)), states_(std::move(states)) {
    if (static_cast<Eigen::Index>(states_.size()) != xi_.rows())
      throw DimensionMismatch("MarketPath: one state per driver row required");
  }

  const TimeGrid& grid() const { return grid_; }
  int first_step() const { return first_; }
  int last_step() const { return first_ + static_cast<int>(states_.size()) - 1; }

  Eigen::VectorXd drivers(int k) const { return xi_.row(index(k)).transpose(); }
  const Eigen::MatrixXd& driver_matrix() const { return xi_; }
  const SymPosDef<Dim>& impact(int k) const { return states_[index(k)].impact; }
  const SymPosDef<Dim>& cov(int k) const { return states_[index(k)].cov; }
  const MarketState<Dim>& state(int k) const { return states_[index(k)]; }

  int projections() const {
    int c = 0;
    for (const auto& s : states_) c += s.projected ? 1 : 0;
    return c;
  }

 private:
  std::size_t index(int k) const {
    if (k < first_ || k > last_step()) throw std::out_of_range("MarketPath: step outside path");
    return static_cast<std::size_t>(k - first_);
  }

  TimeGrid grid_;
  int first_;
  Eigen::MatrixXd xi_;
  std::vector<MarketState<Dim>> states_;
};

/// Paths from `start_xi` at `start_step` to `end_step`; row i of `normals`
/// holds the (end_step - start_step) * d i.i.d. normals of path i, step-major.
template <int Dim>
std::vector<MarketPath<Dim>> sample_paths(const MarketModel& model, const TimeGrid& grid,
                                          const Eigen::VectorXd& start_xi, int start_step, int end_step,
                                          const NoiseBlock& normals) {
  const int d = model.drivers();
  if (start_step < 0 || end_step > grid.steps() || end_step < start_step)
    throw std::out_of_range("sample_paths: step range");
  if (start_xi.size() != d) throw DimensionMismatch("sample_paths: start driver size");
  const int transitions = end_step - start_step;
  if (normals.cols() < static_cast<Eigen::Index>(transitions) * d)
    throw std::out_of_range("sample_paths: noise exhausted");

  const OuStepper stepper(model, grid.dt());
  std::vector<MarketPath<Dim>> out;
  out.reserve(normals.rows());
  for (Eigen::Index i = 0; i < normals.rows(); ++i) {
    Eigen::MatrixXd xi(transitions + 1, d);
    std::vector<MarketState<Dim>> states;
    states.reserve(transitions + 1);
    xi.row(0) = start_xi.transpose();
    states.push_back(build_state<Dim>(start_xi, model));
    for (int m = 0; m < transitions; ++m) {
      const Eigen::VectorXd z = stepper.correlate(normals.row(i).segment(m * d, d).transpose());
      xi.row(m + 1) = stepper.transition(xi.row(m).transpose(), z).transpose();
      states.push_back(build_state<Dim>(xi.row(m + 1).transpose(), model));
    }
    out.emplace_back(grid, start_step, std::move(xi), std::move(states));
  }
  return out;
}

/// One full outer path 0..M from the model's initial drivers.
template <int Dim>
MarketPath<Dim> sample_outer_path(const MarketModel& model, const TimeGrid& grid, std::uint64_t seed) {
  const NoiseBlock noise = pseudo_block(grid.steps() * model.drivers(), 1, seed);
  return std::move(sample_paths<Dim>(model, grid, model.initial_drivers(), 0, grid.steps(), noise).front());
}

/// Path whose drivers stay at `xi` on every step (frozen parameters).
template <int Dim>
MarketPath<Dim> frozen_path(const MarketModel& model, const TimeGrid& grid, const Eigen::VectorXd& xi) {
  Eigen::MatrixXd drivers = xi.transpose().replicate(grid.steps() + 1, 1);
  std::vector<MarketState<Dim>> states(grid.steps() + 1, build_state<Dim>(xi, model));
  return MarketPath<Dim>(grid, 0, std::move(drivers), std::move(states));
}

/// Bachelier price increments over each step m = 0..M-1: row m is
/// N(0, Sigma(t_m) dt) via the Cholesky factor of Sigma(t_m). `normals` is an
/// M x n block independent of the driver noise.
template <int Dim>
Eigen::MatrixXd sample_prices(const MarketModel& model, const MarketPath<Dim>& path, const NoiseBlock& normals) {
  const int n = model.assets();
  const int steps = path.grid().steps();
  if (normals.rows() < steps || normals.cols() < n) throw std::out_of_range("sample_prices: noise exhausted");
  const double sqdt = std::sqrt(path.grid().dt());
  Eigen::MatrixXd out(steps, n);
  for (int m = 0; m < steps; ++m) {
    const Vec<Dim> z = normals.row(m).head(n).transpose();
    out.row(m) = (sqdt * (path.cov(m).cholesky_lower() * z)).transpose();
  }
  return out;
}

}  // namespace rhmc
