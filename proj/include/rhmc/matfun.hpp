#pragma once

// Matrix functions of C = (lambda * Xi^{-1} * Sigma)^{1/2} for the static
// (constant coefficient) execution problem.
//
// lambda * Xi^{-1} * Sigma is similar to the symmetric PSD matrix
// S = lambda * L^{-1} Sigma L^{-T} (Xi = L L^T), so with S = U diag(mu^2) U^T
// every function f(C) is W f(diag(mu)) W^{-1} where W = L^{-T} U and
// W^{-1} = U^T L^T. Only real nonnegative rates mu appear.

#include "rhmc/common.hpp"

#include <Eigen/Eigenvalues>

#include <array>
#include <cmath>
#include <optional>

namespace rhmc {

/// Below this value of max eig(lambda Xi^{-1} Sigma) * T^2 the propagator is
/// replaced by its exact lambda -> 0 limit (linear trading).
inline constexpr double kLinearLimitThreshold = 1e-10;

/// Trajectory propagator from a state at local time 0: x(t) = omega x_0,
/// v(t) = omega_prime x_0.
template <int Dim>
struct Propagator {
  Mat<Dim> omega;
  Mat<Dim> omega_prime;
  double eval_time = 0.0;
  double horizon = 0.0;
};

template <int Dim>
struct ProductSpectrum {
  Mat<Dim> basis;      // W
  Mat<Dim> basis_inv;  // W^{-1}
  Vec<Dim> rates;      // mu_i >= 0, C = W diag(mu) W^{-1}
  bool linear_limit = false;

  int dim() const { return static_cast<int>(rates.size()); }

  template <typename Diag>
  Mat<Dim> apply(const Diag& diag) const {
    return basis * diag.asDiagonal() * basis_inv;
  }
};

namespace detail {

// sinh(a) / sinh(b) for 0 <= a <= b, b > 0, without overflow.
inline double sinh_ratio(double a, double b) {
  if (b < 1e-5) return (a / b) * (1.0 + (a * a - b * b) / 6.0);
  return std::exp(a - b) * (-std::expm1(-2.0 * a)) / (-std::expm1(-2.0 * b));
}

// mu * cosh(mu * s) / sinh(mu * tau); tends to 1/tau as mu -> 0.
inline double cosh_rate_ratio(double mu, double s, double tau) {
  const double a = mu * s;
  const double b = mu * tau;
  if (b < 1e-5) return (1.0 / tau) * (1.0 + a * a / 2.0 - b * b / 6.0);
  return mu * std::exp(a - b) * (1.0 + std::exp(-2.0 * a)) / (-std::expm1(-2.0 * b));
}

template <int Dim>
void check_same_dim(const SymPosDef<Dim>& xi, const SymPosDef<Dim>& sigma) {
  if (xi.dim() != sigma.dim()) throw DimensionMismatch("impact and covariance dimensions differ");
}

// Gauss-Legendre nodes and weights on [-1, 1] by Newton iteration on P_n.
template <int N>
struct GaussLegendre {
  std::array<double, N> nodes{};
  std::array<double, N> weights{};

  GaussLegendre() {
    constexpr double pi = 3.14159265358979323846;
    for (int i = 0; i < N; ++i) {
      double x = std::cos(pi * (i + 0.75) / (N + 0.5));
      double dp = 0.0;
      for (int iter = 0; iter < 100; ++iter) {
        double p0 = 1.0, p1 = x;
        for (int k = 2; k <= N; ++k) {
          const double p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
          p0 = p1;
          p1 = p2;
        }
        dp = N * (x * p1 - p0) / (x * x - 1.0);
        const double dx = p1 / dp;
        x -= dx;
        if (std::abs(dx) < 1e-16) break;
      }
      nodes[i] = x;
      weights[i] = 2.0 / ((1.0 - x * x) * dp * dp);
    }
  }
};

inline const GaussLegendre<16>& gauss_legendre16() {
  static const GaussLegendre<16> rule;
  return rule;
}

}  // namespace detail

/// Eigen-coordinates of lambda * Xi^{-1} * Sigma. `horizon` only decides
/// whether the linear (lambda -> 0) limit applies.
template <int Dim>
ProductSpectrum<Dim> product_spectrum(const SymPosDef<Dim>& xi, const SymPosDef<Dim>& sigma, double lambda,
                                      double horizon) {
  detail::check_same_dim(xi, sigma);
  if (!(lambda >= 0.0)) throw std::invalid_argument("risk aversion must be nonnegative");
  const int n = xi.dim();
  ProductSpectrum<Dim> out;
  const Mat<Dim>& L = xi.cholesky_lower();

  if (lambda == 0.0) {
    out.basis = Mat<Dim>::Identity(n, n);
    out.basis_inv = Mat<Dim>::Identity(n, n);
    out.rates = Vec<Dim>::Zero(n);
    out.linear_limit = true;
    return out;
  }

  Mat<Dim> s = L.template triangularView<Eigen::Lower>().solve(sigma.matrix());
  s = L.template triangularView<Eigen::Lower>().solve(s.transpose()).eval();
  s = lambda * 0.5 * (s + s.transpose());

  Eigen::SelfAdjointEigenSolver<Mat<Dim>> es(s);
  if (es.info() != Eigen::Success) throw NumericalFailure("eigendecomposition of lambda Xi^-1 Sigma failed");
  const Vec<Dim> evals = es.eigenvalues().cwiseMax(0.0);
  out.rates = evals.cwiseSqrt();
  out.basis = L.transpose().template triangularView<Eigen::Upper>().solve(es.eigenvectors());
  out.basis_inv = es.eigenvectors().transpose() * L.transpose();
  out.linear_limit = evals.maxCoeff() * horizon * horizon < kLinearLimitThreshold;
  return out;
}

/// C with C^2 = lambda * Xi^{-1} * Sigma and real nonnegative spectrum.
template <int Dim>
Mat<Dim> mat_sqrt_product(const SymPosDef<Dim>& xi, const SymPosDef<Dim>& sigma, double lambda) {
  const ProductSpectrum<Dim> sp = product_spectrum(xi, sigma, lambda, 1.0);
  return sp.apply(sp.rates);
}

namespace detail {

template <int Dim>
void check_times(double t, double horizon) {
  if (!(horizon > 0.0)) throw std::invalid_argument("propagator: horizon must be positive");
  if (!(t >= 0.0 && t <= horizon * (1.0 + 1e-12))) throw std::out_of_range("propagator: evaluation time outside [0, horizon]");
}

template <int Dim>
Vec<Dim> omega_diag(const ProductSpectrum<Dim>& sp, double t, double horizon) {
  const int n = sp.dim();
  Vec<Dim> f(n);
  for (int i = 0; i < n; ++i) {
    f(i) = sp.linear_limit ? (horizon - t) / horizon
                           : sinh_ratio(sp.rates(i) * (horizon - t), sp.rates(i) * horizon);
  }
  return f;
}

template <int Dim>
Vec<Dim> omega_prime_diag(const ProductSpectrum<Dim>& sp, double t, double horizon) {
  const int n = sp.dim();
  Vec<Dim> g(n);
  for (int i = 0; i < n; ++i) {
    g(i) = sp.linear_limit ? -1.0 / horizon : -cosh_rate_ratio(sp.rates(i), horizon - t, horizon);
  }
  return g;
}

}  // namespace detail

/// Omega(t, T) and Omega'(t, T) from a precomputed spectrum.
template <int Dim>
Propagator<Dim> propagator(const ProductSpectrum<Dim>& sp, double t, double horizon) {
  detail::check_times<Dim>(t, horizon);
  Propagator<Dim> p;
  p.omega = sp.apply(detail::omega_diag(sp, t, horizon));
  p.omega_prime = sp.apply(detail::omega_prime_diag(sp, t, horizon));
  p.eval_time = t;
  p.horizon = horizon;
  return p;
}

/// Omega = sinh(C (T - t)) sinh(C T)^{-1}, Omega' = -cosh(C (T - t)) sinh(C T)^{-1} C.
template <int Dim>
Propagator<Dim> propagator(double t, double horizon, const SymPosDef<Dim>& xi, const SymPosDef<Dim>& sigma,
                           double lambda) {
  detail::check_times<Dim>(t, horizon);
  return propagator(product_spectrum(xi, sigma, lambda, horizon), t, horizon);
}

/// Omega alone; the rolling-horizon inner loops never need Omega'.
template <int Dim>
Mat<Dim> propagator_omega(double t, double horizon, const SymPosDef<Dim>& xi, const SymPosDef<Dim>& sigma,
                          double lambda) {
  detail::check_times<Dim>(t, horizon);
  const ProductSpectrum<Dim> sp = product_spectrum(xi, sigma, lambda, horizon);
  return sp.apply(detail::omega_diag(sp, t, horizon));
}

/// Explicit two-asset formulas. Returns nullopt when the closed form does not
/// apply (repeated eigenvalues or a vanishing lower-left entry of
/// lambda Xi^{-1} Sigma); callers then use the general propagator.
inline std::optional<Propagator<2>> cc_2asset_closed_form(double t, double horizon, const SymPosDef<2>& xi,
                                                          const SymPosDef<2>& sigma, double lambda) {
  detail::check_times<2>(t, horizon);
  if (!(lambda >= 0.0)) throw std::invalid_argument("risk aversion must be nonnegative");
  const Mat<2>& e = xi.matrix();
  const Mat<2>& s = sigma.matrix();
  const double s1 = std::sqrt(s(0, 0));
  const double s2 = std::sqrt(s(1, 1));
  const double rho = s(0, 1) / (s1 * s2);
  const double eta_sum = e(0, 1) + e(1, 0);
  const double denom = eta_sum * eta_sum - 4.0 * e(0, 0) * e(1, 1);
  const double scale = 2.0 * lambda / denom;
  const double a = scale * (s1 * s2 * rho * eta_sum - 2.0 * s1 * s1 * e(1, 1));
  const double b = scale * (s2 * s2 * eta_sum - 2.0 * rho * s1 * s2 * e(1, 1));
  const double c = scale * (s1 * s1 * eta_sum - 2.0 * rho * s1 * s2 * e(0, 0));
  const double d = scale * (s1 * s2 * rho * eta_sum - 2.0 * s2 * s2 * e(0, 0));

  const double D = a * a + 4.0 * b * c - 2.0 * a * d + d * d;
  const double mag = std::max({std::abs(a), std::abs(b), std::abs(c), std::abs(d)});
  if (lambda == 0.0 || !(mag > 0.0)) return std::nullopt;
  if (!(D > 1e-16 * mag * mag) || std::abs(c) < 1e-12 * mag) return std::nullopt;

  const double sqrtD = std::sqrt(D);
  const double alpha = a - d;
  const double beta = a + d;
  const double mu1 = std::sqrt(std::max(0.0, (beta - sqrtD) / 2.0));
  const double mu2 = std::sqrt(std::max(0.0, (beta + sqrtD) / 2.0));
  const double th1 = (alpha - sqrtD) / (2.0 * c);
  const double th2 = (alpha + sqrtD) / (2.0 * c);

  const double tau = horizon - t;
  const double f1 = detail::sinh_ratio(mu1 * tau, mu1 * horizon);
  const double f2 = detail::sinh_ratio(mu2 * tau, mu2 * horizon);
  const double g1 = -detail::cosh_rate_ratio(mu1, tau, horizon);
  const double g2 = -detail::cosh_rate_ratio(mu2, tau, horizon);

  auto assemble = [&](double u1, double u2) {
    Mat<2> m;
    m << th1 * u1 - th2 * u2, th1 * th2 * (u2 - u1), u1 - u2, th1 * u2 - th2 * u1;
    return Mat<2>(m / (th1 - th2));
  };
  Propagator<2> p;
  p.omega = assemble(f1, f2);
  p.omega_prime = assemble(g1, g2);
  p.eval_time = t;
  p.horizon = horizon;
  return p;
}

/// Closed form where it applies, general matrix-function path otherwise.
inline Propagator<2> propagator_2asset(double t, double horizon, const SymPosDef<2>& xi, const SymPosDef<2>& sigma,
                                       double lambda) {
  if (auto p = cc_2asset_closed_form(t, horizon, xi, sigma, lambda)) return *p;
  return propagator(t, horizon, xi, sigma, lambda);
}

/// Q with x_t^T Q x_t the cost of the constant-coefficient schedule over
/// [t, T]: Q = int_0^{T-t} [Omega'^T Xi Omega' + lambda Omega^T Sigma Omega] ds.
/// Composite 16-point Gauss-Legendre with adaptive panel halving.
template <int Dim>
Mat<Dim> cc_cost_matrix(double t, double horizon, const SymPosDef<Dim>& xi, const SymPosDef<Dim>& sigma,
                        double lambda, double rel_tol = 1e-10) {
  detail::check_times<Dim>(t, horizon);
  const double tau = horizon - t;
  const int n = xi.dim();
  if (tau <= 0.0) throw std::domain_error("cc_cost_matrix: empty horizon");
  const ProductSpectrum<Dim> sp = product_spectrum(xi, sigma, lambda, tau);
  const auto& rule = detail::gauss_legendre16();

  auto integrand = [&](double s) {
    const Mat<Dim> om = sp.apply(detail::omega_diag(sp, s, tau));
    const Mat<Dim> op = sp.apply(detail::omega_prime_diag(sp, s, tau));
    return Mat<Dim>(op.transpose() * xi.matrix() * op + lambda * om.transpose() * sigma.matrix() * om);
  };
  auto panel = [&](double a, double b) {
    Mat<Dim> acc = Mat<Dim>::Zero(n, n);
    const double half = 0.5 * (b - a);
    const double mid = 0.5 * (a + b);
    for (std::size_t i = 0; i < rule.nodes.size(); ++i) acc += rule.weights[i] * integrand(mid + half * rule.nodes[i]);
    return Mat<Dim>(half * acc);
  };

  const Mat<Dim> coarse = panel(0.0, tau);
  const double scale = coarse.norm();
  constexpr int kMaxDepth = 40;
  constexpr int kMaxPanels = 1 << 16;
  int panels = 0;

  auto refine = [&](auto&& self, double a, double b, const Mat<Dim>& whole, int depth) -> Mat<Dim> {
    const double m = 0.5 * (a + b);
    const Mat<Dim> left = panel(a, m);
    const Mat<Dim> right = panel(m, b);
    const Mat<Dim> sum = left + right;
    if ((sum - whole).norm() <= rel_tol * scale * std::max((b - a) / tau, 1e-6)) return sum;
    if (depth >= kMaxDepth || ++panels > kMaxPanels)
      throw NumericalFailure("cc_cost_matrix: quadrature did not converge");
    return self(self, a, m, left, depth + 1) + self(self, m, b, right, depth + 1);
  };
  Mat<Dim> q = refine(refine, 0.0, tau, coarse, 0);
  return Mat<Dim>(0.5 * (q + q.transpose()));
}

}  // namespace rhmc
