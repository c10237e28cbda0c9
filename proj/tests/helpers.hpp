#pragma once

#include "rhmc/rhmc.hpp"

#include <random>
#include <set>

namespace rhmc::fixtures {

inline Eigen::MatrixXd random_spd(int n, std::mt19937_64& rng, double scale = 1.0) {
  std::normal_distribution<double> g;
  Eigen::MatrixXd a(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) a(i, j) = g(rng);
  Eigen::MatrixXd m = a * a.transpose() + 0.25 * n * Eigen::MatrixXd::Identity(n, n);
  return scale * 0.5 * (m + m.transpose());
}

inline double rel_fro(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
  const double s = std::max(a.norm(), b.norm());
  return s == 0.0 ? 0.0 : (a - b).norm() / s;
}

inline SymPosDef<> spd(const Eigen::MatrixXd& m) { return SymPosDef<>::checked(m); }

inline SymPosDef<1> scalar(double v) { return SymPosDef<1>::checked(Mat<1>::Constant(v)); }

inline SymPosDef<2> spd2(double a, double b, double d) {
  Mat<2> m;
  m << a, b, b, d;
  return SymPosDef<2>::checked(m);
}

/// Single asset with two independent drivers (volatility, liquidity).
inline MarketModel one_asset(double sigma, double eta, double lambda, double beta = 1.0, double delta = 1.0,
                             double varrho12 = 0.0) {
  MarketModel::Params p;
  p.sigma_bar = Eigen::VectorXd::Constant(1, sigma);
  p.eta_bar = Eigen::MatrixXd::Constant(1, 1, eta);
  p.rho = Eigen::MatrixXd::Identity(1, 1);
  p.delta = Eigen::VectorXd::Constant(2, delta);
  p.beta = Eigen::VectorXd::Constant(2, beta);
  p.varrho = Eigen::MatrixXd::Identity(2, 2);
  p.varrho(0, 1) = p.varrho(1, 0) = varrho12;
  p.lambda = lambda;
  return MarketModel(std::move(p));
}

/// Two-asset means and driver correlation used in the published experiments.
inline MarketModel two_asset(double eta22 = 0.002, double rho = -0.8, double lambda = 1e-5, double beta = 1.0) {
  MarketModel::Params p;
  p.sigma_bar = Eigen::Vector2d(std::sqrt(1.0 / 500.0), std::sqrt(3.0 / 1000.0));
  p.eta_bar.resize(2, 2);
  p.eta_bar << 1.0 / 400.0, 1.0 / 1000.0, 1.0 / 1000.0, eta22;
  p.rho.resize(2, 2);
  p.rho << 1.0, rho, rho, 1.0;
  p.delta = Eigen::VectorXd::Ones(5);
  p.beta = Eigen::VectorXd::Constant(5, beta);
  p.varrho.resize(5, 5);
  p.varrho << 10, 8, 1, -6, -6,  //
      8, 10, 1, -6, -6,          //
      1, 1, 10, -1, -1,          //
      -6, -6, -1, 10, 7,         //
      -6, -6, -1, 7, 10;
  p.varrho /= 10.0;
  p.lambda = lambda;
  return MarketModel(std::move(p));
}

/// n assets, independent unit drivers, random SPD means.
inline MarketModel random_model(int n, std::mt19937_64& rng, double lambda, double beta = 0.3) {
  const int d = n * (n + 3) / 2;
  std::uniform_real_distribution<double> u(0.02, 0.06);
  MarketModel::Params p;
  p.sigma_bar.resize(n);
  for (int i = 0; i < n; ++i) p.sigma_bar(i) = u(rng);
  p.eta_bar = Eigen::MatrixXd::Identity(n, n) * 0.002;
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < i; ++j) p.eta_bar(i, j) = p.eta_bar(j, i) = 0.0002;
  p.rho = Eigen::MatrixXd::Identity(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < i; ++j) p.rho(i, j) = p.rho(j, i) = 0.3;
  p.delta = Eigen::VectorXd::Ones(d);
  p.beta = Eigen::VectorXd::Constant(d, beta);
  p.varrho = Eigen::MatrixXd::Identity(d, d);
  p.lambda = lambda;
  return MarketModel(std::move(p));
}

}  // namespace rhmc::fixtures
