#include "helpers.hpp"

#include <gtest/gtest.h>

using namespace rhmc;

namespace {

MarketModel cv_model(double sigma = 0.031, double eta = 0.002, double xi1 = 0.0) {
  MarketModel::Params p = fixtures::one_asset(sigma, eta, 1e-5).params();
  p.xi0 = Eigen::Vector2d(xi1, 0.0);
  return coordinated_variation_model(MarketModel(p));
}

}  // namespace

TEST(MarketModel, ValidatesFields) {
  const MarketModel ok = fixtures::one_asset(0.03, 0.002, 1e-5);
  EXPECT_EQ(ok.assets(), 1);
  EXPECT_EQ(ok.drivers(), 2);

  auto broken = [&](auto mutate) {
    MarketModel::Params p = ok.params();
    mutate(p);
    return p;
  };
  EXPECT_THROW(MarketModel(broken([](auto& p) { p.lambda = -1.0; })), ConfigError);
  EXPECT_THROW(MarketModel(broken([](auto& p) { p.sigma_bar(0) = 0.0; })), ConfigError);
  EXPECT_THROW(MarketModel(broken([](auto& p) { p.delta(1) = 0.0; })), ConfigError);
  EXPECT_THROW(MarketModel(broken([](auto& p) { p.beta(0) = -1.0; })), ConfigError);
  EXPECT_THROW(MarketModel(broken([](auto& p) { p.eta_bar(0, 0) = 0.0; })), ConfigError);
  EXPECT_THROW(MarketModel(broken([](auto& p) { p.delta.resize(3); })), ConfigError);
  EXPECT_THROW(MarketModel(broken([](auto& p) { p.varrho(0, 0) = 2.0; })), ConfigError);
  EXPECT_THROW(MarketModel(broken([](auto& p) { p.varrho(0, 1) = p.varrho(1, 0) = 1.5; })), ConfigError);
  EXPECT_THROW(MarketModel(broken([](auto& p) { p.xi0 = Eigen::VectorXd::Zero(3); })), ConfigError);

  MarketModel::Params two = fixtures::two_asset().params();
  two.eta_bar(0, 1) = 0.5;  // symmetric-breaking
  EXPECT_THROW(MarketModel{two}, ConfigError);
  two = fixtures::two_asset().params();
  two.eta_bar(0, 1) = two.eta_bar(1, 0) = 0.01;  // not PD
  EXPECT_THROW(MarketModel{two}, ConfigError);
  two = fixtures::two_asset().params();
  two.rho(0, 1) = two.rho(1, 0) = 1.0;
  EXPECT_THROW(MarketModel{two}, ConfigError);
}

TEST(MarketModel, LiquidityIndexIsCanonicalLowerTriangle) {
  const MarketModel m = fixtures::two_asset();
  EXPECT_EQ(m.drivers(), 5);
  EXPECT_EQ(m.liquidity_index(0, 0), 2);
  EXPECT_EQ(m.liquidity_index(1, 0), 3);
  EXPECT_EQ(m.liquidity_index(0, 1), 3);
  EXPECT_EQ(m.liquidity_index(1, 1), 4);
  std::mt19937_64 rng(1);
  const MarketModel m4 = fixtures::random_model(4, rng, 0.1);
  std::set<int> seen;
  for (int k = 0; k < 4; ++k)
    for (int l = 0; l <= k; ++l) seen.insert(m4.liquidity_index(k, l));
  EXPECT_EQ(seen.size(), 10u);
  EXPECT_EQ(*seen.begin(), 4);
  EXPECT_EQ(*seen.rbegin(), 13);
}

TEST(OuTransition, ExactStep) {
  MarketModel::Params p = fixtures::one_asset(0.03, 0.002, 0.0).params();
  p.delta = Eigen::Vector2d(1.0, 2.5);
  p.beta = Eigen::Vector2d(0.7, 1.3);
  const MarketModel m(p);
  const Eigen::Vector2d xi(0.4, -0.2), z(0.9, -1.1);
  const double dt = 0.05;
  const Eigen::VectorXd got = ou_transition(xi, dt, m, z);
  for (int k = 0; k < 2; ++k) {
    const double s = p.beta(k) * std::sqrt((1.0 - std::exp(-2.0 * dt / p.delta(k))) / 2.0);
    EXPECT_NEAR(got(k), xi(k) * std::exp(-dt / p.delta(k)) + s * z(k), 1e-15);
  }
  EXPECT_THROW(ou_transition(Eigen::Vector3d::Zero(), dt, m, z), DimensionMismatch);
}

TEST(OuTransition, NoiselessDecayAndMeanReversion) {
  const MarketModel still = fixtures::one_asset(0.03, 0.002, 0.0, 0.0);
  const Eigen::Vector2d xi(0.5, -1.0);
  const Eigen::VectorXd z = Eigen::Vector2d(3.0, 3.0);
  EXPECT_LT((ou_transition(xi, 0.3, still, z) - xi * std::exp(-0.3)).norm(), 1e-15);
  const MarketModel m = fixtures::one_asset(0.03, 0.002, 0.0);
  EXPECT_LT(ou_transition(xi, 1e3, m, Eigen::Vector2d::Zero()).norm(), 1e-15);
}

TEST(OuTransition, OneStepNoiseVariance) {
  // analytic one-step variance (1 - e^{-0.02}) / 2 = 9.901e-3 versus 10^6 draws
  const MarketModel m = fixtures::one_asset(0.03, 0.002, 0.0);
  const OuStepper step(m, 0.01);
  EXPECT_NEAR(step.noise_scale()(0) * step.noise_scale()(0), (1.0 - std::exp(-0.02)) / 2.0, 1e-16);
  EXPECT_NEAR(step.noise_scale()(0) * step.noise_scale()(0), 9.901e-3, 1e-6);
  const NoiseBlock z = pseudo_block(1000000, 1, 17);
  double ss = 0.0;
  for (Eigen::Index i = 0; i < z.cols(); ++i) {
    const double x = step.noise_scale()(0) * z(0, i);
    ss += x * x;
  }
  EXPECT_NEAR(ss / z.cols(), 9.901e-3, 3e-5);
}

TEST(OuTransition, MultiStepMomentsMatchFormula) {
  // k exact steps of size dt compose to one step of size k dt (mean and variance)
  MarketModel::Params p = fixtures::one_asset(0.03, 0.002, 0.0).params();
  p.delta = Eigen::Vector2d(0.8, 3.0);
  p.beta = Eigen::Vector2d(0.6, 1.4);
  const MarketModel m(p);
  const OuStepper small(m, 0.1);
  const int k = 7;
  for (int j = 0; j < 2; ++j) {
    const double a = small.decay()(j);
    double var = 0.0;
    for (int i = 0; i < k; ++i) var = a * a * var + small.noise_scale()(j) * small.noise_scale()(j);
    const double big_decay = std::exp(-k * 0.1 / p.delta(j));
    const double big_var = p.beta(j) * p.beta(j) * (1.0 - big_decay * big_decay) / 2.0;
    EXPECT_NEAR(std::pow(a, k), big_decay, 1e-14);
    EXPECT_NEAR(var, big_var, 1e-14);
  }
}

TEST(OuTransition, DriverCorrelationConverges) {
  const MarketModel m = fixtures::two_asset();
  const OuStepper step(m, 0.01);
  const int samples = 100000;
  const NoiseBlock iid = pseudo_block(5, samples, 3);
  Eigen::MatrixXd z(samples, 5);
  for (int i = 0; i < samples; ++i) z.row(i) = step.correlate(iid.row(i).transpose()).transpose();
  const Eigen::MatrixXd centered = z.rowwise() - z.colwise().mean();
  const Eigen::MatrixXd cov = centered.transpose() * centered / (samples - 1.0);
  const Eigen::VectorXd sd = cov.diagonal().cwiseSqrt();
  const Eigen::MatrixXd corr = sd.cwiseInverse().asDiagonal() * cov * sd.cwiseInverse().asDiagonal();
  EXPECT_LT((corr - m.params().varrho).cwiseAbs().maxCoeff(), 0.02);
}

TEST(BuildState, ZeroDriversGiveMeanLevels) {
  const MarketModel m = fixtures::two_asset(0.003, 0.6);
  const auto st = build_state<2>(Eigen::VectorXd::Zero(5), m);
  Mat<2> xi;
  xi << 1.0 / 400.0, 1.0 / 1000.0, 1.0 / 1000.0, 0.003;
  EXPECT_LT((st.impact.matrix() - xi).norm(), 1e-18);
  EXPECT_LT((st.cov.matrix() - m.mean_covariance()).norm(), 1e-18);
  EXPECT_FALSE(st.projected);
}

TEST(BuildState, ScalarExponential) {
  const MarketModel m = fixtures::one_asset(0.03, 0.002, 0.0);
  const auto st = build_state<1>(Eigen::Vector2d(std::log(2.0), std::log(3.0)), m);
  EXPECT_NEAR(st.cov.matrix()(0, 0), 4.0 * 0.03 * 0.03, 1e-17);
  EXPECT_NEAR(st.impact.matrix()(0, 0), 3.0 * 0.002, 1e-17);
}

TEST(BuildState, EntrywiseMapping) {
  const MarketModel m = fixtures::two_asset(0.002, -0.8);
  const Eigen::VectorXd xi = (Eigen::VectorXd(5) << 0.1, -0.2, 0.3, -0.4, 0.5).finished();
  const auto st = build_state<Eigen::Dynamic>(xi, m);
  const auto& p = m.params();
  for (int k = 0; k < 2; ++k)
    for (int l = 0; l < 2; ++l) {
      EXPECT_NEAR(st.cov.matrix()(k, l), p.sigma_bar(k) * p.sigma_bar(l) * p.rho(k, l) * std::exp(xi(k) + xi(l)), 1e-16);
      EXPECT_NEAR(st.impact.matrix()(k, l), p.eta_bar(k, l) * std::exp(xi(m.liquidity_index(k, l))), 1e-16);
    }
  EXPECT_EQ((st.impact.matrix() - st.impact.matrix().transpose()).norm(), 0.0);
  EXPECT_EQ((st.cov.matrix() - st.cov.matrix().transpose()).norm(), 0.0);
}

TEST(BuildState, ProjectsIndefiniteImpact) {
  const MarketModel m = fixtures::two_asset();
  // off-diagonal scaled up until Xi is indefinite
  const Eigen::VectorXd xi = (Eigen::VectorXd(5) << 0, 0, -1.0, 2.0, -1.0).finished();
  const auto st = build_state<2>(xi, m);
  EXPECT_TRUE(st.projected);
  const Eigen::Vector2d ev = Eigen::SelfAdjointEigenSolver<Mat<2>>(st.impact.matrix()).eigenvalues();
  EXPECT_GT(ev.minCoeff(), 0.0);
  Mat<2> raw;
  raw << 0.0025 * std::exp(-1.0), 0.001 * std::exp(2.0), 0.001 * std::exp(2.0), 0.002 * std::exp(-1.0);
  // reconstructing V diag V^T perturbs eigenvalues by a few eps * norm
  EXPECT_NEAR(ev.minCoeff(), 1e-10 * raw.trace() / 2.0, 8 * std::numeric_limits<double>::epsilon() * raw.norm());
  EXPECT_NEAR(ev.maxCoeff(), Eigen::SelfAdjointEigenSolver<Mat<2>>(raw).eigenvalues().maxCoeff(), 1e-15);
}

TEST(BuildState, Errors) {
  const MarketModel m = fixtures::two_asset();
  EXPECT_THROW(build_state<2>(Eigen::VectorXd::Zero(4), m), DimensionMismatch);
  EXPECT_THROW(build_state<1>(Eigen::VectorXd::Zero(5), m), DimensionMismatch);
}

TEST(SamplePaths, ZeroNoiseDecays) {
  MarketModel::Params p = fixtures::one_asset(0.03, 0.002, 0.0).params();
  const MarketModel m(p);
  const TimeGrid g(2.0, 20);
  const Eigen::Vector2d start(0.5, -0.3);
  const auto paths = sample_paths<1>(m, g, start, 5, 20, NoiseBlock::Zero(1, 15 * 2));
  ASSERT_EQ(paths.size(), 1u);
  EXPECT_EQ(paths[0].first_step(), 5);
  EXPECT_EQ(paths[0].last_step(), 20);
  for (int k = 5; k <= 20; ++k) EXPECT_LT((paths[0].drivers(k) - start * std::exp(-(k - 5) * 0.1)).norm(), 1e-14);
  EXPECT_THROW(paths[0].drivers(4), std::out_of_range);
}

TEST(SamplePaths, DeterministicAndNoiseChecked) {
  const MarketModel m = fixtures::two_asset();
  const TimeGrid g(10.0, 30);
  const NoiseSpec spec{NoiseSpec::Kind::Sobol, 8, 5};
  const auto a = sample_paths<2>(m, g, Eigen::VectorXd::Zero(5), 0, 30, spec.normals(150, 0));
  const auto b = sample_paths<2>(m, g, Eigen::VectorXd::Zero(5), 0, 30, spec.normals(150, 0));
  ASSERT_EQ(a.size(), 8u);
  for (int i = 0; i < 8; ++i) EXPECT_TRUE((a[i].driver_matrix().array() == b[i].driver_matrix().array()).all());
  EXPECT_THROW(sample_paths<2>(m, g, Eigen::VectorXd::Zero(5), 0, 30, NoiseBlock::Zero(1, 149)), std::out_of_range);
  EXPECT_THROW(sample_paths<2>(m, g, Eigen::VectorXd::Zero(5), 10, 31, NoiseBlock::Zero(1, 200)), std::out_of_range);
}

TEST(SamplePaths, StationaryVarianceOfDrivers) {
  MarketModel::Params p = fixtures::one_asset(0.03, 0.002, 0.0).params();
  p.beta = Eigen::Vector2d(0.8, 1.5);
  const MarketModel m(p);
  const TimeGrid g(8.0, 8);  // dt = 1, decay e^{-8} from the start value
  const int n = 100000;
  const auto paths = sample_paths<1>(m, g, Eigen::Vector2d::Zero(), 0, 8, pseudo_block(16, n, 21));
  for (int j = 0; j < 2; ++j) {
    double ss = 0.0;
    for (const auto& path : paths) ss += path.drivers(8)(j) * path.drivers(8)(j);
    const double analytic = p.beta(j) * p.beta(j) * (1.0 - std::exp(-16.0)) / 2.0;
    EXPECT_NEAR(ss / n / analytic, 1.0, 0.01);
  }
}

TEST(CoordinatedVariation, ParameterConstraints) {
  const MarketModel m = cv_model();
  const auto& p = m.params();
  EXPECT_EQ(p.delta(1), p.delta(0));
  EXPECT_EQ(p.beta(1), 2.0 * p.beta(0));
  EXPECT_EQ(p.varrho(0, 1), -1.0);
  const MarketModel shifted = cv_model(0.031, 0.002, 0.3);
  EXPECT_DOUBLE_EQ(shifted.initial_drivers()(1), -0.6);
  EXPECT_THROW(coordinated_variation_model(fixtures::two_asset()), ConfigError);
}

TEST(CoordinatedVariation, PublishedSettingHasLiquidityDispersionTwo) {
  // beta_1 = delta_1 = 1 forces beta_2 = 2, delta_2 = 1
  MarketModel::Params p = fixtures::one_asset(0.031, 0.002, 1e-5).params();
  const MarketModel m = coordinated_variation_model(MarketModel(p));
  EXPECT_EQ(m.params().beta(1), 2.0);
  EXPECT_EQ(m.params().delta(1), 1.0);
}

TEST(CoordinatedVariation, ProductIsConstantAlongPaths) {
  const MarketModel m = cv_model(0.031, 0.002, 0.25);
  const TimeGrid g(10.0, 100);
  const double target = 0.031 * 0.031 * 0.002;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const auto path = sample_outer_path<1>(m, g, seed);
    for (int k = 0; k <= 100; ++k) {
      const double prod = path.cov(k).matrix()(0, 0) * path.impact(k).matrix()(0, 0);
      EXPECT_NEAR(prod / target, 1.0, 1e-10);
    }
  }
}

TEST(SamplePrices, IncrementCorrelation) {
  MarketModel::Params p = fixtures::two_asset(0.002, 0.6).params();
  p.beta.setZero();
  const MarketModel m(p);
  const int steps = 100000;
  const TimeGrid g(1000.0, steps);
  const auto path = frozen_path<2>(m, g, Eigen::VectorXd::Zero(5));
  const Eigen::MatrixXd inc = sample_prices<2>(m, path, pseudo_block(2, steps, 4));
  ASSERT_EQ(inc.rows(), steps);
  const Eigen::MatrixXd centered = inc.rowwise() - inc.colwise().mean();
  const Eigen::MatrixXd cov = centered.transpose() * centered / (steps - 1.0);
  EXPECT_NEAR(cov(0, 1) / std::sqrt(cov(0, 0) * cov(1, 1)), 0.6, 0.01);
  EXPECT_NEAR(cov(0, 0) / (m.mean_covariance()(0, 0) * g.dt()), 1.0, 0.02);
}

TEST(SamplePrices, VanishingVolatilityAndReproducibility) {
  const MarketModel m = fixtures::one_asset(1e-12, 0.002, 0.0, 0.0);
  const TimeGrid g(10.0, 50);
  const auto path = frozen_path<1>(m, g, Eigen::Vector2d::Zero());
  const NoiseBlock z = pseudo_block(1, 50, 6);
  const Eigen::MatrixXd inc = sample_prices<1>(m, path, z);
  EXPECT_LT(inc.cwiseAbs().maxCoeff(), 1e-10);
  EXPECT_TRUE((inc.array() == sample_prices<1>(m, path, z).array()).all());
  EXPECT_THROW(sample_prices<1>(m, path, pseudo_block(1, 49, 6)), std::out_of_range);
}
