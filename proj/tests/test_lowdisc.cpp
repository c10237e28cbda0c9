#include "helpers.hpp"

#include <boost/math/special_functions/erf.hpp>
#include <gtest/gtest.h>

#include <set>

using namespace rhmc;

namespace {

// Phi^{-1}(p) in extended precision.
long double reference_quantile(double p) {
  return -std::sqrt(2.0L) * boost::math::erfc_inv(2.0L * static_cast<long double>(p));
}

double sobol_value(const Eigen::Matrix<std::uint64_t, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>& raw, int i,
                   int j) {
  return static_cast<double>(raw(i, j)) * 0x1.0p-52;
}

}  // namespace

TEST(Sobol, FirstDimensionUnshifted) {
  const auto raw = sobol_integers(1, 4, SobolDirections::shared());
  const double expected[] = {0.0, 0.5, 0.75, 0.25};
  for (int i = 0; i < 4; ++i) EXPECT_EQ(sobol_value(raw, i, 0), expected[i]);
  // the unshifted block skips the origin and maps to bin midpoints
  const NoiseBlock b = sobol_block(1, 3, std::nullopt);
  EXPECT_NEAR(b(0, 0), 0.5, 1e-15);
  EXPECT_NEAR(b(1, 0), 0.75, 1e-15);
  EXPECT_NEAR(b(2, 0), 0.25, 1e-15);
}

TEST(Sobol, MatchesReferenceTable) {
  // first eight points of dimensions 1..6 from an independent generator
  const double ref[8][6] = {{0, 0, 0, 0, 0, 0},
                            {0.5, 0.5, 0.5, 0.5, 0.5, 0.5},
                            {0.75, 0.25, 0.25, 0.25, 0.75, 0.75},
                            {0.25, 0.75, 0.75, 0.75, 0.25, 0.25},
                            {0.375, 0.375, 0.625, 0.875, 0.375, 0.125},
                            {0.875, 0.875, 0.125, 0.375, 0.875, 0.625},
                            {0.625, 0.125, 0.875, 0.625, 0.625, 0.875},
                            {0.125, 0.625, 0.375, 0.125, 0.125, 0.375}};
  const auto raw = sobol_integers(6, 8, SobolDirections::shared());
  for (int i = 0; i < 8; ++i)
    for (int j = 0; j < 6; ++j) EXPECT_EQ(sobol_value(raw, i, j), ref[i][j]) << i << "," << j;

  // dimensions 100, 1000, 1200
  const double hi[16][3] = {{0, 0, 0},
                            {0.5, 0.5, 0.5},
                            {0.75, 0.75, 0.25},
                            {0.25, 0.25, 0.75},
                            {0.875, 0.125, 0.625},
                            {0.375, 0.625, 0.125},
                            {0.125, 0.875, 0.875},
                            {0.625, 0.375, 0.375},
                            {0.9375, 0.9375, 0.8125},
                            {0.4375, 0.4375, 0.3125},
                            {0.1875, 0.1875, 0.5625},
                            {0.6875, 0.6875, 0.0625},
                            {0.0625, 0.8125, 0.4375},
                            {0.5625, 0.3125, 0.9375},
                            {0.8125, 0.0625, 0.1875},
                            {0.3125, 0.5625, 0.6875}};
  const auto big = sobol_integers(1200, 16, SobolDirections::shared());
  const int cols[3] = {99, 999, 1199};
  for (int i = 0; i < 16; ++i)
    for (int c = 0; c < 3; ++c) EXPECT_EQ(sobol_value(big, i, cols[c]), hi[i][c]) << i << "," << cols[c];
}

TEST(Sobol, TableCoversAllDimensions) {
  EXPECT_EQ(SobolDirections::shared().max_dimension(), 21201);
  EXPECT_NO_THROW(sobol_block(21201, 2, 7u));
  EXPECT_THROW(sobol_block(21202, 2, 7u), std::out_of_range);
}

TEST(Sobol, ShiftedBlocksAreDeterministicAndOpen) {
  const NoiseBlock a = sobol_block(40, 256, 12345u);
  const NoiseBlock b = sobol_block(40, 256, 12345u);
  const NoiseBlock c = sobol_block(40, 256, 12346u);
  EXPECT_TRUE((a.array() == b.array()).all());
  EXPECT_FALSE((a.array() == c.array()).all());
  EXPECT_GT(a.minCoeff(), 0.0);
  EXPECT_LT(a.maxCoeff(), 1.0);
}

TEST(Sobol, DyadicStratificationForEveryShift) {
  for (std::uint64_t shift : {1ULL, 99ULL, 0xdeadbeefULL}) {
    const NoiseBlock pts = sobol_block(64, 1024, shift);
    for (int k = 0; k <= 10; ++k) {
      const int count = 1 << k;
      for (int j = 0; j < 64; ++j) {
        std::set<long> bins;
        for (int i = 0; i < count; ++i) bins.insert(static_cast<long>(std::floor(pts(i, j) * count)));
        EXPECT_EQ(static_cast<int>(bins.size()), count) << "k=" << k << " dim=" << j;
      }
    }
  }
}

TEST(Sobol, LoadRejectsMissingFile) {
  EXPECT_THROW(SobolDirections::load("/nonexistent/directions"), std::runtime_error);
}

TEST(InverseNormal, KnownValues) {
  EXPECT_EQ(inverse_normal_cdf(0.5), 0.0);
  EXPECT_NEAR(inverse_normal_cdf(0.975), 1.959963984540054, 1e-12);
  EXPECT_NEAR(inverse_normal_cdf(0.025), -1.959963984540054, 1e-12);
}

TEST(InverseNormal, AccuracyOverOpenInterval) {
  double worst = 0.0;
  for (double lg = -12.0; lg <= -0.302; lg += 0.01) {
    const double p = std::pow(10.0, lg);
    for (double q : {p, 1.0 - p}) {
      if (!(q > 0.0 && q < 1.0)) continue;
      const double err = std::abs(static_cast<long double>(inverse_normal_cdf(q)) - reference_quantile(q));
      worst = std::max(worst, err);
    }
  }
  for (int i = 1; i < 10000; ++i) {
    const double p = i / 10000.0;
    worst = std::max(worst, static_cast<double>(std::abs(inverse_normal_cdf(p) - reference_quantile(p))));
  }
  EXPECT_LT(worst, 1e-9);
}

TEST(InverseNormal, RejectsOutsideOpenInterval) {
  EXPECT_THROW(inverse_normal_cdf(0.0), std::domain_error);
  EXPECT_THROW(inverse_normal_cdf(1.0), std::domain_error);
  EXPECT_THROW(inverse_normal_cdf(-0.5), std::domain_error);
  EXPECT_THROW(inverse_normal_cdf(std::nan("")), std::domain_error);
  Eigen::MatrixXd u(1, 2);
  u << 0.3, 1.2;
  EXPECT_THROW(to_normals(u), std::domain_error);
}

TEST(InverseNormal, MomentsOfMappedSobolPoints) {
  const NoiseBlock z = to_normals(sobol_block(1, 1 << 20, 5u));
  const double mean = z.mean();
  const double var = (z.array() - mean).square().mean();
  EXPECT_NEAR(mean, 0.0, 1e-3);
  EXPECT_NEAR(var, 1.0, 1e-3);
}

TEST(PseudoBlock, MomentsAndReproducibility) {
  const NoiseBlock a = pseudo_block(10, 100000, 42);
  EXPECT_TRUE((a.array() == pseudo_block(10, 100000, 42).array()).all());
  for (int j = 0; j < 10; ++j) {
    const double mean = a.col(j).mean();
    const double var = (a.col(j).array() - mean).square().mean();
    EXPECT_NEAR(mean, 0.0, 0.02);
    EXPECT_NEAR(var, 1.0, 0.02);
  }
}

TEST(PseudoBlock, RowsDoNotDependOnCount) {
  const NoiseBlock a = pseudo_block(7, 5, 3);
  const NoiseBlock b = pseudo_block(7, 50, 3);
  EXPECT_TRUE((a.array() == b.topRows(5).array()).all());
}

TEST(PseudoBlock, SubstreamsAreUncorrelated) {
  const NoiseBlock a = pseudo_block(100000, 2, 8);
  const Eigen::VectorXd x = a.row(0).transpose(), y = a.row(1).transpose();
  const double cx = x.mean(), cy = y.mean();
  const double corr = ((x.array() - cx) * (y.array() - cy)).sum() /
                      std::sqrt((x.array() - cx).square().sum() * (y.array() - cy).square().sum());
  EXPECT_LT(std::abs(corr), 0.01);
  // different seeds
  const NoiseBlock b = pseudo_block(100000, 1, 9);
  const Eigen::VectorXd w = b.row(0).transpose();
  const double cw = w.mean();
  const double corr2 = ((x.array() - cx) * (w.array() - cw)).sum() /
                       std::sqrt((x.array() - cx).square().sum() * (w.array() - cw).square().sum());
  EXPECT_LT(std::abs(corr2), 0.01);
}

TEST(NoiseSpec, FreshNoisePerStep) {
  for (auto kind : {NoiseSpec::Kind::Pseudo, NoiseSpec::Kind::Sobol}) {
    const NoiseSpec spec{kind, 16, 77};
    const NoiseBlock s0 = spec.normals(12, 0);
    EXPECT_EQ(s0.rows(), 16);
    EXPECT_EQ(s0.cols(), 12);
    EXPECT_TRUE((s0.array() == spec.normals(12, 0).array()).all());
    EXPECT_FALSE((s0.array() == spec.normals(12, 1).array()).all());
    EXPECT_TRUE(s0.allFinite());
  }
  EXPECT_THROW((NoiseSpec{NoiseSpec::Kind::Sobol, 0, 1}.normals(3, 0)), std::invalid_argument);
}

TEST(DeriveSeed, KeyOrderMatters) {
  EXPECT_EQ(derive_seed({1, 2}), derive_seed({1, 2}));
  EXPECT_NE(derive_seed({1, 2}), derive_seed({2, 1}));
  EXPECT_NE(derive_seed({1}), derive_seed({1, 0}));
}
