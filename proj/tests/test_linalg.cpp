#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "gdwct/linalg.hpp"

using namespace gdwct;
using namespace gdwct::linalg;

namespace {

FeatureMatrix random_feature(std::size_t c, std::size_t n, std::mt19937_64& rng) {
  // Correlated channels: a random mixing of independent normals plus offsets.
  std::normal_distribution<double> normal;
  Matrix mix(c, c);
  for (double& v : mix.values()) v = normal(rng);
  Matrix raw(c, n);
  for (double& v : raw.values()) v = normal(rng);
  FeatureMatrix f = mix * raw;
  for (std::size_t i = 0; i < c; ++i)
    for (std::size_t j = 0; j < n; ++j) f(i, j) += static_cast<double>(i);
  return f;
}

// Brute-force covariance: explicit double loop over sample pairs of channels.
Matrix brute_covariance(const FeatureMatrix& f) {
  const std::size_t c = f.rows(), n = f.cols();
  Matrix cov(c, c);
  for (std::size_t i = 0; i < c; ++i)
    for (std::size_t j = 0; j < c; ++j) {
      double mi = 0, mj = 0;
      for (std::size_t k = 0; k < n; ++k) {
        mi += f(i, k);
        mj += f(j, k);
      }
      mi /= n;
      mj /= n;
      double acc = 0;
      for (std::size_t k = 0; k < n; ++k) acc += (f(i, k) - mi) * (f(j, k) - mj);
      cov(i, j) = acc / (n - 1);
    }
  return cov;
}

Matrix random_symmetric(std::size_t n, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(-1, 1);
  Matrix s(n, n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i; j < n; ++j) s(i, j) = s(j, i) = u(rng);
  return s;
}

}  // namespace

TEST(Covariance, ZeroInput) {
  const Matrix cov = covariance(Matrix(2, 4));
  EXPECT_EQ(max_abs(cov), 0.0);
}

TEST(Covariance, HandExample) {
  const Matrix cov = covariance(Matrix(2, 2, {1, -1, 2, -2}));
  const Matrix expected = brute_covariance(Matrix(2, 2, {1, -1, 2, -2}));
  EXPECT_DOUBLE_EQ(cov(0, 0), 2.0);
  EXPECT_DOUBLE_EQ(cov(0, 1), 4.0);
  EXPECT_DOUBLE_EQ(cov(1, 0), 4.0);
  EXPECT_DOUBLE_EQ(cov(1, 1), 8.0);
  EXPECT_LT(max_abs(cov - expected), 1e-14);
}

TEST(Covariance, ExactlySymmetricAndMatchesBruteForce) {
  std::mt19937_64 rng(1);
  const FeatureMatrix f = random_feature(6, 40, rng);
  const Matrix cov = covariance(f);
  for (std::size_t i = 0; i < 6; ++i)
    for (std::size_t j = 0; j < 6; ++j) EXPECT_EQ(cov(i, j), cov(j, i));
  EXPECT_LT(max_abs(cov - brute_covariance(f)), 1e-10);
}

TEST(Covariance, DegenerateSampleCount) {
  EXPECT_THROW(covariance(Matrix(3, 1)), DegenerateSampleError);
}

TEST(Eigen, AlreadyDiagonal) {
  const std::vector<double> d{4.0, 1.0};
  const EigenPair e = eig_symmetric(Matrix::diagonal(d));
  EXPECT_EQ(e.lambdas, (std::vector<double>{4, 1}));
  EXPECT_LT(max_abs(e.q - Matrix::identity(2)), 1e-15);
}

TEST(Eigen, TwoByTwoCharacteristicPolynomial) {
  // det([[2-l,1],[1,2-l]]) = (2-l)^2 - 1 = 0  ->  l = 3, 1
  const EigenPair e = eig_symmetric(Matrix(2, 2, {2, 1, 1, 2}));
  EXPECT_NEAR(e.lambdas[0], 3.0, 1e-12);
  EXPECT_NEAR(e.lambdas[1], 1.0, 1e-12);
}

TEST(Eigen, RandomReconstructionAndInvariants) {
  std::mt19937_64 rng(8);
  for (int trial = 0; trial < 20; ++trial) {
    const Matrix s = random_symmetric(8, rng);
    const EigenPair e = eig_symmetric(s);
    const Matrix rebuilt = e.q * Matrix::diagonal(e.lambdas) * e.q.transposed();
    EXPECT_LT(max_abs(rebuilt - s), 1e-8);
    EXPECT_LT(max_abs(e.q.transposed() * e.q - Matrix::identity(8)), 1e-8);
    double trace = 0, lambda_sum = 0;
    for (std::size_t i = 0; i < 8; ++i) {
      trace += s(i, i);
      lambda_sum += e.lambdas[i];
      if (i > 0) EXPECT_GE(e.lambdas[i - 1], e.lambdas[i]);
      // sign convention: largest-magnitude entry of each column is positive
      std::size_t pivot = 0;
      for (std::size_t k = 1; k < 8; ++k)
        if (std::fabs(e.q(k, i)) > std::fabs(e.q(pivot, i))) pivot = k;
      EXPECT_GT(e.q(pivot, i), 0.0);
    }
    EXPECT_NEAR(trace, lambda_sum, 1e-9);
  }
}

TEST(Eigen, RejectsAsymmetricInput) {
  EXPECT_THROW(eig_symmetric(Matrix(2, 2, {1, 0.5, 0.4, 1})), ArgumentError);
}

TEST(Eigen, ReportsNonConvergence) {
  std::mt19937_64 rng(2);
  EXPECT_THROW(eig_symmetric(random_symmetric(10, rng), 1e-10, 1), ConvergenceError);
}

TEST(Whiten, WhiteInputIsUnchanged) {
  // Rows are orthogonal with zero mean and squared norm N - 1 = 3.
  const double r = std::sqrt(3.0) / 2.0;
  const FeatureMatrix f(2, 4, {r, r, -r, -r, r, -r, r, -r});
  ASSERT_LT(max_abs(covariance(f) - Matrix::identity(2)), 1e-14);
  EXPECT_LT(max_abs(whiten_classical(f) - f), 1e-6);
}

TEST(Whiten, CovarianceBecomesIdentity) {
  std::mt19937_64 rng(21);
  const FeatureMatrix out = whiten_classical(random_feature(8, 256, rng));
  const Matrix cov = covariance(out);
  EXPECT_LT(frobenius_norm(cov - Matrix::identity(8)), 1e-6);
  for (double m : channel_mean(out)) EXPECT_NEAR(m, 0.0, 1e-10);
  for (std::size_t i = 0; i < 8; ++i)
    for (std::size_t j = 0; j < 8; ++j) EXPECT_NEAR(cov(i, j), i == j ? 1.0 : 0.0, 1e-6);
}

TEST(Whiten, ConstantChannelStaysFinite) {
  std::mt19937_64 rng(4);
  FeatureMatrix f = random_feature(4, 64, rng);
  for (std::size_t j = 0; j < 64; ++j) f(2, j) = 3.0;
  const FeatureMatrix out = whiten_classical(f);
  for (double v : out.values()) EXPECT_TRUE(std::isfinite(v));
}

TEST(Color, IdentityStyleCovariance) {
  const double r = std::sqrt(3.0) / 2.0;
  const FeatureMatrix white(2, 4, {r, r, -r, -r, r, -r, r, -r});
  EXPECT_LT(max_abs(color_classical(white, white) - white), 1e-6);
}

TEST(Color, RoundTripRestoresCovariance) {
  std::mt19937_64 rng(33);
  const FeatureMatrix f = random_feature(8, 512, rng);
  const FeatureMatrix restored = color_classical(whiten_classical(f), f);
  EXPECT_LT(frobenius_norm(covariance(restored) - covariance(f)), 1e-5);
}

TEST(Color, DiagonalStyle) {
  std::mt19937_64 rng(9);
  const FeatureMatrix white = whiten_classical(random_feature(2, 300, rng));
  // Style with covariance exactly diag(4, 1): scaled copy of the white feature.
  FeatureMatrix style = white;
  for (std::size_t j = 0; j < style.cols(); ++j) style(0, j) *= 2.0;
  const std::vector<double> target{4.0, 1.0};
  ASSERT_LT(frobenius_norm(covariance(style) - Matrix::diagonal(target)), 1e-6);
  EXPECT_LT(frobenius_norm(covariance(color_classical(white, style)) - Matrix::diagonal(target)),
            1e-5);
}

TEST(Color, ChannelMismatch) {
  EXPECT_THROW(color_classical(Matrix(3, 10), Matrix(4, 10)), ShapeError);
}

TEST(ColumnNorm, DiagonalCase) {
  const std::vector<double> d{3.0, 4.0};
  const ColoringFactors f = decompose_column_norm(Matrix::diagonal(d));
  EXPECT_EQ(f.d, d);
  EXPECT_LT(max_abs(f.u - Matrix::identity(2)), 1e-15);
}

TEST(ColumnNorm, SingleColumn) {
  const ColoringFactors f = decompose_column_norm(Matrix(2, 1, {3, 4}));
  EXPECT_NEAR(f.u(0, 0), 0.6, 1e-15);
  EXPECT_NEAR(f.u(1, 0), 0.8, 1e-15);
  EXPECT_NEAR(f.d[0], 5.0, 1e-15);
}

TEST(ColumnNorm, ZeroColumnIsClamped) {
  const ColoringFactors f = decompose_column_norm(Matrix(2, 2, {0, 1, 0, 1}));
  EXPECT_EQ(f.d[0], kColumnNormFloor);
  EXPECT_TRUE(std::isfinite(f.u(0, 0)) && std::isfinite(f.u(1, 0)));
}

TEST(ColumnNorm, ReconstructionAndUnitColumns) {
  std::mt19937_64 rng(12);
  std::uniform_real_distribution<double> u(-2, 2);
  for (int trial = 0; trial < 50; ++trial) {
    Matrix s(5, 5);
    for (double& v : s.values()) v = u(rng);
    const ColoringFactors f = decompose_column_norm(s);
    EXPECT_LT(max_abs(f.u * Matrix::diagonal(f.d) - s), 1e-10);
    for (std::size_t j = 0; j < 5; ++j) {
      double n = 0;
      for (std::size_t i = 0; i < 5; ++i) n += f.u(i, j) * f.u(i, j);
      EXPECT_NEAR(std::sqrt(n), 1.0, 1e-10);
      EXPECT_GE(f.d[j], 0.0);
    }
  }
}
