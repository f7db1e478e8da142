#pragma once

// Classical whitening-and-coloring by eigendecomposition.
//
// Forward-only and deliberately kept off the autodiff tape: this is the exact
// reference that the learned transformation approximates, used as the oracle
// in tests and as the baseline in the benchmark.

#include <cstddef>
#include <span>
#include <vector>

#include "gdwct/errors.hpp"

namespace gdwct::linalg {

// Dense row-major matrix.
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), values_(rows * cols, fill) {}
  Matrix(std::size_t rows, std::size_t cols, std::vector<double> values);

  static Matrix identity(std::size_t n);
  static Matrix diagonal(std::span<const double> diag);

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  double& operator()(std::size_t i, std::size_t j) { return values_[i * cols_ + j]; }
  double operator()(std::size_t i, std::size_t j) const { return values_[i * cols_ + j]; }
  std::span<const double> values() const { return values_; }
  std::span<double> values() { return values_; }

  Matrix transposed() const;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> values_;
};

// A C x N feature: C channels observed at N = B*H*W positions.
using FeatureMatrix = Matrix;

Matrix operator*(const Matrix& a, const Matrix& b);
Matrix operator-(const Matrix& a, const Matrix& b);
double frobenius_norm(const Matrix& m);
double max_abs(const Matrix& m);

struct EigenPair {
  Matrix q;                    // eigenvectors in columns, orthogonal
  std::vector<double> lambdas;  // descending
};

struct ColoringFactors {
  Matrix u;               // unit-L2 columns
  std::vector<double> d;  // column norms, clamped at kColumnNormFloor
};

inline constexpr double kEigenTolerance = 1e-10;
inline constexpr int kMaxJacobiSweeps = 50;
inline constexpr double kSymmetryTolerance = 1e-9;
inline constexpr double kEigenvalueFloor = 1e-5;
inline constexpr double kColumnNormFloor = 1e-8;

std::vector<double> channel_mean(const FeatureMatrix& f);
FeatureMatrix center(const FeatureMatrix& f);

// Sample covariance with divisor N - 1. Throws DegenerateSampleError if N < 2.
Matrix covariance(const FeatureMatrix& f);

// Cyclic Jacobi. Converged once every off-diagonal magnitude is below
// tol * max(1, max|S_ij|). Eigenvector columns are sign-normalized so that
// their largest-magnitude entry is positive.
EigenPair eig_symmetric(const Matrix& s, double tol = kEigenTolerance,
                        int max_sweeps = kMaxJacobiSweeps);

// Q f(Lambda) Q^T with eigenvalues clamped from below at `floor` before f.
Matrix spectral_map(const EigenPair& eig, double (*f)(double), double floor);

// c_w = Q_c Lambda_c^{-1/2} Q_c^T (c - mean(c)).
FeatureMatrix whiten_classical(const FeatureMatrix& c);

// c_cw = Q_s Lambda_s^{1/2} Q_s^T c_w, with Sigma_s the covariance of `style`.
FeatureMatrix color_classical(const FeatureMatrix& whitened, const FeatureMatrix& style);

// sCT = U diag(D) with D the column L2 norms.
ColoringFactors decompose_column_norm(const Matrix& s_ct);

}  // namespace gdwct::linalg
