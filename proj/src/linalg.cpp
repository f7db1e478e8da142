#include "gdwct/linalg.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "kernels.hpp"

namespace gdwct::linalg {

namespace {

std::string dims(const Matrix& m) {
  return std::to_string(m.rows()) + "x" + std::to_string(m.cols());
}

double inv_sqrt(double x) { return 1.0 / std::sqrt(x); }
double plain_sqrt(double x) { return std::sqrt(x); }

}  // namespace

Matrix::Matrix(std::size_t rows, std::size_t cols, std::vector<double> values)
    : rows_(rows), cols_(cols), values_(std::move(values)) {
  if (values_.size() != rows * cols) {
    throw ShapeError("matrix " + std::to_string(rows) + "x" + std::to_string(cols) +
                     " given " + std::to_string(values_.size()) + " values");
  }
}

Matrix Matrix::identity(std::size_t n) {
  Matrix m(n, n);
  for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
  return m;
}

Matrix Matrix::diagonal(std::span<const double> diag) {
  Matrix m(diag.size(), diag.size());
  for (std::size_t i = 0; i < diag.size(); ++i) m(i, i) = diag[i];
  return m;
}

Matrix Matrix::transposed() const {
  Matrix t(cols_, rows_);
  for (std::size_t i = 0; i < rows_; ++i)
    for (std::size_t j = 0; j < cols_; ++j) t(j, i) = (*this)(i, j);
  return t;
}

Matrix operator*(const Matrix& a, const Matrix& b) {
  if (a.cols() != b.rows()) throw ShapeError("matrix product " + dims(a) + " * " + dims(b));
  Matrix out(a.rows(), b.cols());
  kernels::gemm_nn(a.rows(), b.cols(), a.cols(), a.values().data(), b.values().data(),
                   out.values().data());
  return out;
}

Matrix operator-(const Matrix& a, const Matrix& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols())
    throw ShapeError("matrix difference " + dims(a) + " - " + dims(b));
  Matrix out = a;
  auto v = out.values();
  auto w = b.values();
  for (std::size_t i = 0; i < v.size(); ++i) v[i] -= w[i];
  return out;
}

double frobenius_norm(const Matrix& m) {
  double acc = 0.0;
  for (double v : m.values()) acc += v * v;
  return std::sqrt(acc);
}

double max_abs(const Matrix& m) {
  double best = 0.0;
  for (double v : m.values()) best = std::max(best, std::fabs(v));
  return best;
}

std::vector<double> channel_mean(const FeatureMatrix& f) {
  std::vector<double> mu(f.rows(), 0.0);
  for (std::size_t c = 0; c < f.rows(); ++c) {
    double acc = 0.0;
    for (std::size_t n = 0; n < f.cols(); ++n) acc += f(c, n);
    mu[c] = acc / static_cast<double>(f.cols());
  }
  return mu;
}

FeatureMatrix center(const FeatureMatrix& f) {
  const auto mu = channel_mean(f);
  FeatureMatrix out = f;
  for (std::size_t c = 0; c < f.rows(); ++c)
    for (std::size_t n = 0; n < f.cols(); ++n) out(c, n) -= mu[c];
  return out;
}

Matrix covariance(const FeatureMatrix& f) {
  if (f.cols() < 2) {
    throw DegenerateSampleError("covariance needs at least 2 samples, got " +
                                std::to_string(f.cols()));
  }
  const FeatureMatrix z = center(f);
  const std::size_t c = f.rows();
  Matrix cov(c, c);
  const double inv = 1.0 / static_cast<double>(f.cols() - 1);
  // Upper triangle then mirror, so the result is exactly symmetric.
  for (std::size_t i = 0; i < c; ++i) {
    const double* zi = z.values().data() + i * f.cols();
    for (std::size_t j = i; j < c; ++j) {
      const double* zj = z.values().data() + j * f.cols();
      double acc = 0.0;
      for (std::size_t n = 0; n < f.cols(); ++n) acc += zi[n] * zj[n];
      cov(i, j) = cov(j, i) = acc * inv;
    }
  }
  return cov;
}

EigenPair eig_symmetric(const Matrix& s, double tol, int max_sweeps) {
  if (s.rows() != s.cols()) throw ShapeError("eig_symmetric expects a square matrix, got " + dims(s));
  const std::size_t n = s.rows();
  double asym = 0.0;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j) asym = std::max(asym, std::fabs(s(i, j) - s(j, i)));
  if (asym >= kSymmetryTolerance) {
    throw ArgumentError("eig_symmetric: input is not symmetric (max |S - S^T| = " +
                        std::to_string(asym) + ")");
  }

  Matrix a = s;
  // Eigenvectors are accumulated as rows of vt so rotations touch contiguous memory.
  Matrix vt = Matrix::identity(n);
  const double threshold = tol * std::max(1.0, max_abs(s));

  auto max_off = [&] {
    double m = 0.0;
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = i + 1; j < n; ++j) m = std::max(m, std::fabs(a(i, j)));
    return m;
  };

  auto rotate_rows = [n](double* x, double* y, double c, double sn) {
    for (std::size_t k = 0; k < n; ++k) {
      const double xk = x[k];
      const double yk = y[k];
      x[k] = c * xk - sn * yk;
      y[k] = sn * xk + c * yk;
    }
  };

  bool converged = max_off() < threshold;
  for (int sweep = 0; sweep < max_sweeps && !converged; ++sweep) {
    for (std::size_t p = 0; p + 1 < n; ++p) {
      for (std::size_t q = p + 1; q < n; ++q) {
        const double apq = a(p, q);
        // Entries this small cannot hold up convergence.
        if (std::fabs(apq) < 1e-3 * threshold) continue;
        const double theta = (a(q, q) - a(p, p)) / (2.0 * apq);
        const double t = (theta >= 0.0 ? 1.0 : -1.0) /
                         (std::fabs(theta) + std::sqrt(theta * theta + 1.0));
        const double c = 1.0 / std::sqrt(t * t + 1.0);
        const double sn = t * c;
        const double app = a(p, p) - t * apq;
        const double aqq = a(q, q) + t * apq;

        // Rows p and q, then mirror into columns p and q.
        double* row_p = &a(p, 0);
        double* row_q = &a(q, 0);
        rotate_rows(row_p, row_q, c, sn);
        for (std::size_t k = 0; k < n; ++k) {
          a(k, p) = row_p[k];
          a(k, q) = row_q[k];
        }
        a(p, p) = app;
        a(q, q) = aqq;
        a(p, q) = a(q, p) = 0.0;
        rotate_rows(&vt(p, 0), &vt(q, 0), c, sn);
      }
    }
    converged = max_off() < threshold;
  }
  if (!converged) {
    throw ConvergenceError("Jacobi eigensolver did not converge in " +
                           std::to_string(max_sweeps) + " sweeps");
  }

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t x, std::size_t y) { return a(x, x) > a(y, y); });

  EigenPair out{Matrix(n, n), std::vector<double>(n)};
  for (std::size_t col = 0; col < n; ++col) {
    const std::size_t src = order[col];
    out.lambdas[col] = a(src, src);
    std::size_t pivot = 0;
    for (std::size_t k = 1; k < n; ++k)
      if (std::fabs(vt(src, k)) > std::fabs(vt(src, pivot))) pivot = k;
    const double sign = vt(src, pivot) < 0.0 ? -1.0 : 1.0;
    for (std::size_t k = 0; k < n; ++k) out.q(k, col) = sign * vt(src, k);
  }
  return out;
}

Matrix spectral_map(const EigenPair& eig, double (*f)(double), double floor) {
  const std::size_t n = eig.lambdas.size();
  // (Q diag(f)) Q^T
  Matrix scaled = eig.q;
  for (std::size_t j = 0; j < n; ++j) {
    const double fj = f(std::max(eig.lambdas[j], floor));
    for (std::size_t i = 0; i < n; ++i) scaled(i, j) *= fj;
  }
  Matrix out(n, n);
  kernels::gemm_nt(n, n, n, scaled.values().data(), eig.q.values().data(), out.values().data());
  return out;
}

FeatureMatrix whiten_classical(const FeatureMatrix& c) {
  const Matrix cov = covariance(c);
  const EigenPair eig = eig_symmetric(cov);
  return spectral_map(eig, inv_sqrt, kEigenvalueFloor) * center(c);
}

FeatureMatrix color_classical(const FeatureMatrix& whitened, const FeatureMatrix& style) {
  if (whitened.rows() != style.rows()) {
    throw ShapeError("color_classical: content has " + std::to_string(whitened.rows()) +
                     " channels, style has " + std::to_string(style.rows()));
  }
  const EigenPair eig = eig_symmetric(covariance(style));
  return spectral_map(eig, plain_sqrt, 0.0) * whitened;
}

ColoringFactors decompose_column_norm(const Matrix& s_ct) {
  ColoringFactors out{s_ct, std::vector<double>(s_ct.cols())};
  for (std::size_t j = 0; j < s_ct.cols(); ++j) {
    double acc = 0.0;
    for (std::size_t i = 0; i < s_ct.rows(); ++i) acc += s_ct(i, j) * s_ct(i, j);
    const double norm = std::max(std::sqrt(acc), kColumnNormFloor);
    out.d[j] = norm;
    for (std::size_t i = 0; i < s_ct.rows(); ++i) out.u(i, j) /= norm;
  }
  return out;
}

}  // namespace gdwct::linalg
