#pragma once

// Row-major dense kernels shared by the tensor ops and the classical linalg
// path. All gemm variants accumulate into C.

#include <cstddef>

namespace gdwct::kernels {

// C[m,n] += A[m,k] * B[k,n]
inline void gemm_nn(std::size_t m, std::size_t n, std::size_t k, const double* a, const double* b,
                    double* c) {
  for (std::size_t i = 0; i < m; ++i) {
    double* crow = c + i * n;
    const double* arow = a + i * k;
    for (std::size_t p = 0; p < k; ++p) {
      const double av = arow[p];
      const double* brow = b + p * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

// C[m,n] += A[m,k] * B[n,k]^T
inline void gemm_nt(std::size_t m, std::size_t n, std::size_t k, const double* a, const double* b,
                    double* c) {
  for (std::size_t i = 0; i < m; ++i) {
    const double* arow = a + i * k;
    for (std::size_t j = 0; j < n; ++j) {
      const double* brow = b + j * k;
      double acc = 0.0;
      for (std::size_t p = 0; p < k; ++p) acc += arow[p] * brow[p];
      c[i * n + j] += acc;
    }
  }
}

// C[m,n] += A[k,m]^T * B[k,n]
inline void gemm_tn(std::size_t m, std::size_t n, std::size_t k, const double* a, const double* b,
                    double* c) {
  for (std::size_t p = 0; p < k; ++p) {
    const double* arow = a + p * m;
    const double* brow = b + p * n;
    for (std::size_t i = 0; i < m; ++i) {
      const double av = arow[i];
      double* crow = c + i * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

struct ConvGeometry {
  std::size_t channels, height, width, k, stride, pad, out_h, out_w;
};

// cols[(c*k + ki)*k + kj, oy*out_w + ox] = padded input sample.
inline void im2col(const ConvGeometry& g, const double* src, double* cols) {
  const std::size_t positions = g.out_h * g.out_w;
  for (std::size_t c = 0; c < g.channels; ++c)
    for (std::size_t ki = 0; ki < g.k; ++ki)
      for (std::size_t kj = 0; kj < g.k; ++kj) {
        double* row = cols + ((c * g.k + ki) * g.k + kj) * positions;
        for (std::size_t oy = 0; oy < g.out_h; ++oy) {
          const long y = static_cast<long>(oy * g.stride + ki) - static_cast<long>(g.pad);
          for (std::size_t ox = 0; ox < g.out_w; ++ox) {
            const long x = static_cast<long>(ox * g.stride + kj) - static_cast<long>(g.pad);
            const bool inside = y >= 0 && x >= 0 && y < static_cast<long>(g.height) &&
                                x < static_cast<long>(g.width);
            row[oy * g.out_w + ox] =
                inside ? src[(c * g.height + static_cast<std::size_t>(y)) * g.width +
                             static_cast<std::size_t>(x)]
                       : 0.0;
          }
        }
      }
}

// Adjoint of im2col.
inline void col2im_add(const ConvGeometry& g, const double* cols, double* dst) {
  const std::size_t positions = g.out_h * g.out_w;
  for (std::size_t c = 0; c < g.channels; ++c)
    for (std::size_t ki = 0; ki < g.k; ++ki)
      for (std::size_t kj = 0; kj < g.k; ++kj) {
        const double* row = cols + ((c * g.k + ki) * g.k + kj) * positions;
        for (std::size_t oy = 0; oy < g.out_h; ++oy) {
          const long y = static_cast<long>(oy * g.stride + ki) - static_cast<long>(g.pad);
          if (y < 0 || y >= static_cast<long>(g.height)) continue;
          for (std::size_t ox = 0; ox < g.out_w; ++ox) {
            const long x = static_cast<long>(ox * g.stride + kj) - static_cast<long>(g.pad);
            if (x < 0 || x >= static_cast<long>(g.width)) continue;
            dst[(c * g.height + static_cast<std::size_t>(y)) * g.width +
                static_cast<std::size_t>(x)] += row[oy * g.out_w + ox];
          }
        }
      }
}

}  // namespace gdwct::kernels
