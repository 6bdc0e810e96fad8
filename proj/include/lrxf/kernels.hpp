#pragma once

#include <cmath>
#include <cstddef>

namespace lrxf::ad::kern {

// C(m x n) += A(m x k) * B(k x n). Row-major, axpy ordering so the inner
// loop runs contiguously over C and B rows.
template <class S>
void gemm_nn(const S* __restrict__ a, const S* __restrict__ b,
             S* __restrict__ c, int m, int k, int n) {
  for (int i = 0; i < m; ++i) {
    const S* arow = a + static_cast<std::size_t>(i) * k;
    S* crow = c + static_cast<std::size_t>(i) * n;
    for (int l = 0; l < k; ++l) {
      const S av = arow[l];
      if (av == S(0)) continue;
      const S* brow = b + static_cast<std::size_t>(l) * n;
#pragma omp simd
      for (int j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

// C(m x n) += A(m x k) * B(n x k)^T. Dot-product form; the reduction is
// explicitly simd so the accumulation order is fixed per build.
template <class S>
void gemm_nt(const S* __restrict__ a, const S* __restrict__ b,
             S* __restrict__ c, int m, int k, int n) {
  for (int i = 0; i < m; ++i) {
    const S* arow = a + static_cast<std::size_t>(i) * k;
    S* crow = c + static_cast<std::size_t>(i) * n;
    for (int j = 0; j < n; ++j) {
      const S* brow = b + static_cast<std::size_t>(j) * k;
      S acc = S(0);
#pragma omp simd reduction(+ : acc)
      for (int l = 0; l < k; ++l) acc += arow[l] * brow[l];
      crow[j] += acc;
    }
  }
}

// C(k x n) += A(m x k)^T * B(m x n).
template <class S>
void gemm_tn(const S* __restrict__ a, const S* __restrict__ b,
             S* __restrict__ c, int m, int k, int n) {
  for (int i = 0; i < m; ++i) {
    const S* arow = a + static_cast<std::size_t>(i) * k;
    const S* brow = b + static_cast<std::size_t>(i) * n;
    for (int l = 0; l < k; ++l) {
      const S av = arow[l];
      if (av == S(0)) continue;
      S* crow = c + static_cast<std::size_t>(l) * n;
#pragma omp simd
      for (int j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

template <class S>
S fast_sigmoid(S x) {
  return S(1) / (S(1) + std::exp(-x));
}

}  // namespace lrxf::ad::kern
