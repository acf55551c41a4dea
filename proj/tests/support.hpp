#pragma once

// Shared test helpers: the naive convolution oracle and a binomial tail.

#include <cmath>

#include "shapeiq/tensor.hpp"
#include "shapeiq/nn.hpp"

namespace shapeiq::testing {

// Independent oracle: direct six-loop cross-correlation.
template <class T>
TensorT<T> naive_conv2d(const TensorT<T>& x, const TensorT<T>& w, const TensorT<T>& b,
                        int stride, int pad) {
  int n = x.dim(0), cin = x.dim(1), h = x.dim(2), wd = x.dim(3);
  int cout = w.dim(0);
  int oh = (h + 2 * pad - kKernel) / stride + 1;
  int ow = (wd + 2 * pad - kKernel) / stride + 1;
  TensorT<T> y({n, cout, oh, ow});
  for (int i = 0; i < n; ++i)
    for (int co = 0; co < cout; ++co)
      for (int oy = 0; oy < oh; ++oy)
        for (int ox = 0; ox < ow; ++ox) {
          double acc = b.v[co];
          for (int ci = 0; ci < cin; ++ci)
            for (int ky = 0; ky < kKernel; ++ky)
              for (int kx = 0; kx < kKernel; ++kx) {
                int yy = oy * stride - pad + ky;
                int xx = ox * stride - pad + kx;
                if (yy < 0 || yy >= h || xx < 0 || xx >= wd) continue;
                acc += static_cast<double>(
                           x.v[((static_cast<size_t>(i) * cin + ci) * h + yy) * wd + xx]) *
                       w.v[((static_cast<size_t>(co) * cin + ci) * kKernel + ky) * kKernel + kx];
              }
          y.v[((static_cast<size_t>(i) * cout + co) * oh + oy) * ow + ox] =
              static_cast<T>(acc);
        }
  return y;
}

// P(X >= k) for X ~ Binomial(n, p), exact in log space.
inline double binomial_tail(int n, int k, double p) {
  if (k <= 0) return 1.0;
  if (k > n) return 0.0;
  double log_p = std::log(p), log_q = std::log1p(-p);
  double total = 0.0;
  for (int i = k; i <= n; ++i) {
    double log_term = std::lgamma(n + 1.0) - std::lgamma(i + 1.0) -
                      std::lgamma(n - i + 1.0) + i * log_p + (n - i) * log_q;
    total += std::exp(log_term);
  }
  return total;
}

}  // namespace shapeiq::testing
