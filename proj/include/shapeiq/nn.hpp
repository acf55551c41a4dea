#pragma once

#include <cmath>
#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "shapeiq/gemm.hpp"
#include "shapeiq/tensor.hpp"

#ifdef _OPENMP
#include <omp.h>
#endif

namespace shapeiq {

struct BatchTooSmall : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct LabelError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

inline constexpr int kKernel = 4;  // every conv/deconv kernel is 4x4

#ifdef SHAPEIQ_CHECK_FINITE
template <class T>
void check_finite(const TensorT<T>& t, const char* what) {
  for (T x : t.v)
    if (!std::isfinite(static_cast<double>(x)))
      throw std::runtime_error(std::string("non-finite value after ") + what);
}
#else
template <class T>
void check_finite(const TensorT<T>&, const char*) {}
#endif

// ---- im2col / col2im -------------------------------------------------------
//
// The kernel-window relation between an image (ih, iw) and its position grid
// (gh, gw) with stride s and padding p: image pixel = g * s - p + k. Used in
// both directions by convolution and transposed convolution. The column
// matrix holds the whole batch: row k spans n_batch * positions values and a
// sample's slice starts at its sample index times `positions`, so `row_stride`
// is the batch-wide row length.

template <class T>
void im2col_gather(const T* img, int channels, int ih, int iw, int gh, int gw,
                   int stride, int pad, T* col, int64_t row_stride) {
  int positions = gh * gw;
  for (int c = 0; c < channels; ++c)
    for (int ky = 0; ky < kKernel; ++ky)
      for (int kx = 0; kx < kKernel; ++kx) {
        T* out = col + ((c * kKernel + ky) * kKernel + kx) * row_stride;
        for (int gy = 0; gy < gh; ++gy) {
          int y = gy * stride - pad + ky;
          if (y < 0 || y >= ih) {
            for (int gx = 0; gx < gw; ++gx) out[gy * gw + gx] = T(0);
            continue;
          }
          const T* row = img + (c * ih + y) * iw;
          for (int gx = 0; gx < gw; ++gx) {
            int x = gx * stride - pad + kx;
            out[gy * gw + gx] = (x >= 0 && x < iw) ? row[x] : T(0);
          }
        }
      }
}

template <class T>
void im2col_gather(const T* img, int channels, int ih, int iw, int gh, int gw,
                   int stride, int pad, T* col) {
  im2col_gather(img, channels, ih, iw, gh, gw, stride, pad, col,
                static_cast<int64_t>(gh) * gw);
}

template <class T>
void col2im_scatter(const T* col, int channels, int ih, int iw, int gh, int gw,
                    int stride, int pad, T* img, int64_t row_stride) {
  std::fill(img, img + static_cast<size_t>(channels) * ih * iw, T(0));
  for (int c = 0; c < channels; ++c)
    for (int ky = 0; ky < kKernel; ++ky)
      for (int kx = 0; kx < kKernel; ++kx) {
        const T* in = col + ((c * kKernel + ky) * kKernel + kx) * row_stride;
        for (int gy = 0; gy < gh; ++gy) {
          int y = gy * stride - pad + ky;
          if (y < 0 || y >= ih) continue;
          T* row = img + (c * ih + y) * iw;
          for (int gx = 0; gx < gw; ++gx) {
            int x = gx * stride - pad + kx;
            if (x >= 0 && x < iw) row[x] += in[gy * gw + gx];
          }
        }
      }
}

template <class T>
void col2im_scatter(const T* col, int channels, int ih, int iw, int gh, int gw,
                    int stride, int pad, T* img) {
  col2im_scatter(col, channels, ih, iw, gh, gw, stride, pad, img,
                 static_cast<int64_t>(gh) * gw);
}

// Deterministic contiguous sample ranges for the worker threads.
inline std::vector<std::pair<int, int>> sample_chunks(int n, int threads) {
  std::vector<std::pair<int, int>> chunks;
  int t = std::max(1, std::min(threads, n));
  int base = n / t, rem = n % t;
  int at = 0;
  for (int i = 0; i < t; ++i) {
    int len = base + (i < rem ? 1 : 0);
    chunks.emplace_back(at, at + len);
    at += len;
  }
  return chunks;
}

// ---- layers ----------------------------------------------------------------

template <class T>
class LayerT {
 public:
  virtual ~LayerT() = default;
  virtual TensorT<T> forward(const TensorT<T>& x, bool train) = 0;
  virtual TensorT<T> backward(const TensorT<T>& dy, bool need_input_grad) = 0;
  // Learnable parameters; gradients accumulate in the tensors' g buffers.
  virtual void collect_params(std::vector<TensorT<T>*>& out) {}
  virtual std::string name() const = 0;
};

// Whole-batch im2col convolution. The lowered matrix spans every sample, so
// each pass is a handful of fat GEMMs; it is built once in forward and reused
// by the weight-gradient GEMM. Channel-major scratch buffers bridge the NCHW
// tensors and the batched layout. Parallel chunks sit on fixed sample
// boundaries, so results do not depend on scheduling.
template <class T>
class Conv2dT : public LayerT<T> {
 public:
  Conv2dT(int in_ch, int out_ch, int stride, int pad)
      : in_ch_(in_ch), out_ch_(out_ch), stride_(stride), pad_(pad),
        weight_({out_ch, in_ch, kKernel, kKernel}), bias_({out_ch}) {
    weight_.alloc_grad();
    bias_.alloc_grad();
  }

  TensorT<T> forward(const TensorT<T>& x, bool) override {
    if (x.ndim() != 4 || x.dim(1) != in_ch_)
      throw ShapeError("conv2d: input " + x.shape_str() + ", expected [N," +
                       std::to_string(in_ch_) + ",H,W]");
    int n = x.dim(0), h = x.dim(2), w = x.dim(3);
    int oh = (h + 2 * pad_ - kKernel) / stride_ + 1;
    int ow = (w + 2 * pad_ - kKernel) / stride_ + 1;
    if (oh < 1 || ow < 1 || (h + 2 * pad_ - kKernel) % stride_ != 0)
      throw ShapeError("conv2d: spatial dims " + x.shape_str() +
                       " incompatible with stride/pad");
    n_ = n;
    h_ = h;
    w_ = w;
    oh_ = oh;
    ow_ = ow;
    int64_t p = static_cast<int64_t>(oh) * ow;
    int64_t np = p * n;
    int k = in_ch_ * kKernel * kKernel;
    col_.resize(static_cast<size_t>(k) * np);
    cm_.resize(static_cast<size_t>(out_ch_) * np);
    auto chunks = sample_chunks(n, compute_threads());
    int nchunks = static_cast<int>(chunks.size());
#ifdef _OPENMP
#pragma omp parallel for schedule(static) num_threads(nchunks)
#endif
    for (int ci = 0; ci < nchunks; ++ci) {
      for (int i = chunks[ci].first; i < chunks[ci].second; ++i)
        im2col_gather(x.data() + static_cast<size_t>(i) * in_ch_ * h * w, in_ch_, h, w,
                      oh, ow, stride_, pad_, col_.data() + static_cast<size_t>(i) * p, np);
      int64_t c0 = chunks[ci].first * p;
      int64_t cols = (chunks[ci].second - chunks[ci].first) * p;
      gemm(false, false, out_ch_, static_cast<int>(cols), k, T(1), weight_.data(), k,
           col_.data() + c0, static_cast<int>(np), T(0), cm_.data() + c0,
           static_cast<int>(np));
    }
    TensorT<T> y({n, out_ch_, oh, ow});
#ifdef _OPENMP
#pragma omp parallel for schedule(static) num_threads(compute_threads())
#endif
    for (int i = 0; i < n; ++i)
      for (int co = 0; co < out_ch_; ++co) {
        const T* src = cm_.data() + static_cast<size_t>(co) * np + static_cast<size_t>(i) * p;
        T* dst = y.data() + (static_cast<size_t>(i) * out_ch_ + co) * p;
        T b = bias_.v[co];
        for (int64_t j = 0; j < p; ++j) dst[j] = src[j] + b;
      }
    check_finite(y, "conv2d forward");
    return y;
  }

  TensorT<T> backward(const TensorT<T>& dy, bool need_input_grad) override {
    int n = n_, h = h_, w = w_;
    int64_t p = static_cast<int64_t>(oh_) * ow_;
    int64_t np = p * n;
    int k = in_ch_ * kKernel * kKernel;
    int threads = compute_threads();
    // dy to channel-major
#ifdef _OPENMP
#pragma omp parallel for schedule(static) num_threads(threads)
#endif
    for (int i = 0; i < n; ++i)
      for (int co = 0; co < out_ch_; ++co) {
        const T* src = dy.data() + (static_cast<size_t>(i) * out_ch_ + co) * p;
        T* dst = cm_.data() + static_cast<size_t>(co) * np + static_cast<size_t>(i) * p;
        for (int64_t j = 0; j < p; ++j) dst[j] = src[j];
      }
    // weight and bias gradients; threads own disjoint output-channel rows
    auto row_chunks = sample_chunks(out_ch_, threads);
    int nrow = static_cast<int>(row_chunks.size());
#ifdef _OPENMP
#pragma omp parallel for schedule(static) num_threads(nrow)
#endif
    for (int ci = 0; ci < nrow; ++ci) {
      int m0 = row_chunks[ci].first, m1 = row_chunks[ci].second;
      if (m1 > m0)
        gemm(false, true, m1 - m0, k, static_cast<int>(np), T(1),
             cm_.data() + static_cast<size_t>(m0) * np, static_cast<int>(np),
             col_.data(), static_cast<int>(np), T(1),
             weight_.g.data() + static_cast<size_t>(m0) * k, k);
      for (int co = m0; co < m1; ++co) {
        const T* row = cm_.data() + static_cast<size_t>(co) * np;
        T acc = T(0);
        for (int64_t j = 0; j < np; ++j) acc += row[j];
        bias_.g[co] += acc;
      }
    }
    TensorT<T> dx;
    if (need_input_grad) {
      dx = TensorT<T>({n, in_ch_, h, w});
      auto chunks = sample_chunks(n, threads);
      int nchunks = static_cast<int>(chunks.size());
      // dcol overwrites the cached col (the weight gradient is already done)
#ifdef _OPENMP
#pragma omp parallel for schedule(static) num_threads(nchunks)
#endif
      for (int ci = 0; ci < nchunks; ++ci) {
        int64_t c0 = chunks[ci].first * p;
        int64_t cols = (chunks[ci].second - chunks[ci].first) * p;
        gemm(true, false, k, static_cast<int>(cols), out_ch_, T(1), weight_.data(), k,
             cm_.data() + c0, static_cast<int>(np), T(0), col_.data() + c0,
             static_cast<int>(np));
        for (int i = chunks[ci].first; i < chunks[ci].second; ++i)
          col2im_scatter(col_.data() + static_cast<size_t>(i) * p, in_ch_, h, w, oh_, ow_,
                         stride_, pad_, dx.data() + static_cast<size_t>(i) * in_ch_ * h * w,
                         np);
      }
      check_finite(dx, "conv2d backward");
    }
    return dx;
  }

  void collect_params(std::vector<TensorT<T>*>& out) override {
    out.push_back(&weight_);
    out.push_back(&bias_);
  }
  std::string name() const override { return "conv2d"; }

  TensorT<T>& weight() { return weight_; }
  TensorT<T>& bias() { return bias_; }
  int stride() const { return stride_; }
  int padding() const { return pad_; }

 private:
  int in_ch_, out_ch_, stride_, pad_;
  TensorT<T> weight_, bias_;
  std::vector<T> col_, cm_;
  int n_ = 0, h_ = 0, w_ = 0, oh_ = 0, ow_ = 0;
};

// Transposed convolution; weight layout [in_ch, out_ch, 4, 4]. Exact adjoint
// of Conv2dT with the same stride/padding.
template <class T>
class Deconv2dT : public LayerT<T> {
 public:
  Deconv2dT(int in_ch, int out_ch, int stride, int pad)
      : in_ch_(in_ch), out_ch_(out_ch), stride_(stride), pad_(pad),
        weight_({in_ch, out_ch, kKernel, kKernel}), bias_({out_ch}) {
    weight_.alloc_grad();
    bias_.alloc_grad();
  }

  TensorT<T> forward(const TensorT<T>& x, bool) override {
    if (x.ndim() != 4 || x.dim(1) != in_ch_)
      throw ShapeError("deconv2d: input " + x.shape_str() + ", expected [N," +
                       std::to_string(in_ch_) + ",H,W]");
    int n = x.dim(0), h = x.dim(2), w = x.dim(3);
    int oh = (h - 1) * stride_ - 2 * pad_ + kKernel;
    int ow = (w - 1) * stride_ - 2 * pad_ + kKernel;
    if (oh < 1 || ow < 1) throw ShapeError("deconv2d: degenerate output size");
    n_ = n;
    h_ = h;
    w_ = w;
    oh_ = oh;
    ow_ = ow;
    int kc = out_ch_ * kKernel * kKernel;
    int64_t p = static_cast<int64_t>(h) * w;
    int64_t np = p * n;
    xc_.resize(static_cast<size_t>(in_ch_) * np);
    col_.resize(static_cast<size_t>(kc) * np);
    int threads = compute_threads();
    // input to channel-major, cached for the weight gradient
#ifdef _OPENMP
#pragma omp parallel for schedule(static) num_threads(threads)
#endif
    for (int i = 0; i < n; ++i)
      for (int ci = 0; ci < in_ch_; ++ci) {
        const T* src = x.data() + (static_cast<size_t>(i) * in_ch_ + ci) * p;
        T* dst = xc_.data() + static_cast<size_t>(ci) * np + static_cast<size_t>(i) * p;
        for (int64_t j = 0; j < p; ++j) dst[j] = src[j];
      }
    TensorT<T> y({n, out_ch_, oh, ow});
    auto chunks = sample_chunks(n, threads);
    int nchunks = static_cast<int>(chunks.size());
#ifdef _OPENMP
#pragma omp parallel for schedule(static) num_threads(nchunks)
#endif
    for (int ci = 0; ci < nchunks; ++ci) {
      int64_t c0 = chunks[ci].first * p;
      int64_t cols = (chunks[ci].second - chunks[ci].first) * p;
      gemm(true, false, kc, static_cast<int>(cols), in_ch_, T(1), weight_.data(), kc,
           xc_.data() + c0, static_cast<int>(np), T(0), col_.data() + c0,
           static_cast<int>(np));
      for (int i = chunks[ci].first; i < chunks[ci].second; ++i) {
        T* out = y.data() + static_cast<size_t>(i) * out_ch_ * oh * ow;
        col2im_scatter(col_.data() + static_cast<size_t>(i) * p, out_ch_, oh, ow, h, w,
                       stride_, pad_, out, np);
        for (int co = 0; co < out_ch_; ++co) {
          T b = bias_.v[co];
          T* row = out + static_cast<size_t>(co) * oh * ow;
          for (int64_t j = 0; j < static_cast<int64_t>(oh) * ow; ++j) row[j] += b;
        }
      }
    }
    check_finite(y, "deconv2d forward");
    return y;
  }

  TensorT<T> backward(const TensorT<T>& dy, bool need_input_grad) override {
    int n = n_, h = h_, w = w_;
    int kc = out_ch_ * kKernel * kKernel;
    int64_t p = static_cast<int64_t>(h) * w;
    int64_t np = p * n;
    int threads = compute_threads();
    auto chunks = sample_chunks(n, threads);
    int nchunks = static_cast<int>(chunks.size());
    // gather dy into the batched column matrix (overwrites the forward col)
#ifdef _OPENMP
#pragma omp parallel for schedule(static) num_threads(nchunks)
#endif
    for (int ci = 0; ci < nchunks; ++ci)
      for (int i = chunks[ci].first; i < chunks[ci].second; ++i)
        im2col_gather(dy.data() + static_cast<size_t>(i) * out_ch_ * oh_ * ow_, out_ch_,
                      oh_, ow_, h, w, stride_, pad_,
                      col_.data() + static_cast<size_t>(i) * p, np);
    // weight gradient: threads own disjoint input-channel rows
    auto row_chunks = sample_chunks(in_ch_, threads);
    int nrow = static_cast<int>(row_chunks.size());
#ifdef _OPENMP
#pragma omp parallel for schedule(static) num_threads(nrow)
#endif
    for (int ci = 0; ci < nrow; ++ci) {
      int m0 = row_chunks[ci].first, m1 = row_chunks[ci].second;
      if (m1 > m0)
        gemm(false, true, m1 - m0, kc, static_cast<int>(np), T(1),
             xc_.data() + static_cast<size_t>(m0) * np, static_cast<int>(np),
             col_.data(), static_cast<int>(np), T(1),
             weight_.g.data() + static_cast<size_t>(m0) * kc, kc);
    }
    // bias gradient over the raw dy channels
#ifdef _OPENMP
#pragma omp parallel for schedule(static) num_threads(threads)
#endif
    for (int co = 0; co < out_ch_; ++co) {
      T acc = T(0);
      for (int i = 0; i < n; ++i) {
        const T* row = dy.data() + (static_cast<size_t>(i) * out_ch_ + co) *
                                       static_cast<int64_t>(oh_) * ow_;
        for (int64_t j = 0; j < static_cast<int64_t>(oh_) * ow_; ++j) acc += row[j];
      }
      bias_.g[co] += acc;
    }
    TensorT<T> dx;
    if (need_input_grad) {
      dx = TensorT<T>({n, in_ch_, h, w});
      // dxc overwrites the cached xc (the weight gradient is already done)
#ifdef _OPENMP
#pragma omp parallel for schedule(static) num_threads(nchunks)
#endif
      for (int ci = 0; ci < nchunks; ++ci) {
        int64_t c0 = chunks[ci].first * p;
        int64_t cols = (chunks[ci].second - chunks[ci].first) * p;
        gemm(false, false, in_ch_, static_cast<int>(cols), kc, T(1), weight_.data(), kc,
             col_.data() + c0, static_cast<int>(np), T(0), xc_.data() + c0,
             static_cast<int>(np));
        for (int i = chunks[ci].first; i < chunks[ci].second; ++i)
          for (int c = 0; c < in_ch_; ++c) {
            const T* src = xc_.data() + static_cast<size_t>(c) * np + static_cast<size_t>(i) * p;
            T* dst = dx.data() + (static_cast<size_t>(i) * in_ch_ + c) * p;
            for (int64_t j = 0; j < p; ++j) dst[j] = src[j];
          }
      }
      check_finite(dx, "deconv2d backward");
    }
    return dx;
  }

  void collect_params(std::vector<TensorT<T>*>& out) override {
    out.push_back(&weight_);
    out.push_back(&bias_);
  }
  std::string name() const override { return "deconv2d"; }

  TensorT<T>& weight() { return weight_; }
  TensorT<T>& bias() { return bias_; }

 private:
  int in_ch_, out_ch_, stride_, pad_;
  TensorT<T> weight_, bias_;
  std::vector<T> xc_, col_;
  int n_ = 0, h_ = 0, w_ = 0, oh_ = 0, ow_ = 0;
};

template <class T>
class BatchNorm2dT : public LayerT<T> {
 public:
  explicit BatchNorm2dT(int channels, double eps = 1e-5, double momentum = 0.1)
      : channels_(channels), eps_(eps), momentum_(momentum), gamma_({channels}),
        beta_({channels}), running_mean_({channels}), running_var_({channels}) {
    std::fill(gamma_.v.begin(), gamma_.v.end(), T(1));
    std::fill(running_var_.v.begin(), running_var_.v.end(), T(1));
    gamma_.alloc_grad();
    beta_.alloc_grad();
  }

  TensorT<T> forward(const TensorT<T>& x, bool train) override {
    if (x.ndim() != 4 || x.dim(1) != channels_)
      throw ShapeError("batchnorm: input " + x.shape_str() + ", expected [N," +
                       std::to_string(channels_) + ",H,W]");
    int n = x.dim(0), h = x.dim(2), w = x.dim(3);
    if (train && n < 2) throw BatchTooSmall("batchnorm needs batch size >= 2 in train mode");
    int64_t m = static_cast<int64_t>(n) * h * w;
    int64_t plane = static_cast<int64_t>(h) * w;
    TensorT<T> y(x.shape);
    train_ = train;
    if (train) {
      xhat_ = TensorT<T>(x.shape);
      invstd_.assign(channels_, 0.0);
      means_.assign(channels_, 0.0);
      vars_.assign(channels_, 0.0);
#ifdef _OPENMP
#pragma omp parallel for schedule(static) num_threads(compute_threads())
#endif
      for (int c = 0; c < channels_; ++c) {
        double sum = 0.0, sum_sq = 0.0;
        for (int i = 0; i < n; ++i) {
          const T* p = x.data() + (static_cast<int64_t>(i) * channels_ + c) * plane;
          for (int64_t j = 0; j < plane; ++j) {
            double v = p[j];
            sum += v;
            sum_sq += v * v;
          }
        }
        double mean = sum / static_cast<double>(m);
        double var = sum_sq / static_cast<double>(m) - mean * mean;
        var = std::max(var, 0.0);
        double invstd = 1.0 / std::sqrt(var + eps_);
        invstd_[c] = invstd;
        T mean_t = static_cast<T>(mean);
        T invstd_t = static_cast<T>(invstd);
        T g = gamma_.v[c], b = beta_.v[c];
        for (int i = 0; i < n; ++i) {
          const T* p = x.data() + (static_cast<int64_t>(i) * channels_ + c) * plane;
          T* xn = xhat_.data() + (static_cast<int64_t>(i) * channels_ + c) * plane;
          T* out = y.data() + (static_cast<int64_t>(i) * channels_ + c) * plane;
          for (int64_t j = 0; j < plane; ++j) {
            T hatv = (p[j] - mean_t) * invstd_t;
            xn[j] = hatv;
            out[j] = g * hatv + b;
          }
        }
        means_[c] = mean;
        vars_[c] = var;
      }
      for (int c = 0; c < channels_; ++c) {
        double unbiased =
            m > 1 ? vars_[c] * static_cast<double>(m) / static_cast<double>(m - 1) : vars_[c];
        running_mean_.v[c] =
            static_cast<T>((1.0 - momentum_) * running_mean_.v[c] + momentum_ * means_[c]);
        running_var_.v[c] =
            static_cast<T>((1.0 - momentum_) * running_var_.v[c] + momentum_ * unbiased);
      }
    } else {
#ifdef _OPENMP
#pragma omp parallel for schedule(static) num_threads(compute_threads())
#endif
      for (int c = 0; c < channels_; ++c) {
        T mean = running_mean_.v[c];
        T invstd = static_cast<T>(1.0 / std::sqrt(static_cast<double>(running_var_.v[c]) + eps_));
        T g = gamma_.v[c], b = beta_.v[c];
        for (int i = 0; i < n; ++i) {
          const T* p = x.data() + (static_cast<int64_t>(i) * channels_ + c) * plane;
          T* out = y.data() + (static_cast<int64_t>(i) * channels_ + c) * plane;
          for (int64_t j = 0; j < plane; ++j)
            out[j] = g * ((p[j] - mean) * invstd) + b;
        }
      }
    }
    check_finite(y, "batchnorm forward");
    return y;
  }

  TensorT<T> backward(const TensorT<T>& dy, bool) override {
    if (!train_) throw std::logic_error("batchnorm backward outside train mode");
    int n = dy.dim(0), h = dy.dim(2), w = dy.dim(3);
    int64_t m = static_cast<int64_t>(n) * h * w;
    int64_t plane = static_cast<int64_t>(h) * w;
    TensorT<T> dx(dy.shape);
#ifdef _OPENMP
#pragma omp parallel for schedule(static) num_threads(compute_threads())
#endif
    for (int c = 0; c < channels_; ++c) {
      double sum_dy = 0.0, sum_dy_xhat = 0.0;
      for (int i = 0; i < n; ++i) {
        const T* dp = dy.data() + (static_cast<int64_t>(i) * channels_ + c) * plane;
        const T* xn = xhat_.data() + (static_cast<int64_t>(i) * channels_ + c) * plane;
        for (int64_t j = 0; j < plane; ++j) {
          sum_dy += dp[j];
          sum_dy_xhat += static_cast<double>(dp[j]) * xn[j];
        }
      }
      gamma_.g[c] += static_cast<T>(sum_dy_xhat);
      beta_.g[c] += static_cast<T>(sum_dy);
      T scale = static_cast<T>(gamma_.v[c] * invstd_[c] / static_cast<double>(m));
      T mt = static_cast<T>(static_cast<double>(m));
      T sdy = static_cast<T>(sum_dy);
      T sdyx = static_cast<T>(sum_dy_xhat);
      for (int i = 0; i < n; ++i) {
        const T* dp = dy.data() + (static_cast<int64_t>(i) * channels_ + c) * plane;
        const T* xn = xhat_.data() + (static_cast<int64_t>(i) * channels_ + c) * plane;
        T* out = dx.data() + (static_cast<int64_t>(i) * channels_ + c) * plane;
        for (int64_t j = 0; j < plane; ++j)
          out[j] = scale * (mt * dp[j] - sdy - xn[j] * sdyx);
      }
    }
    check_finite(dx, "batchnorm backward");
    return dx;
  }

  void collect_params(std::vector<TensorT<T>*>& out) override {
    out.push_back(&gamma_);
    out.push_back(&beta_);
  }
  std::string name() const override { return "batchnorm"; }

  TensorT<T>& gamma() { return gamma_; }
  TensorT<T>& beta() { return beta_; }
  TensorT<T>& running_mean() { return running_mean_; }
  TensorT<T>& running_var() { return running_var_; }

 private:
  int channels_;
  double eps_, momentum_;
  TensorT<T> gamma_, beta_, running_mean_, running_var_;
  TensorT<T> xhat_;
  std::vector<double> invstd_, means_, vars_;
  bool train_ = false;
};

enum class Activation { Relu, LeakyRelu, Elu };

inline const char* activation_name(Activation a) {
  switch (a) {
    case Activation::Relu: return "relu";
    case Activation::LeakyRelu: return "leaky_relu";
    case Activation::Elu: return "elu";
  }
  return "?";
}

template <class T>
class ActivationT : public LayerT<T> {
 public:
  explicit ActivationT(Activation kind, double alpha = 0.2)
      : kind_(kind), alpha_(alpha) {}

  TensorT<T> forward(const TensorT<T>& x, bool) override {
    TensorT<T> y(x.shape);
    switch (kind_) {
      case Activation::Relu:
        for (size_t i = 0; i < x.v.size(); ++i) y.v[i] = x.v[i] > T(0) ? x.v[i] : T(0);
        break;
      case Activation::LeakyRelu:
        for (size_t i = 0; i < x.v.size(); ++i)
          y.v[i] = x.v[i] > T(0) ? x.v[i] : static_cast<T>(alpha_ * x.v[i]);
        break;
      case Activation::Elu:
        for (size_t i = 0; i < x.v.size(); ++i)
          y.v[i] = x.v[i] > T(0) ? x.v[i]
                                 : static_cast<T>(alpha_ * std::expm1(static_cast<double>(x.v[i])));
        break;
    }
    y_ = y;
    return y;
  }

  TensorT<T> backward(const TensorT<T>& dy, bool) override {
    TensorT<T> dx(dy.shape);
    switch (kind_) {
      case Activation::Relu:
        for (size_t i = 0; i < dy.v.size(); ++i)
          dx.v[i] = y_.v[i] > T(0) ? dy.v[i] : T(0);
        break;
      case Activation::LeakyRelu:
        for (size_t i = 0; i < dy.v.size(); ++i)
          dx.v[i] = y_.v[i] > T(0) ? dy.v[i] : static_cast<T>(alpha_ * dy.v[i]);
        break;
      case Activation::Elu:
        // For x < 0, y = alpha*(e^x - 1) so dy/dx = y + alpha.
        for (size_t i = 0; i < dy.v.size(); ++i)
          dx.v[i] = y_.v[i] > T(0) ? dy.v[i]
                                   : static_cast<T>(dy.v[i] * (y_.v[i] + alpha_));
        break;
    }
    return dx;
  }

  std::string name() const override { return activation_name(kind_); }

 private:
  Activation kind_;
  double alpha_;
  TensorT<T> y_;
};

// Fully connected layer; flattens trailing dimensions.
template <class T>
class LinearT : public LayerT<T> {
 public:
  LinearT(int in_features, int out_features)
      : in_(in_features), out_(out_features), weight_({out_features, in_features}),
        bias_({out_features}) {
    weight_.alloc_grad();
    bias_.alloc_grad();
  }

  TensorT<T> forward(const TensorT<T>& x, bool) override {
    int n = x.dim(0);
    if (x.numel() != static_cast<int64_t>(n) * in_)
      throw ShapeError("linear: input " + x.shape_str() + ", expected [N," +
                       std::to_string(in_) + "] after flattening");
    in_shape_ = x.shape;
    x_ = x;
    TensorT<T> y({n, out_});
    gemm(false, true, n, out_, in_, T(1), x.data(), in_, weight_.data(), in_, T(0),
         y.data(), out_);
    for (int i = 0; i < n; ++i)
      for (int o = 0; o < out_; ++o) y.v[static_cast<size_t>(i) * out_ + o] += bias_.v[o];
    check_finite(y, "linear forward");
    return y;
  }

  TensorT<T> backward(const TensorT<T>& dy, bool need_input_grad) override {
    int n = dy.dim(0);
    gemm(true, false, out_, in_, n, T(1), dy.data(), out_, x_.data(), in_, T(1),
         weight_.g.data(), in_);
    for (int i = 0; i < n; ++i)
      for (int o = 0; o < out_; ++o) bias_.g[o] += dy.v[static_cast<size_t>(i) * out_ + o];
    if (!need_input_grad) return {};
    TensorT<T> dx(in_shape_);
    gemm(false, false, n, in_, out_, T(1), dy.data(), out_, weight_.data(), in_, T(0),
         dx.data(), in_);
    check_finite(dx, "linear backward");
    return dx;
  }

  void collect_params(std::vector<TensorT<T>*>& out) override {
    out.push_back(&weight_);
    out.push_back(&bias_);
  }
  std::string name() const override { return "linear"; }

  TensorT<T>& weight() { return weight_; }
  TensorT<T>& bias() { return bias_; }

 private:
  int in_, out_;
  TensorT<T> weight_, bias_;
  TensorT<T> x_;
  std::vector<int> in_shape_;
};

template <class T>
class SequentialT {
 public:
  void add(std::unique_ptr<LayerT<T>> layer) { layers_.push_back(std::move(layer)); }

  TensorT<T> forward(const TensorT<T>& x, bool train) {
    TensorT<T> cur = x;
    for (auto& layer : layers_) cur = layer->forward(cur, train);
    return cur;
  }

  // Forward keeping every intermediate (input of layer i is result[i]).
  std::vector<TensorT<T>> forward_all(const TensorT<T>& x, bool train) {
    std::vector<TensorT<T>> values;
    values.push_back(x);
    for (auto& layer : layers_) values.push_back(layer->forward(values.back(), train));
    return values;
  }

  TensorT<T> backward(const TensorT<T>& dy, bool need_input_grad = false) {
    TensorT<T> cur = dy;
    for (size_t i = layers_.size(); i-- > 0;)
      cur = layers_[i]->backward(cur, need_input_grad || i > 0);
    return cur;
  }

  std::vector<TensorT<T>*> params() {
    std::vector<TensorT<T>*> out;
    for (auto& layer : layers_) layer->collect_params(out);
    return out;
  }

  void zero_grad() {
    for (TensorT<T>* p : params()) p->zero_grad();
  }

  size_t size() const { return layers_.size(); }
  LayerT<T>& layer(size_t i) { return *layers_[i]; }

 private:
  std::vector<std::unique_ptr<LayerT<T>>> layers_;
};

// ---- losses ----------------------------------------------------------------

// Softmax over the last dimension, stabilized by max subtraction.
template <class T>
TensorT<T> softmax(const TensorT<T>& logits) {
  int classes = logits.shape.back();
  int64_t rows = logits.numel() / classes;
  TensorT<T> out(logits.shape);
  for (int64_t r = 0; r < rows; ++r) {
    const T* in = logits.data() + r * classes;
    T* o = out.data() + r * classes;
    double mx = in[0];
    for (int c = 1; c < classes; ++c) mx = std::max(mx, static_cast<double>(in[c]));
    double denom = 0.0;
    for (int c = 0; c < classes; ++c) denom += std::exp(static_cast<double>(in[c]) - mx);
    for (int c = 0; c < classes; ++c)
      o[c] = static_cast<T>(std::exp(static_cast<double>(in[c]) - mx) / denom);
  }
  return out;
}

// Mean over the batch of -log softmax(logits)[label]; gradient included.
template <class T>
std::pair<double, TensorT<T>> softmax_cross_entropy(const TensorT<T>& logits,
                                                    std::span<const int> labels) {
  if (logits.ndim() != 2) throw ShapeError("cross entropy expects [N,C] logits");
  int n = logits.dim(0), classes = logits.dim(1);
  if (static_cast<int>(labels.size()) != n)
    throw LabelError("label count does not match batch size");
  for (int lbl : labels)
    if (lbl < 0 || lbl >= classes)
      throw LabelError("label " + std::to_string(lbl) + " outside [0," +
                       std::to_string(classes - 1) + "]");
  TensorT<T> probs = softmax(logits);
  TensorT<T> dlogits(logits.shape);
  double loss = 0.0;
  for (int i = 0; i < n; ++i) {
    const T* p = probs.data() + static_cast<size_t>(i) * classes;
    T* d = dlogits.data() + static_cast<size_t>(i) * classes;
    loss -= std::log(std::max(static_cast<double>(p[labels[i]]), 1e-300));
    for (int c = 0; c < classes; ++c)
      d[c] = static_cast<T>((static_cast<double>(p[c]) - (c == labels[i] ? 1.0 : 0.0)) / n);
  }
  return {loss / n, std::move(dlogits)};
}

// Mean over all elements of the squared difference; gradient included.
template <class T>
std::pair<double, TensorT<T>> mse_loss(const TensorT<T>& pred, const TensorT<T>& target) {
  if (pred.shape != target.shape)
    throw ShapeError("mse: prediction " + pred.shape_str() + " vs target " +
                     target.shape_str());
  double acc = 0.0;
  TensorT<T> dpred(pred.shape);
  double scale = 2.0 / static_cast<double>(pred.numel());
  for (size_t i = 0; i < pred.v.size(); ++i) {
    double d = static_cast<double>(pred.v[i]) - static_cast<double>(target.v[i]);
    acc += d * d;
    dpred.v[i] = static_cast<T>(scale * d);
  }
  return {acc / static_cast<double>(pred.numel()), std::move(dpred)};
}

// ---- optimizer -------------------------------------------------------------

template <class T>
struct AdamStateT {
  double beta1 = 0.5;  // DCGAN recipe
  double beta2 = 0.999;
  double eps = 1e-8;
  int64_t step = 0;
  std::vector<std::vector<T>> m, v;

  void init(const std::vector<TensorT<T>*>& params) {
    m.clear();
    v.clear();
    for (TensorT<T>* p : params) {
      m.emplace_back(p->v.size(), T(0));
      v.emplace_back(p->v.size(), T(0));
    }
    step = 0;
  }
};

using AdamState = AdamStateT<float>;

template <class T>
void adam_step(const std::vector<TensorT<T>*>& params, AdamStateT<T>& state, double lr) {
  if (state.m.size() != params.size()) throw std::logic_error("adam state mismatch");
  ++state.step;
  double bc1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.step));
  double bc2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.step));
  for (size_t pi = 0; pi < params.size(); ++pi) {
    TensorT<T>& p = *params[pi];
    std::vector<T>& m = state.m[pi];
    std::vector<T>& v = state.v[pi];
    for (size_t i = 0; i < p.v.size(); ++i) {
      double grad = p.g[i];
      double mi = state.beta1 * m[i] + (1.0 - state.beta1) * grad;
      double vi = state.beta2 * v[i] + (1.0 - state.beta2) * grad * grad;
      m[i] = static_cast<T>(mi);
      v[i] = static_cast<T>(vi);
      double mhat = mi / bc1;
      double vhat = vi / bc2;
      p.v[i] = static_cast<T>(p.v[i] - lr * mhat / (std::sqrt(vhat) + state.eps));
    }
  }
}

// ---- learning-rate schedule -------------------------------------------------

struct LrSchedule {
  double base_lr = 2e-4;
  double decay_factor = 0.1;
  int decay_every = 100;

  double at(int epoch) const {
    int decades = epoch / decay_every;
    return base_lr * std::pow(10.0, -static_cast<double>(decades));
  }
};

}  // namespace shapeiq
