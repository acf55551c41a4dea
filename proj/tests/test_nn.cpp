#include <doctest.h>

#include <cmath>

#include "shapeiq/gradcheck.hpp"
#include "shapeiq/nn.hpp"
#include "shapeiq/rng.hpp"

using namespace shapeiq;

namespace {

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

Tensor random_tensor(const std::vector<int>& shape, Rng& rng) {
  Tensor t(shape);
  for (float& v : t.v) v = static_cast<float>(rng.uniform(-1.0, 1.0));
  return t;
}

double dot(const Tensor& a, const Tensor& b) {
  double acc = 0.0;
  for (size_t i = 0; i < a.v.size(); ++i)
    acc += static_cast<double>(a.v[i]) * static_cast<double>(b.v[i]);
  return acc;
}

}  // namespace

TEST_CASE("conv2d: kernel equal to the input gives the dot product") {
  Conv2dT<float> conv(1, 1, 1, 0);
  Rng rng(1);
  Tensor x = random_tensor({1, 1, 4, 4}, rng);
  std::copy(x.v.begin(), x.v.end(), conv.weight().v.begin());
  Tensor y = conv.forward(x, false);
  REQUIRE(y.shape == std::vector<int>{1, 1, 1, 1});
  CHECK(y.v[0] == doctest::Approx(dot(x, x)).epsilon(1e-5));
}

TEST_CASE("conv2d: zero weights give an all-bias output") {
  Conv2dT<float> conv(2, 3, 2, 1);
  conv.bias().v = {0.5f, -1.f, 2.f};
  Rng rng(2);
  Tensor x = random_tensor({2, 2, 8, 8}, rng);
  Tensor y = conv.forward(x, false);
  for (int i = 0; i < y.dim(0); ++i)
    for (int co = 0; co < 3; ++co)
      for (int p = 0; p < 16; ++p)
        CHECK(y.v[(static_cast<size_t>(i) * 3 + co) * 16 + p] == conv.bias().v[co]);
}

TEST_CASE("conv2d: matches the naive six-loop oracle over a shape grid") {
  Rng rng(3);
  for (int n : {1, 2})
    for (int cin : {1, 3})
      for (int cout : {1, 4})
        for (int hw : {4, 5, 8})
          for (int stride : {1, 2})
            for (int pad : {0, 1}) {
              if ((hw + 2 * pad - kKernel) % stride != 0) continue;
              if ((hw + 2 * pad - kKernel) / stride + 1 < 1) continue;
              Conv2dT<float> conv(cin, cout, stride, pad);
              for (float& w : conv.weight().v)
                w = static_cast<float>(rng.uniform(-1.0, 1.0));
              for (float& b : conv.bias().v)
                b = static_cast<float>(rng.uniform(-0.5, 0.5));
              Tensor x = random_tensor({n, cin, hw, hw}, rng);
              Tensor got = conv.forward(x, false);
              Tensor want = naive_conv2d(x, conv.weight(), conv.bias(), stride, pad);
              REQUIRE(got.shape == want.shape);
              for (size_t i = 0; i < got.v.size(); ++i)
                CHECK(std::fabs(got.v[i] - want.v[i]) < 1e-5f);
            }
}

TEST_CASE("conv2d: incompatible shapes raise ShapeError with both shapes named") {
  Conv2dT<float> conv(3, 4, 2, 1);
  Rng rng(4);
  Tensor x = random_tensor({1, 2, 8, 8}, rng);
  CHECK_THROWS_AS(conv.forward(x, false), ShapeError);
  try {
    conv.forward(x, false);
  } catch (const ShapeError& e) {
    std::string msg = e.what();
    CHECK(msg.find("[1,2,8,8]") != std::string::npos);
    CHECK(msg.find("3") != std::string::npos);
  }
}

TEST_CASE("deconv2d: stride-2 pad-1 upsamples 32 to 64") {
  Deconv2dT<float> deconv(2, 3, 2, 1);
  Rng rng(5);
  Tensor x = random_tensor({1, 2, 32, 32}, rng);
  Tensor y = deconv.forward(x, false);
  CHECK(y.shape == std::vector<int>{1, 3, 64, 64});
}

TEST_CASE("deconv2d: 1x1 input with stride 1 reproduces the kernel") {
  Deconv2dT<float> deconv(1, 2, 1, 0);
  Rng rng(6);
  for (float& w : deconv.weight().v) w = static_cast<float>(rng.uniform(-1.0, 1.0));
  deconv.bias().v = {0.25f, -0.5f};
  Tensor x({1, 1, 1, 1});
  x.v[0] = 3.f;
  Tensor y = deconv.forward(x, false);
  REQUIRE(y.shape == std::vector<int>{1, 2, 4, 4});
  for (int co = 0; co < 2; ++co)
    for (int p = 0; p < 16; ++p)
      CHECK(y.v[static_cast<size_t>(co) * 16 + p] ==
            doctest::Approx(3.f * deconv.weight().v[static_cast<size_t>(co) * 16 + p] +
                            deconv.bias().v[co])
                .epsilon(1e-6));
}

TEST_CASE("deconv2d: exact adjoint of conv2d for the strides and paddings in use") {
  Rng rng(7);
  struct Case {
    int cin, cout, h, stride, pad;
  };
  for (Case c : {Case{3, 5, 8, 2, 1}, Case{4, 2, 4, 1, 0}, Case{2, 2, 6, 1, 1}}) {
    // y = conv(x), then <conv(x), u> must equal <x, deconv(u)> with the same
    // kernel (zero biases).
    Conv2dT<float> conv(c.cin, c.cout, c.stride, c.pad);
    for (float& w : conv.weight().v) w = static_cast<float>(rng.uniform(-1.0, 1.0));
    Tensor x = random_tensor({2, c.cin, c.h, c.h}, rng);
    Tensor y = conv.forward(x, false);
    Tensor u = random_tensor(y.shape, rng);

    Deconv2dT<float> deconv(c.cout, c.cin, c.stride, c.pad);
    // conv weight [cout, cin, k, k] -> deconv weight [cout, cin, k, k]; the
    // deconv treats dim 0 as its input channels, so the layouts coincide.
    deconv.weight().v = conv.weight().v;
    Tensor v = deconv.forward(u, false);
    REQUIRE(v.shape == x.shape);
    double lhs = dot(y, u);
    double rhs = dot(x, v);
    CHECK(std::fabs(lhs - rhs) / std::max({std::fabs(lhs), std::fabs(rhs), 1.0}) < 1e-4);
  }
}

TEST_CASE("batchnorm: train-mode output has mean 0 and variance 1 per channel") {
  BatchNorm2dT<float> bn(3);
  Rng rng(8);
  Tensor x = random_tensor({8, 3, 6, 6}, rng);
  for (float& v : x.v) v = v * 2.f + 0.7f;
  Tensor y = bn.forward(x, true);
  int64_t m = 8 * 36;
  for (int c = 0; c < 3; ++c) {
    double sum = 0.0, sum_sq = 0.0;
    for (int i = 0; i < 8; ++i)
      for (int p = 0; p < 36; ++p) {
        double v = y.v[(static_cast<size_t>(i) * 3 + c) * 36 + p];
        sum += v;
        sum_sq += v * v;
      }
    double mean = sum / m;
    double var = sum_sq / m - mean * mean;
    CHECK(std::fabs(mean) < 1e-4);
    CHECK(std::fabs(var - 1.0) < 1e-3);
  }
}

TEST_CASE("batchnorm: unit gamma and zero beta on a standardized input is near identity") {
  BatchNorm2dT<float> bn(2);
  Rng rng(9);
  // Large batch so the batch statistics are close to the true (0,1).
  Tensor x({64, 2, 4, 4});
  for (float& v : x.v) v = static_cast<float>(rng.normal(0.0, 1.0));
  Tensor y = bn.forward(x, true);
  double worst = 0.0;
  for (size_t i = 0; i < x.v.size(); ++i)
    worst = std::max(worst, static_cast<double>(std::fabs(y.v[i] - x.v[i])));
  CHECK(worst < 0.15);  // batch statistics wobble, not a strict identity
}

TEST_CASE("batchnorm: batch of 1 in train mode throws BatchTooSmall") {
  BatchNorm2dT<float> bn(2);
  Rng rng(10);
  Tensor x = random_tensor({1, 2, 4, 4}, rng);
  CHECK_THROWS_AS(bn.forward(x, true), BatchTooSmall);
  CHECK_NOTHROW(bn.forward(x, false));
}

TEST_CASE("activations: spot values") {
  ActivationT<float> leaky(Activation::LeakyRelu, 0.2);
  Tensor x({1, 4});
  x.v = {-1.f, 2.f, 0.f, -10.f};
  Tensor y = leaky.forward(x, false);
  CHECK(y.v[0] == doctest::Approx(-0.2f));
  CHECK(y.v[1] == doctest::Approx(2.f));
  CHECK(y.v[2] == 0.f);
  CHECK(y.v[3] == doctest::Approx(-2.f));

  ActivationT<float> elu(Activation::Elu, 1.0);
  Tensor x2({1, 3});
  x2.v = {0.f, -20.f, 1.5f};
  Tensor y2 = elu.forward(x2, false);
  CHECK(y2.v[0] == 0.f);
  CHECK(std::fabs(y2.v[1] + 1.f) < 1e-8f);
  CHECK(y2.v[2] == 1.5f);

  ActivationT<float> relu(Activation::Relu);
  Tensor x3({1, 2});
  x3.v = {-3.f, 3.f};
  Tensor y3 = relu.forward(x3, false);
  CHECK(y3.v[0] == 0.f);
  CHECK(y3.v[1] == 3.f);
}

TEST_CASE("softmax: uniform logits give exact quarters; rows sum to 1") {
  Tensor logits({2, 4});
  logits.v = {0.3f, 0.3f, 0.3f, 0.3f, -1.f, 2.f, 0.5f, 0.f};
  Tensor p = softmax(logits);
  for (int c = 0; c < 4; ++c) CHECK(std::fabs(p.v[c] - 0.25f) < 1e-6f);
  double s = p.v[4] + p.v[5] + p.v[6] + p.v[7];
  CHECK(std::fabs(s - 1.0) < 1e-6);
  for (int c = 4; c < 8; ++c) CHECK(p.v[c] > 0.f);
}

TEST_CASE("softmax: permutation equivariance") {
  Rng rng(12);
  Tensor logits({1, 4});
  for (float& v : logits.v) v = static_cast<float>(rng.uniform(-3.0, 3.0));
  Tensor p = softmax(logits);
  Tensor permuted({1, 4});
  int perm[4] = {2, 0, 3, 1};
  for (int i = 0; i < 4; ++i) permuted.v[i] = logits.v[perm[i]];
  Tensor q = softmax(permuted);
  for (int i = 0; i < 4; ++i) CHECK(q.v[i] == doctest::Approx(p.v[perm[i]]).epsilon(1e-6));
}

TEST_CASE("cross entropy: uniform logits cost ln 4") {
  Tensor logits({3, 4});
  std::fill(logits.v.begin(), logits.v.end(), 0.42f);
  std::vector<int> labels{0, 2, 3};
  auto [loss, grad] = softmax_cross_entropy(logits, std::span<const int>(labels));
  CHECK(loss == doctest::Approx(std::log(4.0)).epsilon(1e-6));
  CHECK(grad.shape == logits.shape);
}

TEST_CASE("cross entropy: label out of range throws LabelError") {
  Tensor logits({1, 4});
  std::vector<int> labels{4};
  CHECK_THROWS_AS(softmax_cross_entropy(logits, std::span<const int>(labels)), LabelError);
}

TEST_CASE("mse: identical tensors cost zero") {
  Rng rng(13);
  Tensor a = random_tensor({2, 3, 4, 4}, rng);
  auto [loss, grad] = mse_loss(a, a);
  CHECK(loss == 0.0);
  for (float g : grad.v) CHECK(g == 0.f);
}

TEST_CASE("loss gradients match finite differences") {
  CHECK(grad_check_cross_entropy(21) < 1e-3);
  CHECK(grad_check_mse(22) < 1e-3);
}

TEST_CASE("adam: zero gradient leaves parameters and moments untouched") {
  Tensor p({3});
  p.v = {1.f, -2.f, 0.5f};
  p.alloc_grad();
  std::vector<Tensor*> params{&p};
  AdamState st;
  st.init(params);
  adam_step(params, st, 1e-2);
  CHECK(p.v[0] == 1.f);
  CHECK(p.v[1] == -2.f);
  CHECK(p.v[2] == 0.5f);
  for (float m : st.m[0]) CHECK(m == 0.f);
  for (float v : st.v[0]) CHECK(v == 0.f);
  CHECK(st.step == 1);
}

TEST_CASE("adam: first step matches the closed form") {
  // With fresh moments the bias corrections cancel: step = -lr * g/(|g|+eps).
  Tensor p({2});
  p.v = {1.f, 1.f};
  p.alloc_grad();
  p.g = {0.3f, -0.02f};
  std::vector<Tensor*> params{&p};
  AdamState st;
  st.init(params);
  double lr = 1e-3;
  adam_step(params, st, lr);
  for (int i = 0; i < 2; ++i) {
    double g = i == 0 ? 0.3 : -0.02;
    double want = 1.0 - lr * g / (std::fabs(g) + st.eps);
    CHECK(p.v[i] == doctest::Approx(want).epsilon(1e-6));
  }
}

TEST_CASE("adam: constant gradient moves monotonically against it") {
  Tensor p({1});
  p.v = {0.f};
  p.alloc_grad();
  std::vector<Tensor*> params{&p};
  AdamState st;
  st.init(params);
  float prev = 0.f;
  for (int step = 0; step < 2; ++step) {
    p.g = {1.f};
    adam_step(params, st, 1e-2);
    CHECK(p.v[0] < prev);
    prev = p.v[0];
  }
}

TEST_CASE("lr schedule: exact decade values") {
  LrSchedule sched;
  sched.base_lr = 2e-4;
  CHECK(sched.at(0) == 2e-4);
  CHECK(sched.at(99) == 2e-4);
  CHECK(sched.at(100) == 0.1 * 2e-4);
  CHECK(sched.at(250) == 0.01 * 2e-4);
}

TEST_CASE("grad_check_all: every layer kind passes at its tolerance") {
  GradCheckReport report = grad_check_all(1);
  CHECK(report.entries.size() == 10);
  for (const GradCheckEntry& e : report.entries) {
    INFO(e.name, " max_rel_err=", e.max_rel_err, " tol=", e.tolerance);
    CHECK(e.pass());
  }
}

TEST_CASE("grad_check: a sabotaged backward pass is detected") {
  // Negative control: a conv whose weight gradient is scaled by 1.05 must
  // fail the finite-difference comparison.
  struct BrokenConv : Conv2dT<double> {
    using Conv2dT<double>::Conv2dT;
    TensorT<double> backward(const TensorT<double>& dy, bool need) override {
      TensorT<double> dx = Conv2dT<double>::backward(dy, need);
      for (double& g : weight().g) g *= 1.05;
      return dx;
    }
  };
  BrokenConv conv(2, 3, 2, 1);
  Rng rng(33);
  for (double& w : conv.weight().v) w = rng.normal(0.0, 0.2);
  TensorT<double> x({2, 2, 8, 8});
  for (double& v : x.v) v = rng.uniform(-1.0, 1.0);
  double err = grad_check_layer(conv, x, 34);
  CHECK(err > 1e-3);
}

TEST_CASE("forward/backward passes are deterministic") {
  auto run = [] {
    Rng rng(55);
    Conv2dT<float> conv(3, 8, 2, 1);
    for (float& w : conv.weight().v) w = static_cast<float>(rng.normal(0.0, 0.1));
    Tensor x({4, 3, 16, 16});
    for (float& v : x.v) v = static_cast<float>(rng.uniform(-1.0, 1.0));
    Tensor y = conv.forward(x, true);
    Tensor dy(y.shape);
    for (float& v : dy.v) v = static_cast<float>(rng.uniform(-1.0, 1.0));
    Tensor dx = conv.backward(dy, true);
    return std::make_pair(y.v, dx.v);
  };
  auto [y1, dx1] = run();
  auto [y2, dx2] = run();
  CHECK(y1 == y2);
  CHECK(dx1 == dx2);
}
