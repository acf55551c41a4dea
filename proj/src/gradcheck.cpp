#include "shapeiq/gradcheck.hpp"

#include <cmath>

#include "shapeiq/rng.hpp"

namespace shapeiq {

namespace {

TensorT<double> random_tensor(const std::vector<int>& shape, Rng& rng, double lo,
                              double hi) {
  TensorT<double> t(shape);
  for (double& v : t.v) v = rng.uniform(lo, hi);
  return t;
}

// Uniform magnitudes in [0.1, 1] with random signs: keeps activation inputs
// away from their kinks.
TensorT<double> nudged_tensor(const std::vector<int>& shape, Rng& rng) {
  TensorT<double> t(shape);
  for (double& v : t.v) v = (rng.coin() ? 1.0 : -1.0) * rng.uniform(0.1, 1.0);
  return t;
}

double rel_err(double a, double b) {
  double denom = std::max(std::max(std::fabs(a), std::fabs(b)), 1e-6);
  return std::fabs(a - b) / denom;
}

double check_against_fd(SequentialT<double>& net, const TensorT<double>& input,
                        const TensorT<double>& projection, double h) {
  TensorT<double> x = input;
  TensorT<double> y = net.forward(x, /*train=*/true);
  net.zero_grad();
  TensorT<double> dx = net.backward(projection, /*need_input_grad=*/true);
  std::vector<TensorT<double>*> params = net.params();

  auto loss_at = [&]() {
    TensorT<double> out = net.forward(x, /*train=*/true);
    double acc = 0.0;
    for (size_t i = 0; i < out.v.size(); ++i) acc += out.v[i] * projection.v[i];
    return acc;
  };

  double worst = 0.0;
  for (size_t i = 0; i < x.v.size(); ++i) {
    double keep = x.v[i];
    x.v[i] = keep + h;
    double lp = loss_at();
    x.v[i] = keep - h;
    double lm = loss_at();
    x.v[i] = keep;
    worst = std::max(worst, rel_err((lp - lm) / (2.0 * h), dx.v[i]));
  }
  for (TensorT<double>* p : params)
    for (size_t i = 0; i < p->v.size(); ++i) {
      double keep = p->v[i];
      p->v[i] = keep + h;
      double lp = loss_at();
      p->v[i] = keep - h;
      double lm = loss_at();
      p->v[i] = keep;
      worst = std::max(worst, rel_err((lp - lm) / (2.0 * h), p->g[i]));
    }
  return worst;
}

void init_double_params(SequentialT<double>& net, Rng& rng) {
  for (TensorT<double>* p : net.params())
    for (double& v : p->v) v = rng.normal(0.0, 0.2);
}

}  // namespace

double grad_check_sequential(SequentialT<double>& net, const TensorT<double>& input,
                             uint64_t seed, double h) {
  Rng rng(mix_seed(seed, 0x96ADC4ECULL));
  TensorT<double> probe = net.forward(input, /*train=*/true);
  TensorT<double> projection = random_tensor(probe.shape, rng, -1.0, 1.0);
  return check_against_fd(net, input, projection, h);
}

double grad_check_layer(LayerT<double>& layer, const TensorT<double>& input,
                        uint64_t seed, double h) {
  SequentialT<double> net;
  struct Borrow : LayerT<double> {
    LayerT<double>* inner;
    explicit Borrow(LayerT<double>* l) : inner(l) {}
    TensorT<double> forward(const TensorT<double>& x, bool train) override {
      return inner->forward(x, train);
    }
    TensorT<double> backward(const TensorT<double>& dy, bool need) override {
      return inner->backward(dy, need);
    }
    void collect_params(std::vector<TensorT<double>*>& out) override {
      inner->collect_params(out);
    }
    std::string name() const override { return inner->name(); }
  };
  net.add(std::make_unique<Borrow>(&layer));
  return grad_check_sequential(net, input, seed, h);
}

double grad_check_cross_entropy(uint64_t seed, double h) {
  Rng rng(seed);
  TensorT<double> logits = random_tensor({5, 4}, rng, -2.0, 2.0);
  std::vector<int> labels(5);
  for (int& l : labels) l = rng.uniform_int(0, 3);
  auto [loss, dlogits] = softmax_cross_entropy(logits, std::span<const int>(labels));
  (void)loss;
  double worst = 0.0;
  for (size_t i = 0; i < logits.v.size(); ++i) {
    double keep = logits.v[i];
    logits.v[i] = keep + h;
    double lp = softmax_cross_entropy(logits, std::span<const int>(labels)).first;
    logits.v[i] = keep - h;
    double lm = softmax_cross_entropy(logits, std::span<const int>(labels)).first;
    logits.v[i] = keep;
    worst = std::max(worst, rel_err((lp - lm) / (2.0 * h), dlogits.v[i]));
  }
  return worst;
}

double grad_check_mse(uint64_t seed, double h) {
  Rng rng(seed);
  TensorT<double> pred = random_tensor({3, 7}, rng, -1.0, 1.0);
  TensorT<double> target = random_tensor({3, 7}, rng, -1.0, 1.0);
  auto [loss, dpred] = mse_loss(pred, target);
  (void)loss;
  double worst = 0.0;
  for (size_t i = 0; i < pred.v.size(); ++i) {
    double keep = pred.v[i];
    pred.v[i] = keep + h;
    double lp = mse_loss(pred, target).first;
    pred.v[i] = keep - h;
    double lm = mse_loss(pred, target).first;
    pred.v[i] = keep;
    worst = std::max(worst, rel_err((lp - lm) / (2.0 * h), dpred.v[i]));
  }
  return worst;
}

GradCheckReport grad_check_all(uint64_t seed) {
  GradCheckReport report;
  auto add = [&](const std::string& name, double err, double tol) {
    report.entries.push_back({name, err, tol});
  };

  {
    Conv2dT<double> conv(3, 4, 2, 1);
    Rng rng(mix_seed(seed, 1));
    for (double& w : conv.weight().v) w = rng.normal(0.0, 0.2);
    TensorT<double> x = random_tensor({2, 3, 8, 8}, rng, -1.0, 1.0);
    double err = grad_check_layer(conv, x, seed);
    Conv2dT<double> conv_valid(3, 2, 1, 0);
    for (double& w : conv_valid.weight().v) w = rng.normal(0.0, 0.2);
    err = std::max(err, grad_check_layer(conv_valid, x, seed + 1));
    add("conv2d", err, 1e-3);
  }
  {
    Deconv2dT<double> deconv(4, 3, 2, 1);
    Rng rng(mix_seed(seed, 2));
    for (double& w : deconv.weight().v) w = rng.normal(0.0, 0.2);
    TensorT<double> x = random_tensor({2, 4, 4, 4}, rng, -1.0, 1.0);
    double err = grad_check_layer(deconv, x, seed + 2);
    Deconv2dT<double> deconv_valid(5, 3, 1, 0);
    for (double& w : deconv_valid.weight().v) w = rng.normal(0.0, 0.2);
    TensorT<double> x1 = random_tensor({2, 5, 1, 1}, rng, -1.0, 1.0);
    err = std::max(err, grad_check_layer(deconv_valid, x1, seed + 3));
    add("deconv2d", err, 1e-3);
  }
  {
    BatchNorm2dT<double> bn(3);
    Rng rng(mix_seed(seed, 3));
    TensorT<double> x = random_tensor({4, 3, 5, 5}, rng, -1.5, 1.5);
    add("batchnorm", grad_check_layer(bn, x, seed + 4), 1e-3);
  }
  {
    Rng rng(mix_seed(seed, 4));
    ActivationT<double> relu(Activation::Relu);
    TensorT<double> x = nudged_tensor({2, 3, 6, 6}, rng);
    add("relu", grad_check_layer(relu, x, seed + 5), 1e-3);
    ActivationT<double> leaky(Activation::LeakyRelu, 0.2);
    TensorT<double> x2 = nudged_tensor({2, 3, 6, 6}, rng);
    add("leaky_relu", grad_check_layer(leaky, x2, seed + 6), 1e-3);
    ActivationT<double> elu(Activation::Elu, 1.0);
    TensorT<double> x3 = nudged_tensor({2, 3, 6, 6}, rng);
    add("elu", grad_check_layer(elu, x3, seed + 7), 1e-3);
  }
  {
    LinearT<double> linear(37, 5);
    Rng rng(mix_seed(seed, 5));
    for (double& w : linear.weight().v) w = rng.normal(0.0, 0.2);
    TensorT<double> x = random_tensor({4, 37}, rng, -1.0, 1.0);
    add("linear", grad_check_layer(linear, x, seed + 8), 1e-4);
  }
  {
    // Two conv+bn+relu blocks; the seed is advanced until every relu input is
    // clear of the kink so the finite differences stay two-sided.
    double err = 0.0;
    for (uint64_t attempt = 0;; ++attempt) {
      SequentialT<double> net;
      net.add(std::make_unique<Conv2dT<double>>(3, 5, 2, 1));
      net.add(std::make_unique<BatchNorm2dT<double>>(5));
      net.add(std::make_unique<ActivationT<double>>(Activation::Relu));
      net.add(std::make_unique<Conv2dT<double>>(5, 4, 2, 1));
      net.add(std::make_unique<BatchNorm2dT<double>>(4));
      net.add(std::make_unique<ActivationT<double>>(Activation::Relu));
      Rng rng(mix_seed(seed, 6 + attempt));
      init_double_params(net, rng);
      TensorT<double> x = random_tensor({2, 3, 8, 8}, rng, -1.0, 1.0);
      std::vector<TensorT<double>> values = net.forward_all(x, /*train=*/true);
      double margin = 1e30;
      for (size_t li = 0; li < net.size(); ++li)
        if (net.layer(li).name() == "relu")
          for (double v : values[li].v) margin = std::min(margin, std::fabs(v));
      if (margin < 5e-3 && attempt < 64) continue;
      err = grad_check_sequential(net, x, seed + 9);
      break;
    }
    add("conv_bn_relu_stack", err, 5e-3);
  }
  add("softmax_cross_entropy", grad_check_cross_entropy(seed + 10), 1e-3);
  add("mse", grad_check_mse(seed + 11), 1e-3);
  return report;
}

}  // namespace shapeiq
