#include "shapeiq/models.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <ostream>

#include "shapeiq/gemm.hpp"
#include "shapeiq/rng.hpp"

#ifdef _OPENMP
#include <omp.h>
#endif

namespace shapeiq {

namespace {

void init_params(SequentialT<float>& net, Rng& rng) {
  for (size_t i = 0; i < net.size(); ++i) {
    LayerT<float>& layer = net.layer(i);
    Tensor* weight = nullptr;
    if (auto* conv = dynamic_cast<Conv2dT<float>*>(&layer)) weight = &conv->weight();
    else if (auto* deconv = dynamic_cast<Deconv2dT<float>*>(&layer)) weight = &deconv->weight();
    else if (auto* linear = dynamic_cast<LinearT<float>*>(&layer)) weight = &linear->weight();
    if (weight)
      for (float& w : weight->v) w = static_cast<float>(rng.normal(0.0, 0.02));
  }
}

struct ChannelScale {
  float scale[3];
  float shift[3];
};

// (u8/255 - mean) / std folded into scale * u8 + shift.
ChannelScale fold_stats(const NormalizationStats& stats) {
  ChannelScale cs{};
  for (int c = 0; c < 3; ++c) {
    cs.scale[c] = static_cast<float>(1.0 / (255.0 * stats.std[c]));
    cs.shift[c] = static_cast<float>(-stats.mean[c] / stats.std[c]);
  }
  return cs;
}

void fill_frame_channels(float* dst, const uint8_t* frame, const ChannelScale& cs) {
  constexpr int plane = kCanvasSize * kCanvasSize;
  for (int c = 0; c < 3; ++c) {
    float scale = cs.scale[c], shift = cs.shift[c];
    float* out = dst + static_cast<size_t>(c) * plane;
    for (int p = 0; p < plane; ++p) out[p] = frame[3 * p + c] * scale + shift;
  }
}

std::array<int, 4> identity_perm() { return {0, 1, 2, 3}; }

std::array<int, 4> random_perm4(Rng& rng) {
  std::array<int, 4> p{0, 1, 2, 3};
  for (int i = 3; i > 0; --i) std::swap(p[i], p[rng.uniform_int(0, i)]);
  return p;
}

// Stacks context + options channelwise; options are placed according to perm
// (slot j shows original option perm[j]) and the label moves with them.
void fill_classifier_sample(float* dst, const DatasetRecord& rec,
                            const ChannelScale& cs, const std::array<int, 4>& perm,
                            int* label) {
  constexpr int plane = kCanvasSize * kCanvasSize;
  for (int slot = 0; slot < 3; ++slot)
    fill_frame_channels(dst + static_cast<size_t>(slot) * 3 * plane, rec.frame(slot), cs);
  for (int slot = 0; slot < 4; ++slot) {
    fill_frame_channels(dst + static_cast<size_t>(3 + slot) * 3 * plane,
                        rec.frame(3 + perm[slot]), cs);
    if (perm[slot] == rec.answer) *label = slot;
  }
}

int argmax4(const float* v) {
  int best = 0;
  for (int i = 1; i < 4; ++i)
    if (v[i] > v[best]) best = i;
  return best;
}

double classifier_pass(Classifier& model, const Dataset& data,
                       const std::vector<uint32_t>& indices, bool train,
                       bool augment, uint64_t augment_seed, int batch_size,
                       AdamState* opt, double lr, double* accuracy_out,
                       ClassifierEval* eval_out) {
  const ChannelScale cs = fold_stats(model.stats);
  const int channels = model.config.input_channels();
  constexpr int plane = kCanvasSize * kCanvasSize;
  std::vector<Tensor*> params = train ? model.net.params() : std::vector<Tensor*>{};
  double loss_sum = 0.0;
  int64_t loss_batches = 0;
  int64_t correct = 0, total = 0;
  for (size_t start = 0; start < indices.size(); start += batch_size) {
    size_t end = std::min(start + batch_size, indices.size());
    int b = static_cast<int>(end - start);
    if (train && b < 2) break;  // batchnorm needs at least 2 rows
    Tensor x({b, channels, kCanvasSize, kCanvasSize});
    std::vector<int> labels(b);
#ifdef _OPENMP
#pragma omp parallel for schedule(static) num_threads(compute_threads())
#endif
    for (int i = 0; i < b; ++i) {
      uint32_t rec_idx = indices[start + i];
      std::array<int, 4> perm = identity_perm();
      if (augment) {
        Rng perm_rng(mix_seed(augment_seed, rec_idx));
        perm = random_perm4(perm_rng);
      }
      fill_classifier_sample(x.data() + static_cast<size_t>(i) * channels * plane,
                             data.records[rec_idx], cs, perm, &labels[i]);
    }
    Tensor logits = model.net.forward(x, train);
    auto [loss, dlogits] = softmax_cross_entropy(logits, std::span<const int>(labels));
    loss_sum += loss;
    ++loss_batches;
    if (train) {
      model.net.zero_grad();
      model.net.backward(dlogits);
      adam_step(params, *opt, lr);
    }
    if (accuracy_out || eval_out) {
      Tensor probs = softmax(logits);
      for (int i = 0; i < b; ++i) {
        const float* p = probs.data() + static_cast<size_t>(i) * 4;
        int pred = argmax4(p);
        correct += pred == labels[i];
        ++total;
        if (eval_out) {
          const DatasetRecord& rec = data.records[indices[start + i]];
          PredictionRecord pr;
          pr.index = static_cast<int>(indices[start + i]);
          pr.family = static_cast<QuestionFamily>(rec.family);
          pr.label = labels[i];
          pr.predicted = pred;
          std::copy(p, p + 4, pr.probs.begin());
          eval_out->predictions.push_back(pr);
        }
      }
    }
  }
  if (accuracy_out) *accuracy_out = total > 0 ? static_cast<double>(correct) / total : 0.0;
  return loss_batches > 0 ? loss_sum / loss_batches : 0.0;
}

std::vector<uint32_t> shuffled_indices(size_t begin, size_t end, uint64_t seed) {
  std::vector<uint32_t> order;
  order.reserve(end - begin);
  for (size_t i = begin; i < end; ++i) order.push_back(static_cast<uint32_t>(i));
  Rng rng(seed);
  for (size_t i = order.size(); i > 1; --i)
    std::swap(order[i - 1], order[rng.uniform_int(0, static_cast<int>(i) - 1)]);
  return order;
}

std::vector<uint32_t> range_indices(size_t begin, size_t end) {
  std::vector<uint32_t> order;
  order.reserve(end - begin);
  for (size_t i = begin; i < end; ++i) order.push_back(static_cast<uint32_t>(i));
  return order;
}

}  // namespace

Classifier build_classifier(const ClassifierConfig& config) {
  Classifier model;
  model.config = config;
  int in_ch = config.input_channels();
  int spatial = kCanvasSize;
  for (int width : config.conv_widths) {
    model.net.add(std::make_unique<Conv2dT<float>>(in_ch, width, 2, 1));
    model.net.add(std::make_unique<BatchNorm2dT<float>>(width));
    model.net.add(std::make_unique<ActivationT<float>>(Activation::Relu));
    in_ch = width;
    spatial /= 2;
  }
  model.net.add(std::make_unique<LinearT<float>>(in_ch * spatial * spatial, 4));
  Rng rng(config.init_seed);
  init_params(model.net, rng);
  return model;
}

Autoencoder build_autoencoder(const AutoencoderConfig& config) {
  Autoencoder model;
  model.config = config;
  int in_ch = 6;
  for (int width : config.conv_widths) {
    model.encoder.add(std::make_unique<Conv2dT<float>>(in_ch, width, 2, 1));
    model.encoder.add(std::make_unique<ActivationT<float>>(Activation::LeakyRelu, 0.2));
    in_ch = width;
  }
  model.encoder.add(std::make_unique<Conv2dT<float>>(in_ch, config.code_dim, 1, 0));
  model.encoder.add(std::make_unique<ActivationT<float>>(Activation::LeakyRelu, 0.2));

  model.decoder.add(std::make_unique<Deconv2dT<float>>(config.code_dim,
                                                       config.conv_widths[3], 1, 0));
  model.decoder.add(std::make_unique<ActivationT<float>>(Activation::Elu, 1.0));
  for (int i = 3; i > 0; --i) {
    model.decoder.add(std::make_unique<Deconv2dT<float>>(config.conv_widths[i],
                                                         config.conv_widths[i - 1], 2, 1));
    model.decoder.add(std::make_unique<ActivationT<float>>(Activation::Elu, 1.0));
  }
  model.decoder.add(std::make_unique<Deconv2dT<float>>(config.conv_widths[0], 3, 2, 1));

  Rng rng(config.init_seed);
  init_params(model.encoder, rng);
  init_params(model.decoder, rng);
  return model;
}

int64_t param_count(std::vector<Tensor*> params) {
  int64_t n = 0;
  for (Tensor* p : params) n += p->numel();
  return n;
}

TrainHistory train_classifier(Classifier& model, const Dataset& data,
                              const TrainConfig& config) {
  if (data.manifest.scenario != Scenario::MultipleChoice)
    throw ScenarioError("classifier training needs a multiple-choice dataset");
  model.stats = data.manifest.stats;
  size_t n = data.records.size();
  size_t val_n = config.val_fraction > 0
                     ? std::max<size_t>(1, static_cast<size_t>(std::llround(
                                               static_cast<double>(n) * config.val_fraction)))
                     : 0;
  if (val_n >= n) val_n = n > 1 ? 1 : 0;
  size_t train_n = n - val_n;

  std::vector<Tensor*> params = model.net.params();
  AdamState opt;
  opt.init(params);

  TrainHistory history;
  std::vector<uint32_t> val_idx = range_indices(train_n, n);
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    double lr = config.schedule.at(epoch);
    std::vector<uint32_t> order =
        shuffled_indices(0, train_n, mix_seed(config.seed, 0xE70C000ULL + epoch));
    EpochStats st;
    st.epoch = epoch;
    st.lr = lr;
    st.train_loss = classifier_pass(model, data, order, /*train=*/true,
                                    config.option_augment,
                                    mix_seed(config.seed, 0xA06000ULL + epoch),
                                    config.batch_size, &opt, lr, nullptr, nullptr);
    if (!val_idx.empty())
      st.val_loss = classifier_pass(model, data, val_idx, /*train=*/false,
                                    /*augment=*/false, 0, config.batch_size, nullptr,
                                    0.0, &st.val_accuracy, nullptr);
    history.epochs.push_back(st);
    if (config.log)
      (*config.log) << "epoch " << epoch + 1 << "/" << config.epochs << " lr=" << lr
                    << " train_loss=" << st.train_loss << " val_loss=" << st.val_loss
                    << " val_acc=" << st.val_accuracy << std::endl;
  }
  return history;
}

namespace {

struct AePassResult {
  double loss = 0.0;      // normalized-space mse
  double mse = 0.0;       // [0,1] intensity space
};

AePassResult autoencoder_pass(Autoencoder& model, const Dataset& data,
                              const std::vector<uint32_t>& indices, bool train,
                              int batch_size, AdamState* opt, double lr,
                              AutoencoderEval* eval_out) {
  const ChannelScale cs = fold_stats(model.stats);
  constexpr int plane = kCanvasSize * kCanvasSize;
  std::vector<Tensor*> params = train ? model.params() : std::vector<Tensor*>{};
  double loss_sum = 0.0;
  int64_t loss_batches = 0;
  double mse_sum = 0.0;
  int64_t mse_count = 0;
  for (size_t start = 0; start < indices.size(); start += batch_size) {
    size_t end = std::min(start + batch_size, indices.size());
    int b = static_cast<int>(end - start);
    Tensor x({b, 6, kCanvasSize, kCanvasSize});
    Tensor target({b, 3, kCanvasSize, kCanvasSize});
#ifdef _OPENMP
#pragma omp parallel for schedule(static) num_threads(compute_threads())
#endif
    for (int i = 0; i < b; ++i) {
      const DatasetRecord& rec = data.records[indices[start + i]];
      fill_frame_channels(x.data() + static_cast<size_t>(i) * 6 * plane, rec.frame(0), cs);
      fill_frame_channels(x.data() + (static_cast<size_t>(i) * 6 + 3) * plane,
                          rec.frame(1), cs);
      fill_frame_channels(target.data() + static_cast<size_t>(i) * 3 * plane,
                          rec.frame(2), cs);
    }
    Tensor code = model.encoder.forward(x, train);
    Tensor pred = model.decoder.forward(code, train);
    auto [loss, dpred] = mse_loss(pred, target);
    loss_sum += loss;
    ++loss_batches;
    if (train) {
      model.encoder.zero_grad();
      model.decoder.zero_grad();
      Tensor dcode = model.decoder.backward(dpred, /*need_input_grad=*/true);
      model.encoder.backward(dcode);
      adam_step(params, *opt, lr);
    } else {
      // Evaluation metric: mse in denormalized [0,1] intensity space.
      for (int i = 0; i < b; ++i) {
        double acc = 0.0;
        const float* pv = pred.data() + static_cast<size_t>(i) * 3 * plane;
        const DatasetRecord& rec = data.records[indices[start + i]];
        const uint8_t* tgt = rec.frame(2);
        for (int c = 0; c < 3; ++c) {
          double mean = model.stats.mean[c], sd = model.stats.std[c];
          for (int p = 0; p < plane; ++p) {
            double denorm = std::clamp(pv[static_cast<size_t>(c) * plane + p] * sd + mean,
                                       0.0, 1.0);
            double d = denorm - tgt[3 * p + c] / 255.0;
            acc += d * d;
          }
        }
        double q_mse = acc / (3.0 * plane);
        mse_sum += q_mse;
        ++mse_count;
        if (eval_out) eval_out->per_question_mse.push_back(q_mse);
      }
    }
  }
  AePassResult r;
  r.loss = loss_batches > 0 ? loss_sum / loss_batches : 0.0;
  r.mse = mse_count > 0 ? mse_sum / static_cast<double>(mse_count) : 0.0;
  return r;
}

}  // namespace

TrainHistory train_autoencoder(Autoencoder& model, const Dataset& data,
                               const TrainConfig& config) {
  if (data.manifest.scenario != Scenario::Open)
    throw ScenarioError("autoencoder training needs an open-question dataset");
  model.stats = data.manifest.stats;
  size_t n = data.records.size();
  size_t val_n = config.val_fraction > 0
                     ? std::max<size_t>(1, static_cast<size_t>(std::llround(
                                               static_cast<double>(n) * config.val_fraction)))
                     : 0;
  if (val_n >= n) val_n = n > 1 ? 1 : 0;
  size_t train_n = n - val_n;

  std::vector<Tensor*> params = model.params();
  AdamState opt;
  opt.init(params);

  TrainHistory history;
  std::vector<uint32_t> val_idx = range_indices(train_n, n);
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    double lr = config.schedule.at(epoch);
    std::vector<uint32_t> order =
        shuffled_indices(0, train_n, mix_seed(config.seed, 0xE70C000ULL + epoch));
    EpochStats st;
    st.epoch = epoch;
    st.lr = lr;
    st.train_loss = autoencoder_pass(model, data, order, /*train=*/true,
                                     config.batch_size, &opt, lr, nullptr)
                        .loss;
    if (!val_idx.empty()) {
      AePassResult vr = autoencoder_pass(model, data, val_idx, /*train=*/false,
                                         config.batch_size, nullptr, 0.0, nullptr);
      st.val_loss = vr.loss;
      st.val_mse = vr.mse;
    }
    history.epochs.push_back(st);
    if (config.log)
      (*config.log) << "epoch " << epoch + 1 << "/" << config.epochs << " lr=" << lr
                    << " train_loss=" << st.train_loss << " val_loss=" << st.val_loss
                    << " val_mse=" << st.val_mse << std::endl;
  }
  return history;
}

ClassifierEval evaluate_classifier(Classifier& model, const Dataset& data) {
  if (data.manifest.scenario != Scenario::MultipleChoice)
    throw ScenarioError("classifier evaluation needs a multiple-choice dataset");
  ClassifierEval eval;
  std::vector<uint32_t> idx = range_indices(0, data.records.size());
  classifier_pass(model, data, idx, /*train=*/false, /*augment=*/false, 0, 64, nullptr,
                  0.0, nullptr, &eval);
  std::array<int64_t, kFamilyCount> count{}, correct{};
  std::array<double, kFamilyCount> prob_sum{};
  int64_t all_correct = 0;
  double all_prob = 0.0;
  for (const PredictionRecord& pr : eval.predictions) {
    size_t f = static_cast<size_t>(pr.family);
    ++count[f];
    correct[f] += pr.predicted == pr.label;
    prob_sum[f] += pr.probs[pr.label];
    all_correct += pr.predicted == pr.label;
    all_prob += pr.probs[pr.label];
  }
  for (int f = 0; f < kFamilyCount; ++f) {
    if (count[f] == 0) continue;
    FamilyAccuracy fa;
    fa.family = static_cast<QuestionFamily>(f);
    fa.count = static_cast<int>(count[f]);
    fa.accuracy = static_cast<double>(correct[f]) / count[f];
    fa.mean_correct_prob = prob_sum[f] / count[f];
    eval.per_family.push_back(fa);
  }
  eval.count = static_cast<int>(eval.predictions.size());
  if (eval.count > 0) {
    eval.overall_accuracy = static_cast<double>(all_correct) / eval.count;
    eval.overall_mean_correct_prob = all_prob / eval.count;
  }
  return eval;
}

AutoencoderEval evaluate_autoencoder(Autoencoder& model, const Dataset& data) {
  if (data.manifest.scenario != Scenario::Open)
    throw ScenarioError("autoencoder evaluation needs an open-question dataset");
  AutoencoderEval eval;
  std::vector<uint32_t> idx = range_indices(0, data.records.size());
  autoencoder_pass(model, data, idx, /*train=*/false, 64, nullptr, 0.0, &eval);
  std::array<int64_t, kFamilyCount> count{};
  std::array<double, kFamilyCount> mse_sum{};
  double all = 0.0;
  for (size_t i = 0; i < idx.size(); ++i) {
    size_t f = data.records[i].family;
    ++count[f];
    mse_sum[f] += eval.per_question_mse[i];
    all += eval.per_question_mse[i];
  }
  for (int f = 0; f < kFamilyCount; ++f) {
    if (count[f] == 0) continue;
    FamilyMse fm;
    fm.family = static_cast<QuestionFamily>(f);
    fm.count = static_cast<int>(count[f]);
    fm.mean_mse = mse_sum[f] / count[f];
    eval.per_family.push_back(fm);
  }
  eval.count = static_cast<int>(idx.size());
  if (eval.count > 0) eval.overall_mse = all / eval.count;
  return eval;
}

std::pair<int, std::array<float, 4>> predict_choice(Classifier& model, const Question& q) {
  const ChannelScale cs = fold_stats(model.stats);
  constexpr int plane = kCanvasSize * kCanvasSize;
  int channels = model.config.input_channels();
  Tensor x({1, channels, kCanvasSize, kCanvasSize});
  DatasetRecord rec = to_record(q);
  int label = 0;
  fill_classifier_sample(x.data(), rec, cs, identity_perm(), &label);
  Tensor logits = model.net.forward(x, /*train=*/false);
  Tensor probs = softmax(logits);
  std::array<float, 4> p{};
  std::copy(probs.data(), probs.data() + 4, p.begin());
  return {argmax4(p.data()), p};
}

Canvas predict_frame(Autoencoder& model, const Canvas& frame1, const Canvas& frame2) {
  const ChannelScale cs = fold_stats(model.stats);
  constexpr int plane = kCanvasSize * kCanvasSize;
  Tensor x({1, 6, kCanvasSize, kCanvasSize});
  std::vector<uint8_t> f1 = canvas_to_u8(frame1), f2 = canvas_to_u8(frame2);
  fill_frame_channels(x.data(), f1.data(), cs);
  fill_frame_channels(x.data() + static_cast<size_t>(3) * plane, f2.data(), cs);
  Tensor code = model.encoder.forward(x, /*train=*/false);
  Tensor pred = model.decoder.forward(code, /*train=*/false);
  Canvas out;
  for (int c = 0; c < 3; ++c)
    for (int p = 0; p < plane; ++p)
      out.px[3 * p + c] = static_cast<float>(std::clamp(
          pred.v[static_cast<size_t>(c) * plane + p] * model.stats.std[c] +
              model.stats.mean[c],
          0.0, 1.0));
  return out;
}

// ---- checkpoints -----------------------------------------------------------

namespace {

struct NamedTensor {
  std::string name;
  Tensor* tensor;
};

void collect_named(SequentialT<float>& net, const std::string& prefix,
                   std::vector<NamedTensor>& out) {
  for (size_t i = 0; i < net.size(); ++i) {
    LayerT<float>& layer = net.layer(i);
    std::string base = prefix + std::to_string(i) + ".";
    if (auto* conv = dynamic_cast<Conv2dT<float>*>(&layer)) {
      out.push_back({base + "weight", &conv->weight()});
      out.push_back({base + "bias", &conv->bias()});
    } else if (auto* deconv = dynamic_cast<Deconv2dT<float>*>(&layer)) {
      out.push_back({base + "weight", &deconv->weight()});
      out.push_back({base + "bias", &deconv->bias()});
    } else if (auto* bn = dynamic_cast<BatchNorm2dT<float>*>(&layer)) {
      out.push_back({base + "gamma", &bn->gamma()});
      out.push_back({base + "beta", &bn->beta()});
      out.push_back({base + "running_mean", &bn->running_mean()});
      out.push_back({base + "running_var", &bn->running_var()});
    } else if (auto* linear = dynamic_cast<LinearT<float>*>(&layer)) {
      out.push_back({base + "weight", &linear->weight()});
      out.push_back({base + "bias", &linear->bias()});
    }
  }
}

class Writer {
 public:
  explicit Writer(const std::string& path) : path_(path), f_(path + ".tmp", std::ios::binary) {
    if (!f_) throw std::runtime_error("cannot write checkpoint: " + path);
  }
  void bytes(const void* p, size_t n) { f_.write(static_cast<const char*>(p), n); }
  void u8(uint8_t v) { bytes(&v, 1); }
  void u32(uint32_t v) { bytes(&v, 4); }
  void u64(uint64_t v) { bytes(&v, 8); }
  void i32(int32_t v) { bytes(&v, 4); }
  void i64(int64_t v) { bytes(&v, 8); }
  void f64(double v) { bytes(&v, 8); }
  void str(const std::string& s) {
    u32(static_cast<uint32_t>(s.size()));
    bytes(s.data(), s.size());
  }
  void floats(const std::vector<float>& v) {
    u64(v.size());
    bytes(v.data(), v.size() * sizeof(float));
  }
  void finish() {
    if (!f_.good()) throw std::runtime_error("checkpoint write failed: " + path_);
    f_.close();
    std::filesystem::rename(path_ + ".tmp", path_);
  }

 private:
  std::string path_;
  std::ofstream f_;
};

class Reader {
 public:
  explicit Reader(const std::string& path) : f_(path, std::ios::binary) {
    if (!f_) throw FormatError("cannot read checkpoint: " + path);
  }
  void bytes(void* p, size_t n) {
    f_.read(static_cast<char*>(p), static_cast<std::streamsize>(n));
    if (static_cast<size_t>(f_.gcount()) != n) throw FormatError("truncated checkpoint");
  }
  uint8_t u8() {
    uint8_t v;
    bytes(&v, 1);
    return v;
  }
  uint32_t u32() {
    uint32_t v;
    bytes(&v, 4);
    return v;
  }
  uint64_t u64() {
    uint64_t v;
    bytes(&v, 8);
    return v;
  }
  int32_t i32() {
    int32_t v;
    bytes(&v, 4);
    return v;
  }
  int64_t i64() {
    int64_t v;
    bytes(&v, 8);
    return v;
  }
  double f64() {
    double v;
    bytes(&v, 8);
    return v;
  }
  std::string str() {
    uint32_t n = u32();
    if (n > (1u << 20)) throw FormatError("implausible string length in checkpoint");
    std::string s(n, '\0');
    bytes(s.data(), n);
    return s;
  }
  void floats(std::vector<float>& v) {
    uint64_t n = u64();
    if (n > (1ull << 30)) throw FormatError("implausible tensor size in checkpoint");
    v.resize(n);
    bytes(v.data(), n * sizeof(float));
  }

 private:
  std::ifstream f_;
};

void write_header(Writer& w, const char* kind, const NormalizationStats& stats,
                  int epoch) {
  w.bytes("PFCK", 4);
  w.u32(kCheckpointVersion);
  w.str(kind);
  for (double v : stats.mean) w.f64(v);
  for (double v : stats.std) w.f64(v);
  w.i32(epoch);
}

void write_tensors(Writer& w, const std::vector<NamedTensor>& tensors) {
  w.u64(tensors.size());
  for (const NamedTensor& nt : tensors) {
    w.str(nt.name);
    w.u32(static_cast<uint32_t>(nt.tensor->shape.size()));
    for (int d : nt.tensor->shape) w.i32(d);
    w.floats(nt.tensor->v);
  }
}

void write_optimizer(Writer& w, const AdamState* opt) {
  w.u8(opt ? 1 : 0);
  if (!opt) return;
  w.f64(opt->beta1);
  w.f64(opt->beta2);
  w.f64(opt->eps);
  w.i64(opt->step);
  w.u64(opt->m.size());
  for (size_t i = 0; i < opt->m.size(); ++i) {
    w.floats(opt->m[i]);
    w.floats(opt->v[i]);
  }
}

std::string read_header(Reader& r, NormalizationStats& stats, int& epoch) {
  char magic[4];
  r.bytes(magic, 4);
  if (std::memcmp(magic, "PFCK", 4) != 0) throw FormatError("bad checkpoint magic");
  uint32_t version = r.u32();
  if (version != kCheckpointVersion)
    throw VersionError("unsupported checkpoint version " + std::to_string(version));
  std::string kind = r.str();
  for (double& v : stats.mean) v = r.f64();
  for (double& v : stats.std) v = r.f64();
  epoch = r.i32();
  return kind;
}

void read_tensors(Reader& r, const std::vector<NamedTensor>& tensors) {
  uint64_t n = r.u64();
  if (n != tensors.size()) throw FormatError("checkpoint tensor count mismatch");
  for (const NamedTensor& nt : tensors) {
    std::string name = r.str();
    if (name != nt.name) throw FormatError("checkpoint tensor order mismatch: " + name);
    uint32_t ndim = r.u32();
    std::vector<int> shape(ndim);
    for (uint32_t i = 0; i < ndim; ++i) shape[i] = r.i32();
    if (shape != nt.tensor->shape) throw FormatError("checkpoint shape mismatch: " + name);
    std::vector<float> values;
    r.floats(values);
    if (values.size() != nt.tensor->v.size())
      throw FormatError("checkpoint size mismatch: " + name);
    nt.tensor->v = std::move(values);
  }
}

void read_optimizer(Reader& r, AdamState* opt, size_t param_count) {
  uint8_t present = r.u8();
  if (!present) {
    if (opt) opt->m.clear(), opt->v.clear(), opt->step = 0;
    return;
  }
  AdamState tmp;
  tmp.beta1 = r.f64();
  tmp.beta2 = r.f64();
  tmp.eps = r.f64();
  tmp.step = r.i64();
  uint64_t n = r.u64();
  if (n != param_count) throw FormatError("checkpoint optimizer state mismatch");
  tmp.m.resize(n);
  tmp.v.resize(n);
  for (size_t i = 0; i < n; ++i) {
    r.floats(tmp.m[i]);
    r.floats(tmp.v[i]);
  }
  if (opt) *opt = std::move(tmp);
}

}  // namespace

void save_classifier(const std::string& path, Classifier& model,
                     const AdamState* optimizer, int epoch) {
  Writer w(path);
  write_header(w, "classifier", model.stats, epoch);
  w.i32(model.config.context_slots);
  w.i32(model.config.option_slots);
  for (int width : model.config.conv_widths) w.i32(width);
  w.u64(model.config.init_seed);
  std::vector<NamedTensor> tensors;
  collect_named(model.net, "net.", tensors);
  write_tensors(w, tensors);
  write_optimizer(w, optimizer);
  w.finish();
}

void save_autoencoder(const std::string& path, Autoencoder& model,
                      const AdamState* optimizer, int epoch) {
  Writer w(path);
  write_header(w, "autoencoder", model.stats, epoch);
  for (int width : model.config.conv_widths) w.i32(width);
  w.i32(model.config.code_dim);
  w.u64(model.config.init_seed);
  std::vector<NamedTensor> tensors;
  collect_named(model.encoder, "enc.", tensors);
  collect_named(model.decoder, "dec.", tensors);
  write_tensors(w, tensors);
  write_optimizer(w, optimizer);
  w.finish();
}

CheckpointMeta peek_checkpoint(const std::string& path) {
  Reader r(path);
  NormalizationStats stats;
  CheckpointMeta meta;
  meta.kind = read_header(r, stats, meta.epoch);
  return meta;
}

Classifier load_classifier(const std::string& path, AdamState* optimizer, int* epoch) {
  Reader r(path);
  NormalizationStats stats;
  int ep = 0;
  std::string kind = read_header(r, stats, ep);
  if (kind != "classifier")
    throw FormatError("checkpoint holds a " + kind + ", expected a classifier");
  ClassifierConfig config;
  config.context_slots = r.i32();
  config.option_slots = r.i32();
  for (int& width : config.conv_widths) width = r.i32();
  config.init_seed = r.u64();
  Classifier model = build_classifier(config);
  model.stats = stats;
  std::vector<NamedTensor> tensors;
  collect_named(model.net, "net.", tensors);
  read_tensors(r, tensors);
  read_optimizer(r, optimizer, model.net.params().size());
  if (epoch) *epoch = ep;
  return model;
}

Autoencoder load_autoencoder(const std::string& path, AdamState* optimizer, int* epoch) {
  Reader r(path);
  NormalizationStats stats;
  int ep = 0;
  std::string kind = read_header(r, stats, ep);
  if (kind != "autoencoder")
    throw FormatError("checkpoint holds a " + kind + ", expected an autoencoder");
  AutoencoderConfig config;
  for (int& width : config.conv_widths) width = r.i32();
  config.code_dim = r.i32();
  config.init_seed = r.u64();
  Autoencoder model = build_autoencoder(config);
  model.stats = stats;
  std::vector<NamedTensor> tensors;
  collect_named(model.encoder, "enc.", tensors);
  collect_named(model.decoder, "dec.", tensors);
  read_tensors(r, tensors);
  read_optimizer(r, optimizer, model.params().size());
  if (epoch) *epoch = ep;
  return model;
}

}  // namespace shapeiq
