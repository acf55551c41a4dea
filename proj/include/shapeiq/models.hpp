#pragma once

#include <array>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "shapeiq/nn.hpp"
#include "shapeiq/qgen.hpp"

namespace shapeiq {

struct ScenarioError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct VersionError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct FormatError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Multiple-choice classifier: the 3 context frames and 4 option frames are
// stacked channelwise (21 input channels), then four stride-2 4x4 conv blocks
// with batchnorm + relu, then a linear head to 4 logits.
struct ClassifierConfig {
  int context_slots = 3;
  int option_slots = 4;
  std::array<int, 4> conv_widths{64, 128, 256, 512};
  uint64_t init_seed = 1;

  int input_channels() const { return 3 * (context_slots + option_slots); }
};

// Open-question autoencoder: two RGB context frames in (6 channels), code of
// 32 values, decoded back to one RGB frame. Four stride-2 conv blocks plus a
// valid 4x4 conv to 1x1, leaky relu(0.2) throughout the encoder; mirrored
// deconvs with elu in the decoder and a linear final layer.
struct AutoencoderConfig {
  std::array<int, 4> conv_widths{64, 128, 256, 512};
  int code_dim = 32;
  uint64_t init_seed = 1;
};

struct Classifier {
  ClassifierConfig config;
  SequentialT<float> net;
  NormalizationStats stats;
};

struct Autoencoder {
  AutoencoderConfig config;
  SequentialT<float> encoder;
  SequentialT<float> decoder;
  NormalizationStats stats;

  std::vector<Tensor*> params() {
    std::vector<Tensor*> out = encoder.params();
    for (Tensor* p : decoder.params()) out.push_back(p);
    return out;
  }
};

Classifier build_classifier(const ClassifierConfig& config);
Autoencoder build_autoencoder(const AutoencoderConfig& config);

int64_t param_count(std::vector<Tensor*> params);

struct TrainConfig {
  int batch_size = 64;
  int epochs = 30;
  LrSchedule schedule{};  // base lr 2e-4, x0.1 every 100 epochs
  uint64_t seed = 1;
  double val_fraction = 0.05;    // held out from the training file
  bool option_augment = true;    // shuffle option order per presentation
  std::ostream* log = nullptr;   // per-epoch progress lines
};

struct EpochStats {
  int epoch = 0;
  double lr = 0.0;
  double train_loss = 0.0;
  double val_loss = 0.0;
  double val_accuracy = 0.0;  // classifier
  double val_mse = 0.0;       // autoencoder, denormalized [0,1] space
};

struct TrainHistory {
  std::vector<EpochStats> epochs;
};

TrainHistory train_classifier(Classifier& model, const Dataset& data,
                              const TrainConfig& config);
TrainHistory train_autoencoder(Autoencoder& model, const Dataset& data,
                               const TrainConfig& config);

struct FamilyAccuracy {
  QuestionFamily family{};
  int count = 0;
  double accuracy = 0.0;
  double mean_correct_prob = 0.0;
};

struct PredictionRecord {
  int index = 0;
  QuestionFamily family{};
  int label = 0;
  int predicted = 0;
  std::array<float, 4> probs{};
};

struct ClassifierEval {
  std::vector<FamilyAccuracy> per_family;  // fixed enum order, present families
  double overall_accuracy = 0.0;
  double overall_mean_correct_prob = 0.0;
  int count = 0;
  std::vector<PredictionRecord> predictions;
};

struct FamilyMse {
  QuestionFamily family{};
  int count = 0;
  double mean_mse = 0.0;
};

struct AutoencoderEval {
  std::vector<FamilyMse> per_family;
  double overall_mse = 0.0;
  int count = 0;
  std::vector<double> per_question_mse;
};

ClassifierEval evaluate_classifier(Classifier& model, const Dataset& data);
AutoencoderEval evaluate_autoencoder(Autoencoder& model, const Dataset& data);

// Argmax of the softmax probabilities; ties resolved to the lowest index.
std::pair<int, std::array<float, 4>> predict_choice(Classifier& model, const Question& q);
// Denormalized, clamped to [0,1].
Canvas predict_frame(Autoencoder& model, const Canvas& frame1, const Canvas& frame2);

// ---- checkpoints -----------------------------------------------------------

inline constexpr uint32_t kCheckpointVersion = 1;

struct CheckpointMeta {
  std::string kind;  // "classifier" | "autoencoder"
  int epoch = 0;
};

void save_classifier(const std::string& path, Classifier& model,
                     const AdamState* optimizer = nullptr, int epoch = 0);
void save_autoencoder(const std::string& path, Autoencoder& model,
                      const AdamState* optimizer = nullptr, int epoch = 0);

CheckpointMeta peek_checkpoint(const std::string& path);
Classifier load_classifier(const std::string& path, AdamState* optimizer = nullptr,
                           int* epoch = nullptr);
Autoencoder load_autoencoder(const std::string& path, AdamState* optimizer = nullptr,
                             int* epoch = nullptr);

}  // namespace shapeiq
