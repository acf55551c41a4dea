#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "shapeiq/geometry.hpp"
#include "shapeiq/rng.hpp"

namespace shapeiq {

enum class QuestionFamily : uint8_t {
  RotationPolygon = 0,
  RotationSquiggle = 1,
  Size = 2,
  Reflection = 3,
  Number = 4,
  Color = 5,
  Addition = 6,
};

inline constexpr int kFamilyCount = 7;
inline constexpr std::array<QuestionFamily, kFamilyCount> kAllFamilies{
    QuestionFamily::RotationPolygon, QuestionFamily::RotationSquiggle,
    QuestionFamily::Size,            QuestionFamily::Reflection,
    QuestionFamily::Number,          QuestionFamily::Color,
    QuestionFamily::Addition};

// Families that appear in open (next-frame generation) datasets. Number is
// excluded because counting targets are hard to score as images; Addition is
// excluded because its target depends on a third context frame the open
// scenario does not carry.
inline constexpr std::array<QuestionFamily, 5> kOpenFamilies{
    QuestionFamily::RotationPolygon, QuestionFamily::RotationSquiggle,
    QuestionFamily::Size, QuestionFamily::Reflection, QuestionFamily::Color};

const char* family_name(QuestionFamily f);
std::optional<QuestionFamily> family_from_name(const std::string& name);

struct GenerationFailed : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Everything needed to re-derive the question's frames: the sampled
// transformation parameters plus the underlying shapes.
struct QuestionParams {
  double theta = 0.0;            // rotation / reflection angle
  double mu = 1.0;               // size scale factor
  int count = 0;                 // number family: shapes in the first frame
  int vertex_count = 0;          // number family exemplar class
  Rgb color1{}, color2{};        // color family
  std::vector<Shape> shapes;     // base shape / exemplars / addition shapes
  Point line_a{}, line_b{};      // addition line endpoints
  Rgb line_color{};
};

// Multiple-choice question. Context slot 0 is an all-background blank for the
// 2-context families; Addition fills all three slots with im1..im3.
struct Question {
  QuestionFamily family = QuestionFamily::RotationPolygon;
  std::array<Canvas, 3> context;
  std::array<Canvas, 4> options;
  int answer_index = 0;
  QuestionParams params;
};

struct OpenQuestion {
  QuestionFamily family = QuestionFamily::RotationPolygon;
  std::array<Canvas, 2> context;
  Canvas target;
  QuestionParams params;
};

// Minimum per-pixel mean-squared distance between any distractor and the
// correct option.
inline constexpr double kDistractorSeparation = 0.002;

// Rotation exclusion band: |theta| within 15 degrees of the identity is
// rejected. Size exclusion band: mu in [0.9, 1.1] is rejected.
inline constexpr double kThetaExclusion = M_PI / 12.0;
inline constexpr double kMuExclusionLo = 0.9;
inline constexpr double kMuExclusionHi = 1.1;

inline constexpr int kGenBudget = 1000;

double canvas_mse(const Canvas& a, const Canvas& b);
bool is_blank(const Canvas& c, Rgb background = kBackground);

Question gen_question(QuestionFamily family, Rng& rng);
OpenQuestion gen_open_question(QuestionFamily family, Rng& rng);

// Three distractor frames: two re-sample the family parameter, one applies a
// different family's transformation to the same context. All satisfy the
// separation invariant against `correct`.
std::array<Canvas, 3> gen_distractors(const Canvas& correct, QuestionFamily family,
                                      const QuestionParams& params, Rng& rng);

// im4 = im3 union (im2 minus im1) on non-background pixel sets; pixels taken
// from im2 overwrite im3.
Canvas compose_addition_frame(const Canvas& im1, const Canvas& im2, const Canvas& im3);

// ---- Normalization -------------------------------------------------------

struct NormalizationStats {
  std::array<double, 3> mean{0.0, 0.0, 0.0};
  std::array<double, 3> std{1.0, 1.0, 1.0};
};

// Planar float image, channel-major (3 x 64 x 64), (v - mean) / std.
std::vector<float> normalize(const Canvas& canvas, const NormalizationStats& stats);
Canvas denormalize(const std::vector<float>& values, const NormalizationStats& stats);

// ---- Noise ---------------------------------------------------------------

// Additive field g/255 with g ~ Normal(0, sigma8^2), independent per value.
// Exposed separately so the pre-clamp statistics are testable.
std::vector<float> noise_field(double sigma8, Rng& rng);
Canvas add_noise(const Canvas& canvas, double sigma8, Rng& rng);

// ---- Dataset serialization -------------------------------------------------

inline constexpr uint32_t kDatasetFormatVersion = 1;
inline constexpr int kFrameBytes = kCanvasValues;  // u8 RGB 64x64x3

enum class Scenario : uint8_t { MultipleChoice = 0, Open = 1 };

const char* scenario_name(Scenario s);

struct DatasetManifest {
  uint32_t format_version = kDatasetFormatVersion;
  Scenario scenario = Scenario::MultipleChoice;
  uint64_t seed = 0;
  std::array<uint64_t, kFamilyCount> counts{};
  double noise_sigma8 = 0.0;
  uint64_t oracle_resamples = 0;  // questions replaced by label verification
  NormalizationStats stats;

  uint64_t total() const {
    uint64_t t = 0;
    for (uint64_t c : counts) t += c;
    return t;
  }
};

// One serialized record. Multiple choice: 7 frames (3 context + 4 options),
// answer in [0,3]. Open: 3 frames (2 context + target), answer = 255.
struct DatasetRecord {
  uint8_t family = 0;
  uint8_t answer = 255;
  std::vector<uint8_t> frames;  // frame_count * kFrameBytes

  int frame_count() const { return static_cast<int>(frames.size() / kFrameBytes); }
  const uint8_t* frame(int i) const { return frames.data() + static_cast<size_t>(i) * kFrameBytes; }
  Canvas frame_canvas(int i) const;
};

std::vector<uint8_t> canvas_to_u8(const Canvas& canvas);
Canvas canvas_from_u8(const uint8_t* data);

DatasetRecord to_record(const Question& q);
DatasetRecord to_record(const OpenQuestion& q);
Question question_from_record(const DatasetRecord& r);
OpenQuestion open_question_from_record(const DatasetRecord& r);

struct Dataset {
  DatasetManifest manifest;
  std::vector<DatasetRecord> records;
};

struct GenConfig {
  Scenario scenario = Scenario::MultipleChoice;
  uint64_t seed = 1;
  std::array<uint64_t, kFamilyCount> counts{};  // zero = derive from total
  uint64_t total = 0;                            // uniform split when counts empty
  std::optional<QuestionFamily> family;          // single-family dataset
  double noise_sigma8 = 0.0;
  bool verify_labels = true;  // multiple choice only: oracle-check each label
  int threads = 0;            // 0 = library default
};

// Uniform split of `total` over the scenario's families (largest remainder,
// fixed enum order).
std::array<uint64_t, kFamilyCount> split_counts(uint64_t total, Scenario scenario);

// Generates the dataset and writes it to `path` (atomic: temp file + rename).
// The manifest, including normalization stats computed over the file's
// pixels, is written to `path`.manifest.txt and returned.
DatasetManifest gen_dataset(const GenConfig& config, const std::string& path);

Dataset read_dataset(const std::string& path);
DatasetManifest read_manifest(const std::string& path);  // path of the .manifest.txt
void write_manifest(const DatasetManifest& m, const std::string& path);

std::string manifest_path_for(const std::string& dataset_path);

}  // namespace shapeiq
