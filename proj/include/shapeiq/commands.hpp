#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>

#include "shapeiq/qgen.hpp"

namespace shapeiq {

struct CommandError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct GenerateOptions {
  std::string out_dir = "out";
  std::string name = "dataset";
  std::string scenario = "mc";  // mc | open
  uint64_t total = 20000;
  uint64_t seed = 1;
  std::string family;  // empty = all families
  double noise_sigma = 0.0;
  bool verify = true;
  bool contact_sheets = true;
  int sheets_per_family = 16;
  int threads = 0;
};

struct TrainOptions {
  std::string data;
  std::string model = "classifier";  // classifier | autoencoder
  std::string out_dir = "out";
  std::string family;  // optional filter for mixed datasets
  int epochs = 30;
  int batch_size = 64;
  double base_lr = 2e-4;
  uint64_t seed = 1;
  double val_fraction = 0.05;
  bool option_augment = true;
  int threads = 0;
  bool paper_scale_note = false;
  std::ostream* log = nullptr;
};

struct EvalOptions {
  std::string checkpoint;
  std::string data;
  std::string out_dir = "out";
  int misclassified_sheets = 20;
  int open_grid = 16;
  int threads = 0;
};

struct SolveOptions {
  std::string data;
  std::string out_dir = "out";
  uint64_t limit = 0;  // 0 = all records
  int threads = 0;
};

struct RenderOptions {
  std::string data;
  std::string out_dir = "out";
  int count = 16;
};

struct ReportOptions {
  std::string dir;
};

// Each command resolves its options, writes a config snapshot next to its
// outputs, and throws CommandError (or the module errors) on failure.
void cmd_generate(const GenerateOptions& opt);
void cmd_train(const TrainOptions& opt);
void cmd_eval(const EvalOptions& opt);
void cmd_solve(const SolveOptions& opt);
void cmd_render(const RenderOptions& opt);
int cmd_gradcheck(std::ostream& out);  // 0 = all layers pass
void cmd_report(const ReportOptions& opt);

// Contact sheets. probs/predicted are optional annotations for the
// multiple-choice sheet (predicted = -1 for none).
void write_question_sheet(const std::string& path, const Question& q,
                          const float* probs = nullptr, int predicted = -1);
void write_open_sheet(const std::string& path, const OpenQuestion& q,
                      const Canvas* prediction = nullptr);

std::string dataset_path(const GenerateOptions& opt);

}  // namespace shapeiq
