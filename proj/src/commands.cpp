#include "shapeiq/commands.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <vector>

#include "shapeiq/gemm.hpp"
#include "shapeiq/gradcheck.hpp"
#include "shapeiq/models.hpp"
#include "shapeiq/oracle.hpp"

#ifdef _OPENMP
#include <omp.h>
#endif

namespace fs = std::filesystem;

namespace shapeiq {

namespace {

// ---- pixel sheets ----------------------------------------------------------

constexpr int kCell = kCanvasSize;
constexpr int kGap = 3;

struct Sheet {
  int width, height;
  std::vector<uint8_t> rgb;

  Sheet(int w, int h) : width(w), height(h), rgb(static_cast<size_t>(w) * h * 3, 230) {}

  void blit(const Canvas& canvas, int x0, int y0) {
    for (int y = 0; y < kCanvasSize; ++y)
      for (int x = 0; x < kCanvasSize; ++x) {
        size_t dst = (static_cast<size_t>(y0 + y) * width + x0 + x) * 3;
        const float* p = canvas.at(x, y);
        for (int c = 0; c < 3; ++c)
          rgb[dst + c] = static_cast<uint8_t>(std::lround(p[c] * 255.f));
      }
  }

  void frame_rect(int x0, int y0, int w, int h, uint8_t r, uint8_t g, uint8_t b) {
    auto set = [&](int x, int y) {
      if (x < 0 || y < 0 || x >= width || y >= height) return;
      size_t i = (static_cast<size_t>(y) * width + x) * 3;
      rgb[i] = r;
      rgb[i + 1] = g;
      rgb[i + 2] = b;
    };
    for (int t = 0; t < 2; ++t) {
      for (int x = x0 - t; x < x0 + w + t; ++x) {
        set(x, y0 - t - 1);
        set(x, y0 + h + t);
      }
      for (int y = y0 - t - 1; y <= y0 + h + t; ++y) {
        set(x0 - t - 1, y);
        set(x0 + w + t, y);
      }
    }
  }

  // 3x5 digit font, scaled x2; enough for probability annotations.
  void draw_text(const std::string& text, int x0, int y0) {
    static const std::map<char, std::array<uint8_t, 5>> glyphs = {
        {'0', {0b111, 0b101, 0b101, 0b101, 0b111}},
        {'1', {0b010, 0b110, 0b010, 0b010, 0b111}},
        {'2', {0b111, 0b001, 0b111, 0b100, 0b111}},
        {'3', {0b111, 0b001, 0b111, 0b001, 0b111}},
        {'4', {0b101, 0b101, 0b111, 0b001, 0b001}},
        {'5', {0b111, 0b100, 0b111, 0b001, 0b111}},
        {'6', {0b111, 0b100, 0b111, 0b101, 0b111}},
        {'7', {0b111, 0b001, 0b010, 0b010, 0b010}},
        {'8', {0b111, 0b101, 0b111, 0b101, 0b111}},
        {'9', {0b111, 0b101, 0b111, 0b001, 0b111}},
        {'.', {0b000, 0b000, 0b000, 0b000, 0b010}},
        {'*', {0b101, 0b010, 0b101, 0b000, 0b000}},
        {' ', {0b000, 0b000, 0b000, 0b000, 0b000}},
    };
    int cx = x0;
    for (char ch : text) {
      auto it = glyphs.find(ch);
      if (it == glyphs.end()) {
        cx += 8;
        continue;
      }
      for (int row = 0; row < 5; ++row)
        for (int col = 0; col < 3; ++col)
          if (it->second[row] & (0b100 >> col))
            for (int sy = 0; sy < 2; ++sy)
              for (int sx = 0; sx < 2; ++sx) {
                int x = cx + col * 2 + sx, y = y0 + row * 2 + sy;
                if (x < 0 || y < 0 || x >= width || y >= height) continue;
                size_t i = (static_cast<size_t>(y) * width + x) * 3;
                rgb[i] = rgb[i + 1] = rgb[i + 2] = 20;
              }
      cx += 8;
    }
  }

  void save(const std::string& path) const { write_png_rgb8(path, width, height, rgb); }
};

std::string prob_text(float p) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "%.2f", p);
  return buf;
}

void write_csv(const std::string& path, const std::vector<std::string>& lines) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw CommandError("cannot write " + path);
  for (const std::string& line : lines) f << line << "\n";
  if (!f.good()) throw CommandError("write failed: " + path);
}

void write_config_snapshot(const std::string& path,
                           const std::vector<std::pair<std::string, std::string>>& kv) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw CommandError("cannot write " + path);
  for (const auto& [k, v] : kv) f << k << " = " << v << "\n";
}

void ensure_dir(const std::string& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw CommandError("cannot create directory " + dir + ": " + ec.message());
}

std::string num(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

void apply_threads(int threads) {
  if (threads > 0) set_compute_threads(threads);
}

// Streaming prefix read, enough for contact sheets without loading gigabytes.
Dataset read_dataset_prefix(const std::string& path, uint64_t max_records) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw CommandError("cannot read dataset: " + path);
  char magic[4];
  f.read(magic, 4);
  uint32_t version;
  uint64_t count;
  f.read(reinterpret_cast<char*>(&version), 4);
  f.read(reinterpret_cast<char*>(&count), 8);
  if (!f) throw CommandError("truncated dataset header: " + path);
  Dataset ds;
  ds.manifest = read_manifest(manifest_path_for(path));
  int frames = ds.manifest.scenario == Scenario::Open ? 3 : 7;
  uint64_t n = std::min<uint64_t>(count, max_records);
  ds.records.resize(n);
  for (uint64_t i = 0; i < n; ++i) {
    DatasetRecord& r = ds.records[i];
    r.family = static_cast<uint8_t>(f.get());
    r.answer = static_cast<uint8_t>(f.get());
    r.frames.resize(static_cast<size_t>(frames) * kFrameBytes);
    f.read(reinterpret_cast<char*>(r.frames.data()),
           static_cast<std::streamsize>(r.frames.size()));
    if (!f) throw CommandError("truncated dataset record: " + path);
  }
  return ds;
}

Scenario parse_scenario(const std::string& s) {
  if (s == "mc" || s == "multiple_choice") return Scenario::MultipleChoice;
  if (s == "open") return Scenario::Open;
  throw CommandError("unknown scenario '" + s + "' (use mc or open)");
}

std::optional<QuestionFamily> parse_family(const std::string& s) {
  if (s.empty()) return std::nullopt;
  auto f = family_from_name(s);
  if (!f) throw CommandError("unknown family '" + s + "'");
  return f;
}

}  // namespace

void write_question_sheet(const std::string& path, const Question& q,
                          const float* probs, int predicted) {
  int width = 4 * kCell + 5 * kGap;
  int text_strip = probs ? 14 : 0;
  int height = 2 * kCell + 3 * kGap + text_strip + 12;
  Sheet sheet(width, height);
  for (int i = 0; i < 3; ++i)
    sheet.blit(q.context[i], kGap + i * (kCell + kGap), kGap);
  int row2 = kCell + 2 * kGap + 6;
  for (int i = 0; i < 4; ++i) {
    int x0 = kGap + i * (kCell + kGap);
    sheet.blit(q.options[i], x0, row2);
    if (i == q.answer_index) sheet.frame_rect(x0, row2, kCell, kCell, 40, 160, 40);
    if (predicted >= 0 && i == predicted && i != q.answer_index)
      sheet.frame_rect(x0, row2, kCell, kCell, 200, 40, 40);
    if (probs) sheet.draw_text(prob_text(probs[i]), x0 + 14, row2 + kCell + 3);
  }
  sheet.save(path);
}

void write_open_sheet(const std::string& path, const OpenQuestion& q,
                      const Canvas* prediction) {
  int cells = prediction ? 4 : 3;
  int width = cells * kCell + (cells + 1) * kGap;
  int height = kCell + 2 * kGap;
  Sheet sheet(width, height);
  sheet.blit(q.context[0], kGap, kGap);
  sheet.blit(q.context[1], kGap + (kCell + kGap), kGap);
  sheet.blit(q.target, kGap + 2 * (kCell + kGap), kGap);
  if (prediction) sheet.blit(*prediction, kGap + 3 * (kCell + kGap), kGap);
  sheet.save(path);
}

std::string dataset_path(const GenerateOptions& opt) {
  return opt.out_dir + "/" + opt.name + ".pfq";
}

void cmd_generate(const GenerateOptions& opt) {
  ensure_dir(opt.out_dir);
  apply_threads(opt.threads);
  GenConfig config;
  config.scenario = parse_scenario(opt.scenario);
  config.total = opt.total;
  config.seed = opt.seed;
  config.family = parse_family(opt.family);
  config.noise_sigma8 = opt.noise_sigma;
  config.verify_labels = opt.verify;
  config.threads = opt.threads > 0 ? opt.threads : compute_threads();

  std::string path = dataset_path(opt);
  DatasetManifest manifest = gen_dataset(config, path);

  write_config_snapshot(opt.out_dir + "/" + opt.name + ".generate_config.txt",
                        {{"command", "generate"},
                         {"out_dir", opt.out_dir},
                         {"name", opt.name},
                         {"scenario", opt.scenario},
                         {"total", std::to_string(opt.total)},
                         {"seed", std::to_string(opt.seed)},
                         {"family", opt.family.empty() ? "all" : opt.family},
                         {"noise_sigma", num(opt.noise_sigma)},
                         {"verify", opt.verify ? "true" : "false"},
                         {"threads", std::to_string(config.threads)}});

  if (opt.contact_sheets && opt.sheets_per_family > 0) {
    std::string sheet_dir = opt.out_dir + "/" + opt.name + "_sheets";
    ensure_dir(sheet_dir);
    uint64_t scan = std::max<uint64_t>(512, static_cast<uint64_t>(opt.sheets_per_family) *
                                               kFamilyCount * 8);
    Dataset prefix = read_dataset_prefix(path, scan);
    std::array<int, kFamilyCount> emitted{};
    for (size_t i = 0; i < prefix.records.size(); ++i) {
      const DatasetRecord& rec = prefix.records[i];
      int fam = rec.family;
      if (emitted[fam] >= opt.sheets_per_family) continue;
      char name[128];
      std::snprintf(name, sizeof name, "%s/%s_%03d.png", sheet_dir.c_str(),
                    family_name(static_cast<QuestionFamily>(fam)), emitted[fam]);
      if (manifest.scenario == Scenario::Open)
        write_open_sheet(name, open_question_from_record(rec));
      else
        write_question_sheet(name, question_from_record(rec));
      ++emitted[fam];
    }
  }
}

namespace {

void write_history_csv(const std::string& path, const TrainHistory& history,
                       bool classifier) {
  std::vector<std::string> lines;
  lines.push_back(classifier ? "epoch,lr,train_loss,val_loss,val_accuracy"
                             : "epoch,lr,train_loss,val_loss,val_mse");
  for (const EpochStats& e : history.epochs) {
    char buf[256];
    if (classifier)
      std::snprintf(buf, sizeof buf, "%d,%.10g,%.10g,%.10g,%.10g", e.epoch, e.lr,
                    e.train_loss, e.val_loss, e.val_accuracy);
    else
      std::snprintf(buf, sizeof buf, "%d,%.10g,%.10g,%.10g,%.10g", e.epoch, e.lr,
                    e.train_loss, e.val_loss, e.val_mse);
    lines.push_back(buf);
  }
  write_csv(path, lines);
}

Dataset filter_family(Dataset&& ds, QuestionFamily family) {
  Dataset out;
  out.manifest = ds.manifest;
  out.manifest.counts = {};
  for (DatasetRecord& r : ds.records)
    if (static_cast<QuestionFamily>(r.family) == family) {
      ++out.manifest.counts[r.family];
      out.records.push_back(std::move(r));
    }
  if (out.records.empty())
    throw CommandError(std::string("dataset holds no ") + family_name(family) +
                       " records");
  // Normalization statistics must describe what the model actually trains on.
  std::array<double, 3> sum{}, sum_sq{};
  uint64_t count = 0;
  for (const DatasetRecord& r : out.records) {
    size_t n = r.frames.size() / 3;
    for (size_t i = 0; i < n; ++i)
      for (int c = 0; c < 3; ++c) {
        double v = r.frames[3 * i + c] / 255.0;
        sum[c] += v;
        sum_sq[c] += v * v;
      }
    count += n;
  }
  for (int c = 0; c < 3; ++c) {
    double mean = sum[c] / static_cast<double>(count);
    double var = sum_sq[c] / static_cast<double>(count) - mean * mean;
    out.manifest.stats.mean[c] = mean;
    out.manifest.stats.std[c] = std::sqrt(std::max(var, 1e-12));
  }
  return out;
}

}  // namespace

void cmd_train(const TrainOptions& opt) {
  ensure_dir(opt.out_dir);
  apply_threads(opt.threads);
  Dataset data = read_dataset(opt.data);
  if (auto fam = parse_family(opt.family)) data = filter_family(std::move(data), *fam);

  bool classifier = opt.model == "classifier";
  if (!classifier && opt.model != "autoencoder")
    throw CommandError("unknown model '" + opt.model + "'");
  Scenario want = classifier ? Scenario::MultipleChoice : Scenario::Open;
  if (data.manifest.scenario != want)
    throw ScenarioError(std::string("dataset scenario is ") +
                        scenario_name(data.manifest.scenario) + ", but model '" +
                        opt.model + "' needs " + scenario_name(want));

  TrainConfig config;
  config.batch_size = opt.batch_size;
  config.epochs = opt.epochs;
  config.schedule.base_lr = opt.base_lr;
  config.seed = opt.seed;
  config.val_fraction = opt.val_fraction;
  config.option_augment = opt.option_augment;
  config.log = opt.log ? opt.log : &std::cerr;

  write_config_snapshot(opt.out_dir + "/train_config.txt",
                        {{"command", "train"},
                         {"data", opt.data},
                         {"model", opt.model},
                         {"family", opt.family.empty() ? "all" : opt.family},
                         {"epochs", std::to_string(opt.epochs)},
                         {"batch_size", std::to_string(opt.batch_size)},
                         {"base_lr", num(opt.base_lr)},
                         {"seed", std::to_string(opt.seed)},
                         {"val_fraction", num(opt.val_fraction)},
                         {"option_augment", opt.option_augment ? "true" : "false"},
                         {"threads", std::to_string(compute_threads())}});

  std::string checkpoint = opt.out_dir + "/checkpoint.pfck";
  if (classifier) {
    ClassifierConfig mc;
    mc.init_seed = opt.seed;
    Classifier model = build_classifier(mc);
    TrainHistory history = train_classifier(model, data, config);
    write_history_csv(opt.out_dir + "/history.csv", history, true);
    save_classifier(checkpoint, model, nullptr, opt.epochs);
  } else {
    AutoencoderConfig ac;
    ac.init_seed = opt.seed;
    Autoencoder model = build_autoencoder(ac);
    TrainHistory history = train_autoencoder(model, data, config);
    write_history_csv(opt.out_dir + "/history.csv", history, false);
    save_autoencoder(checkpoint, model, nullptr, opt.epochs);
  }
}

void cmd_eval(const EvalOptions& opt) {
  ensure_dir(opt.out_dir);
  apply_threads(opt.threads);
  CheckpointMeta meta = peek_checkpoint(opt.checkpoint);
  Dataset data = read_dataset(opt.data);

  write_config_snapshot(opt.out_dir + "/eval_config.txt",
                        {{"command", "eval"},
                         {"checkpoint", opt.checkpoint},
                         {"data", opt.data},
                         {"model_kind", meta.kind}});

  if (meta.kind == "classifier") {
    if (data.manifest.scenario != Scenario::MultipleChoice)
      throw ScenarioError("classifier checkpoint needs a multiple-choice dataset");
    Classifier model = load_classifier(opt.checkpoint);
    ClassifierEval eval = evaluate_classifier(model, data);
    std::vector<std::string> lines{"family,count,accuracy,mean_correct_prob"};
    for (const FamilyAccuracy& fa : eval.per_family) {
      char buf[160];
      std::snprintf(buf, sizeof buf, "%s,%d,%.6f,%.6f", family_name(fa.family),
                    fa.count, fa.accuracy, fa.mean_correct_prob);
      lines.push_back(buf);
    }
    {
      char buf[160];
      std::snprintf(buf, sizeof buf, "overall,%d,%.6f,%.6f", eval.count,
                    eval.overall_accuracy, eval.overall_mean_correct_prob);
      lines.push_back(buf);
    }
    write_csv(opt.out_dir + "/classifier_metrics.csv", lines);

    std::vector<std::string> preds{"index,family,label,predicted,p0,p1,p2,p3"};
    for (const PredictionRecord& pr : eval.predictions) {
      char buf[200];
      std::snprintf(buf, sizeof buf, "%d,%s,%d,%d,%.6f,%.6f,%.6f,%.6f", pr.index,
                    family_name(pr.family), pr.label, pr.predicted, pr.probs[0],
                    pr.probs[1], pr.probs[2], pr.probs[3]);
      preds.push_back(buf);
    }
    write_csv(opt.out_dir + "/predictions.csv", preds);

    if (opt.misclassified_sheets > 0) {
      std::string dir = opt.out_dir + "/misclassified";
      ensure_dir(dir);
      int emitted = 0;
      for (const PredictionRecord& pr : eval.predictions) {
        if (pr.predicted == pr.label) continue;
        if (emitted >= opt.misclassified_sheets) break;
        Question q = question_from_record(data.records[pr.index]);
        char name[128];
        std::snprintf(name, sizeof name, "%s/mis_%04d_%s.png", dir.c_str(), pr.index,
                      family_name(pr.family));
        write_question_sheet(name, q, pr.probs.data(), pr.predicted);
        ++emitted;
      }
    }
  } else {
    if (data.manifest.scenario != Scenario::Open)
      throw ScenarioError("autoencoder checkpoint needs an open-question dataset");
    Autoencoder model = load_autoencoder(opt.checkpoint);
    AutoencoderEval eval = evaluate_autoencoder(model, data);
    std::vector<std::string> lines{"family,count,mean_mse"};
    for (const FamilyMse& fm : eval.per_family) {
      char buf[160];
      std::snprintf(buf, sizeof buf, "%s,%d,%.8g", family_name(fm.family), fm.count,
                    fm.mean_mse);
      lines.push_back(buf);
    }
    {
      char buf[160];
      std::snprintf(buf, sizeof buf, "overall,%d,%.8g", eval.count, eval.overall_mse);
      lines.push_back(buf);
    }
    write_csv(opt.out_dir + "/autoencoder_metrics.csv", lines);

    if (opt.open_grid > 0) {
      std::string dir = opt.out_dir + "/open_grid";
      ensure_dir(dir);
      int n = std::min<int>(opt.open_grid, static_cast<int>(data.records.size()));
      for (int i = 0; i < n; ++i) {
        OpenQuestion q = open_question_from_record(data.records[i]);
        Canvas pred = predict_frame(model, q.context[0], q.context[1]);
        char name[128];
        std::snprintf(name, sizeof name, "%s/open_%04d_%s.png", dir.c_str(), i,
                      family_name(q.family));
        write_open_sheet(name, q, &pred);
      }
    }
  }
}

void cmd_solve(const SolveOptions& opt) {
  ensure_dir(opt.out_dir);
  apply_threads(opt.threads);
  Dataset data = read_dataset(opt.data);
  uint64_t n = data.records.size();
  if (opt.limit > 0) n = std::min(n, opt.limit);

  write_config_snapshot(opt.out_dir + "/solve_config.txt",
                        {{"command", "solve"},
                         {"data", opt.data},
                         {"limit", std::to_string(opt.limit)},
                         {"threads", std::to_string(compute_threads())}});

  if (data.manifest.scenario == Scenario::MultipleChoice) {
    std::vector<int> oracle_answer(n);
    std::vector<std::array<double, 4>> distances(n);
#ifdef _OPENMP
#pragma omp parallel for schedule(dynamic) num_threads(compute_threads())
#endif
    for (int64_t i = 0; i < static_cast<int64_t>(n); ++i) {
      Question q = question_from_record(data.records[i]);
      SolveResult sr = oracle_solve(q.context, q.options);
      oracle_answer[i] = sr.index;
      distances[i] = sr.distances;
    }
    std::array<int64_t, kFamilyCount> count{}, correct{};
    std::vector<std::string> disagreements{"index,family,label,oracle,d0,d1,d2,d3"};
    for (uint64_t i = 0; i < n; ++i) {
      int fam = data.records[i].family;
      ++count[fam];
      if (oracle_answer[i] == data.records[i].answer) {
        ++correct[fam];
      } else {
        char buf[240];
        std::snprintf(buf, sizeof buf, "%llu,%s,%d,%d,%.8g,%.8g,%.8g,%.8g",
                      static_cast<unsigned long long>(i),
                      family_name(static_cast<QuestionFamily>(fam)),
                      static_cast<int>(data.records[i].answer), oracle_answer[i],
                      distances[i][0], distances[i][1], distances[i][2],
                      distances[i][3]);
        disagreements.push_back(buf);
      }
    }
    std::vector<std::string> lines{"family,count,accuracy"};
    int64_t all = 0, all_correct = 0;
    for (int f = 0; f < kFamilyCount; ++f) {
      if (count[f] == 0) continue;
      char buf[120];
      std::snprintf(buf, sizeof buf, "%s,%lld,%.6f",
                    family_name(static_cast<QuestionFamily>(f)),
                    static_cast<long long>(count[f]),
                    static_cast<double>(correct[f]) / count[f]);
      lines.push_back(buf);
      all += count[f];
      all_correct += correct[f];
    }
    {
      char buf[120];
      std::snprintf(buf, sizeof buf, "overall,%lld,%.6f", static_cast<long long>(all),
                    all > 0 ? static_cast<double>(all_correct) / all : 0.0);
      lines.push_back(buf);
    }
    write_csv(opt.out_dir + "/oracle_metrics.csv", lines);
    write_csv(opt.out_dir + "/oracle_disagreements.csv", disagreements);
  } else {
    std::vector<double> mse(n);
#ifdef _OPENMP
#pragma omp parallel for schedule(dynamic) num_threads(compute_threads())
#endif
    for (int64_t i = 0; i < static_cast<int64_t>(n); ++i) {
      OpenQuestion q = open_question_from_record(data.records[i]);
      std::array<Canvas, 2> ctx{q.context[0], q.context[1]};
      auto [pred, hyp] = oracle_predict_next(std::span<const Canvas>(ctx.data(), 2));
      mse[i] = canvas_mse(pred, q.target);
    }
    std::array<int64_t, kFamilyCount> count{};
    std::array<double, kFamilyCount> sum{};
    double all = 0.0;
    for (uint64_t i = 0; i < n; ++i) {
      int fam = data.records[i].family;
      ++count[fam];
      sum[fam] += mse[i];
      all += mse[i];
    }
    std::vector<std::string> lines{"family,count,mean_prediction_mse"};
    for (int f = 0; f < kFamilyCount; ++f) {
      if (count[f] == 0) continue;
      char buf[120];
      std::snprintf(buf, sizeof buf, "%s,%lld,%.8g",
                    family_name(static_cast<QuestionFamily>(f)),
                    static_cast<long long>(count[f]), sum[f] / count[f]);
      lines.push_back(buf);
    }
    {
      char buf[120];
      std::snprintf(buf, sizeof buf, "overall,%lld,%.8g", static_cast<long long>(n),
                    n > 0 ? all / n : 0.0);
      lines.push_back(buf);
    }
    write_csv(opt.out_dir + "/oracle_metrics.csv", lines);
  }
}

void cmd_render(const RenderOptions& opt) {
  ensure_dir(opt.out_dir);
  Dataset prefix = read_dataset_prefix(opt.data, opt.count);
  for (size_t i = 0; i < prefix.records.size(); ++i) {
    const DatasetRecord& rec = prefix.records[i];
    char name[128];
    std::snprintf(name, sizeof name, "%s/q_%04zu_%s.png", opt.out_dir.c_str(), i,
                  family_name(static_cast<QuestionFamily>(rec.family)));
    if (prefix.manifest.scenario == Scenario::Open)
      write_open_sheet(name, open_question_from_record(rec));
    else
      write_question_sheet(name, question_from_record(rec));
  }
}

int cmd_gradcheck(std::ostream& out) {
  GradCheckReport report = grad_check_all();
  for (const GradCheckEntry& e : report.entries) {
    char buf[160];
    std::snprintf(buf, sizeof buf, "%-24s max_rel_err=%.3e tol=%.0e %s", e.name.c_str(),
                  e.max_rel_err, e.tolerance, e.pass() ? "PASS" : "FAIL");
    out << buf << "\n";
  }
  return report.all_pass() ? 0 : 1;
}

void cmd_report(const ReportOptions& opt) {
  struct Row {
    std::string accuracy, mean_prob, mse, oracle;
  };
  std::map<std::string, Row> rows;
  auto ingest = [&](const fs::path& path) {
    std::ifstream f(path);
    std::string header;
    std::getline(f, header);
    bool is_cls = header.rfind("family,count,accuracy,", 0) == 0;
    bool is_mse = header.rfind("family,count,mean_mse", 0) == 0;
    bool is_oracle = header == "family,count,accuracy";
    if (!is_cls && !is_mse && !is_oracle) return;
    std::string line;
    while (std::getline(f, line)) {
      std::vector<std::string> cells;
      size_t pos = 0;
      while (pos != std::string::npos) {
        size_t comma = line.find(',', pos);
        cells.push_back(line.substr(pos, comma == std::string::npos ? comma : comma - pos));
        pos = comma == std::string::npos ? comma : comma + 1;
      }
      if (cells.size() < 3) continue;
      Row& row = rows[cells[0]];
      if (is_cls) {
        row.accuracy = cells[2];
        if (cells.size() > 3) row.mean_prob = cells[3];
      } else if (is_mse) {
        row.mse = cells[2];
      } else {
        row.oracle = cells[2];
      }
    }
  };
  if (!fs::exists(opt.dir)) throw CommandError("no such directory: " + opt.dir);
  for (const auto& entry : fs::recursive_directory_iterator(opt.dir))
    if (entry.is_regular_file() && entry.path().extension() == ".csv") ingest(entry.path());
  if (rows.empty()) throw CommandError("no metrics CSVs found under " + opt.dir);

  std::vector<std::string> lines;
  lines.push_back("family,classifier_accuracy,mean_correct_prob,autoencoder_mse,oracle_accuracy");
  auto emit = [&](const std::string& name) {
    auto it = rows.find(name);
    if (it == rows.end()) return;
    const Row& r = it->second;
    lines.push_back(name + "," + (r.accuracy.empty() ? "-" : r.accuracy) + "," +
                    (r.mean_prob.empty() ? "-" : r.mean_prob) + "," +
                    (r.mse.empty() ? "-" : r.mse) + "," +
                    (r.oracle.empty() ? "-" : r.oracle));
  };
  for (QuestionFamily f : kAllFamilies) emit(family_name(f));
  emit("overall");
  write_csv(opt.dir + "/report.csv", lines);
}

}  // namespace shapeiq
