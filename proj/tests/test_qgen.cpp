#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <set>

#include "shapeiq/qgen.hpp"

using namespace shapeiq;

namespace {

// Test-side component counter, independent of the oracle module: simple
// 4-connectivity flood fill over pixels that differ from the background.
int count_components(const Canvas& c, Rgb only_color = Rgb{-1, -1, -1}) {
  auto non_bg = [&](int i) {
    bool diff = std::fabs(c.px[3 * i] - 1.f) > 0.1f ||
                std::fabs(c.px[3 * i + 1] - 1.f) > 0.1f ||
                std::fabs(c.px[3 * i + 2] - 1.f) > 0.1f;
    if (!diff) return false;
    if (only_color.r < 0) return true;
    return std::fabs(c.px[3 * i] - only_color.r) <= 0.1f &&
           std::fabs(c.px[3 * i + 1] - only_color.g) <= 0.1f &&
           std::fabs(c.px[3 * i + 2] - only_color.b) <= 0.1f;
  };
  std::vector<char> seen(kCanvasSize * kCanvasSize, 0);
  std::vector<int> stack;
  int comps = 0;
  for (int start = 0; start < kCanvasSize * kCanvasSize; ++start) {
    if (seen[start] || !non_bg(start)) continue;
    ++comps;
    stack.assign(1, start);
    seen[start] = 1;
    while (!stack.empty()) {
      int i = stack.back();
      stack.pop_back();
      int x = i % kCanvasSize, y = i / kCanvasSize;
      const int dx[4] = {1, -1, 0, 0}, dy[4] = {0, 0, 1, -1};
      for (int k = 0; k < 4; ++k) {
        int nx = x + dx[k], ny = y + dy[k];
        if (nx < 0 || ny < 0 || nx >= kCanvasSize || ny >= kCanvasSize) continue;
        int ni = ny * kCanvasSize + nx;
        if (!seen[ni] && non_bg(ni)) {
          seen[ni] = 1;
          stack.push_back(ni);
        }
      }
    }
  }
  return comps;
}

Canvas rerender_answer(const Question& q) {
  PlanarTransform t;
  switch (q.family) {
    case QuestionFamily::RotationPolygon:
    case QuestionFamily::RotationSquiggle:
      t = PlanarTransform{q.params.theta, 1.0, false, canvas_center()};
      break;
    case QuestionFamily::Size:
      t = PlanarTransform{0.0, q.params.mu, false, canvas_center()};
      break;
    case QuestionFamily::Reflection:
      t = PlanarTransform{q.params.theta, 1.0, true, canvas_center()};
      break;
    default:
      break;
  }
  switch (q.family) {
    case QuestionFamily::RotationPolygon:
    case QuestionFamily::RotationSquiggle:
    case QuestionFamily::Size:
    case QuestionFamily::Reflection: {
      Shape s = q.params.shapes.at(0);
      s = apply_transform_unchecked(s, t);
      s = apply_transform_unchecked(s, t);
      return rasterize({s});
    }
    case QuestionFamily::Number: {
      std::vector<Shape> all(q.params.shapes.begin(),
                             q.params.shapes.begin() + q.params.count + 2);
      return rasterize(all);
    }
    case QuestionFamily::Color: {
      std::vector<Shape> three(q.params.shapes.begin(), q.params.shapes.begin() + 3);
      return rasterize(three);
    }
    case QuestionFamily::Addition:
      return compose_addition_frame(q.context[0], q.context[1], q.context[2]);
  }
  return Canvas();
}

}  // namespace

TEST_CASE("gen_question: structure and bit-exact answer re-derivation per family") {
  uint64_t stream = 0;
  for (QuestionFamily family : kAllFamilies) {
    for (int i = 0; i < 12; ++i) {
      Rng rng = derive_rng(0xABCD, stream++);
      Question q = gen_question(family, rng);
      REQUIRE(q.answer_index >= 0);
      REQUIRE(q.answer_index <= 3);
      CHECK(q.family == family);
      // Re-deriving the answer from the stored parameters reproduces the
      // correct option bit for bit.
      Canvas expected = rerender_answer(q);
      CHECK(q.options[q.answer_index] == expected);
      // Distractor separation.
      for (int o = 0; o < 4; ++o) {
        if (o == q.answer_index) continue;
        CHECK(canvas_mse(q.options[o], q.options[q.answer_index]) >=
              kDistractorSeparation);
      }
      // Two-context families keep slot 0 blank; addition fills it.
      if (family == QuestionFamily::Addition)
        CHECK_FALSE(is_blank(q.context[0]));
      else
        CHECK(is_blank(q.context[0]));
    }
  }
}

TEST_CASE("gen_question: rotation frame 2 is frame 1 rotated by theta") {
  Rng rng = derive_rng(77, 0);
  Question q = gen_question(QuestionFamily::RotationPolygon, rng);
  Shape s = q.params.shapes.at(0);
  PlanarTransform t{q.params.theta, 1.0, false, canvas_center()};
  CHECK(q.context[1] == rasterize({s}));
  CHECK(q.context[2] == rasterize({apply_transform_unchecked(s, t)}));
}

TEST_CASE("gen_question: number family counts 2 -> 3 -> 4 components") {
  for (uint64_t i = 0; i < 60; ++i) {
    Rng rng = derive_rng(31337, i);
    Question q = gen_question(QuestionFamily::Number, rng);
    if (q.params.count != 2) continue;
    CHECK(count_components(q.context[1]) == 2);
    CHECK(count_components(q.context[2]) == 3);
    CHECK(count_components(q.options[q.answer_index]) == 4);
    return;
  }
  FAIL("no n=2 number question generated in 60 draws");
}

TEST_CASE("gen_question: number components increase by exactly 1 per frame") {
  for (uint64_t i = 0; i < 20; ++i) {
    Rng rng = derive_rng(555, i);
    Question q = gen_question(QuestionFamily::Number, rng);
    int n = q.params.count;
    CHECK(count_components(q.context[1]) == n);
    CHECK(count_components(q.context[2]) == n + 1);
    CHECK(count_components(q.options[q.answer_index]) == n + 2);
  }
}

TEST_CASE("gen_question: color correct option has 3 components of the second color") {
  for (uint64_t i = 0; i < 20; ++i) {
    Rng rng = derive_rng(9001, i);
    Question q = gen_question(QuestionFamily::Color, rng);
    const Canvas& correct = q.options[q.answer_index];
    CHECK(count_components(correct, q.params.color2) == 3);
    CHECK(count_components(correct, q.params.color1) == 0);
  }
}

TEST_CASE("compose_addition_frame: blank first image reduces to a plain union") {
  Rng rng = derive_rng(404, 0);
  Question q = gen_question(QuestionFamily::Addition, rng);
  Canvas blank;
  Canvas u = compose_addition_frame(blank, q.context[1], q.context[2]);
  // With im1 blank, every non-background pixel of im2 lands on im3.
  for (int i = 0; i < kCanvasSize * kCanvasSize; ++i) {
    bool bg2 = q.context[1].px[3 * i] == 1.f && q.context[1].px[3 * i + 1] == 1.f &&
               q.context[1].px[3 * i + 2] == 1.f;
    for (int c = 0; c < 3; ++c) {
      float want = bg2 ? q.context[2].px[3 * i + c] : q.context[1].px[3 * i + c];
      REQUIRE(u.px[3 * i + c] == want);
    }
  }
}

TEST_CASE("compose_addition_frame: set identity against independent evaluation") {
  for (uint64_t i = 0; i < 10; ++i) {
    Rng rng = derive_rng(606, i);
    Question q = gen_question(QuestionFamily::Addition, rng);
    const Canvas& im1 = q.context[0];
    const Canvas& im2 = q.context[1];
    const Canvas& im3 = q.context[2];
    const Canvas& im4 = q.options[q.answer_index];
    auto non_bg = [](const Canvas& c, int p) {
      return c.px[3 * p] != 1.f || c.px[3 * p + 1] != 1.f || c.px[3 * p + 2] != 1.f;
    };
    for (int p = 0; p < kCanvasSize * kCanvasSize; ++p) {
      bool in1 = non_bg(im1, p), in2 = non_bg(im2, p), in3 = non_bg(im3, p);
      bool expect_line = in2 && !in1;  // im2 \ im1
      bool expect_any = expect_line || in3;
      bool got_any = non_bg(im4, p);
      REQUIRE(expect_any == got_any);
      if (expect_line)
        for (int c = 0; c < 3; ++c) REQUIRE(im4.px[3 * p + c] == im2.px[3 * p + c]);
      else if (in3)
        for (int c = 0; c < 3; ++c) REQUIRE(im4.px[3 * p + c] == im3.px[3 * p + c]);
    }
  }
}

TEST_CASE("gen_question: answer position is uniform over 10k questions") {
  std::array<int, 4> counts{};
  const int n = 10000;
  for (int i = 0; i < n; ++i) {
    Rng rng = derive_rng(0xFEED, static_cast<uint64_t>(i));
    QuestionFamily family = kAllFamilies[i % kFamilyCount];
    Question q = gen_question(family, rng);
    ++counts[q.answer_index];
  }
  double expected = n / 4.0;
  double sigma = std::sqrt(n * 0.25 * 0.75);
  for (int k = 0; k < 4; ++k) {
    INFO("slot ", k, " count ", counts[k]);
    CHECK(std::fabs(counts[k] - expected) <= 3.0 * sigma);
  }
}

TEST_CASE("normalize: constant canvas at the mean maps to zeros") {
  NormalizationStats stats;
  stats.mean = {0.5, 0.25, 0.75};
  stats.std = {0.1, 0.2, 0.3};
  Canvas c;
  for (int i = 0; i < kCanvasSize * kCanvasSize; ++i) {
    c.px[3 * i] = 0.5f;
    c.px[3 * i + 1] = 0.25f;
    c.px[3 * i + 2] = 0.75f;
  }
  std::vector<float> t = normalize(c, stats);
  for (float v : t) CHECK(std::fabs(v) < 1e-6f);
}

TEST_CASE("normalize: identity stats leave values unchanged") {
  Rng rng(2024);
  Canvas c;
  for (float& v : c.px) v = static_cast<float>(rng.uniform());
  NormalizationStats identity;
  std::vector<float> t = normalize(c, identity);
  for (int ch = 0; ch < 3; ++ch)
    for (int p = 0; p < kCanvasSize * kCanvasSize; ++p)
      CHECK(t[ch * kCanvasSize * kCanvasSize + p] == c.px[3 * p + ch]);
}

TEST_CASE("normalize/denormalize round trip within 1e-6") {
  Rng rng(11);
  NormalizationStats stats;
  stats.mean = {0.93, 0.91, 0.90};
  stats.std = {0.2, 0.25, 0.22};
  for (int trial = 0; trial < 5; ++trial) {
    Canvas c;
    for (float& v : c.px) v = static_cast<float>(rng.uniform());
    Canvas back = denormalize(normalize(c, stats), stats);
    for (int i = 0; i < kCanvasValues; ++i)
      CHECK(std::fabs(back.px[i] - c.px[i]) < 1e-6f);
  }
}

TEST_CASE("add_noise: sigma 0 leaves the canvas unchanged") {
  Rng rng(5);
  Canvas c = rasterize({sample_shape(rng)});
  Rng noise_rng(6);
  CHECK(add_noise(c, 0.0, noise_rng) == c);
}

TEST_CASE("noise_field: sigma=99 pre-clamp std within 2 percent") {
  Rng rng(17);
  std::vector<float> field = noise_field(99.0, rng);
  double sum = 0.0, sum_sq = 0.0;
  for (float v : field) {
    sum += v;
    sum_sq += static_cast<double>(v) * v;
  }
  double n = static_cast<double>(field.size());
  double std_dev = std::sqrt(sum_sq / n - (sum / n) * (sum / n));
  double target = 99.0 / 255.0;
  CHECK(std::fabs(std_dev - target) / target < 0.02);
}

TEST_CASE("add_noise: outputs stay in [0,1]") {
  Rng rng(21);
  Canvas c = rasterize({sample_shape(rng)});
  Rng noise_rng(22);
  Canvas noisy = add_noise(c, 99.0, noise_rng);
  for (float v : noisy.px) {
    CHECK(v >= 0.f);
    CHECK(v <= 1.f);
  }
}

TEST_CASE("split_counts: 7000 uniform over the multiple-choice families") {
  auto counts = split_counts(7000, Scenario::MultipleChoice);
  for (QuestionFamily f : kAllFamilies) CHECK(counts[static_cast<size_t>(f)] == 1000);
  auto open_counts = split_counts(5000, Scenario::Open);
  for (QuestionFamily f : kOpenFamilies) CHECK(open_counts[static_cast<size_t>(f)] == 1000);
  CHECK(open_counts[static_cast<size_t>(QuestionFamily::Number)] == 0);
  CHECK(open_counts[static_cast<size_t>(QuestionFamily::Addition)] == 0);
}

TEST_CASE("gen_open_question: families and targets") {
  Rng rng(88);
  for (QuestionFamily f : kOpenFamilies) {
    OpenQuestion q = gen_open_question(f, rng);
    CHECK(q.family == f);
  }
  Rng bad(89);
  CHECK_THROWS_AS(gen_open_question(QuestionFamily::Number, bad), GenerationFailed);
  CHECK_THROWS_AS(gen_open_question(QuestionFamily::Addition, bad), GenerationFailed);
}

TEST_CASE("gen_open_question: color follows the open-question rule") {
  for (uint64_t i = 0; i < 10; ++i) {
    Rng rng = derive_rng(4242, i);
    OpenQuestion q = gen_open_question(QuestionFamily::Color, rng);
    // Target is the first shape repainted in the second color.
    Canvas expected = rasterize({recolored(q.params.shapes.at(0), q.params.color2)});
    CHECK(q.target == expected);
  }
}

TEST_CASE("dataset: write then read round trips structurally") {
  namespace fs = std::filesystem;
  fs::path dir = fs::temp_directory_path() / "shapeiq_qgen_test";
  fs::create_directories(dir);
  std::string path = (dir / "tiny.pfq").string();

  GenConfig config;
  config.scenario = Scenario::MultipleChoice;
  config.total = 21;
  config.seed = 7;
  config.verify_labels = false;
  DatasetManifest manifest = gen_dataset(config, path);
  CHECK(manifest.total() == 21);

  Dataset ds = read_dataset(path);
  REQUIRE(ds.records.size() == 21);
  std::array<uint64_t, kFamilyCount> seen{};
  for (const DatasetRecord& r : ds.records) {
    CHECK(r.frame_count() == 7);
    CHECK(r.answer <= 3);
    ++seen[r.family];
  }
  CHECK(seen == manifest.counts);

  // Same seed, same bytes.
  std::string path2 = (dir / "tiny2.pfq").string();
  gen_dataset(config, path2);
  std::ifstream f1(path, std::ios::binary), f2(path2, std::ios::binary);
  std::string b1((std::istreambuf_iterator<char>(f1)), std::istreambuf_iterator<char>());
  std::string b2((std::istreambuf_iterator<char>(f2)), std::istreambuf_iterator<char>());
  CHECK(b1 == b2);

  // Structural equality record by record after a round trip.
  Dataset ds2 = read_dataset(path2);
  REQUIRE(ds2.records.size() == ds.records.size());
  for (size_t i = 0; i < ds.records.size(); ++i) {
    CHECK(ds.records[i].family == ds2.records[i].family);
    CHECK(ds.records[i].answer == ds2.records[i].answer);
    CHECK(ds.records[i].frames == ds2.records[i].frames);
  }

  // Manifest round trip.
  DatasetManifest m2 = read_manifest(manifest_path_for(path));
  CHECK(m2.seed == manifest.seed);
  CHECK(m2.counts == manifest.counts);
  CHECK(m2.scenario == manifest.scenario);
  for (int c = 0; c < 3; ++c) {
    CHECK(m2.stats.mean[c] == doctest::Approx(manifest.stats.mean[c]).epsilon(1e-12));
    CHECK(m2.stats.std[c] == doctest::Approx(manifest.stats.std[c]).epsilon(1e-12));
  }
  fs::remove_all(dir);
}

TEST_CASE("dataset: open scenario records carry 3 frames and answer 255") {
  namespace fs = std::filesystem;
  fs::path dir = fs::temp_directory_path() / "shapeiq_qgen_open";
  fs::create_directories(dir);
  std::string path = (dir / "open.pfq").string();
  GenConfig config;
  config.scenario = Scenario::Open;
  config.total = 10;
  config.seed = 3;
  gen_dataset(config, path);
  Dataset ds = read_dataset(path);
  REQUIRE(ds.records.size() == 10);
  for (const DatasetRecord& r : ds.records) {
    CHECK(r.frame_count() == 3);
    CHECK(r.answer == 255);
    QuestionFamily f = static_cast<QuestionFamily>(r.family);
    CHECK(f != QuestionFamily::Number);
    CHECK(f != QuestionFamily::Addition);
  }
  fs::remove_all(dir);
}
