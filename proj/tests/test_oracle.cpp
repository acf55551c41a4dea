#include <doctest.h>

#include <cmath>

#include "shapeiq/oracle.hpp"

using namespace shapeiq;

namespace {

constexpr double kDeg = M_PI / 180.0;

double circ_dist(double a, double b) {
  double d = std::fabs(a - b);
  d = std::fmod(d, 2.0 * M_PI);
  return std::min(d, 2.0 * M_PI - d);
}

}  // namespace

TEST_CASE("oracle_fit: identical frames fit a near-zero rotation") {
  Rng rng(1);
  Canvas f = rasterize({sample_shape(rng, ShapeKind::Polygon)});
  std::array<Canvas, 2> ctx{f, f};
  Hypothesis h = oracle_fit(QuestionFamily::RotationPolygon,
                            std::span<const Canvas>(ctx.data(), 2));
  CHECK(h.residual < 1e-6);
  CHECK(std::min(h.theta, 2.0 * M_PI - h.theta) < 1.5 * kDeg);
}

TEST_CASE("oracle_fit: recovers the scale factor of a generated size question") {
  int hits = 0, trials = 0;
  for (uint64_t i = 0; i < 25; ++i) {
    Rng rng = derive_rng(2001, i);
    OpenQuestion q = gen_open_question(QuestionFamily::Size, rng);
    Hypothesis h =
        oracle_fit(QuestionFamily::Size, std::span<const Canvas>(q.context.data(), 2));
    ++trials;
    if (std::fabs(h.mu - q.params.mu) <= 0.05) ++hits;
  }
  CHECK(hits >= trials - 1);
}

TEST_CASE("oracle_fit: size fit example mu=1.5 recovered within 0.05") {
  for (uint64_t i = 0; i < 400; ++i) {
    Rng rng = derive_rng(2002, i);
    OpenQuestion q = gen_open_question(QuestionFamily::Size, rng);
    if (std::fabs(q.params.mu - 1.5) > 0.05) continue;
    Hypothesis h =
        oracle_fit(QuestionFamily::Size, std::span<const Canvas>(q.context.data(), 2));
    CHECK(h.mu == doctest::Approx(q.params.mu).epsilon(0.04));
    return;
  }
  FAIL("no size question near mu=1.5 generated");
}

TEST_CASE("oracle_fit: rotation residual small, angle recovered within a degree") {
  int over_degree = 0;
  const int trials = 60;
  for (uint64_t i = 0; i < trials; ++i) {
    Rng rng = derive_rng(2003, i);
    OpenQuestion q = gen_open_question(QuestionFamily::RotationPolygon, rng);
    Hypothesis h = oracle_fit(QuestionFamily::RotationPolygon,
                              std::span<const Canvas>(q.context.data(), 2));
    CHECK(h.residual < 0.005);
    over_degree += circ_dist(h.theta, q.params.theta) > 1.0 * kDeg;
  }
  // Pixel quantization leaves a small tail of instances just over a degree.
  CHECK(over_degree <= 2);
}

TEST_CASE("oracle_predict_next: color questions get 3 components of the second color") {
  for (uint64_t i = 0; i < 8; ++i) {
    Rng rng = derive_rng(2004, i);
    Question q = gen_question(QuestionFamily::Color, rng);
    auto [pred, hyp] =
        oracle_predict_next(std::span<const Canvas>(q.context.data(), 3));
    CHECK(hyp.family == QuestionFamily::Color);
    std::vector<Component> comps = connected_components(pred);
    CHECK(comps.size() == 3);
    for (const Component& c : comps) CHECK(colors_close(c.mean_color, q.params.color2));
  }
}

TEST_CASE("oracle_predict_next: addition with blank im1 is the pixelwise union") {
  Rng rng = derive_rng(2005, 0);
  Question q = gen_question(QuestionFamily::Addition, rng);
  std::array<Canvas, 3> ctx{Canvas(), q.context[1], q.context[2]};
  auto [pred, hyp] = oracle_predict_next(std::span<const Canvas>(ctx.data(), 3));
  CHECK(hyp.family == QuestionFamily::Addition);
  Canvas expected = compose_addition_frame(Canvas(), q.context[1], q.context[2]);
  CHECK(pred == expected);
}

TEST_CASE("oracle_predict_next: open questions across families track the target") {
  double total = 0.0;
  int n = 0;
  for (QuestionFamily f : kOpenFamilies)
    for (uint64_t i = 0; i < 6; ++i) {
      Rng rng = derive_rng(2006 + static_cast<uint64_t>(f), i);
      OpenQuestion q = gen_open_question(f, rng);
      auto [pred, hyp] =
          oracle_predict_next(std::span<const Canvas>(q.context.data(), 2));
      double mse = canvas_mse(pred, q.target);
      INFO(family_name(f), " mse=", mse);
      CHECK(mse < 0.01);
      total += mse;
      ++n;
    }
  CHECK(total / n < 0.002);
}

TEST_CASE("oracle_solve: all options identical returns index 0") {
  Rng rng = derive_rng(2007, 0);
  Question q = gen_question(QuestionFamily::Size, rng);
  std::array<Canvas, 4> same{q.options[q.answer_index], q.options[q.answer_index],
                             q.options[q.answer_index], q.options[q.answer_index]};
  SolveResult r = oracle_solve(q.context, same);
  CHECK(r.index == 0);
}

TEST_CASE("oracle_solve: solves generated questions per family") {
  for (QuestionFamily f : kAllFamilies) {
    int correct = 0;
    const int trials = 25;
    for (uint64_t i = 0; i < trials; ++i) {
      Rng rng = derive_rng(40000 + static_cast<uint64_t>(f) * 1000, i);
      Question q = gen_question(f, rng);
      SolveResult r = oracle_solve(q.context, q.options);
      correct += r.index == q.answer_index;
    }
    INFO(family_name(f), " correct=", correct, "/", trials);
    CHECK(correct >= trials - 1);
  }
}

TEST_CASE("oracle_solve: best-fit family matches the generating family") {
  int matches = 0, total = 0;
  for (QuestionFamily f : kAllFamilies) {
    for (uint64_t i = 0; i < 10; ++i) {
      Rng rng = derive_rng(50000 + static_cast<uint64_t>(f) * 100, i);
      Question q = gen_question(f, rng);
      SolveResult r = oracle_solve(q.context, q.options);
      QuestionFamily got = r.hypothesis.family;
      bool rotation_pair =
          (f == QuestionFamily::RotationPolygon || f == QuestionFamily::RotationSquiggle) &&
          (got == QuestionFamily::RotationPolygon || got == QuestionFamily::RotationSquiggle);
      matches += got == f || rotation_pair;
      ++total;
    }
  }
  INFO("family id matches ", matches, "/", total);
  CHECK(matches >= total * 98 / 100);
}

TEST_CASE("oracle_fit: deterministic, same frames same hypothesis") {
  Rng rng = derive_rng(2008, 0);
  OpenQuestion q = gen_open_question(QuestionFamily::RotationSquiggle, rng);
  Hypothesis a = oracle_fit(QuestionFamily::RotationSquiggle,
                            std::span<const Canvas>(q.context.data(), 2));
  Hypothesis b = oracle_fit(QuestionFamily::RotationSquiggle,
                            std::span<const Canvas>(q.context.data(), 2));
  CHECK(a.theta == b.theta);
  CHECK(a.residual == b.residual);
}

TEST_CASE("image transforms: mirror twice is the identity") {
  Rng rng(3);
  Canvas c = rasterize({sample_shape(rng)});
  CHECK(mirror_image(mirror_image(c)) == c);
}

TEST_CASE("connected_components: counts and colors") {
  Rng rng(4);
  Shape a = sample_polygon(rng, 4, 7.0, Point{16, 16});
  Shape b = sample_polygon(rng, 5, 7.0, Point{48, 48});
  a.color = kPalette[0];
  b.color = kPalette[2];
  Canvas c = rasterize({a, b});
  std::vector<Component> comps = connected_components(c);
  REQUIRE(comps.size() == 2);
  bool saw_red = false, saw_blue = false;
  for (const Component& comp : comps) {
    saw_red |= colors_close(comp.mean_color, kPalette[0]);
    saw_blue |= colors_close(comp.mean_color, kPalette[2]);
  }
  CHECK(saw_red);
  CHECK(saw_blue);
}
