#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include "shapeiq/geometry.hpp"

using namespace shapeiq;

namespace {

// Independent oracle: crossing-number test evaluated per pixel center,
// straight from the edge list.
bool point_inside(const std::vector<Point>& poly, double xc, double yc) {
  bool inside = false;
  for (size_t i = 0; i < poly.size(); ++i) {
    const Point& p = poly[i];
    const Point& q = poly[(i + 1) % poly.size()];
    if ((p.y <= yc && yc < q.y) || (q.y <= yc && yc < p.y)) {
      double x = p.x + (yc - p.y) * (q.x - p.x) / (q.y - p.y);
      if (x > xc) inside = !inside;
    }
  }
  return inside;
}

int colored_pixels(const Canvas& canvas, Rgb color) {
  int n = 0;
  for (int y = 0; y < kCanvasSize; ++y)
    for (int x = 0; x < kCanvasSize; ++x)
      if (canvas.get(x, y) == color) ++n;
  return n;
}

Shape square_at(double x0, double y0, double side, Rgb color) {
  Shape s;
  s.kind = ShapeKind::Polygon;
  s.color = color;
  s.vertices = {Point{x0, y0}, Point{x0 + side, y0}, Point{x0 + side, y0 + side},
                Point{x0, y0 + side}};
  return s;
}

}  // namespace

TEST_CASE("apply_transform: quarter turn moves +x offset to +y") {
  Shape s = square_at(32.0, 31.0, 2.0, kPalette[0]);
  s.vertices = {Point{33.0, 32.0}, Point{34.0, 32.0}, Point{33.5, 33.0}};
  PlanarTransform t{M_PI / 2.0, 1.0, false, canvas_center()};
  Shape r = apply_transform(s, t);
  // (33,32) is offset (+1,0) from the pivot; after a 90-degree turn it is (0,+1).
  CHECK(r.vertices[0].x == doctest::Approx(32.0).epsilon(1e-12));
  CHECK(r.vertices[0].y == doctest::Approx(33.0).epsilon(1e-12));
}

TEST_CASE("apply_transform: identity transform returns the same shape") {
  Rng rng(7);
  Shape s = sample_shape(rng, ShapeKind::Polygon);
  PlanarTransform id{};
  Shape r = apply_transform(s, id);
  for (size_t i = 0; i < s.vertices.size(); ++i) {
    CHECK(r.vertices[i].x == doctest::Approx(s.vertices[i].x).epsilon(1e-12));
    CHECK(r.vertices[i].y == doctest::Approx(s.vertices[i].y).epsilon(1e-12));
  }
}

TEST_CASE("apply_transform: reflection flips the x offset") {
  Shape s;
  s.kind = ShapeKind::Polygon;
  s.color = kPalette[1];
  s.vertices = {Point{33.0, 32.0}, Point{34.0, 31.0}, Point{34.0, 33.0}};
  PlanarTransform t{0.0, 1.0, true, canvas_center()};
  Shape r = apply_transform(s, t);
  CHECK(r.vertices[0].x == doctest::Approx(31.0).epsilon(1e-12));
  CHECK(r.vertices[0].y == doctest::Approx(32.0).epsilon(1e-12));
}

TEST_CASE("apply_transform: out-of-bounds result throws") {
  Shape s = square_at(50.0, 50.0, 10.0, kPalette[0]);
  PlanarTransform t{0.0, 2.0, false, canvas_center()};
  CHECK_THROWS_AS(apply_transform(s, t), OutOfBounds);
}

TEST_CASE("transform round trips") {
  Rng rng(42);
  for (int trial = 0; trial < 50; ++trial) {
    Shape s = sample_shape(rng, ShapeKind::Polygon);
    double theta = rng.uniform(0.0, 2.0 * M_PI);

    // rotate then unrotate
    Shape fwd = apply_transform_unchecked(s, {theta, 1.0, false, canvas_center()});
    Shape back = apply_transform_unchecked(fwd, {-theta, 1.0, false, canvas_center()});
    for (size_t i = 0; i < s.vertices.size(); ++i) {
      CHECK(std::fabs(back.vertices[i].x - s.vertices[i].x) < 1e-9);
      CHECK(std::fabs(back.vertices[i].y - s.vertices[i].y) < 1e-9);
    }
    // double reflection is exactly the identity
    Shape m1 = apply_transform_unchecked(s, {0.0, 1.0, true, canvas_center()});
    Shape m2 = apply_transform_unchecked(m1, {0.0, 1.0, true, canvas_center()});
    for (size_t i = 0; i < s.vertices.size(); ++i) {
      CHECK(m2.vertices[i].x == s.vertices[i].x);
      CHECK(m2.vertices[i].y == s.vertices[i].y);
    }
    // scale by mu then 1/mu
    double mu = rng.uniform(0.5, 2.0);
    Shape up = apply_transform_unchecked(s, {0.0, mu, false, canvas_center()});
    Shape down = apply_transform_unchecked(up, {0.0, 1.0 / mu, false, canvas_center()});
    for (size_t i = 0; i < s.vertices.size(); ++i) {
      CHECK(std::fabs(down.vertices[i].x - s.vertices[i].x) < 1e-9);
      CHECK(std::fabs(down.vertices[i].y - s.vertices[i].y) < 1e-9);
    }
  }
}

TEST_CASE("rasterize: empty shape list gives the background everywhere") {
  Canvas c = rasterize({});
  for (float v : c.px) CHECK(v == 1.f);
}

TEST_CASE("rasterize: centered side-32 square covers exactly 32x32 pixel centers") {
  // Square [16,48)^2: pixel centers 16.5..47.5 fall inside on both axes.
  Shape s = square_at(16.0, 16.0, 32.0, kPalette[2]);
  Canvas c = rasterize({s});
  CHECK(colored_pixels(c, kPalette[2]) == 32 * 32);
}

TEST_CASE("rasterize: centered circle of radius 16 covers about pi r^2 centers") {
  Rng rng(3);
  Shape s = sample_circle(rng, 16.0, canvas_center());
  Canvas c = rasterize({s});
  // Independent brute-force membership count over all pixel centers.
  int expected = 0;
  for (int y = 0; y < kCanvasSize; ++y)
    for (int x = 0; x < kCanvasSize; ++x) {
      double dx = x + 0.5 - 32.0, dy = y + 0.5 - 32.0;
      if (dx * dx + dy * dy <= 16.0 * 16.0) ++expected;
    }
  int got = colored_pixels(c, s.color);
  CHECK(got == expected);
  CHECK(std::fabs(got - M_PI * 256.0) / (M_PI * 256.0) < 0.03);
}

TEST_CASE("rasterize: scanline fill matches brute-force point-in-polygon exactly") {
  Rng rng(11);
  for (int trial = 0; trial < 40; ++trial) {
    Shape s = sample_shape(rng, ShapeKind::Polygon);
    Canvas c = rasterize({s});
    for (int y = 0; y < kCanvasSize; ++y)
      for (int x = 0; x < kCanvasSize; ++x) {
        bool filled = c.get(x, y) == s.color;
        bool inside = point_inside(s.vertices, x + 0.5, y + 0.5);
        REQUIRE(filled == inside);
      }
  }
}

TEST_CASE("rasterize: later shapes draw over earlier ones") {
  Shape below = square_at(20.0, 20.0, 24.0, kPalette[0]);
  Shape above = square_at(28.0, 28.0, 8.0, kPalette[2]);
  Canvas c = rasterize({below, above});
  CHECK(c.get(30, 30) == kPalette[2]);
  CHECK(c.get(21, 21) == kPalette[0]);
}

TEST_CASE("rasterize: pure function, identical inputs give identical canvases") {
  Rng rng1(123), rng2(123);
  Shape a = sample_shape(rng1);
  Shape b = sample_shape(rng2);
  CHECK(rasterize({a}) == rasterize({b}));
}

TEST_CASE("sample_shape: triangles have 3 vertices and stay in the canvas") {
  Rng rng(5);
  for (int i = 0; i < 30; ++i) {
    Shape s = sample_shape(rng, ShapeKind::Polygon, 3);
    CHECK(s.vertices.size() == 3);
    CHECK(s.in_canvas());
    CHECK(s.valid());
  }
}

TEST_CASE("sample_shape: squiggles carry exactly 6 control points") {
  Rng rng(6);
  for (int i = 0; i < 30; ++i) {
    Shape s = sample_shape(rng, ShapeKind::Squiggle);
    CHECK(s.vertices.size() == 6);
    CHECK(s.valid());
  }
}

TEST_CASE("sample_shape: same seed gives bit-identical shapes") {
  Rng a(99), b(99);
  for (int i = 0; i < 10; ++i) {
    Shape sa = sample_shape(a);
    Shape sb = sample_shape(b);
    CHECK(sa.kind == sb.kind);
    REQUIRE(sa.vertices.size() == sb.vertices.size());
    for (size_t j = 0; j < sa.vertices.size(); ++j) {
      CHECK(sa.vertices[j].x == sb.vertices[j].x);
      CHECK(sa.vertices[j].y == sb.vertices[j].y);
    }
    CHECK(sa.color == sb.color);
  }
}

TEST_CASE("frames_fit: doubling scale overflows by the third frame") {
  Rng rng(8);
  Shape s = sample_polygon(rng, 4, 20.0, canvas_center());
  PlanarTransform t{0.0, 2.0, false, canvas_center()};
  CHECK_FALSE(frames_fit(s, t, 3));
}

TEST_CASE("frames_fit: identity always fits, centered rotation always fits") {
  Rng rng(9);
  Shape s = sample_shape(rng, ShapeKind::Polygon);
  CHECK(frames_fit(s, PlanarTransform{}, 5));
  PlanarTransform rot{1.1, 1.0, false, canvas_center()};
  CHECK(frames_fit(s, rot, 12));
}

TEST_CASE("png export: deterministic bytes with the 8-bit mapping") {
  Rng rng(10);
  Shape s = sample_shape(rng, ShapeKind::Polygon);
  Canvas c = rasterize({s});
  namespace fs = std::filesystem;
  fs::path dir = fs::temp_directory_path() / "shapeiq_png_test";
  fs::create_directories(dir);
  std::string p1 = (dir / "a.png").string();
  std::string p2 = (dir / "b.png").string();
  write_png(p1, c);
  write_png(p2, c);
  std::ifstream f1(p1, std::ios::binary), f2(p2, std::ios::binary);
  std::string b1((std::istreambuf_iterator<char>(f1)), std::istreambuf_iterator<char>());
  std::string b2((std::istreambuf_iterator<char>(f2)), std::istreambuf_iterator<char>());
  REQUIRE(b1.size() > 8);
  CHECK(b1 == b2);
  const unsigned char sig[8] = {137, 'P', 'N', 'G', 13, 10, 26, 10};
  for (int i = 0; i < 8; ++i) CHECK(static_cast<unsigned char>(b1[i]) == sig[i]);
  fs::remove_all(dir);
}
