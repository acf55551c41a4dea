#pragma once

#include <array>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "shapeiq/rng.hpp"

namespace shapeiq {

inline constexpr int kCanvasSize = 64;
inline constexpr int kChannels = 3;
inline constexpr int kCanvasValues = kCanvasSize * kCanvasSize * kChannels;

struct Rgb {
  float r = 0.f, g = 0.f, b = 0.f;
  bool operator==(const Rgb&) const = default;
};

inline constexpr Rgb kBackground{1.f, 1.f, 1.f};

// Eight mutually distant colors on a white background.
inline constexpr std::array<Rgb, 8> kPalette{{
    {1.f, 0.f, 0.f},    // red
    {0.f, 0.8f, 0.f},   // green
    {0.f, 0.f, 1.f},    // blue
    {1.f, 1.f, 0.f},    // yellow
    {1.f, 0.f, 1.f},    // magenta
    {0.f, 1.f, 1.f},    // cyan
    {0.f, 0.f, 0.f},    // black
    {1.f, 0.5f, 0.f},   // orange
}};

struct Point {
  double x = 0.0;
  double y = 0.0;
};

inline Point canvas_center() { return Point{kCanvasSize / 2.0, kCanvasSize / 2.0}; }

enum class ShapeKind : uint8_t { Polygon, Circle, Squiggle };

// A parametric figure in continuous canvas coordinates.
//   Polygon:  3-8 vertices, filled (sampling keeps them convex).
//   Circle:   vertices = {center, center + (radius, 0)}, filled.
//   Squiggle: exactly 6 control points, stroked as a closed polyline of
//             2-pixel width.
struct Shape {
  ShapeKind kind = ShapeKind::Polygon;
  std::vector<Point> vertices;
  Rgb color{};
  bool filled = true;

  Point circle_center() const { return vertices.at(0); }
  double circle_radius() const;
  void bounds(double& min_x, double& min_y, double& max_x, double& max_y) const;
  bool in_canvas() const;
  bool valid(std::string* why = nullptr) const;
};

// Reflection about the vertical axis through the pivot, then scaling by mu
// about the pivot, then rotation by theta about the pivot.
struct PlanarTransform {
  double theta = 0.0;  // radians, normalized to [0, 2pi)
  double mu = 1.0;     // scale factor, > 0
  bool reflect = false;
  Point pivot = canvas_center();
};

struct OutOfBounds : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// 64x64 RGB canvas, intensities in [0,1], row-major interleaved (y, x, c).
struct Canvas {
  std::vector<float> px;

  Canvas() : px(kCanvasValues, 1.f) {}
  explicit Canvas(Rgb bg) : px(kCanvasValues) { fill(bg); }

  void fill(Rgb c) {
    for (int i = 0; i < kCanvasSize * kCanvasSize; ++i) {
      px[3 * i + 0] = c.r;
      px[3 * i + 1] = c.g;
      px[3 * i + 2] = c.b;
    }
  }
  float* at(int x, int y) { return &px[(y * kCanvasSize + x) * 3]; }
  const float* at(int x, int y) const { return &px[(y * kCanvasSize + x) * 3]; }
  void set(int x, int y, Rgb c) {
    float* p = at(x, y);
    p[0] = c.r;
    p[1] = c.g;
    p[2] = c.b;
  }
  Rgb get(int x, int y) const {
    const float* p = at(x, y);
    return Rgb{p[0], p[1], p[2]};
  }
  bool operator==(const Canvas&) const = default;
};

Point transform_point(const Point& p, const PlanarTransform& t);

// Applies t to every vertex. Throws OutOfBounds if the result leaves the
// canvas; callers use that to drive rejection sampling.
Shape apply_transform(const Shape& shape, const PlanarTransform& t);

// Unchecked variant used by frames_fit and by the generators that do their
// own bounds handling.
Shape apply_transform_unchecked(const Shape& shape, const PlanarTransform& t);

// True iff the shape stays inside the canvas under 0..n_frames-1 repeated
// applications of t.
bool frames_fit(const Shape& shape, const PlanarTransform& t, int n_frames);

// Deterministic rasterizer. Later shapes draw over earlier ones. Polygons:
// even-odd scanline fill at pixel centers. Circles: center-distance test.
// Squiggles: closed 2-pixel-wide polyline. No anti-aliasing.
Canvas rasterize(const std::vector<Shape>& shapes, Rgb background = kBackground);

// Strokes one 2-pixel-wide segment onto the canvas (used for the addition
// family's line).
void stroke_segment(Canvas& canvas, Point a, Point b, Rgb color);

// Random shape centered on the given point. Polygons are convex: k vertices
// on a circle of the given radius at sorted random angles.
Shape sample_polygon(Rng& rng, int vertex_count, double radius, Point center);
Shape sample_circle(Rng& rng, double radius, Point center);
Shape sample_squiggle(Rng& rng, double radius, Point center);

// Spec defaults: circumradius in [8,20], centered on the canvas, color from
// the palette. kind selects the class; vertex count for polygons is uniform
// in [3,8] unless given.
Shape sample_shape(Rng& rng, ShapeKind kind, int vertex_count = 0);
Shape sample_shape(Rng& rng);  // any kind

Rgb sample_color(Rng& rng);
Rgb sample_color_except(Rng& rng, Rgb avoid);

inline float color_distance2(Rgb a, Rgb b) {
  float dr = a.r - b.r, dg = a.g - b.g, db = a.b - b.b;
  return dr * dr + dg * dg + db * db;
}

// A second color far enough from the first that a recolored shape is
// unmistakably different (the palette holds a few near pairs, e.g. orange
// and red).
Rgb sample_color_distant(Rng& rng, Rgb from, float min_distance2 = 0.5f);

Shape translated(const Shape& shape, double dx, double dy);
Shape recolored(const Shape& shape, Rgb color);

// PNG export, 8-bit RGB, intensity i mapped to round(i*255).
void write_png(const std::string& path, const Canvas& canvas);
void write_png_rgb8(const std::string& path, int width, int height,
                    const std::vector<uint8_t>& rgb);

}  // namespace shapeiq
