#include "shapeiq/geometry.hpp"

#include <algorithm>
#include <cmath>

namespace shapeiq {

namespace {

constexpr double kTwoPi = 2.0 * M_PI;
constexpr double kStrokeRadius = 1.0;  // 2-pixel-wide strokes

// Sampled coordinates are snapped to a 2^-20 canvas-unit grid. Grid values in
// [0,64) are exact in binary, which keeps mirror arithmetic about the canvas
// center exact: reflecting twice reproduces the coordinate bit for bit.
double snap(double v) { return std::round(v * 1048576.0) / 1048576.0; }

Point snap(Point p) { return Point{snap(p.x), snap(p.y)}; }

}  // namespace

double Shape::circle_radius() const {
  const Point& c = vertices.at(0);
  const Point& r = vertices.at(1);
  return std::hypot(r.x - c.x, r.y - c.y);
}

void Shape::bounds(double& min_x, double& min_y, double& max_x, double& max_y) const {
  if (kind == ShapeKind::Circle) {
    Point c = circle_center();
    double r = circle_radius();
    min_x = c.x - r;
    max_x = c.x + r;
    min_y = c.y - r;
    max_y = c.y + r;
    return;
  }
  min_x = min_y = 1e300;
  max_x = max_y = -1e300;
  for (const Point& p : vertices) {
    min_x = std::min(min_x, p.x);
    max_x = std::max(max_x, p.x);
    min_y = std::min(min_y, p.y);
    max_y = std::max(max_y, p.y);
  }
  if (kind == ShapeKind::Squiggle) {
    min_x -= kStrokeRadius;
    min_y -= kStrokeRadius;
    max_x += kStrokeRadius;
    max_y += kStrokeRadius;
  }
}

bool Shape::in_canvas() const {
  double min_x, min_y, max_x, max_y;
  bounds(min_x, min_y, max_x, max_y);
  return min_x > 0.0 && min_y > 0.0 && max_x < kCanvasSize && max_y < kCanvasSize;
}

bool Shape::valid(std::string* why) const {
  auto fail = [&](const char* msg) {
    if (why) *why = msg;
    return false;
  };
  for (const Point& p : vertices)
    if (!std::isfinite(p.x) || !std::isfinite(p.y)) return fail("non-finite vertex");
  switch (kind) {
    case ShapeKind::Polygon:
      if (vertices.size() < 3 || vertices.size() > 8) return fail("polygon vertex count");
      break;
    case ShapeKind::Circle:
      if (vertices.size() != 2) return fail("circle encoding");
      if (circle_radius() <= 0) return fail("circle radius");
      break;
    case ShapeKind::Squiggle:
      if (vertices.size() != 6) return fail("squiggle control-point count");
      break;
  }
  float dr = std::fabs(color.r - kBackground.r);
  float dg = std::fabs(color.g - kBackground.g);
  float db = std::fabs(color.b - kBackground.b);
  if (std::max({dr, dg, db}) < 0.2f) return fail("color too close to background");
  for (float c : {color.r, color.g, color.b})
    if (c < 0.f || c > 1.f) return fail("color channel out of range");
  if (!in_canvas()) return fail("bounding box not inside canvas");
  return true;
}

Point transform_point(const Point& p, const PlanarTransform& t) {
  // Pure mirror: one rounding per coordinate, an exact involution on snapped
  // coordinates.
  if (t.reflect && t.theta == 0.0 && t.mu == 1.0)
    return Point{2.0 * t.pivot.x - p.x, p.y};
  double x = p.x - t.pivot.x;
  double y = p.y - t.pivot.y;
  if (t.reflect) x = -x;
  x *= t.mu;
  y *= t.mu;
  double c = std::cos(t.theta), s = std::sin(t.theta);
  double rx = x * c - y * s;
  double ry = x * s + y * c;
  return Point{rx + t.pivot.x, ry + t.pivot.y};
}

Shape apply_transform_unchecked(const Shape& shape, const PlanarTransform& t) {
  Shape out = shape;
  if (shape.kind == ShapeKind::Circle) {
    // A circle stays a circle: move the center, scale the radius.
    Point c = transform_point(shape.circle_center(), t);
    double r = shape.circle_radius() * t.mu;
    out.vertices = {c, Point{c.x + r, c.y}};
    return out;
  }
  for (size_t i = 0; i < shape.vertices.size(); ++i)
    out.vertices[i] = transform_point(shape.vertices[i], t);
  return out;
}

Shape apply_transform(const Shape& shape, const PlanarTransform& t) {
  Shape out = apply_transform_unchecked(shape, t);
  if (!out.in_canvas()) throw OutOfBounds("transformed shape leaves the canvas");
  return out;
}

bool frames_fit(const Shape& shape, const PlanarTransform& t, int n_frames) {
  Shape s = shape;
  if (!s.in_canvas()) return false;
  for (int i = 1; i < n_frames; ++i) {
    s = apply_transform_unchecked(s, t);
    if (!s.in_canvas()) return false;
  }
  return true;
}

namespace {

// Crossing parity of a horizontal ray from (xc, yc) towards +x. Edges use the
// half-open rule [y_lo, y_hi) so a vertex is counted exactly once.
bool point_in_polygon(const std::vector<Point>& poly, double xc, double yc) {
  bool inside = false;
  size_t n = poly.size();
  for (size_t i = 0; i < n; ++i) {
    const Point& p = poly[i];
    const Point& q = poly[(i + 1) % n];
    if ((p.y <= yc && yc < q.y) || (q.y <= yc && yc < p.y)) {
      double x = p.x + (yc - p.y) * (q.x - p.x) / (q.y - p.y);
      if (x > xc) inside = !inside;
    }
  }
  return inside;
}

void fill_polygon(Canvas& canvas, const Shape& shape) {
  double min_x, min_y, max_x, max_y;
  shape.bounds(min_x, min_y, max_x, max_y);
  int y0 = std::max(0, static_cast<int>(std::floor(min_y - 0.5)));
  int y1 = std::min(kCanvasSize - 1, static_cast<int>(std::ceil(max_y)));
  int x0 = std::max(0, static_cast<int>(std::floor(min_x - 0.5)));
  int x1 = std::min(kCanvasSize - 1, static_cast<int>(std::ceil(max_x)));
  const std::vector<Point>& poly = shape.vertices;
  size_t n = poly.size();
  std::vector<double> xs;
  xs.reserve(n);
  for (int y = y0; y <= y1; ++y) {
    double yc = y + 0.5;
    xs.clear();
    for (size_t i = 0; i < n; ++i) {
      const Point& p = poly[i];
      const Point& q = poly[(i + 1) % n];
      if ((p.y <= yc && yc < q.y) || (q.y <= yc && yc < p.y))
        xs.push_back(p.x + (yc - p.y) * (q.x - p.x) / (q.y - p.y));
    }
    if (xs.empty()) continue;
    std::sort(xs.begin(), xs.end());
    for (int x = x0; x <= x1; ++x) {
      double xc = x + 0.5;
      // Even-odd rule: inside iff an odd number of intersections lie to the
      // right of the pixel center.
      size_t after = xs.end() - std::upper_bound(xs.begin(), xs.end(), xc);
      if (after & 1) canvas.set(x, y, shape.color);
    }
  }
}

void fill_circle(Canvas& canvas, const Shape& shape) {
  Point c = shape.circle_center();
  double r = shape.circle_radius();
  int y0 = std::max(0, static_cast<int>(std::floor(c.y - r - 1)));
  int y1 = std::min(kCanvasSize - 1, static_cast<int>(std::ceil(c.y + r + 1)));
  int x0 = std::max(0, static_cast<int>(std::floor(c.x - r - 1)));
  int x1 = std::min(kCanvasSize - 1, static_cast<int>(std::ceil(c.x + r + 1)));
  double r2 = r * r;
  for (int y = y0; y <= y1; ++y)
    for (int x = x0; x <= x1; ++x) {
      double dx = x + 0.5 - c.x;
      double dy = y + 0.5 - c.y;
      if (dx * dx + dy * dy <= r2) canvas.set(x, y, shape.color);
    }
}

}  // namespace

void stroke_segment(Canvas& canvas, Point a, Point b, Rgb color) {
  double min_x = std::min(a.x, b.x) - kStrokeRadius - 1;
  double max_x = std::max(a.x, b.x) + kStrokeRadius + 1;
  double min_y = std::min(a.y, b.y) - kStrokeRadius - 1;
  double max_y = std::max(a.y, b.y) + kStrokeRadius + 1;
  int y0 = std::max(0, static_cast<int>(std::floor(min_y)));
  int y1 = std::min(kCanvasSize - 1, static_cast<int>(std::ceil(max_y)));
  int x0 = std::max(0, static_cast<int>(std::floor(min_x)));
  int x1 = std::min(kCanvasSize - 1, static_cast<int>(std::ceil(max_x)));
  double vx = b.x - a.x, vy = b.y - a.y;
  double len2 = vx * vx + vy * vy;
  for (int y = y0; y <= y1; ++y)
    for (int x = x0; x <= x1; ++x) {
      double px = x + 0.5 - a.x;
      double py = y + 0.5 - a.y;
      double t = len2 > 0 ? std::clamp((px * vx + py * vy) / len2, 0.0, 1.0) : 0.0;
      double dx = px - t * vx;
      double dy = py - t * vy;
      if (dx * dx + dy * dy <= kStrokeRadius * kStrokeRadius)
        canvas.set(x, y, color);
    }
}

Canvas rasterize(const std::vector<Shape>& shapes, Rgb background) {
  Canvas canvas(background);
  for (const Shape& s : shapes) {
    switch (s.kind) {
      case ShapeKind::Polygon:
        fill_polygon(canvas, s);
        break;
      case ShapeKind::Circle:
        fill_circle(canvas, s);
        break;
      case ShapeKind::Squiggle:
        for (size_t i = 0; i < s.vertices.size(); ++i)
          stroke_segment(canvas, s.vertices[i],
                         s.vertices[(i + 1) % s.vertices.size()], s.color);
        break;
    }
  }
  return canvas;
}

Rgb sample_color(Rng& rng) {
  return kPalette[static_cast<size_t>(rng.uniform_int(0, kPalette.size() - 1))];
}

Rgb sample_color_except(Rng& rng, Rgb avoid) {
  for (;;) {
    Rgb c = sample_color(rng);
    if (!(c == avoid)) return c;
  }
}

Rgb sample_color_distant(Rng& rng, Rgb from, float min_distance2) {
  for (;;) {
    Rgb c = sample_color(rng);
    if (color_distance2(c, from) >= min_distance2) return c;
  }
}

namespace {

// A shape must land on the pixel grid as one solid 4-connected blob, or
// component-counting families fall apart.
bool renders_as_single_component(const Shape& s, int min_pixels) {
  Canvas c = rasterize({s});
  std::vector<char> seen(kCanvasSize * kCanvasSize, 0);
  auto colored = [&](int i) {
    return c.px[3 * i] != kBackground.r || c.px[3 * i + 1] != kBackground.g ||
           c.px[3 * i + 2] != kBackground.b;
  };
  int total = 0, first = -1;
  for (int i = 0; i < kCanvasSize * kCanvasSize; ++i)
    if (colored(i)) {
      ++total;
      if (first < 0) first = i;
    }
  if (total < min_pixels) return false;
  std::vector<int> stack{first};
  seen[first] = 1;
  int reached = 0;
  while (!stack.empty()) {
    int i = stack.back();
    stack.pop_back();
    ++reached;
    int x = i % kCanvasSize, y = i / kCanvasSize;
    const int dx[4] = {1, -1, 0, 0}, dy[4] = {0, 0, 1, -1};
    for (int k = 0; k < 4; ++k) {
      int nx = x + dx[k], ny = y + dy[k];
      if (nx < 0 || ny < 0 || nx >= kCanvasSize || ny >= kCanvasSize) continue;
      int ni = ny * kCanvasSize + nx;
      if (!seen[ni] && colored(ni)) {
        seen[ni] = 1;
        stack.push_back(ni);
      }
    }
  }
  return reached == total;
}

}  // namespace

Shape sample_polygon(Rng& rng, int vertex_count, double radius, Point center) {
  Shape s;
  s.kind = ShapeKind::Polygon;
  s.filled = true;
  s.color = sample_color(rng);
  double min_gap = kTwoPi / (4.0 * vertex_count);
  double max_gap_limit = kTwoPi * 150.0 / 360.0;
  for (;;) {
    std::vector<double> angles(vertex_count);
    for (double& a : angles) a = rng.uniform(0.0, kTwoPi);
    std::sort(angles.begin(), angles.end());
    double gap = angles.front() + kTwoPi - angles.back();
    double max_gap = gap;
    for (int i = 1; i < vertex_count; ++i) {
      gap = std::min(gap, angles[i] - angles[i - 1]);
      max_gap = std::max(max_gap, angles[i] - angles[i - 1]);
    }
    if (gap < min_gap) continue;      // avoid sliver polygons
    if (max_gap > max_gap_limit) continue;  // avoid thin wedges off the center
    s.vertices.clear();
    for (double a : angles)
      s.vertices.push_back(snap(
          Point{center.x + radius * std::cos(a), center.y + radius * std::sin(a)}));
    if (!renders_as_single_component(s, 8)) continue;
    return s;
  }
}

Shape sample_circle(Rng& rng, double radius, Point center) {
  Shape s;
  s.kind = ShapeKind::Circle;
  s.filled = true;
  s.color = sample_color(rng);
  Point c = snap(center);
  s.vertices = {c, snap(Point{c.x + radius, c.y})};
  return s;
}

Shape sample_squiggle(Rng& rng, double radius, Point center) {
  Shape s;
  s.kind = ShapeKind::Squiggle;
  s.filled = false;
  s.color = sample_color(rng);
  for (;;) {
    s.vertices.clear();
    for (int i = 0; i < 6; ++i) {
      double r = radius * std::sqrt(rng.uniform());
      double a = rng.uniform(0.0, kTwoPi);
      s.vertices.push_back(
          snap(Point{center.x + r * std::cos(a), center.y + r * std::sin(a)}));
    }
    // Reject squiggles so small they degenerate to a blob.
    double spread = 0.0;
    for (int i = 0; i < 6; ++i)
      for (int j = i + 1; j < 6; ++j)
        spread = std::max(spread, std::hypot(s.vertices[i].x - s.vertices[j].x,
                                             s.vertices[i].y - s.vertices[j].y));
    if (spread >= radius * 0.8) return s;
  }
}

Shape sample_shape(Rng& rng, ShapeKind kind, int vertex_count) {
  double radius = rng.uniform(8.0, 20.0);
  Point center = canvas_center();
  switch (kind) {
    case ShapeKind::Polygon: {
      int k = vertex_count > 0 ? vertex_count : rng.uniform_int(3, 8);
      return sample_polygon(rng, k, radius, center);
    }
    case ShapeKind::Circle:
      return sample_circle(rng, radius, center);
    case ShapeKind::Squiggle:
      return sample_squiggle(rng, 20.0, center);
  }
  throw std::logic_error("unreachable");
}

Shape sample_shape(Rng& rng) {
  int pick = rng.uniform_int(0, 2);
  return sample_shape(rng, static_cast<ShapeKind>(pick));
}

Shape translated(const Shape& shape, double dx, double dy) {
  Shape out = shape;
  for (Point& p : out.vertices) p = snap(Point{p.x + dx, p.y + dy});
  return out;
}

Shape recolored(const Shape& shape, Rgb color) {
  Shape out = shape;
  out.color = color;
  return out;
}

}  // namespace shapeiq
