#include "shapeiq/qgen.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>

#include "shapeiq/oracle.hpp"

#ifdef _OPENMP
#include <omp.h>
#endif

namespace shapeiq {

namespace {

constexpr double kTwoPi = 2.0 * M_PI;

double wrap_angle(double theta) {
  theta = std::fmod(theta, kTwoPi);
  if (theta < 0) theta += kTwoPi;
  return theta;
}


double circular_distance(double a, double b) {
  double d = std::fabs(wrap_angle(a) - wrap_angle(b));
  return std::min(d, kTwoPi - d);
}

// Vertex angles about the canvas center; rotation/reflection shapes put all
// vertices on one circumcircle, so the angle multiset describes the shape.
std::vector<double> vertex_angles(const Shape& s) {
  std::vector<double> a;
  a.reserve(s.vertices.size());
  for (const Point& p : s.vertices)
    a.push_back(wrap_angle(std::atan2(p.y - 32.0, p.x - 32.0)));
  std::sort(a.begin(), a.end());
  return a;
}

double multiset_mismatch(const std::vector<double>& a, std::vector<double> b) {
  std::sort(b.begin(), b.end());
  double best = 1e30;
  size_t k = a.size();
  for (size_t m = 0; m < k; ++m) {
    double worst = 0.0;
    for (size_t i = 0; i < k; ++i)
      worst = std::max(worst, circular_distance(a[i], b[(i + m) % k]));
    best = std::min(best, worst);
  }
  return best;
}

// Shapes that look like a mirror or half-turn of themselves make the
// rotation and reflection readings interchangeable; the families below
// reject them.
bool near_self_symmetric(const Shape& s, double tol) {
  std::vector<double> a = vertex_angles(s);
  size_t k = a.size();
  // mirror about any axis: candidate axes bisect vertex pairs (and vertices)
  for (size_t i = 0; i < k; ++i)
    for (size_t j = i; j < k; ++j) {
      double axis = (a[i] + a[j]) / 2.0;
      for (double phi : {axis, axis + M_PI / 2.0}) {
        std::vector<double> reflected;
        reflected.reserve(k);
        for (double v : a) reflected.push_back(wrap_angle(2.0 * phi - v));
        if (multiset_mismatch(a, reflected) <= tol) return true;
      }
    }
  // half-turn (point symmetry)
  std::vector<double> turned;
  turned.reserve(k);
  for (double v : a) turned.push_back(wrap_angle(v + M_PI));
  return multiset_mismatch(a, turned) <= tol;
}

constexpr double kSymmetryTol = 4.0 * M_PI / 180.0;

double sample_theta(Rng& rng) {
  return rng.uniform(kThetaExclusion, kTwoPi - kThetaExclusion);
}

double sample_mu(Rng& rng) {
  for (;;) {
    double mu = rng.uniform(0.5, 2.0);
    if (mu < kMuExclusionLo || mu > kMuExclusionHi) return mu;
  }
}

PlanarTransform rotation_t(double theta) {
  return PlanarTransform{wrap_angle(theta), 1.0, false, canvas_center()};
}

PlanarTransform scale_t(double mu) {
  return PlanarTransform{0.0, mu, false, canvas_center()};
}

PlanarTransform reflection_t(double theta) {
  return PlanarTransform{wrap_angle(theta), 1.0, true, canvas_center()};
}

Canvas raster1(const Shape& s) { return rasterize({s}); }

// Retries `make` until the frame is at least kDistractorSeparation away from
// the correct option.
template <class F>
Canvas make_distractor(const Canvas& correct, Rng& rng, F&& make) {
  for (int i = 0; i < kGenBudget; ++i) {
    Canvas c = make(rng);
    if (canvas_mse(c, correct) >= kDistractorSeparation) return c;
  }
  throw GenerationFailed("distractor separation budget exhausted");
}

// ---- multi-shape layouts (number / color) ----------------------------------

double exemplar_radius(Rng& rng, int total_count) {
  if (total_count <= 3) return rng.uniform(6.0, 9.0);
  if (total_count <= 4) return rng.uniform(5.0, 8.0);
  if (total_count <= 5) return rng.uniform(5.0, 7.0);
  return rng.uniform(4.5, 6.5);
}

// `count` non-touching exemplars of one class, all on the same circumradius
// so no exemplar dominates the pixel mass. Polygons share the vertex count;
// every exemplar is freshly sampled, so they are not replicas.
std::vector<Shape> place_exemplars(Rng& rng, int count, ShapeKind kind,
                                   int vertex_count, Rgb color) {
  for (int attempt = 0; attempt < kGenBudget; ++attempt) {
    double r = exemplar_radius(rng, count);
    std::vector<Shape> shapes;
    std::vector<double> radii;
    bool ok = true;
    for (int i = 0; i < count && ok; ++i) {
      bool placed = false;
      for (int tries = 0; tries < 200; ++tries) {
        Point c{rng.uniform(r + 2.0, kCanvasSize - 2.0 - r),
                rng.uniform(r + 2.0, kCanvasSize - 2.0 - r)};
        bool clear = true;
        for (size_t j = 0; j < shapes.size(); ++j) {
          Point cj = kind == ShapeKind::Circle ? shapes[j].circle_center()
                                               : Point{0, 0};
          if (kind != ShapeKind::Circle) {
            double sx = 0, sy = 0;
            for (const Point& p : shapes[j].vertices) {
              sx += p.x;
              sy += p.y;
            }
            cj = Point{sx / shapes[j].vertices.size(), sy / shapes[j].vertices.size()};
          }
          if (std::hypot(c.x - cj.x, c.y - cj.y) < r + radii[j] + 3.0) {
            clear = false;
            break;
          }
        }
        if (!clear) continue;
        Shape s = kind == ShapeKind::Circle
                      ? sample_circle(rng, r, c)
                      : sample_polygon(rng, vertex_count, r, c);
        s.color = color;
        shapes.push_back(std::move(s));
        radii.push_back(r);
        placed = true;
        break;
      }
      if (!placed) ok = false;
    }
    if (ok) return shapes;
  }
  throw GenerationFailed("exemplar placement budget exhausted");
}

Canvas raster_prefix(const std::vector<Shape>& shapes, size_t count) {
  std::vector<Shape> subset(shapes.begin(), shapes.begin() + count);
  return rasterize(subset);
}

std::vector<Shape> recolor_all(const std::vector<Shape>& shapes, Rgb color) {
  std::vector<Shape> out = shapes;
  for (Shape& s : out) s.color = color;
  return out;
}

std::vector<Shape> rotate_all(const std::vector<Shape>& shapes, double theta) {
  PlanarTransform t = rotation_t(theta);
  std::vector<Shape> out;
  out.reserve(shapes.size());
  for (const Shape& s : shapes) out.push_back(apply_transform_unchecked(s, t));
  return out;
}

bool all_in_canvas(const std::vector<Shape>& shapes) {
  return std::all_of(shapes.begin(), shapes.end(),
                     [](const Shape& s) { return s.in_canvas(); });
}

// ---- addition line ---------------------------------------------------------

struct AdditionLine {
  Point a, b;
  Rgb color;
};

Canvas with_line(const Canvas& base, const AdditionLine& line) {
  Canvas out = base;
  stroke_segment(out, line.a, line.b, line.color);
  return out;
}

int visible_line_pixels(const Canvas& im1, const Canvas& im2) {
  int n = 0;
  for (int i = 0; i < kCanvasSize * kCanvasSize; ++i) {
    bool bg1 = im1.px[3 * i] == kBackground.r && im1.px[3 * i + 1] == kBackground.g &&
               im1.px[3 * i + 2] == kBackground.b;
    bool bg2 = im2.px[3 * i] == kBackground.r && im2.px[3 * i + 1] == kBackground.g &&
               im2.px[3 * i + 2] == kBackground.b;
    if (bg1 && !bg2) ++n;
  }
  return n;
}

AdditionLine sample_line(Rng& rng, const Canvas& im1) {
  for (int i = 0; i < kGenBudget; ++i) {
    AdditionLine line;
    line.a = Point{rng.uniform(6.0, 58.0), rng.uniform(6.0, 58.0)};
    line.b = Point{rng.uniform(6.0, 58.0), rng.uniform(6.0, 58.0)};
    if (std::hypot(line.b.x - line.a.x, line.b.y - line.a.y) < 16.0) continue;
    line.color = sample_color(rng);
    if (visible_line_pixels(im1, with_line(im1, line)) >= 20) return line;
  }
  throw GenerationFailed("addition line budget exhausted");
}

// ---- per-family assembly ---------------------------------------------------

struct FamilyFrames {
  std::array<Canvas, 3> context;  // slot 0 blank for 2-context families
  Canvas correct;
  QuestionParams params;
};

FamilyFrames assemble_rotation(QuestionFamily family, Rng& rng) {
  bool squiggle = family == QuestionFamily::RotationSquiggle;
  for (int i = 0; i < kGenBudget; ++i) {
    // Rotation needs a visibly oriented shape: few vertices and a radius
    // large enough that the angle is determined by the pixels. High-order
    // small polygons are near-discs and make the angle unreadable.
    Shape s = squiggle ? sample_shape(rng, ShapeKind::Squiggle)
                       : sample_polygon(rng, rng.uniform_int(3, 4),
                                        rng.uniform(13.0, 20.0), canvas_center());
    if (!squiggle && near_self_symmetric(s, kSymmetryTol)) continue;
    double theta = sample_theta(rng);
    PlanarTransform t = rotation_t(theta);
    if (!frames_fit(s, t, 3)) continue;
    Shape s1 = apply_transform_unchecked(s, t);
    Shape s2 = apply_transform_unchecked(s1, t);
    FamilyFrames f;
    f.context = {Canvas(), raster1(s), raster1(s1)};
    f.correct = raster1(s2);
    f.params.theta = theta;
    f.params.shapes = {s};
    return f;
  }
  throw GenerationFailed("rotation assembly budget exhausted");
}

FamilyFrames assemble_size(Rng& rng) {
  for (int i = 0; i < kGenBudget; ++i) {
    Shape s = sample_shape(rng);
    double mu = sample_mu(rng);
    PlanarTransform t = scale_t(mu);
    if (!frames_fit(s, t, 3)) continue;
    Shape s1 = apply_transform_unchecked(s, t);
    Shape s2 = apply_transform_unchecked(s1, t);
    FamilyFrames f;
    f.context = {Canvas(), raster1(s), raster1(s1)};
    f.correct = raster1(s2);
    f.params.mu = mu;
    f.params.shapes = {s};
    return f;
  }
  throw GenerationFailed("size assembly budget exhausted");
}

FamilyFrames assemble_reflection(Rng& rng) {
  for (int i = 0; i < kGenBudget; ++i) {
    // Same orientation-bearing shapes as the rotation family: the mirrored
    // reading must be distinguishable from a plain rotation.
    Shape s = rng.coin() ? sample_shape(rng, ShapeKind::Squiggle)
                         : sample_polygon(rng, rng.uniform_int(3, 4),
                                          rng.uniform(13.0, 20.0), canvas_center());
    if (s.kind == ShapeKind::Polygon && near_self_symmetric(s, kSymmetryTol)) continue;
    double theta = sample_theta(rng);
    PlanarTransform t = reflection_t(theta);
    if (!frames_fit(s, t, 3)) continue;
    Shape s1 = apply_transform_unchecked(s, t);
    Shape s2 = apply_transform_unchecked(s1, t);
    FamilyFrames f;
    f.context = {Canvas(), raster1(s), raster1(s1)};
    f.correct = raster1(s2);
    f.params.theta = theta;
    f.params.shapes = {s};
    return f;
  }
  throw GenerationFailed("reflection assembly budget exhausted");
}

FamilyFrames assemble_number(Rng& rng) {
  int n = rng.uniform_int(1, 4);
  int k = rng.uniform_int(3, 8);
  Rgb color = sample_color(rng);
  std::vector<Shape> layout = place_exemplars(rng, n + 2, ShapeKind::Polygon, k, color);
  FamilyFrames f;
  f.context = {Canvas(), raster_prefix(layout, n), raster_prefix(layout, n + 1)};
  f.correct = raster_prefix(layout, n + 2);
  f.params.count = n;
  f.params.vertex_count = k;
  f.params.color1 = color;
  f.params.shapes = layout;
  return f;
}

FamilyFrames assemble_color(Rng& rng) {
  ShapeKind kind = rng.coin() ? ShapeKind::Polygon : ShapeKind::Circle;
  int k = rng.uniform_int(3, 8);
  Rgb c1 = sample_color(rng);
  Rgb c2 = sample_color_distant(rng, c1);
  // Five positions: three for the sequence plus two spares for the
  // wrong-count distractor (which must not contain the answer frame).
  std::vector<Shape> layout = place_exemplars(rng, 5, kind, k, c2);
  FamilyFrames f;
  f.context = {Canvas(), rasterize({recolored(layout[0], c1)}),
               raster_prefix(layout, 2)};
  f.correct = raster_prefix(layout, 3);
  f.params.color1 = c1;
  f.params.color2 = c2;
  f.params.vertex_count = k;
  f.params.shapes = layout;
  return f;
}

FamilyFrames assemble_addition(Rng& rng) {
  Shape shape1 = sample_shape(rng);
  Shape shape3 = sample_shape(rng);
  Canvas im1 = raster1(shape1);
  AdditionLine line = sample_line(rng, im1);
  Canvas im2 = with_line(im1, line);
  Canvas im3 = raster1(shape3);
  FamilyFrames f;
  f.context = {im1, im2, im3};
  f.correct = compose_addition_frame(im1, im2, im3);
  f.params.shapes = {shape1, shape3};
  f.params.line_a = line.a;
  f.params.line_b = line.b;
  f.params.line_color = line.color;
  return f;
}

FamilyFrames assemble(QuestionFamily family, Rng& rng) {
  switch (family) {
    case QuestionFamily::RotationPolygon:
    case QuestionFamily::RotationSquiggle:
      return assemble_rotation(family, rng);
    case QuestionFamily::Size:
      return assemble_size(rng);
    case QuestionFamily::Reflection:
      return assemble_reflection(rng);
    case QuestionFamily::Number:
      return assemble_number(rng);
    case QuestionFamily::Color:
      return assemble_color(rng);
    case QuestionFamily::Addition:
      return assemble_addition(rng);
  }
  throw std::logic_error("unreachable");
}

}  // namespace

const char* family_name(QuestionFamily f) {
  switch (f) {
    case QuestionFamily::RotationPolygon: return "rotation_polygon";
    case QuestionFamily::RotationSquiggle: return "rotation_squiggle";
    case QuestionFamily::Size: return "size";
    case QuestionFamily::Reflection: return "reflection";
    case QuestionFamily::Number: return "number";
    case QuestionFamily::Color: return "color";
    case QuestionFamily::Addition: return "addition";
  }
  return "?";
}

std::optional<QuestionFamily> family_from_name(const std::string& name) {
  for (QuestionFamily f : kAllFamilies)
    if (name == family_name(f)) return f;
  return std::nullopt;
}

const char* scenario_name(Scenario s) {
  return s == Scenario::MultipleChoice ? "multiple_choice" : "open";
}

double canvas_mse(const Canvas& a, const Canvas& b) {
  double acc = 0.0;
  for (int i = 0; i < kCanvasValues; ++i) {
    double d = static_cast<double>(a.px[i]) - static_cast<double>(b.px[i]);
    acc += d * d;
  }
  return acc / kCanvasValues;
}

bool is_blank(const Canvas& c, Rgb background) {
  for (int i = 0; i < kCanvasSize * kCanvasSize; ++i)
    if (c.px[3 * i] != background.r || c.px[3 * i + 1] != background.g ||
        c.px[3 * i + 2] != background.b)
      return false;
  return true;
}

Canvas compose_addition_frame(const Canvas& im1, const Canvas& im2, const Canvas& im3) {
  Canvas out = im3;
  for (int i = 0; i < kCanvasSize * kCanvasSize; ++i) {
    bool bg1 = im1.px[3 * i] == kBackground.r && im1.px[3 * i + 1] == kBackground.g &&
               im1.px[3 * i + 2] == kBackground.b;
    bool bg2 = im2.px[3 * i] == kBackground.r && im2.px[3 * i + 1] == kBackground.g &&
               im2.px[3 * i + 2] == kBackground.b;
    if (bg1 && !bg2) {
      out.px[3 * i + 0] = im2.px[3 * i + 0];
      out.px[3 * i + 1] = im2.px[3 * i + 1];
      out.px[3 * i + 2] = im2.px[3 * i + 2];
    }
  }
  return out;
}

std::array<Canvas, 3> gen_distractors(const Canvas& correct, QuestionFamily family,
                                      const QuestionParams& params, Rng& rng) {
  std::array<Canvas, 3> out;
  switch (family) {
    case QuestionFamily::RotationPolygon:
    case QuestionFamily::RotationSquiggle: {
      const Shape& s = params.shapes.at(0);
      double theta = params.theta;
      auto wrong_angle = [&](Rng& r) {
        for (;;) {
          double tp = sample_theta(r);
          if (circular_distance(tp, theta) >= kThetaExclusion)
            return raster1(apply_transform_unchecked(s, rotation_t(theta + tp)));
        }
      };
      out[0] = make_distractor(correct, rng, wrong_angle);
      out[1] = make_distractor(correct, rng, wrong_angle);
      // Different operation on the same context frame.
      out[2] = make_distractor(correct, rng, [&](Rng& r) {
        Shape f2 = apply_transform_unchecked(s, rotation_t(theta));
        if (r.coin()) {
          for (;;) {
            double mu = sample_mu(r);
            Shape cand = apply_transform_unchecked(f2, scale_t(mu));
            if (cand.in_canvas()) return raster1(cand);
          }
        }
        return raster1(apply_transform_unchecked(f2, reflection_t(sample_theta(r))));
      });
      break;
    }
    case QuestionFamily::Size: {
      const Shape& s = params.shapes.at(0);
      double mu = params.mu;
      Shape f2 = apply_transform_unchecked(s, scale_t(mu));
      auto wrong_scale = [&](Rng& r) {
        for (;;) {
          double mp = sample_mu(r);
          if (std::fabs(mp - mu) < 0.2) continue;
          Shape cand = apply_transform_unchecked(f2, scale_t(mp));
          if (cand.in_canvas()) return raster1(cand);
        }
      };
      out[0] = make_distractor(correct, rng, wrong_scale);
      out[1] = make_distractor(correct, rng, wrong_scale);
      out[2] = make_distractor(correct, rng, [&](Rng& r) {
        if (r.coin())
          return raster1(apply_transform_unchecked(f2, rotation_t(sample_theta(r))));
        return raster1(apply_transform_unchecked(f2, reflection_t(sample_theta(r))));
      });
      break;
    }
    case QuestionFamily::Reflection: {
      const Shape& s = params.shapes.at(0);
      double theta = params.theta;
      Shape f2 = apply_transform_unchecked(s, reflection_t(theta));
      // A wrong reflection angle theta' turns the correct answer (the original
      // shape) into a rotation by theta' - theta.
      auto wrong_angle = [&](Rng& r) {
        for (;;) {
          double tp = sample_theta(r);
          if (circular_distance(tp, theta) >= kThetaExclusion)
            return raster1(apply_transform_unchecked(f2, reflection_t(tp)));
        }
      };
      out[0] = make_distractor(correct, rng, wrong_angle);
      out[1] = make_distractor(correct, rng, wrong_angle);
      out[2] = make_distractor(correct, rng, [&](Rng& r) {
        if (r.coin())
          return raster1(apply_transform_unchecked(f2, rotation_t(sample_theta(r))));
        for (;;) {
          double mu = sample_mu(r);
          Shape cand = apply_transform_unchecked(f2, scale_t(mu));
          if (cand.in_canvas()) return raster1(cand);
        }
      });
      break;
    }
    case QuestionFamily::Number: {
      int n = params.count;
      int k = params.vertex_count;
      Rgb color = params.color1;
      out[0] = make_distractor(correct, rng, [&](Rng& r) {
        int c;
        do {
          c = r.uniform_int(1, 6);
        } while (c == n + 2);
        return rasterize(place_exemplars(r, c, ShapeKind::Polygon, k, color));
      });
      out[1] = make_distractor(correct, rng, [&](Rng& r) {
        int kp;
        do {
          kp = r.uniform_int(3, 8);
        } while (kp == k);
        return rasterize(place_exemplars(r, n + 2, ShapeKind::Polygon, kp, color));
      });
      out[2] = make_distractor(correct, rng, [&](Rng& r) {
        std::vector<Shape> f2(params.shapes.begin(), params.shapes.begin() + n + 1);
        for (int tries = 0; tries < 50; ++tries) {
          std::vector<Shape> rotated = rotate_all(f2, sample_theta(r));
          if (all_in_canvas(rotated)) return rasterize(rotated);
        }
        return rasterize(recolor_all(f2, sample_color_except(r, color)));
      });
      break;
    }
    case QuestionFamily::Color: {
      std::vector<Shape> three(params.shapes.begin(), params.shapes.begin() + 3);
      out[0] = make_distractor(correct, rng, [&](Rng&) {
        return rasterize(recolor_all(three, params.color1));
      });
      out[1] = make_distractor(correct, rng, [&](Rng&) {
        std::vector<Shape> four{params.shapes[0], params.shapes[1], params.shapes[3],
                                params.shapes[4]};
        return rasterize(four);
      });
      out[2] = make_distractor(correct, rng, [&](Rng& r) {
        for (int tries = 0; tries < 50; ++tries) {
          std::vector<Shape> rotated = rotate_all(three, sample_theta(r));
          if (all_in_canvas(rotated)) return rasterize(rotated);
        }
        Rgb c3 = sample_color(r);
        while (c3 == params.color1 || c3 == params.color2) c3 = sample_color(r);
        return rasterize(recolor_all(three, c3));
      });
      break;
    }
    case QuestionFamily::Addition: {
      const Shape& shape3 = params.shapes.at(1);
      Canvas im1 = raster1(params.shapes.at(0));
      AdditionLine line{params.line_a, params.line_b, params.line_color};
      Canvas im2 = with_line(im1, line);
      Canvas im3 = raster1(shape3);
      out[0] = make_distractor(correct, rng, [&](Rng& r) {
        AdditionLine lp = sample_line(r, im1);
        return compose_addition_frame(im1, with_line(im1, lp), im3);
      });
      // Forgotten subtraction: the whole of im2 lands on im3.
      out[1] = make_distractor(correct, rng, [&](Rng&) {
        Canvas blank;
        return compose_addition_frame(blank, im2, im3);
      });
      out[2] = make_distractor(correct, rng, [&](Rng& r) {
        for (;;) {
          PlanarTransform t =
              r.coin() ? rotation_t(sample_theta(r)) : scale_t(sample_mu(r));
          Shape cand = apply_transform_unchecked(shape3, t);
          if (cand.in_canvas()) return compose_addition_frame(im1, im2, raster1(cand));
        }
      });
      break;
    }
  }
  return out;
}

Question gen_question(QuestionFamily family, Rng& rng) {
  for (int attempt = 0; attempt < kGenBudget; ++attempt) {
    try {
      FamilyFrames frames = assemble(family, rng);
      std::array<Canvas, 3> distractors =
          gen_distractors(frames.correct, family, frames.params, rng);
      Question q;
      q.family = family;
      q.context = frames.context;
      q.params = frames.params;
      // Uniform random permutation of the four options.
      std::array<int, 4> perm{0, 1, 2, 3};
      for (int i = 3; i > 0; --i) std::swap(perm[i], perm[rng.uniform_int(0, i)]);
      for (int i = 0; i < 4; ++i) {
        int src = perm[i];
        q.options[i] = src == 0 ? frames.correct : distractors[src - 1];
        if (src == 0) q.answer_index = i;
      }
      return q;
    } catch (const GenerationFailed&) {
      continue;
    }
  }
  throw GenerationFailed(std::string("generation budget exhausted for ") +
                         family_name(family));
}

OpenQuestion gen_open_question(QuestionFamily family, Rng& rng) {
  if (family == QuestionFamily::Number || family == QuestionFamily::Addition)
    throw GenerationFailed(std::string(family_name(family)) +
                           " is not an open-question family");
  OpenQuestion q;
  q.family = family;
  if (family == QuestionFamily::Color) {
    // Open-question color rule: first shape in the first color, second shape
    // in the second color; the target is the first shape in the second color.
    Shape shape1 = sample_shape(rng);
    Shape shape2 = sample_shape(rng);
    Rgb c1 = sample_color(rng);
    Rgb c2 = sample_color_distant(rng, c1);
    q.context = {rasterize({recolored(shape1, c1)}), rasterize({recolored(shape2, c2)})};
    q.target = rasterize({recolored(shape1, c2)});
    q.params.color1 = c1;
    q.params.color2 = c2;
    q.params.shapes = {shape1, shape2};
    return q;
  }
  FamilyFrames frames = assemble(family, rng);
  q.context = {frames.context[1], frames.context[2]};
  q.target = frames.correct;
  q.params = frames.params;
  return q;
}

// ---- normalization / noise -------------------------------------------------

std::vector<float> normalize(const Canvas& canvas, const NormalizationStats& stats) {
  std::vector<float> out(kCanvasValues);
  for (int c = 0; c < 3; ++c) {
    double mean = stats.mean[c], sd = stats.std[c];
    for (int i = 0; i < kCanvasSize * kCanvasSize; ++i)
      out[c * kCanvasSize * kCanvasSize + i] =
          static_cast<float>((canvas.px[3 * i + c] - mean) / sd);
  }
  return out;
}

Canvas denormalize(const std::vector<float>& values, const NormalizationStats& stats) {
  Canvas out;
  for (int c = 0; c < 3; ++c) {
    double mean = stats.mean[c], sd = stats.std[c];
    for (int i = 0; i < kCanvasSize * kCanvasSize; ++i)
      out.px[3 * i + c] =
          static_cast<float>(values[c * kCanvasSize * kCanvasSize + i] * sd + mean);
  }
  return out;
}

std::vector<float> noise_field(double sigma8, Rng& rng) {
  std::vector<float> field(kCanvasValues);
  for (float& v : field) v = static_cast<float>(rng.normal(0.0, sigma8) / 255.0);
  return field;
}

Canvas add_noise(const Canvas& canvas, double sigma8, Rng& rng) {
  if (sigma8 <= 0.0) return canvas;
  std::vector<float> field = noise_field(sigma8, rng);
  Canvas out = canvas;
  for (int i = 0; i < kCanvasValues; ++i)
    out.px[i] = std::clamp(canvas.px[i] + field[i], 0.f, 1.f);
  return out;
}

// ---- serialization ---------------------------------------------------------

std::vector<uint8_t> canvas_to_u8(const Canvas& canvas) {
  std::vector<uint8_t> out(kCanvasValues);
  for (int i = 0; i < kCanvasValues; ++i)
    out[i] = static_cast<uint8_t>(std::lround(canvas.px[i] * 255.f));
  return out;
}

Canvas canvas_from_u8(const uint8_t* data) {
  Canvas c;
  for (int i = 0; i < kCanvasValues; ++i) c.px[i] = data[i] / 255.f;
  return c;
}

Canvas DatasetRecord::frame_canvas(int i) const { return canvas_from_u8(frame(i)); }

namespace {

void append_frame(std::vector<uint8_t>& frames, const Canvas& c) {
  std::vector<uint8_t> bytes = canvas_to_u8(c);
  frames.insert(frames.end(), bytes.begin(), bytes.end());
}

}  // namespace

DatasetRecord to_record(const Question& q) {
  DatasetRecord r;
  r.family = static_cast<uint8_t>(q.family);
  r.answer = static_cast<uint8_t>(q.answer_index);
  r.frames.reserve(7 * kFrameBytes);
  for (const Canvas& c : q.context) append_frame(r.frames, c);
  for (const Canvas& c : q.options) append_frame(r.frames, c);
  return r;
}

DatasetRecord to_record(const OpenQuestion& q) {
  DatasetRecord r;
  r.family = static_cast<uint8_t>(q.family);
  r.answer = 255;
  r.frames.reserve(3 * kFrameBytes);
  for (const Canvas& c : q.context) append_frame(r.frames, c);
  append_frame(r.frames, q.target);
  return r;
}

Question question_from_record(const DatasetRecord& r) {
  if (r.frame_count() != 7)
    throw std::runtime_error("record is not a multiple-choice question");
  Question q;
  q.family = static_cast<QuestionFamily>(r.family);
  q.answer_index = r.answer;
  for (int i = 0; i < 3; ++i) q.context[i] = r.frame_canvas(i);
  for (int i = 0; i < 4; ++i) q.options[i] = r.frame_canvas(3 + i);
  return q;
}

OpenQuestion open_question_from_record(const DatasetRecord& r) {
  if (r.frame_count() != 3)
    throw std::runtime_error("record is not an open question");
  OpenQuestion q;
  q.family = static_cast<QuestionFamily>(r.family);
  q.context[0] = r.frame_canvas(0);
  q.context[1] = r.frame_canvas(1);
  q.target = r.frame_canvas(2);
  return q;
}

std::array<uint64_t, kFamilyCount> split_counts(uint64_t total, Scenario scenario) {
  std::array<uint64_t, kFamilyCount> counts{};
  std::vector<QuestionFamily> families;
  if (scenario == Scenario::MultipleChoice)
    families.assign(kAllFamilies.begin(), kAllFamilies.end());
  else
    families.assign(kOpenFamilies.begin(), kOpenFamilies.end());
  uint64_t base = total / families.size();
  uint64_t rem = total % families.size();
  for (size_t i = 0; i < families.size(); ++i)
    counts[static_cast<size_t>(families[i])] = base + (i < rem ? 1 : 0);
  return counts;
}

std::string manifest_path_for(const std::string& dataset_path) {
  return dataset_path + ".manifest.txt";
}

void write_manifest(const DatasetManifest& m, const std::string& path) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot write manifest: " + path);
  char buf[64];
  f << "format_version = " << m.format_version << "\n";
  f << "scenario = " << scenario_name(m.scenario) << "\n";
  f << "seed = " << m.seed << "\n";
  std::snprintf(buf, sizeof buf, "%.17g", m.noise_sigma8);
  f << "noise_sigma8 = " << buf << "\n";
  f << "oracle_resamples = " << m.oracle_resamples << "\n";
  for (int i = 0; i < kFamilyCount; ++i)
    f << "count_" << family_name(static_cast<QuestionFamily>(i)) << " = "
      << m.counts[i] << "\n";
  const char* chan = "rgb";
  for (int c = 0; c < 3; ++c) {
    std::snprintf(buf, sizeof buf, "%.17g", m.stats.mean[c]);
    f << "mean_" << chan[c] << " = " << buf << "\n";
  }
  for (int c = 0; c < 3; ++c) {
    std::snprintf(buf, sizeof buf, "%.17g", m.stats.std[c]);
    f << "std_" << chan[c] << " = " << buf << "\n";
  }
  if (!f.good()) throw std::runtime_error("manifest write failed: " + path);
}

DatasetManifest read_manifest(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("cannot read manifest: " + path);
  DatasetManifest m;
  std::string line;
  while (std::getline(f, line)) {
    size_t eq = line.find('=');
    if (eq == std::string::npos) continue;
    std::string key = line.substr(0, eq);
    std::string value = line.substr(eq + 1);
    auto trim = [](std::string& s) {
      size_t a = s.find_first_not_of(" \t");
      size_t b = s.find_last_not_of(" \t\r");
      s = a == std::string::npos ? "" : s.substr(a, b - a + 1);
    };
    trim(key);
    trim(value);
    if (key == "format_version") m.format_version = std::stoul(value);
    else if (key == "scenario")
      m.scenario = value == "open" ? Scenario::Open : Scenario::MultipleChoice;
    else if (key == "seed") m.seed = std::stoull(value);
    else if (key == "noise_sigma8") m.noise_sigma8 = std::stod(value);
    else if (key == "oracle_resamples") m.oracle_resamples = std::stoull(value);
    else if (key.rfind("count_", 0) == 0) {
      auto fam = family_from_name(key.substr(6));
      if (fam) m.counts[static_cast<size_t>(*fam)] = std::stoull(value);
    } else if (key.rfind("mean_", 0) == 0 || key.rfind("std_", 0) == 0) {
      bool is_mean = key[0] == 'm';
      char c = key.back();
      int idx = c == 'r' ? 0 : c == 'g' ? 1 : 2;
      (is_mean ? m.stats.mean : m.stats.std)[idx] = std::stod(value);
    }
  }
  return m;
}

namespace {

struct StatsAccumulator {
  std::array<double, 3> sum{};
  std::array<double, 3> sum_sq{};
  uint64_t count = 0;  // pixels per channel

  void add_frames(const std::vector<uint8_t>& frames) {
    size_t n = frames.size() / 3;
    for (size_t i = 0; i < n; ++i)
      for (int c = 0; c < 3; ++c) {
        double v = frames[3 * i + c] / 255.0;
        sum[c] += v;
        sum_sq[c] += v * v;
      }
    count += n;
  }

  NormalizationStats finish() const {
    NormalizationStats s;
    for (int c = 0; c < 3; ++c) {
      double mean = sum[c] / static_cast<double>(count);
      double var = sum_sq[c] / static_cast<double>(count) - mean * mean;
      s.mean[c] = mean;
      s.std[c] = std::sqrt(std::max(var, 1e-12));
    }
    return s;
  }
};

void write_u32(std::ofstream& f, uint32_t v) {
  f.write(reinterpret_cast<const char*>(&v), 4);
}
void write_u64(std::ofstream& f, uint64_t v) {
  f.write(reinterpret_cast<const char*>(&v), 8);
}

DatasetRecord generate_record(Scenario scenario, QuestionFamily family,
                              uint64_t seed, uint64_t index, bool verify,
                              uint64_t* resamples) {
  if (scenario == Scenario::Open) {
    Rng rng = derive_rng(seed, index);
    return to_record(gen_open_question(family, rng));
  }
  for (uint64_t round = 0;; ++round) {
    Rng rng(mix_seed(mix_seed(seed, index), round));
    Question q = gen_question(family, rng);
    if (!verify) return to_record(q);
    SolveResult sr = oracle_solve(q.context, q.options);
    if (sr.index == q.answer_index) return to_record(q);
    if (round >= 20)
      throw GenerationFailed("oracle verification kept rejecting candidates");
    ++*resamples;
  }
}

}  // namespace

DatasetManifest gen_dataset(const GenConfig& config, const std::string& path) {
  DatasetManifest manifest;
  manifest.scenario = config.scenario;
  manifest.seed = config.seed;
  manifest.noise_sigma8 = config.noise_sigma8;

  if (config.family) {
    manifest.counts[static_cast<size_t>(*config.family)] =
        config.total > 0 ? config.total : 1000;
    if (config.scenario == Scenario::Open &&
        (*config.family == QuestionFamily::Number ||
         *config.family == QuestionFamily::Addition))
      throw std::invalid_argument("family not available in the open scenario");
  } else {
    bool have_counts = false;
    for (uint64_t c : config.counts) have_counts |= c > 0;
    manifest.counts = have_counts ? config.counts
                                  : split_counts(config.total, config.scenario);
  }
  uint64_t total = manifest.total();
  if (total == 0) throw std::invalid_argument("dataset would be empty");

  // Deterministically shuffled family order.
  std::vector<QuestionFamily> order;
  order.reserve(total);
  for (int i = 0; i < kFamilyCount; ++i)
    for (uint64_t j = 0; j < manifest.counts[i]; ++j)
      order.push_back(static_cast<QuestionFamily>(i));
  Rng shuffle_rng(mix_seed(config.seed, 0x5caffe11ULL));
  for (size_t i = order.size(); i > 1; --i)
    std::swap(order[i - 1], order[shuffle_rng.uniform_int(0, static_cast<int>(i) - 1)]);

  std::string tmp = path + ".tmp";
  std::ofstream f(tmp, std::ios::binary);
  if (!f) throw std::runtime_error("cannot write dataset: " + path);
  f.write("PFQ1", 4);
  write_u32(f, manifest.format_version);
  write_u64(f, total);

  StatsAccumulator stats;
  uint64_t resamples = 0;
  const uint64_t chunk = 256;
  std::vector<DatasetRecord> buffer;
  for (uint64_t start = 0; start < total; start += chunk) {
    uint64_t end = std::min(start + chunk, total);
    buffer.assign(end - start, {});
    std::vector<uint64_t> chunk_resamples(end - start, 0);
#ifdef _OPENMP
#pragma omp parallel for schedule(dynamic) num_threads(config.threads > 0 ? config.threads : omp_get_max_threads())
#endif
    for (int64_t i = 0; i < static_cast<int64_t>(end - start); ++i) {
      uint64_t index = start + static_cast<uint64_t>(i);
      DatasetRecord rec =
          generate_record(config.scenario, order[index], config.seed, index,
                          config.verify_labels && config.scenario == Scenario::MultipleChoice,
                          &chunk_resamples[i]);
      if (config.noise_sigma8 > 0.0) {
        Rng noise_rng(mix_seed(mix_seed(config.seed ^ 0xA05EULL, index), 1));
        for (int fr = 0; fr < rec.frame_count(); ++fr) {
          Canvas noisy = add_noise(rec.frame_canvas(fr), config.noise_sigma8, noise_rng);
          std::vector<uint8_t> bytes = canvas_to_u8(noisy);
          std::memcpy(rec.frames.data() + static_cast<size_t>(fr) * kFrameBytes,
                      bytes.data(), kFrameBytes);
        }
      }
      buffer[i] = std::move(rec);
    }
    for (uint64_t r : chunk_resamples) resamples += r;
    for (const DatasetRecord& rec : buffer) {
      f.put(static_cast<char>(rec.family));
      f.put(static_cast<char>(rec.answer));
      f.write(reinterpret_cast<const char*>(rec.frames.data()),
              static_cast<std::streamsize>(rec.frames.size()));
      stats.add_frames(rec.frames);
    }
  }
  if (!f.good()) throw std::runtime_error("dataset write failed: " + path);
  f.close();
  manifest.stats = stats.finish();
  manifest.oracle_resamples = resamples;
  std::filesystem::rename(tmp, path);
  write_manifest(manifest, manifest_path_for(path));
  return manifest;
}

Dataset read_dataset(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot read dataset: " + path);
  char magic[4];
  f.read(magic, 4);
  if (!f || std::memcmp(magic, "PFQ1", 4) != 0)
    throw std::runtime_error("bad dataset magic in " + path);
  uint32_t version = 0;
  uint64_t count = 0;
  f.read(reinterpret_cast<char*>(&version), 4);
  f.read(reinterpret_cast<char*>(&count), 8);
  if (!f) throw std::runtime_error("truncated dataset header in " + path);
  if (version != kDatasetFormatVersion)
    throw std::runtime_error("unsupported dataset version in " + path);

  Dataset ds;
  ds.manifest = read_manifest(manifest_path_for(path));
  int frames = ds.manifest.scenario == Scenario::Open ? 3 : 7;
  ds.records.resize(count);
  for (uint64_t i = 0; i < count; ++i) {
    DatasetRecord& r = ds.records[i];
    int fam = f.get();
    int ans = f.get();
    if (fam == EOF || ans == EOF)
      throw std::runtime_error("truncated dataset record in " + path);
    r.family = static_cast<uint8_t>(fam);
    r.answer = static_cast<uint8_t>(ans);
    r.frames.resize(static_cast<size_t>(frames) * kFrameBytes);
    f.read(reinterpret_cast<char*>(r.frames.data()),
           static_cast<std::streamsize>(r.frames.size()));
    if (!f) throw std::runtime_error("truncated dataset record in " + path);
  }
  return ds;
}

}  // namespace shapeiq
