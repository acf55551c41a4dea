#include "shapeiq/oracle.hpp"

#include <algorithm>
#include <cmath>

namespace shapeiq {

namespace {

constexpr double kTwoPi = 2.0 * M_PI;
constexpr double kDegree = M_PI / 180.0;
const Point kPivot = canvas_center();

bool is_background_px(const Canvas& c, int i) {
  return std::fabs(c.px[3 * i + 0] - kBackground.r) <= 0.1f &&
         std::fabs(c.px[3 * i + 1] - kBackground.g) <= 0.1f &&
         std::fabs(c.px[3 * i + 2] - kBackground.b) <= 0.1f;
}

// Bilinear sample at continuous canvas coordinates; background outside.
inline void sample_bilinear(const Canvas& src, double qx, double qy, float out[3]) {
  double u = qx - 0.5, v = qy - 0.5;
  double fu = std::floor(u), fv = std::floor(v);
  int i0 = static_cast<int>(fu), j0 = static_cast<int>(fv);
  double ax = u - fu, ay = v - fv;
  const float bg[3] = {kBackground.r, kBackground.g, kBackground.b};
  const float* p00 = bg;
  const float* p10 = bg;
  const float* p01 = bg;
  const float* p11 = bg;
  bool in_x0 = i0 >= 0 && i0 < kCanvasSize;
  bool in_x1 = i0 + 1 >= 0 && i0 + 1 < kCanvasSize;
  bool in_y0 = j0 >= 0 && j0 < kCanvasSize;
  bool in_y1 = j0 + 1 >= 0 && j0 + 1 < kCanvasSize;
  if (in_x0 && in_y0) p00 = src.at(i0, j0);
  if (in_x1 && in_y0) p10 = src.at(i0 + 1, j0);
  if (in_x0 && in_y1) p01 = src.at(i0, j0 + 1);
  if (in_x1 && in_y1) p11 = src.at(i0 + 1, j0 + 1);
  for (int c = 0; c < 3; ++c) {
    double top = p00[c] * (1 - ax) + p10[c] * ax;
    double bot = p01[c] * (1 - ax) + p11[c] * ax;
    out[c] = static_cast<float>(top * (1 - ay) + bot * ay);
  }
}

struct Window {
  int x0 = 0, y0 = 0, x1 = kCanvasSize - 1, y1 = kCanvasSize - 1;
};

// Smallest box holding every non-background pixel of both frames plus the
// disk they sweep when rotated about the canvas center. MSE restricted to
// this window equals full-canvas MSE for rotations and mirrors.
Window rotation_window(const Canvas& a, const Canvas& b) {
  double r2max = 0.0;
  for (const Canvas* c : {&a, &b})
    for (int y = 0; y < kCanvasSize; ++y)
      for (int x = 0; x < kCanvasSize; ++x) {
        int i = y * kCanvasSize + x;
        if (is_background_px(*c, i)) continue;
        double dx = x + 0.5 - kPivot.x;
        double dy = y + 0.5 - kPivot.y;
        r2max = std::max(r2max, dx * dx + dy * dy);
      }
  double r = std::sqrt(r2max) + 2.0;
  Window w;
  w.x0 = std::max(0, static_cast<int>(std::floor(kPivot.x - r)));
  w.x1 = std::min(kCanvasSize - 1, static_cast<int>(std::ceil(kPivot.x + r)));
  w.y0 = std::max(0, static_cast<int>(std::floor(kPivot.y - r)));
  w.y1 = std::min(kCanvasSize - 1, static_cast<int>(std::ceil(kPivot.y + r)));
  return w;
}

// MSE between `target` and `src` transformed by the inverse map, without
// materializing the transformed frame. The map sends an output pixel center
// to source coordinates.
template <class Map>
double transform_mse(const Canvas& src, const Canvas& target, const Window& w, Map&& map) {
  double acc = 0.0;
  for (int y = w.y0; y <= w.y1; ++y)
    for (int x = w.x0; x <= w.x1; ++x) {
      double qx, qy;
      map(x + 0.5, y + 0.5, qx, qy);
      float s[3];
      sample_bilinear(src, qx, qy, s);
      const float* t = target.at(x, y);
      for (int c = 0; c < 3; ++c) {
        double d = static_cast<double>(s[c]) - static_cast<double>(t[c]);
        acc += d * d;
      }
    }
  return acc / kCanvasValues;
}

double rotation_mse(const Canvas& f1, const Canvas& f2, double theta, const Window& w) {
  double c = std::cos(-theta), s = std::sin(-theta);
  return transform_mse(f1, f2, w, [&](double px, double py, double& qx, double& qy) {
    double dx = px - kPivot.x, dy = py - kPivot.y;
    qx = kPivot.x + dx * c - dy * s;
    qy = kPivot.y + dx * s + dy * c;
  });
}

double reflection_mse(const Canvas& f1, const Canvas& f2, double theta, const Window& w) {
  // forward map = rotate(theta) after mirror; inverse = mirror after rotate(-theta)
  double c = std::cos(-theta), s = std::sin(-theta);
  return transform_mse(f1, f2, w, [&](double px, double py, double& qx, double& qy) {
    double dx = px - kPivot.x, dy = py - kPivot.y;
    double rx = dx * c - dy * s;
    double ry = dx * s + dy * c;
    qx = kPivot.x - rx;
    qy = kPivot.y + ry;
  });
}

double scale_mse(const Canvas& f1, const Canvas& f2, double mu) {
  Window w;  // full canvas: scaling moves content radially
  return transform_mse(f1, f2, w, [&](double px, double py, double& qx, double& qy) {
    qx = kPivot.x + (px - kPivot.x) / mu;
    qy = kPivot.y + (py - kPivot.y) / mu;
  });
}

}  // namespace

Canvas rotate_image(const Canvas& src, double theta) {
  Canvas out;
  double c = std::cos(-theta), s = std::sin(-theta);
  for (int y = 0; y < kCanvasSize; ++y)
    for (int x = 0; x < kCanvasSize; ++x) {
      double dx = x + 0.5 - kPivot.x, dy = y + 0.5 - kPivot.y;
      sample_bilinear(src, kPivot.x + dx * c - dy * s, kPivot.y + dx * s + dy * c,
                      out.at(x, y));
    }
  return out;
}

Canvas scale_image(const Canvas& src, double mu) {
  Canvas out;
  for (int y = 0; y < kCanvasSize; ++y)
    for (int x = 0; x < kCanvasSize; ++x)
      sample_bilinear(src, kPivot.x + (x + 0.5 - kPivot.x) / mu,
                      kPivot.y + (y + 0.5 - kPivot.y) / mu, out.at(x, y));
  return out;
}

Canvas mirror_image(const Canvas& src) {
  Canvas out;
  for (int y = 0; y < kCanvasSize; ++y)
    for (int x = 0; x < kCanvasSize; ++x) {
      const float* p = src.at(kCanvasSize - 1 - x, y);
      float* q = out.at(x, y);
      q[0] = p[0];
      q[1] = p[1];
      q[2] = p[2];
    }
  return out;
}

Canvas reflect_rotate_image(const Canvas& src, double theta) {
  return rotate_image(mirror_image(src), theta);
}

bool colors_close(Rgb a, Rgb b, float tol) {
  return std::fabs(a.r - b.r) <= tol && std::fabs(a.g - b.g) <= tol &&
         std::fabs(a.b - b.b) <= tol;
}

std::vector<Component> connected_components(const Canvas& canvas) {
  std::vector<Component> comps;
  std::vector<int> label(kCanvasSize * kCanvasSize, -1);
  std::vector<int> stack;
  for (int start = 0; start < kCanvasSize * kCanvasSize; ++start) {
    if (label[start] >= 0 || is_background_px(canvas, start)) continue;
    int id = static_cast<int>(comps.size());
    comps.emplace_back();
    Component& comp = comps.back();
    double sum[3] = {0, 0, 0};
    stack.assign(1, start);
    label[start] = id;
    while (!stack.empty()) {
      int i = stack.back();
      stack.pop_back();
      comp.pixels.push_back(i);
      int x = i % kCanvasSize, y = i / kCanvasSize;
      comp.min_x = std::min(comp.min_x, x);
      comp.max_x = std::max(comp.max_x, x);
      comp.min_y = std::min(comp.min_y, y);
      comp.max_y = std::max(comp.max_y, y);
      for (int c = 0; c < 3; ++c) sum[c] += canvas.px[3 * i + c];
      const int dx[4] = {1, -1, 0, 0};
      const int dy[4] = {0, 0, 1, -1};
      for (int k = 0; k < 4; ++k) {
        int nx = x + dx[k], ny = y + dy[k];
        if (nx < 0 || nx >= kCanvasSize || ny < 0 || ny >= kCanvasSize) continue;
        int ni = ny * kCanvasSize + nx;
        if (label[ni] >= 0 || is_background_px(canvas, ni)) continue;
        label[ni] = id;
        stack.push_back(ni);
      }
    }
    double n = static_cast<double>(comp.pixels.size());
    comp.mean_color = Rgb{static_cast<float>(sum[0] / n), static_cast<float>(sum[1] / n),
                          static_cast<float>(sum[2] / n)};
  }
  return comps;
}

namespace {

// Separable [1,2,1]/4 blur, one pass per axis. Fitting runs on lightly
// blurred frames: the shapes' hard edges alias on the pixel grid and bias
// the minimum of the matching error; low-passing both sides centers it.
Canvas blur_pass(const Canvas& src) {
  Canvas tmp, out;
  for (int y = 0; y < kCanvasSize; ++y)
    for (int x = 0; x < kCanvasSize; ++x)
      for (int c = 0; c < 3; ++c) {
        float acc = 2.f * src.at(x, y)[c];
        acc += src.at(std::max(0, x - 1), y)[c];
        acc += src.at(std::min(kCanvasSize - 1, x + 1), y)[c];
        tmp.at(x, y)[c] = acc / 4.f;
      }
  for (int y = 0; y < kCanvasSize; ++y)
    for (int x = 0; x < kCanvasSize; ++x)
      for (int c = 0; c < 3; ++c) {
        float acc = 2.f * tmp.at(x, y)[c];
        acc += tmp.at(x, std::max(0, y - 1))[c];
        acc += tmp.at(x, std::min(kCanvasSize - 1, y + 1))[c];
        out.at(x, y)[c] = acc / 4.f;
      }
  return out;
}

Canvas fit_smooth(const Canvas& src) { return blur_pass(blur_pass(src)); }

// Refines theta around a hint on one smoothed frame pair: 0.1-degree grid in
// a +-3 degree window, then a parabolic sub-grid step. Returns the
// unnormalized angle so callers can combine estimates across blur levels.
template <class Eval>
double refine_theta(Eval&& eval, double hint, double* best_out) {
  double best_theta = hint, best = eval(hint);
  for (int d = -30; d <= 30; ++d) {
    if (d == 0) continue;
    double theta = hint + d * 0.1 * kDegree;
    double m = eval(theta);
    if (m < best) {
      best = m;
      best_theta = theta;
    }
  }
  double h = 0.1 * kDegree;
  double lo = eval(best_theta - h), hi = eval(best_theta + h);
  double denom = lo - 2.0 * best + hi;
  if (denom > 1e-18) {
    double shift = 0.5 * (lo - hi) / denom * h;
    if (std::fabs(shift) < h) {
      double cand = best_theta + shift;
      double m = eval(cand);
      if (m < best) {
        best = m;
        best_theta = cand;
      }
    }
  }
  if (best_out) *best_out = best;
  return best_theta;
}

Hypothesis fit_rotation_like(const Canvas& raw1, const Canvas& raw2, bool reflect) {
  Canvas f1 = fit_smooth(raw1);
  Canvas f2 = fit_smooth(raw2);
  Window w = rotation_window(f1, f2);
  auto eval_on = [&](const Canvas& a, const Canvas& b) {
    return [&, reflect](double theta) {
      return reflect ? reflection_mse(a, b, theta, w) : rotation_mse(a, b, theta, w);
    };
  };
  auto eval = eval_on(f1, f2);
  // Coarse 1-degree sweep over the full circle.
  double coarse_theta = 0.0, best = 1e30;
  for (int d = 0; d < 360; ++d) {
    double theta = d * kDegree;
    double m = eval(theta);
    if (m < best) {
      best = m;
      coarse_theta = theta;
    }
  }
  Hypothesis h;
  h.family = reflect ? QuestionFamily::Reflection : QuestionFamily::RotationPolygon;
  if (reflect) {
    // Reflection needs the residual and only a serviceable angle: one level.
    double refined_best = best;
    double theta = refine_theta(eval, coarse_theta, &refined_best);
    h.theta = theta < 0 ? std::fmod(theta, kTwoPi) + kTwoPi : std::fmod(theta, kTwoPi);
    h.residual = std::min(best, refined_best);
    return h;
  }
  // Pixel quantization biases the minimum differently at each blur level;
  // the median of three levels trims the tail of the angle error.
  std::array<double, 3> estimates{};
  double refined_best = best;
  {
    Canvas b1 = blur_pass(raw1), b2 = blur_pass(raw2);
    estimates[0] = refine_theta(eval_on(b1, b2), coarse_theta, nullptr);
  }
  estimates[1] = refine_theta(eval, coarse_theta, &refined_best);
  {
    Canvas b1 = blur_pass(f1), b2 = blur_pass(f2);
    estimates[2] = refine_theta(eval_on(b1, b2), coarse_theta, nullptr);
  }
  std::sort(estimates.begin(), estimates.end());
  double theta = estimates[1];
  h.theta = theta < 0 ? std::fmod(theta, kTwoPi) + kTwoPi : std::fmod(theta, kTwoPi);
  h.residual = std::min({best, refined_best, eval(theta)});
  return h;
}

Hypothesis fit_size(const Canvas& raw1, const Canvas& raw2) {
  Canvas f1 = fit_smooth(raw1);
  Canvas f2 = fit_smooth(raw2);
  double best_mu = 1.0, best = 1e30;
  for (int i = 0; i <= 21; ++i) {
    double mu = 0.4 + 0.1 * i;
    double m = scale_mse(f1, f2, mu);
    if (m < best) {
      best = m;
      best_mu = mu;
    }
  }
  // Golden-section refinement inside the winning bracket.
  const double phi = (std::sqrt(5.0) - 1.0) / 2.0;
  double lo = std::max(0.4, best_mu - 0.1), hi = std::min(2.5, best_mu + 0.1);
  double a = hi - phi * (hi - lo), b = lo + phi * (hi - lo);
  double fa = scale_mse(f1, f2, a), fb = scale_mse(f1, f2, b);
  while (hi - lo > 1e-3) {
    if (fa < fb) {
      hi = b;
      b = a;
      fb = fa;
      a = hi - phi * (hi - lo);
      fa = scale_mse(f1, f2, a);
    } else {
      lo = a;
      a = b;
      fa = fb;
      b = lo + phi * (hi - lo);
      fb = scale_mse(f1, f2, b);
    }
  }
  double mu = (lo + hi) / 2.0;
  Hypothesis h;
  h.family = QuestionFamily::Size;
  h.mu = mu;
  h.residual = std::min(std::min(fa, fb), best);
  return h;
}

// Components of `b` with no pixel overlap against the non-background mask of
// `a`.
std::vector<int> new_component_ids(const Canvas& a, const std::vector<Component>& comps_b) {
  std::vector<int> ids;
  for (size_t i = 0; i < comps_b.size(); ++i) {
    bool overlap = false;
    for (int p : comps_b[i].pixels)
      if (!is_background_px(a, p)) {
        overlap = true;
        break;
      }
    if (!overlap) ids.push_back(static_cast<int>(i));
  }
  return ids;
}

double masked_mse(const Canvas& a, const Canvas& b, const std::vector<char>& skip) {
  double acc = 0.0;
  for (int i = 0; i < kCanvasSize * kCanvasSize; ++i) {
    if (skip[i]) continue;
    for (int c = 0; c < 3; ++c) {
      double d = static_cast<double>(a.px[3 * i + c]) - static_cast<double>(b.px[3 * i + c]);
      acc += d * d;
    }
  }
  return acc / kCanvasValues;
}

Hypothesis fit_number(const Canvas& f1, const Canvas& f2) {
  Hypothesis h;
  h.family = QuestionFamily::Number;
  std::vector<Component> c1 = connected_components(f1);
  std::vector<Component> c2 = connected_components(f2);
  if (c1.empty() || c2.size() != c1.size() + 1) return h;
  std::vector<int> fresh = new_component_ids(f1, c2);
  if (fresh.size() != 1) return h;
  std::vector<char> skip(kCanvasSize * kCanvasSize, 0);
  for (int p : c2[fresh[0]].pixels) skip[p] = 1;
  h.count_delta = 1;
  h.residual = masked_mse(f1, f2, skip);
  return h;
}

Hypothesis fit_color_mc(const Canvas& f1, const Canvas& f2) {
  Hypothesis h;
  h.family = QuestionFamily::Color;
  std::vector<Component> c1 = connected_components(f1);
  std::vector<Component> c2 = connected_components(f2);
  if (c1.size() != 1 || c2.size() != 2) return h;
  Rgb col1 = c1[0].mean_color;
  if (!colors_close(c2[0].mean_color, c2[1].mean_color)) return h;
  Rgb col2 = c2[0].mean_color;
  if (colors_close(col1, col2)) return h;
  std::vector<int> fresh = new_component_ids(f1, c2);
  if (fresh.size() != 1) return h;
  std::vector<char> skip(kCanvasSize * kCanvasSize, 0);
  for (int p : c2[fresh[0]].pixels) skip[p] = 1;
  // Persisted shape, recolored: compare f2 against f1 painted in the second
  // color, outside the fresh component.
  Canvas recolored = f1;
  const Component& persisted = c2[fresh[0] == 0 ? 1 : 0];
  Rgb paint = persisted.mean_color;
  for (int i = 0; i < kCanvasSize * kCanvasSize; ++i)
    if (!is_background_px(f1, i)) {
      recolored.px[3 * i + 0] = paint.r;
      recolored.px[3 * i + 1] = paint.g;
      recolored.px[3 * i + 2] = paint.b;
    }
  h.from_color = col1;
  h.to_color = paint;
  h.count_delta = 1;
  h.residual = masked_mse(recolored, f2, skip);
  return h;
}

Hypothesis fit_color_open(const Canvas& f1, const Canvas& f2) {
  Hypothesis h;
  h.family = QuestionFamily::Color;
  std::vector<Component> c1 = connected_components(f1);
  std::vector<Component> c2 = connected_components(f2);
  if (c1.size() != 1 || c2.size() != 1) return h;
  if (colors_close(c1[0].mean_color, c2[0].mean_color)) return h;
  h.from_color = c1[0].mean_color;
  h.to_color = c2[0].mean_color;
  h.residual = 0.0;
  return h;
}

Hypothesis fit_addition(const Canvas& im1, const Canvas& im2, bool require_line) {
  Hypothesis h;
  h.family = QuestionFamily::Addition;
  int changed = 0;
  Rgb line_color{};
  bool color_set = false, consistent = true;
  for (int i = 0; i < kCanvasSize * kCanvasSize && consistent; ++i) {
    bool diff = im1.px[3 * i] != im2.px[3 * i] || im1.px[3 * i + 1] != im2.px[3 * i + 1] ||
                im1.px[3 * i + 2] != im2.px[3 * i + 2];
    if (!diff) continue;
    ++changed;
    if (is_background_px(im2, i)) {
      consistent = false;  // the second frame only ever gains pixels
      break;
    }
    if (!require_line) continue;
    Rgb c{im2.px[3 * i], im2.px[3 * i + 1], im2.px[3 * i + 2]};
    if (!color_set) {
      line_color = c;
      color_set = true;
    } else if (!colors_close(c, line_color)) {
      consistent = false;
    }
  }
  int max_changed = require_line ? 800 : 2000;
  if (!consistent || changed < 10 || changed > max_changed) return h;
  h.to_color = line_color;
  h.residual = 0.0;
  return h;
}

bool squiggle_like(const Canvas& frame) {
  std::vector<Component> comps = connected_components(frame);
  if (comps.empty()) return false;
  const Component* biggest = &comps[0];
  for (const Component& c : comps)
    if (c.size() > biggest->size()) biggest = &c;
  int area = (biggest->max_x - biggest->min_x + 1) * (biggest->max_y - biggest->min_y + 1);
  return area > 0 && static_cast<double>(biggest->size()) / area < 0.35;
}

// Adds one more component of the given color: a small disk at the first
// free spot. The component count is what the next frame must show; keeping
// the synthesized component small keeps the distance comparison against the
// options dominated by their own content rather than by where this marker
// happens to land. Returns f2 unchanged when nothing fits.
Canvas add_component_marker(const Canvas& f2, Rgb paint) {
  std::vector<char> occupied(kCanvasSize * kCanvasSize, 0);
  for (int i = 0; i < kCanvasSize * kCanvasSize; ++i)
    occupied[i] = !is_background_px(f2, i);
  // Integral image over the occupancy mask for O(1) window tests.
  std::vector<int> integral((kCanvasSize + 1) * (kCanvasSize + 1), 0);
  for (int y = 0; y < kCanvasSize; ++y)
    for (int x = 0; x < kCanvasSize; ++x)
      integral[(y + 1) * (kCanvasSize + 1) + x + 1] =
          occupied[y * kCanvasSize + x] + integral[y * (kCanvasSize + 1) + x + 1] +
          integral[(y + 1) * (kCanvasSize + 1) + x] - integral[y * (kCanvasSize + 1) + x];
  auto window_free = [&](int x0, int y0, int x1, int y1) {
    if (x0 < 0 || y0 < 0 || x1 >= kCanvasSize || y1 >= kCanvasSize) return false;
    int s = integral[(y1 + 1) * (kCanvasSize + 1) + x1 + 1] -
            integral[y0 * (kCanvasSize + 1) + x1 + 1] -
            integral[(y1 + 1) * (kCanvasSize + 1) + x0] +
            integral[y0 * (kCanvasSize + 1) + x0];
    return s == 0;
  };
  constexpr int kWin = 9;  // disk of radius 2.5 plus clearance
  for (int ty = 2; ty + kWin < kCanvasSize - 2; ty += 2)
    for (int tx = 2; tx + kWin < kCanvasSize - 2; tx += 2) {
      if (!window_free(tx, ty, tx + kWin, ty + kWin)) continue;
      Canvas out = f2;
      double cx = tx + kWin / 2.0, cy = ty + kWin / 2.0;
      for (int y = ty; y <= ty + kWin; ++y)
        for (int x = tx; x <= tx + kWin; ++x) {
          double dx = x + 0.5 - cx, dy = y + 0.5 - cy;
          if (dx * dx + dy * dy <= 2.5 * 2.5) out.set(x, y, paint);
        }
      return out;
    }
  return f2;
}

}  // namespace

Hypothesis oracle_fit(QuestionFamily family, std::span<const Canvas> context) {
  bool addition_context = context.size() == 3 && !is_blank(context[0]);
  const Canvas& f1 = context[context.size() - 2];
  const Canvas& f2 = context[context.size() - 1];
  switch (family) {
    case QuestionFamily::RotationPolygon:
    case QuestionFamily::RotationSquiggle: {
      Hypothesis h = fit_rotation_like(f1, f2, false);
      h.family = family;
      return h;
    }
    case QuestionFamily::Reflection:
      return fit_rotation_like(f1, f2, true);
    case QuestionFamily::Size:
      return fit_size(f1, f2);
    case QuestionFamily::Number:
      return fit_number(f1, f2);
    case QuestionFamily::Color:
      return context.size() == 2 ? fit_color_open(f1, f2) : fit_color_mc(f1, f2);
    case QuestionFamily::Addition: {
      Hypothesis h;
      h.family = QuestionFamily::Addition;
      if (context.size() != 3) return h;
      return fit_addition(context[0], context[1], /*require_line=*/!is_blank(context[0]));
    }
  }
  return {};
}

std::pair<Canvas, Hypothesis> oracle_predict_next(std::span<const Canvas> context) {
  bool addition_context = context.size() == 3 && !is_blank(context[0]);
  if (addition_context) {
    Hypothesis h = fit_addition(context[0], context[1], /*require_line=*/true);
    if (h.residual < 1e30)
      return {compose_addition_frame(context[0], context[1], context[2]), h};
    // Fall through to the 2-frame families on the last two frames if the
    // addition structure does not hold (should not happen on generator data).
  }
  const Canvas& f1 = context[context.size() - 2];
  const Canvas& f2 = context[context.size() - 1];

  Hypothesis rot = fit_rotation_like(f1, f2, false);
  Hypothesis refl = fit_rotation_like(f1, f2, true);
  Hypothesis size = fit_size(f1, f2);
  Hypothesis number = fit_number(f1, f2);
  Hypothesis color = context.size() == 2 ? fit_color_open(f1, f2) : fit_color_mc(f1, f2);

  // Exact structural fits win outright.
  if (number.residual < 1e-6 || color.residual < 1e-6) {
    if (color.residual <= number.residual) {
      if (context.size() == 2) {
        // Open rule: repaint the first shape in the second color.
        Canvas out = f1;
        for (int i = 0; i < kCanvasSize * kCanvasSize; ++i)
          if (!is_background_px(f1, i)) {
            out.px[3 * i + 0] = color.to_color.r;
            out.px[3 * i + 1] = color.to_color.g;
            out.px[3 * i + 2] = color.to_color.b;
          }
        return {out, color};
      }
      return {add_component_marker(f2, color.to_color), color};
    }
    std::vector<Component> comps = connected_components(f2);
    std::vector<int> fresh = new_component_ids(f1, comps);
    const Component& comp = comps[fresh.empty() ? 0 : fresh[0]];
    return {add_component_marker(f2, comp.mean_color), number};
  }

  // Prefer the plain rotation reading when a mirror reading is not clearly
  // better (mirror-symmetric shapes fit both).
  Hypothesis best = rot;
  if (refl.residual < best.residual * 0.75) best = refl;
  if (size.residual < best.residual) best = size;

  // Degenerate corner: a 3-frame context none of the 2-frame rules explain,
  // e.g. an addition question whose first image is blank. The addition rule
  // is the remaining reading. Genuine geometric fits stay well under this
  // residual; two unrelated frames land far above it.
  if (context.size() == 3 && best.residual > 2e-2) {
    Hypothesis add = fit_addition(context[0], context[1], /*require_line=*/false);
    if (add.residual < 1e30)
      return {compose_addition_frame(context[0], context[1], context[2]), add};
  }

  if (best.family == QuestionFamily::Size) return {scale_image(f2, best.mu), best};
  if (best.family == QuestionFamily::Reflection) {
    // Applying the fitted transform twice is the identity, so the next frame
    // is the first frame again.
    return {f1, best};
  }
  best.family = squiggle_like(f1) ? QuestionFamily::RotationSquiggle
                                  : QuestionFamily::RotationPolygon;
  return {rotate_image(f2, best.theta), best};
}

SolveResult oracle_solve(const std::array<Canvas, 3>& context,
                         const std::array<Canvas, 4>& options) {
  std::span<const Canvas> ctx(context.data(), context.size());
  auto [prediction, hypothesis] = oracle_predict_next(ctx);
  SolveResult r;
  r.hypothesis = hypothesis;
  double best = 1e300;
  for (int i = 0; i < 4; ++i) {
    r.distances[i] = canvas_mse(prediction, options[i]);
    if (r.distances[i] < best) {
      best = r.distances[i];
      r.index = i;
    }
  }
  return r;
}

}  // namespace shapeiq
