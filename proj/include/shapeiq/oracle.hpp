#pragma once

#include <array>
#include <span>
#include <vector>

#include "shapeiq/qgen.hpp"

namespace shapeiq {

// A fitted explanation of how frame 2 follows from frame 1 (or, for the
// addition family, how im2 follows from im1). Smaller residual = better fit.
struct Hypothesis {
  QuestionFamily family = QuestionFamily::RotationPolygon;
  double theta = 0.0;       // rotation / reflection
  double mu = 1.0;          // size
  int count_delta = 0;      // number
  Rgb from_color{}, to_color{};
  double residual = 1e30;   // mean-squared intensity error
};

// Connected component of non-background pixels (4-connectivity).
struct Component {
  std::vector<int> pixels;  // y * 64 + x
  int min_x = 64, min_y = 64, max_x = -1, max_y = -1;
  Rgb mean_color{};
  int size() const { return static_cast<int>(pixels.size()); }
};

std::vector<Component> connected_components(const Canvas& canvas);
bool colors_close(Rgb a, Rgb b, float tol = 0.1f);

// Image-space transforms about the canvas center, bilinear sampling,
// background fill outside the source.
Canvas rotate_image(const Canvas& src, double theta);
Canvas scale_image(const Canvas& src, double mu);
Canvas mirror_image(const Canvas& src);
Canvas reflect_rotate_image(const Canvas& src, double theta);  // rotate after mirror

// Fits one family hypothesis to the context frames. `context` carries either
// 2 frames (open scenario), or 3 frames where slot 0 is blank for 2-context
// families and im1 for the addition family.
Hypothesis oracle_fit(QuestionFamily family, std::span<const Canvas> context);

// Fits all applicable families and synthesizes the next frame under the best
// hypothesis.
std::pair<Canvas, Hypothesis> oracle_predict_next(std::span<const Canvas> context);

struct SolveResult {
  int index = 0;
  std::array<double, 4> distances{};
  Hypothesis hypothesis;
};

// Predicts the next frame and returns the option closest to it (pixel MSE,
// ties broken by lowest index). Takes frames only; the stored answer index is
// never seen.
SolveResult oracle_solve(const std::array<Canvas, 3>& context,
                         const std::array<Canvas, 4>& options);

}  // namespace shapeiq
