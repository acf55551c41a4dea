#pragma once

#include <string>
#include <vector>

#include "shapeiq/nn.hpp"

namespace shapeiq {

struct GradCheckEntry {
  std::string name;
  double max_rel_err = 0.0;
  double tolerance = 0.0;
  bool pass() const { return max_rel_err < tolerance; }
};

struct GradCheckReport {
  std::vector<GradCheckEntry> entries;
  bool all_pass() const {
    for (const GradCheckEntry& e : entries)
      if (!e.pass()) return false;
    return true;
  }
};

// Central finite differences (h = 1e-3) against the analytic backward pass,
// over every input and parameter entry, using a fixed random projection of
// the output as the scalar loss. The stack runs in double precision
// (instantiated from the same templates as the float training path).
double grad_check_sequential(SequentialT<double>& net, const TensorT<double>& input,
                             uint64_t seed, double h = 1e-3);

double grad_check_layer(LayerT<double>& layer, const TensorT<double>& input,
                        uint64_t seed, double h = 1e-3);

// Finite-difference checks of the loss gradients themselves.
double grad_check_cross_entropy(uint64_t seed, double h = 1e-3);
double grad_check_mse(uint64_t seed, double h = 1e-3);

// The full suite across every layer kind and both losses.
GradCheckReport grad_check_all(uint64_t seed = 1);

}  // namespace shapeiq
