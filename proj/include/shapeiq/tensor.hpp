#pragma once

#include <cstdint>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

namespace shapeiq {

struct ShapeError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Dense row-major n-d array with an optional same-shape gradient companion.
template <class T>
struct TensorT {
  std::vector<int> shape;
  std::vector<T> v;
  std::vector<T> g;

  TensorT() = default;
  explicit TensorT(std::vector<int> s) : shape(std::move(s)) {
    v.assign(numel_of(shape), T(0));
  }

  static int64_t numel_of(const std::vector<int>& s) {
    int64_t n = 1;
    for (int d : s) {
      if (d <= 0) throw ShapeError("non-positive dimension");
      n *= d;
    }
    return n;
  }

  int64_t numel() const { return static_cast<int64_t>(v.size()); }
  int dim(size_t i) const { return shape.at(i); }
  int ndim() const { return static_cast<int>(shape.size()); }

  T* data() { return v.data(); }
  const T* data() const { return v.data(); }

  void alloc_grad() {
    if (g.size() != v.size()) g.assign(v.size(), T(0));
  }
  void zero_grad() { std::fill(g.begin(), g.end(), T(0)); }

  std::string shape_str() const {
    std::string s = "[";
    for (size_t i = 0; i < shape.size(); ++i)
      s += (i ? "," : "") + std::to_string(shape[i]);
    return s + "]";
  }
};

using Tensor = TensorT<float>;

template <class T>
void require_shape(const TensorT<T>& t, const std::vector<int>& expected,
                   const char* what) {
  if (t.shape != expected) {
    TensorT<T> e(expected);
    throw ShapeError(std::string(what) + ": got " + t.shape_str() + ", expected " +
                     e.shape_str());
  }
}

}  // namespace shapeiq
