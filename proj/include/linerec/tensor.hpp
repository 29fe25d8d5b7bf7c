#pragma once

#include <cassert>
#include <cstddef>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

namespace linerec {

// Dense double-precision array. `g` is the gradient buffer; it is empty until
// a backward pass touches the tensor, and always matches `v` in size once
// allocated.
struct Tensor {
  std::vector<int> shape;
  std::vector<double> v;
  std::vector<double> g;

  Tensor() = default;
  explicit Tensor(std::vector<int> s, double fill = 0.0) : shape(std::move(s)) {
    v.assign(count(shape), fill);
  }
  Tensor(std::vector<int> s, std::vector<double> values)
      : shape(std::move(s)), v(std::move(values)) {
    if (static_cast<size_t>(count(shape)) != v.size())
      throw std::invalid_argument("Tensor: value count does not match shape");
  }

  static long count(const std::vector<int>& s) {
    long n = 1;
    for (int d : s) {
      if (d <= 0) throw std::invalid_argument("Tensor: nonpositive extent " + std::to_string(d));
      n *= d;
    }
    return n;
  }

  long size() const { return static_cast<long>(v.size()); }
  int dim(int i) const { return shape[static_cast<size_t>(i)]; }
  int ndim() const { return static_cast<int>(shape.size()); }

  void alloc_grad() {
    if (g.size() != v.size()) g.assign(v.size(), 0.0);
  }
  void zero_grad() { g.assign(v.size(), 0.0); }

  static std::string shape_str(const std::vector<int>& s) {
    std::string out = "[";
    for (size_t i = 0; i < s.size(); ++i) {
      if (i) out += "x";
      out += std::to_string(s[i]);
    }
    return out + "]";
  }
};

}  // namespace linerec
