#pragma once

// Dense row-major tensor of up to 4 dimensions (batch, channels, time,
// frequency). Value semantics; shape is part of the value.

#include <array>
#include <cstdint>
#include <numeric>
#include <string>
#include <vector>

#include "sedkit/common.hpp"

namespace sedkit::nn {

template <typename T>
struct Tensor {
  std::vector<int> shape;
  std::vector<T> v;

  Tensor() = default;
  explicit Tensor(std::vector<int> dims, T fill = T(0)) : shape(std::move(dims)) {
    v.assign(numel_of(shape), fill);
  }

  static size_t numel_of(const std::vector<int>& dims) {
    size_t n = 1;
    for (int d : dims) {
      if (d < 0) fail(Errc::bad_argument, "negative tensor dimension");
      n *= static_cast<size_t>(d);
    }
    return dims.empty() ? 0 : n;
  }

  size_t numel() const { return v.size(); }
  int ndim() const { return static_cast<int>(shape.size()); }
  int dim(int i) const { return shape[static_cast<size_t>(i)]; }
  T* data() { return v.data(); }
  const T* data() const { return v.data(); }

  T& operator[](size_t i) { return v[i]; }
  const T& operator[](size_t i) const { return v[i]; }

  // 4-D (n, c, h, w)
  T& at(int n, int c, int h, int w) {
    return v[((static_cast<size_t>(n) * shape[1] + c) * shape[2] + h) * shape[3] + w];
  }
  const T& at(int n, int c, int h, int w) const {
    return v[((static_cast<size_t>(n) * shape[1] + c) * shape[2] + h) * shape[3] + w];
  }
  // 3-D (n, h, w)
  T& at3(int n, int h, int w) {
    return v[(static_cast<size_t>(n) * shape[1] + h) * shape[2] + w];
  }
  const T& at3(int n, int h, int w) const {
    return v[(static_cast<size_t>(n) * shape[1] + h) * shape[2] + w];
  }
  // 2-D (r, c)
  T& at2(int r, int c) { return v[static_cast<size_t>(r) * shape[1] + c]; }
  const T& at2(int r, int c) const { return v[static_cast<size_t>(r) * shape[1] + c]; }

  bool same_shape(const Tensor& other) const { return shape == other.shape; }

  std::string shape_str() const {
    std::string s = "(";
    for (size_t i = 0; i < shape.size(); ++i) {
      if (i) s += ",";
      s += std::to_string(shape[i]);
    }
    return s + ")";
  }

  bool all_finite() const {
    for (const T& x : v)
      if (!std::isfinite(static_cast<double>(x))) return false;
    return true;
  }
};

}  // namespace sedkit::nn
