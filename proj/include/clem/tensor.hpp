#pragma once

#include <cmath>
#include <cstddef>
#include <initializer_list>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

namespace clem {

/// Dense row-major tensor. Rank 1 or 2 is all the models need.
template <class T = float>
struct Tensor {
  std::vector<int> shape;
  std::vector<T> v;

  Tensor() = default;
  explicit Tensor(std::vector<int> s) : shape(std::move(s)) {
    v.assign(numel(shape), T(0));
  }
  Tensor(std::vector<int> s, std::vector<T> data) : shape(std::move(s)), v(std::move(data)) {
    if (static_cast<size_t>(numel(shape)) != v.size())
      throw std::invalid_argument("tensor: shape/data mismatch");
  }

  static long numel(const std::vector<int>& s) {
    long n = 1;
    for (int d : s) {
      if (d < 0) throw std::invalid_argument("tensor: negative dim");
      n *= d;
    }
    return n;
  }

  static Tensor zeros(std::vector<int> s) { return Tensor(std::move(s)); }
  static Tensor full(std::vector<int> s, T x) {
    Tensor t(std::move(s));
    for (auto& e : t.v) e = x;
    return t;
  }

  long size() const { return static_cast<long>(v.size()); }
  int rank() const { return static_cast<int>(shape.size()); }
  int rows() const { return rank() == 2 ? shape[0] : 1; }
  int cols() const { return rank() == 2 ? shape[1] : shape[0]; }

  T& at(int i) { return v[static_cast<size_t>(i)]; }
  T at(int i) const { return v[static_cast<size_t>(i)]; }
  T& at(int i, int j) { return v[static_cast<size_t>(i) * shape[1] + j]; }
  T at(int i, int j) const { return v[static_cast<size_t>(i) * shape[1] + j]; }

  T* row(int i) { return v.data() + static_cast<size_t>(i) * shape[1]; }
  const T* row(int i) const { return v.data() + static_cast<size_t>(i) * shape[1]; }

  void zero() { std::fill(v.begin(), v.end(), T(0)); }

  bool same_shape(const Tensor& o) const { return shape == o.shape; }

  bool finite() const {
    for (T x : v)
      if (!std::isfinite(static_cast<double>(x))) return false;
    return true;
  }

  template <class U>
  Tensor<U> cast() const {
    Tensor<U> out;
    out.shape = shape;
    out.v.resize(v.size());
    for (size_t i = 0; i < v.size(); ++i) out.v[i] = static_cast<U>(v[i]);
    return out;
  }
};

inline std::string shape_str(const std::vector<int>& s) {
  std::string out = "[";
  for (size_t i = 0; i < s.size(); ++i) {
    if (i) out += "x";
    out += std::to_string(s[i]);
  }
  return out + "]";
}

inline void require_shape(bool ok, const char* what) {
  if (!ok) throw std::invalid_argument(std::string("shape mismatch: ") + what);
}

}  // namespace clem
