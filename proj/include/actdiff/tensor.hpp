#pragma once

#include <cmath>
#include <cstddef>
#include <initializer_list>
#include <stdexcept>
#include <string>
#include <vector>

namespace actdiff {

// Dense row-major tensor. `node` is an optional handle into a Tape; -1 means
// the tensor is a constant as far as differentiation is concerned.
template <typename T>
struct Tensor {
  std::vector<std::size_t> shape;
  std::vector<T> data;
  int node = -1;

  Tensor() = default;
  Tensor(std::vector<std::size_t> s, std::vector<T> d) : shape(std::move(s)), data(std::move(d)) {
    if (data.size() != numel_of(shape)) throw std::invalid_argument("tensor: data/shape mismatch");
  }

  static std::size_t numel_of(const std::vector<std::size_t>& s) {
    std::size_t n = 1;
    for (auto d : s) n *= d;
    return n;
  }

  static Tensor zeros(std::vector<std::size_t> s) {
    Tensor t;
    t.shape = std::move(s);
    t.data.assign(numel_of(t.shape), T(0));
    return t;
  }

  static Tensor scalar(T v) { return Tensor({1}, {v}); }

  std::size_t numel() const { return data.size(); }
  std::size_t ndim() const { return shape.size(); }

  std::size_t rows() const { return shape.at(0); }
  std::size_t cols() const {
    if (shape.size() != 2) throw std::logic_error("tensor: cols() on non-matrix");
    return shape[1];
  }

  T& at(std::size_t i, std::size_t j) { return data[i * shape[1] + j]; }
  const T& at(std::size_t i, std::size_t j) const { return data[i * shape[1] + j]; }

  T* row(std::size_t i) { return data.data() + i * shape[1]; }
  const T* row(std::size_t i) const { return data.data() + i * shape[1]; }

  T item() const {
    if (numel() != 1) throw std::logic_error("tensor: item() on non-scalar");
    return data[0];
  }

  bool all_finite() const {
    for (const T& v : data)
      if (!std::isfinite(static_cast<double>(v))) return false;
    return true;
  }
};

inline std::string shape_str(const std::vector<std::size_t>& s) {
  std::string out = "[";
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (i) out += ",";
    out += std::to_string(s[i]);
  }
  return out + "]";
}

}  // namespace actdiff
