#include "actdiff/kernels.hpp"

namespace actdiff::kern::detail {

namespace {

template <typename T>
T dot_ref(const T* a, const T* b, std::size_t n) {
  T acc = 0;
  for (std::size_t i = 0; i < n; ++i) acc += a[i] * b[i];
  return acc;
}

template <typename T>
void axpy_ref(T alpha, const T* x, T* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] += alpha * x[i];
}

template <typename T>
void scale_ref(const T* x, T alpha, T* out, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) out[i] = alpha * x[i];
}

template <typename T>
void add_ref(const T* a, const T* b, T* out, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) out[i] = a[i] + b[i];
}

template <typename T>
void mul_ref(const T* a, const T* b, T* out, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) out[i] = a[i] * b[i];
}

template <typename T>
void mul_accum_ref(const T* a, const T* b, T* out, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) out[i] += a[i] * b[i];
}

template <typename T>
T sum_ref(const T* x, std::size_t n) {
  T acc = 0;
  for (std::size_t i = 0; i < n; ++i) acc += x[i];
  return acc;
}

template <typename T>
T max_ref(const T* x, std::size_t n) {
  T m = x[0];
  for (std::size_t i = 1; i < n; ++i)
    if (x[i] > m) m = x[i];
  return m;
}

template <typename T>
void relu_ref(const T* x, T* out, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) out[i] = x[i] > T(0) ? x[i] : T(0);
}

template <typename T>
void relu_grad_accum_ref(const T* x, const T* dy, T* dx, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i)
    if (x[i] > T(0)) dx[i] += dy[i];
}

}  // namespace

template <typename T>
Ops<T> scalar_table() {
  Ops<T> t;
  t.dot = dot_ref<T>;
  t.axpy = axpy_ref<T>;
  t.scale = scale_ref<T>;
  t.add = add_ref<T>;
  t.mul = mul_ref<T>;
  t.mul_accum = mul_accum_ref<T>;
  t.sum = sum_ref<T>;
  t.max = max_ref<T>;
  t.relu = relu_ref<T>;
  t.relu_grad_accum = relu_grad_accum_ref<T>;
  return t;
}

template Ops<float> scalar_table<float>();
template Ops<double> scalar_table<double>();

}  // namespace actdiff::kern::detail
