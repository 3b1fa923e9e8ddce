#pragma once

#include <cstddef>

// Low-level dense loops behind the tensor ops. Every entry has a scalar
// reference implementation and, on x86 with AVX2+FMA, a vectorized variant.
// The active table is chosen once at runtime; SIMD and scalar variants are
// equivalence-tested against each other in tests/test_kernels.cpp.

namespace actdiff::kern {

enum class Backend { auto_detect, scalar, avx2 };

bool avx2_available();

// Returns the backend actually in use (never auto_detect).
Backend active_backend();

// Selects the kernel table. auto_detect picks the best available.
// Throws std::runtime_error if an unavailable backend is forced.
void set_backend(Backend b);

template <typename T>
struct Ops {
  T (*dot)(const T* a, const T* b, std::size_t n);
  void (*axpy)(T alpha, const T* x, T* y, std::size_t n);     // y += alpha * x
  void (*scale)(const T* x, T alpha, T* out, std::size_t n);  // out = alpha * x
  void (*add)(const T* a, const T* b, T* out, std::size_t n);
  void (*mul)(const T* a, const T* b, T* out, std::size_t n);
  void (*mul_accum)(const T* a, const T* b, T* out, std::size_t n);  // out += a*b
  T (*sum)(const T* x, std::size_t n);
  T (*max)(const T* x, std::size_t n);  // n >= 1
  void (*relu)(const T* x, T* out, std::size_t n);
  void (*relu_grad_accum)(const T* x, const T* dy, T* dx, std::size_t n);  // dx += dy * (x > 0)
};

template <typename T>
const Ops<T>& ops();

extern template const Ops<float>& ops<float>();
extern template const Ops<double>& ops<double>();

namespace detail {
template <typename T>
Ops<T> scalar_table();
template <typename T>
Ops<T> avx2_table();  // defined only when built with AVX2 sources
}  // namespace detail

}  // namespace actdiff::kern
