#include "actdiff/kernels.hpp"

#include <stdexcept>

namespace actdiff::kern {

namespace {

Backend g_backend = Backend::auto_detect;

Backend resolve(Backend b) {
  if (b != Backend::auto_detect) return b;
  return avx2_available() ? Backend::avx2 : Backend::scalar;
}

template <typename T>
struct Tables {
  Ops<T> scalar = detail::scalar_table<T>();
#ifdef ACTDIFF_HAVE_AVX2_SOURCES
  Ops<T> avx2 = detail::avx2_table<T>();
#endif
};

template <typename T>
const Tables<T>& tables() {
  static const Tables<T> t;
  return t;
}

}  // namespace

bool avx2_available() {
#ifdef ACTDIFF_HAVE_AVX2_SOURCES
  return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
  return false;
#endif
}

Backend active_backend() { return resolve(g_backend); }

void set_backend(Backend b) {
  if (b == Backend::avx2 && !avx2_available())
    throw std::runtime_error("kernels: avx2 backend not available on this CPU/build");
  g_backend = b;
}

template <typename T>
const Ops<T>& ops() {
#ifdef ACTDIFF_HAVE_AVX2_SOURCES
  if (resolve(g_backend) == Backend::avx2) return tables<T>().avx2;
#endif
  return tables<T>().scalar;
}

template const Ops<float>& ops<float>();
template const Ops<double>& ops<double>();

}  // namespace actdiff::kern
