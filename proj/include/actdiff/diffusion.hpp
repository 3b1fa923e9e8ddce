#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <stdexcept>
#include <vector>

#include "actdiff/rng.hpp"
#include "actdiff/tensor.hpp"

// Noise schedule, closed-form forward corruption, and deterministic DDIM
// reverse updates over scaled label matrices.

namespace actdiff {

// Arrays are indexed by time step s in [0, S]; index 0 is the noiseless
// identity (beta=0, alpha_bar=1), so drawing s=0 during training is valid.
struct Schedule {
  int S = 0;
  std::vector<double> beta;       // beta[0] = 0
  std::vector<double> alpha;      // 1 - beta
  std::vector<double> alpha_bar;  // cumulative product of alpha

  double abar(int s) const {
    if (s < 0 || s > S) throw std::out_of_range("schedule: step out of range");
    return alpha_bar[static_cast<std::size_t>(s)];
  }
};

inline Schedule make_schedule(int steps, double beta_start = 1e-4, double beta_end = 0.02) {
  if (steps < 1) throw std::invalid_argument("make_schedule: need S >= 1");
  if (!(beta_start > 0.0) || !(beta_start <= beta_end) || !(beta_end < 1.0))
    throw std::invalid_argument("make_schedule: need 0 < beta_start <= beta_end < 1");
  Schedule sc;
  sc.S = steps;
  sc.beta.resize(steps + 1);
  sc.alpha.resize(steps + 1);
  sc.alpha_bar.resize(steps + 1);
  sc.beta[0] = 0.0;
  sc.alpha[0] = 1.0;
  sc.alpha_bar[0] = 1.0;
  for (int s = 1; s <= steps; ++s) {
    const double f = steps == 1 ? 0.0 : static_cast<double>(s - 1) / static_cast<double>(steps - 1);
    sc.beta[s] = beta_start + (beta_end - beta_start) * f;
    sc.alpha[s] = 1.0 - sc.beta[s];
    sc.alpha_bar[s] = sc.alpha_bar[s - 1] * sc.alpha[s];
  }
  return sc;
}

// One-hot rows {0,1} -> {-scale, +scale}. With strict=true a non-one-hot row
// throws; otherwise the affine map is applied as-is.
template <typename T>
Tensor<T> scale_labels(const Tensor<T>& onehot, T scale, bool strict = true) {
  if (onehot.ndim() != 2) throw std::invalid_argument("scale_labels: expects T x K");
  if (strict) {
    for (std::size_t t = 0; t < onehot.rows(); ++t) {
      int ones = 0;
      for (std::size_t k = 0; k < onehot.cols(); ++k) {
        const T v = onehot.at(t, k);
        if (v == T(1))
          ++ones;
        else if (v != T(0))
          throw std::invalid_argument("scale_labels: row " + std::to_string(t) + " not one-hot");
      }
      if (ones != 1) throw std::invalid_argument("scale_labels: row " + std::to_string(t) + " not one-hot");
    }
  }
  Tensor<T> out = Tensor<T>::zeros(onehot.shape);
  for (std::size_t i = 0; i < onehot.numel(); ++i)
    out.data[i] = (onehot.data[i] * T(2) - T(1)) * scale;
  return out;
}

template <typename T>
Tensor<T> unscale_labels(const Tensor<T>& scaled, T scale) {
  Tensor<T> out = Tensor<T>::zeros(scaled.shape);
  for (std::size_t i = 0; i < scaled.numel(); ++i)
    out.data[i] = (scaled.data[i] / scale + T(1)) / T(2);
  return out;
}

// a_s = sqrt(abar(s)) * a0 + sqrt(1 - abar(s)) * eps
template <typename T>
Tensor<T> forward_noise(const Tensor<T>& a0, int s, const Tensor<T>& eps, const Schedule& sched) {
  if (a0.shape != eps.shape) throw std::invalid_argument("forward_noise: shape mismatch");
  const double ab = sched.abar(s);
  const T c0 = static_cast<T>(std::sqrt(ab));
  const T c1 = static_cast<T>(std::sqrt(1.0 - ab));
  Tensor<T> out = Tensor<T>::zeros(a0.shape);
  for (std::size_t i = 0; i < out.numel(); ++i) out.data[i] = c0 * a0.data[i] + c1 * eps.data[i];
  return out;
}

// Deterministic (eta = 0) DDIM update from t_now to t_next; t_next = -1
// terminates the chain and returns the model's x0 estimate.
template <typename T>
Tensor<T> ddim_step(const Tensor<T>& a_s, const Tensor<T>& a0_hat, int t_now, int t_next,
                    const Schedule& sched) {
  if (a_s.shape != a0_hat.shape) throw std::invalid_argument("ddim_step: shape mismatch");
  if (t_next >= t_now) throw std::invalid_argument("ddim_step: need t_next < t_now");
  if (t_next == -1) return a0_hat;
  const double ab_now = sched.abar(t_now);
  const double ab_next = sched.abar(t_next);
  const T sq_now = static_cast<T>(std::sqrt(ab_now));
  const double one_minus = 1.0 - ab_now;
  Tensor<T> out = Tensor<T>::zeros(a_s.shape);
  if (one_minus <= 0.0) {
    // abar(t_now) = 1: the implied noise is undefined unless the residual is 0.
    for (std::size_t i = 0; i < a_s.numel(); ++i)
      if (a_s.data[i] != a0_hat.data[i])
        throw std::runtime_error("ddim_step: abar(t_now)=1 with nonzero residual");
    for (std::size_t i = 0; i < out.numel(); ++i)
      out.data[i] = static_cast<T>(std::sqrt(ab_next)) * a0_hat.data[i];
    return out;
  }
  const T inv_sig = static_cast<T>(1.0 / std::sqrt(one_minus));
  const T sq_next = static_cast<T>(std::sqrt(ab_next));
  const T sig_next = static_cast<T>(std::sqrt(1.0 - ab_next));
  for (std::size_t i = 0; i < out.numel(); ++i) {
    const T eps_hat = (a_s.data[i] - sq_now * a0_hat.data[i]) * inv_sig;
    out.data[i] = sq_next * a0_hat.data[i] + sig_next * eps_hat;
  }
  return out;
}

struct TimePair {
  int t_now;
  int t_next;  // -1 on the final pair
};

// `steps` evenly spaced reals from -1 to S, rounded to nearest integer,
// deduplicated, reversed, and paired consecutively.
inline std::vector<TimePair> inference_times(int S, int steps) {
  if (steps < 2) throw std::invalid_argument("inference_times: need steps >= 2");
  std::vector<int> pts;
  for (int i = 0; i < steps; ++i) {
    const double v = -1.0 + (static_cast<double>(S) + 1.0) * static_cast<double>(i) /
                                static_cast<double>(steps - 1);
    const int r = static_cast<int>(std::lround(v));
    if (pts.empty() || pts.back() != r) pts.push_back(r);
  }
  std::reverse(pts.begin(), pts.end());
  std::vector<TimePair> pairs;
  for (std::size_t i = 0; i + 1 < pts.size(); ++i) pairs.push_back({pts[i], pts[i + 1]});
  return pairs;
}

template <typename T>
void clamp_inplace(Tensor<T>& t, T lo, T hi) {
  for (T& v : t.data) v = std::min(hi, std::max(lo, v));
}

// decode_fn(a_s, s) must return an x0 estimate; it is clamped to
// [-scale, scale] before every DDIM update, as is the running a_s.
template <typename T>
using DecodeFn = std::function<Tensor<T>(const Tensor<T>& a_s, int s)>;

template <typename T>
Tensor<T> denoise_loop(const DecodeFn<T>& decode_fn, std::size_t tlen, std::size_t num_classes,
                       int steps, const Schedule& sched, T scale, Rng& rng) {
  Tensor<T> a_s = Tensor<T>::zeros({tlen, num_classes});
  for (T& v : a_s.data) v = static_cast<T>(rng.normal());
  Tensor<T> a0_hat;
  for (const TimePair& tp : inference_times(sched.S, steps)) {
    clamp_inplace(a_s, -scale, scale);
    a0_hat = decode_fn(a_s, tp.t_now);
    if (a0_hat.shape != a_s.shape) throw std::runtime_error("denoise_loop: decode_fn shape mismatch");
    clamp_inplace(a0_hat, -scale, scale);
    a_s = ddim_step(a_s, a0_hat, tp.t_now, tp.t_next, sched);
  }
  return a_s;  // final pair has t_next = -1, so this is the x0 estimate
}

}  // namespace actdiff
