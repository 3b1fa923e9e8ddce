#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <vector>

#include "actdiff/tape.hpp"

// Training objectives: frame-wise cross entropy, truncated log-prob
// smoothing, boundary alignment, and their weighted combination for the
// encoder and decoder heads.

namespace actdiff {

inline constexpr double kProbClamp = 1e-8;

struct LossWeights {
  double enc_ce = 0.5;
  double enc_smo = 0.1;
  double enc_bd = 0.0;
  double dec_ce = 0.5;
  double dec_smo = 0.1;
  double dec_bd = 0.1;
};

// Gaussian-softened indicator of label changes. Both frames adjacent to a
// change are seeded at 1, convolved with a kernel truncated at 3*sigma, then
// peak-normalized. Constant label sequences give all zeros.
inline std::vector<double> soft_boundary(const std::vector<int>& labels, double sigma) {
  const std::size_t n = labels.size();
  std::vector<double> seed(n, 0.0);
  bool any = false;
  for (std::size_t i = 0; i + 1 < n; ++i) {
    if (labels[i] != labels[i + 1]) {
      seed[i] = 1.0;
      seed[i + 1] = 1.0;
      any = true;
    }
  }
  if (!any) return seed;
  const auto radius = static_cast<std::ptrdiff_t>(std::floor(3.0 * sigma));
  std::vector<double> out(n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    if (seed[i] == 0.0) continue;
    for (std::ptrdiff_t d = -radius; d <= radius; ++d) {
      const std::ptrdiff_t j = static_cast<std::ptrdiff_t>(i) + d;
      if (j < 0 || j >= static_cast<std::ptrdiff_t>(n)) continue;
      out[static_cast<std::size_t>(j)] +=
          std::exp(-static_cast<double>(d * d) / (2.0 * sigma * sigma));
    }
  }
  double peak = 0.0;
  for (double v : out) peak = std::max(peak, v);
  for (double& v : out) v = std::min(1.0, v / peak);
  return out;
}

namespace op {

// -(1/n) sum over included frames of sum_j A0[t,j] * log(max(p[t,j], 1e-8)).
template <typename T>
Tensor<T> ce_loss(Tape<T>* tp, const Tensor<T>& probs, const Tensor<T>& onehot,
                  const std::vector<std::uint8_t>* include = nullptr) {
  if (probs.shape != onehot.shape || probs.ndim() != 2)
    throw std::invalid_argument("ce_loss: shape mismatch");
  const std::size_t tlen = probs.rows(), k = probs.cols();
  std::size_t n_inc = 0;
  double acc = 0.0;
  for (std::size_t t = 0; t < tlen; ++t) {
    if (include && !(*include)[t]) continue;
    ++n_inc;
    for (std::size_t j = 0; j < k; ++j) {
      const double a = static_cast<double>(onehot.at(t, j));
      if (a != 0.0)
        acc -= a * std::log(std::max(static_cast<double>(probs.at(t, j)), kProbClamp));
    }
  }
  Tensor<T> y = Tensor<T>::scalar(n_inc == 0 ? T(0) : static_cast<T>(acc / static_cast<double>(n_inc)));
  if (tracked(tp, {probs.node}) && n_inc > 0) {
    std::vector<std::uint8_t> inc = include ? *include : std::vector<std::uint8_t>(tlen, 1);
    y.node = tp->push(1, [pn = probs.node, pd = probs.data, od = onehot.data, inc = std::move(inc),
                          tlen, k, n_inc](Tape<T>& t, const std::vector<T>& dy) {
      auto& dp = t.grad_mut(pn);
      const T s = dy[0] / static_cast<T>(n_inc);
      for (std::size_t r = 0; r < tlen; ++r) {
        if (!inc[r]) continue;
        for (std::size_t j = 0; j < k; ++j) {
          const T a = od[r * k + j];
          const T p = pd[r * k + j];
          if (a != T(0) && p > static_cast<T>(kProbClamp)) dp[r * k + j] -= s * a / p;
        }
      }
    });
  }
  return y;
}

// Mean over adjacent-frame pairs of min(delta^2, tau^2), with
// delta = log p[i] - log p[i+1] clamped to |delta| <= tau.
template <typename T>
Tensor<T> smooth_loss(Tape<T>* tp, const Tensor<T>& probs, T tau,
                      const std::vector<std::uint8_t>* include = nullptr) {
  if (probs.ndim() != 2) throw std::invalid_argument("smooth_loss: expects T x K");
  const std::size_t tlen = probs.rows(), k = probs.cols();
  std::size_t n_pairs = 0;
  double acc = 0.0;
  for (std::size_t i = 0; i + 1 < tlen; ++i) {
    if (include && (!(*include)[i] || !(*include)[i + 1])) continue;
    ++n_pairs;
    for (std::size_t j = 0; j < k; ++j) {
      const double li = std::log(std::max(static_cast<double>(probs.at(i, j)), kProbClamp));
      const double ln = std::log(std::max(static_cast<double>(probs.at(i + 1, j)), kProbClamp));
      const double d = std::clamp(li - ln, -static_cast<double>(tau), static_cast<double>(tau));
      acc += d * d;
    }
  }
  const double denom = n_pairs == 0 ? 1.0 : static_cast<double>(n_pairs * k);
  Tensor<T> y = Tensor<T>::scalar(static_cast<T>(acc / denom));
  if (tracked(tp, {probs.node}) && n_pairs > 0) {
    std::vector<std::uint8_t> inc = include ? *include : std::vector<std::uint8_t>(tlen, 1);
    y.node = tp->push(1, [pn = probs.node, pd = probs.data, inc = std::move(inc), tlen, k, denom,
                          tau](Tape<T>& t, const std::vector<T>& dy) {
      auto& dp = t.grad_mut(pn);
      for (std::size_t i = 0; i + 1 < tlen; ++i) {
        if (!inc[i] || !inc[i + 1]) continue;
        for (std::size_t j = 0; j < k; ++j) {
          const double pi = static_cast<double>(pd[i * k + j]);
          const double pn2 = static_cast<double>(pd[(i + 1) * k + j]);
          const double d = std::log(std::max(pi, kProbClamp)) - std::log(std::max(pn2, kProbClamp));
          if (std::abs(d) >= static_cast<double>(tau)) continue;  // truncated region
          const double g = 2.0 * d / denom * static_cast<double>(dy[0]);
          if (pi > kProbClamp) dp[i * k + j] += static_cast<T>(g / pi);
          if (pn2 > kProbClamp) dp[(i + 1) * k + j] -= static_cast<T>(g / pn2);
        }
      }
    });
  }
  return y;
}

// Binary cross entropy between the softened boundary and the adjacent-frame
// prediction similarity p_i = <probs[i], probs[i+1]>.
template <typename T>
Tensor<T> boundary_loss(Tape<T>* tp, const std::vector<double>& soft_b, const Tensor<T>& probs,
                        const std::vector<std::uint8_t>* include = nullptr) {
  if (probs.ndim() != 2) throw std::invalid_argument("boundary_loss: expects T x K");
  const std::size_t tlen = probs.rows(), k = probs.cols();
  if (tlen >= 2 && soft_b.size() < tlen - 1)
    throw std::invalid_argument("boundary_loss: soft boundary too short");
  const double lo = kProbClamp, hi = 1.0 - kProbClamp;
  std::size_t n_pairs = 0;
  double acc = 0.0;
  for (std::size_t i = 0; i + 1 < tlen; ++i) {
    if (include && (!(*include)[i] || !(*include)[i + 1])) continue;
    ++n_pairs;
    double p = 0.0;
    for (std::size_t j = 0; j < k; ++j)
      p += static_cast<double>(probs.at(i, j)) * static_cast<double>(probs.at(i + 1, j));
    p = std::clamp(p, lo, hi);
    acc += -soft_b[i] * std::log(1.0 - p) - (1.0 - soft_b[i]) * std::log(p);
  }
  const double denom = n_pairs == 0 ? 1.0 : static_cast<double>(n_pairs);
  Tensor<T> y = Tensor<T>::scalar(static_cast<T>(acc / denom));
  if (tracked(tp, {probs.node}) && n_pairs > 0) {
    std::vector<std::uint8_t> inc = include ? *include : std::vector<std::uint8_t>(tlen, 1);
    y.node = tp->push(1, [pn = probs.node, pd = probs.data, sb = soft_b, inc = std::move(inc), tlen,
                          k, denom, lo, hi](Tape<T>& t, const std::vector<T>& dy) {
      auto& dp = t.grad_mut(pn);
      const auto& K2 = kern::ops<T>();
      for (std::size_t i = 0; i + 1 < tlen; ++i) {
        if (!inc[i] || !inc[i + 1]) continue;
        const double p = static_cast<double>(K2.dot(pd.data() + i * k, pd.data() + (i + 1) * k, k));
        if (p <= lo || p >= hi) continue;  // clamped region
        const double g =
            (sb[i] / (1.0 - p) - (1.0 - sb[i]) / p) / denom * static_cast<double>(dy[0]);
        K2.axpy(static_cast<T>(g), pd.data() + (i + 1) * k, dp.data() + i * k, k);
        K2.axpy(static_cast<T>(g), pd.data() + i * k, dp.data() + (i + 1) * k, k);
      }
    });
  }
  return y;
}

}  // namespace op

template <typename T>
struct LossBreakdown {
  double enc_ce = 0, enc_smo = 0, enc_bd = 0;
  double dec_ce = 0, dec_smo = 0, dec_bd = 0;
  double total = 0;

  LossBreakdown& operator+=(const LossBreakdown& o) {
    enc_ce += o.enc_ce;
    enc_smo += o.enc_smo;
    enc_bd += o.enc_bd;
    dec_ce += o.dec_ce;
    dec_smo += o.dec_smo;
    dec_bd += o.dec_bd;
    total += o.total;
    return *this;
  }
  LossBreakdown& operator/=(double c) {
    enc_ce /= c;
    enc_smo /= c;
    enc_bd /= c;
    dec_ce /= c;
    dec_smo /= c;
    dec_bd /= c;
    total /= c;
    return *this;
  }
};

// Weighted encoder + decoder objective. Optional per-frame filters restrict
// which frames contribute (used by the ablation harness); by default every
// frame counts, masked or not.
template <typename T>
std::pair<Tensor<T>, LossBreakdown<T>> total_loss(Tape<T>* tp, const Tensor<T>& onehot,
                                                  const Tensor<T>& enc_probs, const Tensor<T>& dec_probs,
                                                  const std::vector<double>& soft_b,
                                                  const LossWeights& w, T smooth_tau,
                                                  const std::vector<std::uint8_t>* enc_include = nullptr,
                                                  const std::vector<std::uint8_t>* dec_include = nullptr) {
  LossBreakdown<T> bd;
  std::vector<std::pair<T, Tensor<T>>> terms;
  auto push_term = [&](double lambda, Tensor<T> t, double& slot) {
    slot = static_cast<double>(t.item());
    if (lambda != 0.0) terms.emplace_back(static_cast<T>(lambda), std::move(t));
  };
  // Zero-weight terms are still evaluated for the breakdown but skip the tape.
  auto tape_for = [&](double lambda) { return lambda != 0.0 ? tp : nullptr; };
  push_term(w.enc_ce, op::ce_loss(tape_for(w.enc_ce), enc_probs, onehot, enc_include), bd.enc_ce);
  push_term(w.enc_smo, op::smooth_loss(tape_for(w.enc_smo), enc_probs, smooth_tau, enc_include), bd.enc_smo);
  push_term(w.enc_bd, op::boundary_loss(tape_for(w.enc_bd), soft_b, enc_probs, enc_include), bd.enc_bd);
  push_term(w.dec_ce, op::ce_loss(tape_for(w.dec_ce), dec_probs, onehot, dec_include), bd.dec_ce);
  push_term(w.dec_smo, op::smooth_loss(tape_for(w.dec_smo), dec_probs, smooth_tau, dec_include), bd.dec_smo);
  push_term(w.dec_bd, op::boundary_loss(tape_for(w.dec_bd), soft_b, dec_probs, dec_include), bd.dec_bd);
  Tensor<T> total = op::weighted_sum(tp, terms);
  bd.total = static_cast<double>(total.item());
  return {std::move(total), bd};
}

}  // namespace actdiff
