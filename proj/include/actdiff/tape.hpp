#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <stdexcept>
#include <utility>
#include <vector>

#include "actdiff/kernels.hpp"
#include "actdiff/tensor.hpp"

// Reverse-mode differentiation over a flat tape. Ops take an optional tape;
// with a null tape (or all-constant inputs) they are plain forward functions.
// One training step owns one tape; backward() may run once.

namespace actdiff {

template <typename T>
class Tape {
 public:
  // Gradient of this node's output is passed in; the fn accumulates into the
  // gradients of its inputs via grad_mut().
  using BackFn = std::function<void(Tape&, const std::vector<T>&)>;

  // Registers a leaf slot (parameter or watched input).
  int watch(std::size_t numel) {
    backs_.emplace_back();
    grads_.emplace_back(numel, T(0));
    return static_cast<int>(backs_.size()) - 1;
  }

  // Copy of `t` with a leaf node attached.
  Tensor<T> watch(const Tensor<T>& t) {
    Tensor<T> out = t;
    out.node = watch(t.numel());
    return out;
  }

  int push(std::size_t numel, BackFn back) {
    backs_.push_back(std::move(back));
    grads_.emplace_back(numel, T(0));
    return static_cast<int>(backs_.size()) - 1;
  }

  void backward(const Tensor<T>& loss) {
    if (loss.numel() != 1) throw std::invalid_argument("backward: loss must be scalar");
    if (loss.node < 0) throw std::invalid_argument("backward: loss not recorded on this tape");
    if (consumed_) throw std::logic_error("backward: tape already consumed");
    consumed_ = true;
    grads_[loss.node][0] = T(1);
    for (int i = loss.node; i >= 0; --i)
      if (backs_[i]) backs_[i](*this, grads_[i]);
  }

  const std::vector<T>& grad(int node) const { return grads_.at(node); }
  std::vector<T>& grad_mut(int node) { return grads_.at(node); }
  bool consumed() const { return consumed_; }
  std::size_t size() const { return backs_.size(); }

 private:
  std::vector<BackFn> backs_;
  std::vector<std::vector<T>> grads_;
  bool consumed_ = false;
};

namespace op {

template <typename T>
bool tracked(const Tape<T>* tp, std::initializer_list<int> nodes) {
  if (!tp) return false;
  for (int n : nodes)
    if (n >= 0) return true;
  return false;
}

// y = x W (+ bias), x: T x Din, W: Din x Dout.
template <typename T>
Tensor<T> linear(Tape<T>* tp, const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>* bias = nullptr) {
  if (x.ndim() != 2 || w.ndim() != 2 || x.cols() != w.rows())
    throw std::invalid_argument("linear: shape mismatch " + shape_str(x.shape) + " x " + shape_str(w.shape));
  const std::size_t rows = x.rows(), din = x.cols(), dout = w.cols();
  if (bias && bias->numel() != dout) throw std::invalid_argument("linear: bias size mismatch");
  const auto& K = kern::ops<T>();

  Tensor<T> y = Tensor<T>::zeros({rows, dout});
  for (std::size_t t = 0; t < rows; ++t) {
    T* yr = y.row(t);
    if (bias)
      for (std::size_t o = 0; o < dout; ++o) yr[o] = bias->data[o];
    const T* xr = x.row(t);
    for (std::size_t i = 0; i < din; ++i)
      if (xr[i] != T(0)) K.axpy(xr[i], w.row(i), yr, dout);
  }

  const int bn = bias ? bias->node : -1;
  if (tracked(tp, {x.node, w.node, bn})) {
    y.node = tp->push(y.numel(), [xn = x.node, wn = w.node, bn, xd = x.data, wd = w.data, rows,
                                  din, dout](Tape<T>& t, const std::vector<T>& dy) {
      const auto& K2 = kern::ops<T>();
      if (xn >= 0) {
        auto& dx = t.grad_mut(xn);
        for (std::size_t r = 0; r < rows; ++r)
          for (std::size_t i = 0; i < din; ++i)
            dx[r * din + i] += K2.dot(dy.data() + r * dout, wd.data() + i * dout, dout);
      }
      if (wn >= 0) {
        auto& dw = t.grad_mut(wn);
        for (std::size_t r = 0; r < rows; ++r) {
          const T* xr = xd.data() + r * din;
          for (std::size_t i = 0; i < din; ++i)
            if (xr[i] != T(0)) K2.axpy(xr[i], dy.data() + r * dout, dw.data() + i * dout, dout);
        }
      }
      if (bn >= 0) {
        auto& db = t.grad_mut(bn);
        for (std::size_t r = 0; r < rows; ++r) K2.axpy(T(1), dy.data() + r * dout, db.data(), dout);
      }
    });
  }
  return y;
}

// Dilated 1-D convolution with zero padding; output length equals input
// length. kernel: k x Cin x Cout (k odd), bias: Cout.
template <typename T>
Tensor<T> conv1d_dilated(Tape<T>* tp, const Tensor<T>& x, const Tensor<T>& kernel,
                         const Tensor<T>* bias, std::size_t dilation) {
  if (x.ndim() != 2 || kernel.ndim() != 3) throw std::invalid_argument("conv1d: bad ranks");
  const std::size_t tlen = x.rows(), cin = x.cols();
  const std::size_t k = kernel.shape[0], kc = kernel.shape[1], cout = kernel.shape[2];
  if (k % 2 == 0) throw std::invalid_argument("conv1d: kernel width must be odd");
  if (kc != cin) throw std::invalid_argument("conv1d: channel mismatch");
  if (bias && bias->numel() != cout) throw std::invalid_argument("conv1d: bias size mismatch");
  if (dilation == 0) throw std::invalid_argument("conv1d: dilation must be positive");
  const std::ptrdiff_t center = static_cast<std::ptrdiff_t>((k - 1) / 2);
  const auto& K = kern::ops<T>();

  Tensor<T> y = Tensor<T>::zeros({tlen, cout});
  for (std::size_t t = 0; t < tlen; ++t) {
    T* yr = y.row(t);
    if (bias)
      for (std::size_t o = 0; o < cout; ++o) yr[o] = bias->data[o];
    for (std::size_t j = 0; j < k; ++j) {
      const std::ptrdiff_t src = static_cast<std::ptrdiff_t>(t) +
                                 (static_cast<std::ptrdiff_t>(j) - center) * static_cast<std::ptrdiff_t>(dilation);
      if (src < 0 || src >= static_cast<std::ptrdiff_t>(tlen)) continue;
      const T* xr = x.row(static_cast<std::size_t>(src));
      const T* kr = kernel.data.data() + j * cin * cout;
      for (std::size_t c = 0; c < cin; ++c)
        if (xr[c] != T(0)) K.axpy(xr[c], kr + c * cout, yr, cout);
    }
  }

  const int bn = bias ? bias->node : -1;
  if (tracked(tp, {x.node, kernel.node, bn})) {
    y.node = tp->push(y.numel(), [xn = x.node, kn = kernel.node, bn, xd = x.data, kd = kernel.data,
                                  tlen, cin, cout, k, center, dilation](Tape<T>& t, const std::vector<T>& dy) {
      const auto& K2 = kern::ops<T>();
      for (std::size_t r = 0; r < tlen; ++r) {
        const T* dyr = dy.data() + r * cout;
        for (std::size_t j = 0; j < k; ++j) {
          const std::ptrdiff_t src = static_cast<std::ptrdiff_t>(r) +
                                     (static_cast<std::ptrdiff_t>(j) - center) * static_cast<std::ptrdiff_t>(dilation);
          if (src < 0 || src >= static_cast<std::ptrdiff_t>(tlen)) continue;
          const std::size_t s = static_cast<std::size_t>(src);
          if (xn >= 0) {
            auto& dx = t.grad_mut(xn);
            for (std::size_t c = 0; c < cin; ++c)
              dx[s * cin + c] += K2.dot(dyr, kd.data() + (j * cin + c) * cout, cout);
          }
          if (kn >= 0) {
            auto& dk = t.grad_mut(kn);
            const T* xr = xd.data() + s * cin;
            for (std::size_t c = 0; c < cin; ++c)
              if (xr[c] != T(0)) K2.axpy(xr[c], dyr, dk.data() + (j * cin + c) * cout, cout);
          }
        }
        if (bn >= 0) K2.axpy(T(1), dyr, t.grad_mut(bn).data(), cout);
      }
    });
  }
  return y;
}

inline std::size_t rel_bias_index(std::ptrdiff_t delta, std::ptrdiff_t w_max) {
  if (delta > w_max) delta = w_max;
  if (delta < -w_max) delta = -w_max;
  return static_cast<std::size_t>(delta + w_max);
}

// Local softmax attention. Position i attends to j iff |i-j| <= window/2.
// bias_table, when given, holds 2*w_max+1 entries indexed by clipped (i-j).
template <typename T>
Tensor<T> windowed_attention(Tape<T>* tp, const Tensor<T>& q, const Tensor<T>& k, const Tensor<T>& v,
                             std::size_t window, const Tensor<T>* bias_table = nullptr) {
  if (q.ndim() != 2 || q.shape != k.shape || q.shape != v.shape)
    throw std::invalid_argument("attention: q/k/v shape mismatch");
  if (window == 0) throw std::invalid_argument("attention: empty window");
  std::ptrdiff_t w_max = 0;
  if (bias_table) {
    if (bias_table->numel() % 2 == 0) throw std::invalid_argument("attention: bias table must have odd size");
    w_max = static_cast<std::ptrdiff_t>((bias_table->numel() - 1) / 2);
  }
  const std::size_t tlen = q.rows(), dim = q.cols();
  const std::ptrdiff_t half = static_cast<std::ptrdiff_t>(window / 2);
  const T inv_sqrt_d = T(1) / std::sqrt(static_cast<T>(dim));
  const auto& K = kern::ops<T>();

  Tensor<T> out = Tensor<T>::zeros({tlen, dim});
  // probs stored per query over its window slice [jlo, jhi]
  std::vector<T> probs;
  std::vector<std::size_t> jlos(tlen), jhis(tlen), offsets(tlen);
  {
    std::size_t total = 0;
    for (std::size_t i = 0; i < tlen; ++i) {
      const std::ptrdiff_t lo = std::max<std::ptrdiff_t>(0, static_cast<std::ptrdiff_t>(i) - half);
      const std::ptrdiff_t hi = std::min<std::ptrdiff_t>(static_cast<std::ptrdiff_t>(tlen) - 1,
                                                         static_cast<std::ptrdiff_t>(i) + half);
      jlos[i] = static_cast<std::size_t>(lo);
      jhis[i] = static_cast<std::size_t>(hi);
      offsets[i] = total;
      total += static_cast<std::size_t>(hi - lo + 1);
    }
    probs.assign(total, T(0));
  }

  for (std::size_t i = 0; i < tlen; ++i) {
    const std::size_t jlo = jlos[i], jhi = jhis[i], n = jhi - jlo + 1;
    T* p = probs.data() + offsets[i];
    for (std::size_t j = jlo; j <= jhi; ++j) {
      T s = K.dot(q.row(i), k.row(j), dim) * inv_sqrt_d;
      if (bias_table)
        s += bias_table->data[rel_bias_index(static_cast<std::ptrdiff_t>(i) - static_cast<std::ptrdiff_t>(j), w_max)];
      p[j - jlo] = s;
    }
    const T m = K.max(p, n);
    T z = T(0);
    for (std::size_t u = 0; u < n; ++u) {
      p[u] = std::exp(p[u] - m);
      z += p[u];
    }
    K.scale(p, T(1) / z, p, n);
    T* orow = out.row(i);
    for (std::size_t j = jlo; j <= jhi; ++j) K.axpy(p[j - jlo], v.row(j), orow, dim);
  }

  const int bn = bias_table ? bias_table->node : -1;
  if (tracked(tp, {q.node, k.node, v.node, bn})) {
    out.node = tp->push(out.numel(), [qn = q.node, kn = k.node, vn = v.node, bn, qd = q.data,
                                      kd = k.data, vd = v.data, probs = std::move(probs), jlos, offsets,
                                      jhis, tlen, dim, w_max, inv_sqrt_d](Tape<T>& t, const std::vector<T>& dy) {
      const auto& K2 = kern::ops<T>();
      std::vector<T> ds;
      for (std::size_t i = 0; i < tlen; ++i) {
        const std::size_t jlo = jlos[i], jhi = jhis[i], n = jhi - jlo + 1;
        const T* p = probs.data() + offsets[i];
        const T* dyr = dy.data() + i * dim;
        ds.assign(n, T(0));
        // dp then softmax jacobian
        T inner = T(0);
        for (std::size_t u = 0; u < n; ++u) {
          ds[u] = K2.dot(dyr, vd.data() + (jlo + u) * dim, dim);
          inner += ds[u] * p[u];
        }
        for (std::size_t u = 0; u < n; ++u) ds[u] = p[u] * (ds[u] - inner);
        if (vn >= 0) {
          auto& dv = t.grad_mut(vn);
          for (std::size_t u = 0; u < n; ++u) K2.axpy(p[u], dyr, dv.data() + (jlo + u) * dim, dim);
        }
        if (qn >= 0) {
          auto& dq = t.grad_mut(qn);
          for (std::size_t u = 0; u < n; ++u)
            K2.axpy(ds[u] * inv_sqrt_d, kd.data() + (jlo + u) * dim, dq.data() + i * dim, dim);
        }
        if (kn >= 0) {
          auto& dk = t.grad_mut(kn);
          for (std::size_t u = 0; u < n; ++u)
            K2.axpy(ds[u] * inv_sqrt_d, qd.data() + i * dim, dk.data() + (jlo + u) * dim, dim);
        }
        if (bn >= 0) {
          auto& db = t.grad_mut(bn);
          for (std::size_t u = 0; u < n; ++u)
            db[rel_bias_index(static_cast<std::ptrdiff_t>(i) - static_cast<std::ptrdiff_t>(jlo + u), w_max)] += ds[u];
        }
      }
    });
  }
  return out;
}

// Normalizes each channel over time. Optional per-channel affine.
template <typename T>
Tensor<T> instance_norm(Tape<T>* tp, const Tensor<T>& x, T eps, const Tensor<T>* gamma = nullptr,
                        const Tensor<T>* beta = nullptr) {
  if (x.ndim() != 2) throw std::invalid_argument("instance_norm: expects T x D");
  const std::size_t tlen = x.rows(), dim = x.cols();
  if (gamma && gamma->numel() != dim) throw std::invalid_argument("instance_norm: gamma size");
  if (beta && beta->numel() != dim) throw std::invalid_argument("instance_norm: beta size");

  Tensor<T> xhat = Tensor<T>::zeros({tlen, dim});
  std::vector<T> istd(dim);
  for (std::size_t d = 0; d < dim; ++d) {
    T mean = 0;
    for (std::size_t t = 0; t < tlen; ++t) mean += x.at(t, d);
    mean /= static_cast<T>(tlen);
    T var = 0;
    for (std::size_t t = 0; t < tlen; ++t) {
      const T c = x.at(t, d) - mean;
      var += c * c;
    }
    var /= static_cast<T>(tlen);
    istd[d] = T(1) / std::sqrt(var + eps);
    for (std::size_t t = 0; t < tlen; ++t) xhat.at(t, d) = (x.at(t, d) - mean) * istd[d];
  }

  Tensor<T> y = xhat;
  if (gamma || beta)
    for (std::size_t t = 0; t < tlen; ++t)
      for (std::size_t d = 0; d < dim; ++d)
        y.at(t, d) = (gamma ? gamma->data[d] : T(1)) * xhat.at(t, d) + (beta ? beta->data[d] : T(0));

  const int gn = gamma ? gamma->node : -1;
  const int betan = beta ? beta->node : -1;
  if (tracked(tp, {x.node, gn, betan})) {
    std::vector<T> gamma_d = gamma ? gamma->data : std::vector<T>();
    y.node = tp->push(y.numel(), [xn = x.node, gn, betan, xh = xhat.data, istd = std::move(istd),
                                  gamma_d = std::move(gamma_d), tlen, dim](Tape<T>& t, const std::vector<T>& dy) {
      for (std::size_t d = 0; d < dim; ++d) {
        if (gn >= 0) {
          T acc = 0;
          for (std::size_t r = 0; r < tlen; ++r) acc += dy[r * dim + d] * xh[r * dim + d];
          t.grad_mut(gn)[d] += acc;
        }
        if (betan >= 0) {
          T acc = 0;
          for (std::size_t r = 0; r < tlen; ++r) acc += dy[r * dim + d];
          t.grad_mut(betan)[d] += acc;
        }
        if (xn >= 0) {
          const T g = gamma_d.empty() ? T(1) : gamma_d[d];
          T mean_dxh = 0, mean_dxh_xh = 0;
          for (std::size_t r = 0; r < tlen; ++r) {
            const T dxh = dy[r * dim + d] * g;
            mean_dxh += dxh;
            mean_dxh_xh += dxh * xh[r * dim + d];
          }
          mean_dxh /= static_cast<T>(tlen);
          mean_dxh_xh /= static_cast<T>(tlen);
          auto& dx = t.grad_mut(xn);
          for (std::size_t r = 0; r < tlen; ++r) {
            const T dxh = dy[r * dim + d] * g;
            dx[r * dim + d] += istd[d] * (dxh - mean_dxh - xh[r * dim + d] * mean_dxh_xh);
          }
        }
      }
    });
  }
  return y;
}

template <typename T>
Tensor<T> relu(Tape<T>* tp, const Tensor<T>& x) {
  const auto& K = kern::ops<T>();
  Tensor<T> y = Tensor<T>::zeros(x.shape);
  K.relu(x.data.data(), y.data.data(), x.numel());
  if (tracked(tp, {x.node})) {
    y.node = tp->push(y.numel(), [xn = x.node, xd = x.data](Tape<T>& t, const std::vector<T>& dy) {
      if (xn >= 0)
        kern::ops<T>().relu_grad_accum(xd.data(), dy.data(), t.grad_mut(xn).data(), xd.size());
    });
  }
  return y;
}

template <typename T>
Tensor<T> add(Tape<T>* tp, const Tensor<T>& a, const Tensor<T>& b) {
  if (a.shape != b.shape) throw std::invalid_argument("add: shape mismatch");
  const auto& K = kern::ops<T>();
  Tensor<T> y = Tensor<T>::zeros(a.shape);
  K.add(a.data.data(), b.data.data(), y.data.data(), y.numel());
  if (tracked(tp, {a.node, b.node})) {
    y.node = tp->push(y.numel(), [an = a.node, bn = b.node](Tape<T>& t, const std::vector<T>& dy) {
      const auto& K2 = kern::ops<T>();
      if (an >= 0) K2.axpy(T(1), dy.data(), t.grad_mut(an).data(), dy.size());
      if (bn >= 0) K2.axpy(T(1), dy.data(), t.grad_mut(bn).data(), dy.size());
    });
  }
  return y;
}

template <typename T>
Tensor<T> mul_ew(Tape<T>* tp, const Tensor<T>& a, const Tensor<T>& b) {
  if (a.shape != b.shape) throw std::invalid_argument("mul: shape mismatch");
  const auto& K = kern::ops<T>();
  Tensor<T> y = Tensor<T>::zeros(a.shape);
  K.mul(a.data.data(), b.data.data(), y.data.data(), y.numel());
  if (tracked(tp, {a.node, b.node})) {
    y.node = tp->push(y.numel(), [an = a.node, bn = b.node, ad = a.data,
                                  bd = b.data](Tape<T>& t, const std::vector<T>& dy) {
      const auto& K2 = kern::ops<T>();
      if (an >= 0) K2.mul_accum(dy.data(), bd.data(), t.grad_mut(an).data(), dy.size());
      if (bn >= 0) K2.mul_accum(dy.data(), ad.data(), t.grad_mut(bn).data(), dy.size());
    });
  }
  return y;
}

// y[t,:] = x[t,:] + v
template <typename T>
Tensor<T> add_rowvec(Tape<T>* tp, const Tensor<T>& x, const Tensor<T>& v) {
  if (x.ndim() != 2 || v.numel() != x.cols()) throw std::invalid_argument("add_rowvec: shape mismatch");
  const std::size_t rows = x.rows(), dim = x.cols();
  const auto& K = kern::ops<T>();
  Tensor<T> y = x;
  y.node = -1;
  for (std::size_t t = 0; t < rows; ++t) K.axpy(T(1), v.data.data(), y.row(t), dim);
  if (tracked(tp, {x.node, v.node})) {
    y.node = tp->push(y.numel(), [xn = x.node, vn = v.node, rows, dim](Tape<T>& t, const std::vector<T>& dy) {
      const auto& K2 = kern::ops<T>();
      if (xn >= 0) K2.axpy(T(1), dy.data(), t.grad_mut(xn).data(), dy.size());
      if (vn >= 0)
        for (std::size_t r = 0; r < rows; ++r)
          K2.axpy(T(1), dy.data() + r * dim, t.grad_mut(vn).data(), dim);
    });
  }
  return y;
}

template <typename T>
Tensor<T> concat_cols(Tape<T>* tp, const Tensor<T>& a, const Tensor<T>& b) {
  if (a.ndim() != 2 || b.ndim() != 2 || a.rows() != b.rows())
    throw std::invalid_argument("concat_cols: row mismatch");
  const std::size_t rows = a.rows(), da = a.cols(), db = b.cols();
  Tensor<T> y = Tensor<T>::zeros({rows, da + db});
  for (std::size_t t = 0; t < rows; ++t) {
    for (std::size_t i = 0; i < da; ++i) y.at(t, i) = a.at(t, i);
    for (std::size_t i = 0; i < db; ++i) y.at(t, da + i) = b.at(t, i);
  }
  if (tracked(tp, {a.node, b.node})) {
    y.node = tp->push(y.numel(), [an = a.node, bn = b.node, rows, da, db](Tape<T>& t, const std::vector<T>& dy) {
      for (std::size_t r = 0; r < rows; ++r) {
        if (an >= 0) {
          auto& dav = t.grad_mut(an);
          for (std::size_t i = 0; i < da; ++i) dav[r * da + i] += dy[r * (da + db) + i];
        }
        if (bn >= 0) {
          auto& dbv = t.grad_mut(bn);
          for (std::size_t i = 0; i < db; ++i) dbv[r * db + i] += dy[r * (da + db) + da + i];
        }
      }
    });
  }
  return y;
}

template <typename T>
Tensor<T> softmax_rows(Tape<T>* tp, const Tensor<T>& x) {
  if (x.ndim() != 2) throw std::invalid_argument("softmax_rows: expects matrix");
  const std::size_t rows = x.rows(), dim = x.cols();
  const auto& K = kern::ops<T>();
  Tensor<T> y = Tensor<T>::zeros(x.shape);
  for (std::size_t t = 0; t < rows; ++t) {
    const T* xr = x.row(t);
    T* yr = y.row(t);
    const T m = K.max(xr, dim);
    T z = 0;
    for (std::size_t i = 0; i < dim; ++i) {
      yr[i] = std::exp(xr[i] - m);
      z += yr[i];
    }
    K.scale(yr, T(1) / z, yr, dim);
  }
  if (tracked(tp, {x.node})) {
    y.node = tp->push(y.numel(), [xn = x.node, yd = y.data, rows, dim](Tape<T>& t, const std::vector<T>& dy) {
      if (xn < 0) return;
      const auto& K2 = kern::ops<T>();
      auto& dx = t.grad_mut(xn);
      for (std::size_t r = 0; r < rows; ++r) {
        const T* yr = yd.data() + r * dim;
        const T* dyr = dy.data() + r * dim;
        const T inner = K2.dot(dyr, yr, dim);
        for (std::size_t i = 0; i < dim; ++i) dx[r * dim + i] += yr[i] * (dyr[i] - inner);
      }
    });
  }
  return y;
}

template <typename T>
Tensor<T> sum_all(Tape<T>* tp, const Tensor<T>& x) {
  const auto& K = kern::ops<T>();
  Tensor<T> y = Tensor<T>::scalar(K.sum(x.data.data(), x.numel()));
  if (tracked(tp, {x.node})) {
    y.node = tp->push(1, [xn = x.node, n = x.numel()](Tape<T>& t, const std::vector<T>& dy) {
      if (xn < 0) return;
      auto& dx = t.grad_mut(xn);
      for (std::size_t i = 0; i < n; ++i) dx[i] += dy[0];
    });
  }
  return y;
}

// Row-wise selection between features and a learnable token:
// out[t] = F[t] if visible[t] else token.
template <typename T>
Tensor<T> apply_mask(Tape<T>* tp, const Tensor<T>& f, const std::vector<std::uint8_t>& visible,
                     const Tensor<T>& token) {
  if (f.ndim() != 2 || visible.size() != f.rows() || token.numel() != f.cols())
    throw std::invalid_argument("apply_mask: shape mismatch");
  const std::size_t rows = f.rows(), dim = f.cols();
  Tensor<T> y = Tensor<T>::zeros(f.shape);
  for (std::size_t t = 0; t < rows; ++t) {
    const T* src = visible[t] ? f.row(t) : token.data.data();
    T* dst = y.row(t);
    for (std::size_t i = 0; i < dim; ++i) dst[i] = src[i];
  }
  if (tracked(tp, {f.node, token.node})) {
    y.node = tp->push(y.numel(), [fn = f.node, mn = token.node, visible, rows, dim](Tape<T>& t, const std::vector<T>& dy) {
      const auto& K2 = kern::ops<T>();
      for (std::size_t r = 0; r < rows; ++r) {
        if (visible[r]) {
          if (fn >= 0) K2.axpy(T(1), dy.data() + r * dim, t.grad_mut(fn).data() + r * dim, dim);
        } else if (mn >= 0) {
          K2.axpy(T(1), dy.data() + r * dim, t.grad_mut(mn).data(), dim);
        }
      }
    });
  }
  return y;
}

// Scalar combination sum_i coeff_i * term_i.
template <typename T>
Tensor<T> weighted_sum(Tape<T>* tp, const std::vector<std::pair<T, Tensor<T>>>& terms) {
  T total = 0;
  bool any = false;
  for (const auto& [c, s] : terms) {
    if (s.numel() != 1) throw std::invalid_argument("weighted_sum: non-scalar term");
    total += c * s.data[0];
    if (s.node >= 0) any = true;
  }
  Tensor<T> y = Tensor<T>::scalar(total);
  if (tp && any) {
    std::vector<std::pair<T, int>> links;
    for (const auto& [c, s] : terms)
      if (s.node >= 0) links.emplace_back(c, s.node);
    y.node = tp->push(1, [links = std::move(links)](Tape<T>& t, const std::vector<T>& dy) {
      for (const auto& [c, n] : links) t.grad_mut(n)[0] += c * dy[0];
    });
  }
  return y;
}

}  // namespace op
}  // namespace actdiff
