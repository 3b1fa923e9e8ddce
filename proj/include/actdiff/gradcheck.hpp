#pragma once

#include <algorithm>
#include <functional>
#include <limits>
#include <map>
#include <string>

#include "actdiff/rng.hpp"
#include "actdiff/tape.hpp"

namespace actdiff {

template <typename T>
using ParamMap = std::map<std::string, Tensor<T>>;

// Builds a scalar loss from the parameter map. When the tape is null the
// function must behave as a pure forward evaluation.
template <typename T>
using ScalarFn = std::function<Tensor<T>(Tape<T>*, ParamMap<T>&)>;

struct FdCheckResult {
  double max_rel_err = 0.0;
  std::string worst_param;
  std::size_t worst_index = 0;
};

// Central-difference check of the tape gradient. Error metric per coordinate:
// |g_ad - g_fd| / max(1, |g_ad|, |g_fd|). Coordinates are subsampled per
// tensor when a budget and rng are given.
template <typename T>
FdCheckResult finite_diff_check(const ScalarFn<T>& fn, ParamMap<T> params, T h,
                                std::size_t max_coords_per_tensor = std::numeric_limits<std::size_t>::max(),
                                Rng* rng = nullptr) {
  if (h <= T(0)) throw std::invalid_argument("finite_diff_check: h must be positive");

  ParamMap<T> grads;
  {
    Tape<T> tape;
    ParamMap<T> watched;
    for (const auto& [name, t] : params) watched.emplace(name, tape.watch(t));
    Tensor<T> loss = fn(&tape, watched);
    if (!loss.all_finite()) throw std::runtime_error("finite_diff_check: non-finite loss");
    tape.backward(loss);
    for (const auto& [name, t] : watched) {
      Tensor<T> g = Tensor<T>::zeros(t.shape);
      g.data = tape.grad(t.node);
      grads.emplace(name, std::move(g));
    }
  }

  FdCheckResult res;
  for (auto& [name, t] : params) {
    std::vector<std::size_t> coords;
    if (t.numel() <= max_coords_per_tensor || !rng) {
      coords.resize(t.numel());
      for (std::size_t i = 0; i < t.numel(); ++i) coords[i] = i;
    } else {
      for (std::size_t i = 0; i < max_coords_per_tensor; ++i)
        coords.push_back(static_cast<std::size_t>(rng->uniform_int(t.numel())));
    }
    for (std::size_t c : coords) {
      const T saved = t.data[c];
      t.data[c] = saved + h;
      const double fp = static_cast<double>(fn(nullptr, params).item());
      t.data[c] = saved - h;
      const double fm = static_cast<double>(fn(nullptr, params).item());
      t.data[c] = saved;
      if (!std::isfinite(fp) || !std::isfinite(fm))
        throw std::runtime_error("finite_diff_check: non-finite perturbed loss");
      const double g_fd = (fp - fm) / (2.0 * static_cast<double>(h));
      const double g_ad = static_cast<double>(grads.at(name).data[c]);
      const double err = std::abs(g_ad - g_fd) / std::max({1.0, std::abs(g_ad), std::abs(g_fd)});
      if (err > res.max_rel_err) {
        res.max_rel_err = err;
        res.worst_param = name;
        res.worst_index = c;
      }
    }
  }
  return res;
}

}  // namespace actdiff
