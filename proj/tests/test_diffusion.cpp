#include "doctest.h"

#include <cmath>

#include "actdiff/diffusion.hpp"

using namespace actdiff;

namespace {

Tensor<double> mat(std::vector<std::size_t> shape, std::vector<double> vals) {
  return Tensor<double>(std::move(shape), std::move(vals));
}

}  // namespace

TEST_CASE("make_schedule basics") {
  Schedule s = make_schedule(1000, 1e-4, 0.02);
  CHECK(s.abar(1) == doctest::Approx(0.9999).epsilon(1e-12));
  for (int i = 1; i <= s.S; ++i) {
    CHECK(s.alpha_bar[i] > 0.0);
    CHECK(s.alpha_bar[i] < 1.0);
    CHECK(s.alpha_bar[i] < s.alpha_bar[i - 1]);
  }
  Schedule two = make_schedule(2, 0.1, 0.2);
  CHECK(two.abar(1) == doctest::Approx(0.9));
  CHECK(two.abar(2) == doctest::Approx(0.72));

  CHECK_THROWS(make_schedule(0));
  CHECK_THROWS(make_schedule(10, 0.0, 0.5));
  CHECK_THROWS(make_schedule(10, 0.5, 0.1));
  CHECK_THROWS(make_schedule(10, 0.5, 1.0));
}

TEST_CASE("scale_labels and inverse") {
  Tensor<double> onehot = mat({1, 3}, {1, 0, 0});
  Tensor<double> s1 = scale_labels(onehot, 1.0);
  CHECK(s1.data == std::vector<double>{1, -1, -1});
  Tensor<double> s05 = scale_labels(onehot, 0.5);
  CHECK(s05.data == std::vector<double>{0.5, -0.5, -0.5});
  Tensor<double> back = unscale_labels(s05, 0.5);
  CHECK(back.data == std::vector<double>{1, 0, 0});

  Tensor<double> bad = mat({1, 3}, {0.5, 0.5, 0});
  CHECK_THROWS(scale_labels(bad, 1.0));
  CHECK_NOTHROW(scale_labels(bad, 1.0, false));
}

TEST_CASE("forward_noise limits and hand value") {
  Tensor<double> a0 = mat({1, 1}, {2.0});
  Tensor<double> eps = mat({1, 1}, {1.0});
  Schedule s = make_schedule(10);
  CHECK(forward_noise(a0, 0, eps, s).data[0] == 2.0);  // abar(0)=1 exactly

  Schedule limit;
  limit.S = 1;
  limit.beta = {0.0, 1.0 - 1e-300};
  limit.alpha = {1.0, 0.0};
  limit.alpha_bar = {1.0, 0.0};
  CHECK(forward_noise(a0, 1, eps, limit).data[0] == 1.0);  // pure-noise limit

  Schedule quarter = limit;
  quarter.alpha_bar = {1.0, 0.25};
  CHECK(forward_noise(a0, 1, eps, quarter).data[0] == doctest::Approx(1.8660254).epsilon(1e-7));

  CHECK_THROWS(forward_noise(a0, 11, eps, s));
  CHECK_THROWS(forward_noise(a0, -1, eps, s));
}

TEST_CASE("ddim_step terminal and hand example") {
  Tensor<double> a_s = mat({1, 1}, {1.866025});
  Tensor<double> a0 = mat({1, 1}, {2.0});
  Schedule s;
  s.S = 2;
  s.beta = {0, 0, 0};
  s.alpha = {1, 1, 1};
  s.alpha_bar = {1.0, 0.81, 0.25};
  CHECK(ddim_step(a_s, a0, 2, -1, s).data[0] == 2.0);
  CHECK(ddim_step(a_s, a0, 2, 1, s).data[0] == doctest::Approx(2.235890).epsilon(1e-6));
  CHECK_THROWS(ddim_step(a_s, a0, 1, 1, s));
}

TEST_CASE("ddim_step reproduces the closed form under a perfect x0") {
  Schedule s = make_schedule(100, 1e-3, 0.05);
  Rng rng(11);
  Tensor<double> a0 = Tensor<double>::zeros({4, 3});
  Tensor<double> eps = Tensor<double>::zeros({4, 3});
  for (auto& v : a0.data) v = rng.uniform() > 0.5 ? 1.0 : -1.0;
  for (auto& v : eps.data) v = rng.normal();
  for (int t_now : {100, 60, 17, 2}) {
    for (int t_next : {-1, 0, 1, 16, 59}) {
      if (t_next >= t_now) continue;
      Tensor<double> a_s = forward_noise(a0, t_now, eps, s);
      Tensor<double> stepped = ddim_step(a_s, a0, t_now, t_next, s);
      Tensor<double> expect = t_next == -1 ? a0 : forward_noise(a0, t_next, eps, s);
      for (std::size_t i = 0; i < expect.numel(); ++i)
        CHECK(std::abs(stepped.data[i] - expect.data[i]) <= 1e-9);
    }
  }
}

TEST_CASE("inference_times") {
  {
    auto pairs = inference_times(1000, 2);
    REQUIRE(pairs.size() == 1);
    CHECK(pairs[0].t_now == 1000);
    CHECK(pairs[0].t_next == -1);
  }
  {
    auto pairs = inference_times(1000, 25);
    CHECK(pairs.size() == 24);
    CHECK(pairs.front().t_now == 1000);
    CHECK(pairs.back().t_next == -1);
    for (std::size_t i = 0; i < pairs.size(); ++i) {
      CHECK(pairs[i].t_next < pairs[i].t_now);
      if (i + 1 < pairs.size()) CHECK(pairs[i].t_next == pairs[i + 1].t_now);
    }
  }
  {
    // more steps than integers available: rounding collapses duplicates
    auto pairs = inference_times(5, 12);
    CHECK(pairs.front().t_now == 5);
    CHECK(pairs.back().t_next == -1);
    for (std::size_t i = 0; i + 1 < pairs.size(); ++i)
      CHECK(pairs[i].t_next == pairs[i + 1].t_now);
  }
  CHECK_THROWS(inference_times(100, 1));
}

TEST_CASE("denoise_loop with a perfect oracle") {
  Schedule s = make_schedule(100);
  Tensor<double> a0 = Tensor<double>::zeros({6, 4});
  Rng lrng(12);
  for (std::size_t t = 0; t < 6; ++t) {
    for (std::size_t k = 0; k < 4; ++k) a0.at(t, k) = -1.0;
    a0.at(t, lrng.uniform_int(4)) = 1.0;
  }
  DecodeFn<double> oracle = [&](const Tensor<double>&, int) { return a0; };

  std::vector<Tensor<double>> outs;
  for (int steps : {2, 5, 10, 25}) {
    Rng rng(999);
    Tensor<double> got = denoise_loop(oracle, 6, 4, steps, s, 1.0, rng);
    for (std::size_t i = 0; i < a0.numel(); ++i) CHECK(std::abs(got.data[i] - a0.data[i]) <= 1e-6);
    outs.push_back(got);
  }
  // step-count invariance under the perfect oracle
  for (std::size_t i = 1; i < outs.size(); ++i)
    for (std::size_t j = 0; j < a0.numel(); ++j)
      CHECK(outs[i].data[j] == outs[0].data[j]);
}

TEST_CASE("denoise_loop determinism") {
  Schedule s = make_schedule(50);
  DecodeFn<double> decode = [&](const Tensor<double>& a_s, int) {
    Tensor<double> out = a_s;
    for (auto& v : out.data) v = std::tanh(v);
    return out;
  };
  Rng r1(77), r2(77);
  Tensor<double> a = denoise_loop(decode, 5, 3, 10, s, 1.0, r1);
  Tensor<double> b = denoise_loop(decode, 5, 3, 10, s, 1.0, r2);
  CHECK(a.data == b.data);
}
