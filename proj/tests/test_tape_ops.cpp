#include "doctest.h"

#include <cmath>

#include "actdiff/gradcheck.hpp"
#include "actdiff/losses.hpp"
#include "actdiff/rng.hpp"
#include "actdiff/tape.hpp"

using namespace actdiff;

namespace {

Tensor<double> mat(std::vector<std::size_t> shape, std::vector<double> vals) {
  return Tensor<double>(std::move(shape), std::move(vals));
}

Tensor<double> randn(Rng& rng, std::vector<std::size_t> shape) {
  Tensor<double> t = Tensor<double>::zeros(std::move(shape));
  for (auto& v : t.data) v = rng.normal();
  return t;
}

// plain full softmax attention with optional bias table, for reference
Tensor<double> full_attention_ref(const Tensor<double>& q, const Tensor<double>& k,
                                  const Tensor<double>& v) {
  const std::size_t n = q.rows(), d = q.cols();
  Tensor<double> out = Tensor<double>::zeros({n, d});
  for (std::size_t i = 0; i < n; ++i) {
    std::vector<double> s(n);
    double m = -1e300;
    for (std::size_t j = 0; j < n; ++j) {
      s[j] = 0;
      for (std::size_t c = 0; c < d; ++c) s[j] += q.at(i, c) * k.at(j, c);
      s[j] /= std::sqrt(static_cast<double>(d));
      m = std::max(m, s[j]);
    }
    double z = 0;
    for (std::size_t j = 0; j < n; ++j) {
      s[j] = std::exp(s[j] - m);
      z += s[j];
    }
    for (std::size_t j = 0; j < n; ++j)
      for (std::size_t c = 0; c < d; ++c) out.at(i, c) += s[j] / z * v.at(j, c);
  }
  return out;
}

}  // namespace

TEST_CASE("conv1d_dilated identity kernel") {
  Rng rng(1);
  Tensor<double> x = randn(rng, {5, 3});
  Tensor<double> kernel = Tensor<double>::zeros({1, 3, 3});
  for (std::size_t c = 0; c < 3; ++c) kernel.data[c * 3 + c] = 1.0;
  Tensor<double> y = op::conv1d_dilated<double>(nullptr, x, kernel, nullptr, 1);
  for (std::size_t i = 0; i < x.numel(); ++i) CHECK(y.data[i] == doctest::Approx(x.data[i]));
}

TEST_CASE("conv1d_dilated hand examples") {
  {
    Tensor<double> x = mat({3, 1}, {1, 2, 3});
    Tensor<double> kernel = mat({3, 1, 1}, {1, 1, 1});
    Tensor<double> y = op::conv1d_dilated<double>(nullptr, x, kernel, nullptr, 1);
    CHECK(y.data == std::vector<double>{3, 6, 5});
  }
  {
    Tensor<double> x = mat({5, 1}, {1, 2, 3, 4, 5});
    Tensor<double> kernel = mat({3, 1, 1}, {1, 0, 1});
    Tensor<double> y = op::conv1d_dilated<double>(nullptr, x, kernel, nullptr, 2);
    CHECK(y.data == std::vector<double>{3, 4, 6, 2, 3});
  }
}

TEST_CASE("conv1d_dilated rejects bad shapes") {
  Tensor<double> x = mat({3, 1}, {1, 2, 3});
  Tensor<double> even = Tensor<double>::zeros({2, 1, 1});
  CHECK_THROWS(op::conv1d_dilated<double>(nullptr, x, even, nullptr, 1));
  Tensor<double> wrong_c = Tensor<double>::zeros({3, 2, 1});
  CHECK_THROWS(op::conv1d_dilated<double>(nullptr, x, wrong_c, nullptr, 1));
  Tensor<double> k3 = Tensor<double>::zeros({3, 1, 1});
  CHECK_THROWS(op::conv1d_dilated<double>(nullptr, x, k3, nullptr, 0));
}

TEST_CASE("windowed_attention equals full attention for a covering window") {
  Rng rng(2);
  for (std::size_t n : {1ul, 2ul, 7ul}) {
    Tensor<double> q = randn(rng, {n, 4}), k = randn(rng, {n, 4}), v = randn(rng, {n, 4});
    Tensor<double> got = op::windowed_attention<double>(nullptr, q, k, v, 2 * n);
    Tensor<double> ref = full_attention_ref(q, k, v);
    for (std::size_t i = 0; i < got.numel(); ++i)
      CHECK(got.data[i] == doctest::Approx(ref.data[i]).epsilon(1e-12));
  }
}

TEST_CASE("windowed_attention single frame returns v row") {
  Rng rng(3);
  Tensor<double> q = randn(rng, {1, 5}), k = randn(rng, {1, 5}), v = randn(rng, {1, 5});
  Tensor<double> bias = randn(rng, {7});
  Tensor<double> y = op::windowed_attention<double>(nullptr, q, k, v, 4, &bias);
  for (std::size_t c = 0; c < 5; ++c) CHECK(y.data[c] == doctest::Approx(v.data[c]));
}

TEST_CASE("windowed_attention uniform two-frame average") {
  Tensor<double> q = mat({2, 1}, {0, 0});
  Tensor<double> k = q;
  Tensor<double> v = mat({2, 1}, {1, 3});
  Tensor<double> y = op::windowed_attention<double>(nullptr, q, k, v, 4);
  CHECK(y.data[0] == doctest::Approx(2.0));
  CHECK(y.data[1] == doctest::Approx(2.0));
}

TEST_CASE("windowed_attention rows are convex combinations of attended values") {
  Rng rng(4);
  for (int rep = 0; rep < 20; ++rep) {
    const std::size_t n = 2 + rng.uniform_int(10);
    Tensor<double> q = randn(rng, {n, 1}), k = randn(rng, {n, 1}), v = randn(rng, {n, 1});
    const std::size_t window = 1 + rng.uniform_int(2 * n);
    Tensor<double> y = op::windowed_attention<double>(nullptr, q, k, v, window);
    const auto half = static_cast<std::ptrdiff_t>(window / 2);
    for (std::size_t i = 0; i < n; ++i) {
      double lo = 1e300, hi = -1e300;
      for (std::size_t j = 0; j < n; ++j) {
        if (std::abs(static_cast<std::ptrdiff_t>(i) - static_cast<std::ptrdiff_t>(j)) > half) continue;
        lo = std::min(lo, v.at(j, 0));
        hi = std::max(hi, v.at(j, 0));
      }
      CHECK(y.at(i, 0) >= lo - 1e-12);
      CHECK(y.at(i, 0) <= hi + 1e-12);
    }
  }
}

TEST_CASE("windowed_attention errors") {
  Tensor<double> q = mat({2, 1}, {0, 0});
  Tensor<double> v = mat({2, 2}, {1, 2, 3, 4});
  CHECK_THROWS(op::windowed_attention<double>(nullptr, q, q, q, 0));
  CHECK_THROWS(op::windowed_attention<double>(nullptr, q, q, v, 2));
}

TEST_CASE("rel_bias_index clips at the table edge") {
  CHECK(op::rel_bias_index(0, 3) == 3);
  CHECK(op::rel_bias_index(3, 3) == 6);
  CHECK(op::rel_bias_index(5, 3) == 6);
  CHECK(op::rel_bias_index(-3, 3) == 0);
  CHECK(op::rel_bias_index(-9, 3) == 0);
  CHECK(op::rel_bias_index(2, 3) == 5);
  CHECK(op::rel_bias_index(-2, 3) == 1);  // directional: differs from +2
}

TEST_CASE("instance_norm basics") {
  {
    Tensor<double> x = mat({4, 2}, {3, -1, 3, -1, 3, -1, 3, -1});
    Tensor<double> y = op::instance_norm<double>(nullptr, x, 1e-5);
    for (double v : y.data) CHECK(v == doctest::Approx(0.0));
  }
  {
    Tensor<double> x = mat({2, 1}, {0, 2});
    Tensor<double> y = op::instance_norm<double>(nullptr, x, 0.0);
    CHECK(y.data[0] == doctest::Approx(-1.0));
    CHECK(y.data[1] == doctest::Approx(1.0));
  }
}

TEST_CASE("instance_norm output moments") {
  Rng rng(5);
  const double eps = 1e-6;
  for (int rep = 0; rep < 10; ++rep) {
    const std::size_t n = 8 + rng.uniform_int(32), d = 1 + rng.uniform_int(6);
    Tensor<double> x = randn(rng, {n, d});
    for (auto& v : x.data) v = v * 2.0 + 0.7;  // keep variance well away from zero
    Tensor<double> y = op::instance_norm<double>(nullptr, x, eps);
    for (std::size_t c = 0; c < d; ++c) {
      double mean = 0, var = 0;
      for (std::size_t t = 0; t < n; ++t) mean += y.at(t, c);
      mean /= static_cast<double>(n);
      for (std::size_t t = 0; t < n; ++t) var += (y.at(t, c) - mean) * (y.at(t, c) - mean);
      var /= static_cast<double>(n);
      CHECK(std::abs(mean) <= 1e-9);
      CHECK(std::abs(var - 1.0) <= 10 * eps);
    }
  }
}

TEST_CASE("instance_norm affine parameters and their gradients") {
  Rng rng(21);
  Tensor<double> x = randn(rng, {6, 3});
  ParamMap<double> params;
  params.emplace("gamma", randn(rng, {3}));
  params.emplace("beta", randn(rng, {3}));
  ScalarFn<double> fn = [&](Tape<double>* tp, ParamMap<double>& p) {
    Tensor<double> y = op::instance_norm(tp, x, 1e-5, &p.at("gamma"), &p.at("beta"));
    return op::sum_all(tp, op::mul_ew(tp, y, y));
  };
  auto res = finite_diff_check<double>(fn, params, 1e-5);
  CHECK(res.max_rel_err <= 1e-6);

  // forward applies gamma * xhat + beta
  Tensor<double> gamma({3}, {2.0, 0.5, -1.0});
  Tensor<double> beta({3}, {1.0, 0.0, 3.0});
  Tensor<double> plain = op::instance_norm<double>(nullptr, x, 1e-5);
  Tensor<double> affine = op::instance_norm<double>(nullptr, x, 1e-5, &gamma, &beta);
  for (std::size_t t = 0; t < 6; ++t)
    for (std::size_t c = 0; c < 3; ++c)
      CHECK(affine.at(t, c) ==
            doctest::Approx(gamma.data[c] * plain.at(t, c) + beta.data[c]).epsilon(1e-12));
}

TEST_CASE("backward quadratic and disconnected leaves") {
  Tape<double> tape;
  Tensor<double> x = tape.watch(mat({3, 1}, {1.5, -2.0, 0.5}));
  Tensor<double> unused = tape.watch(mat({2, 1}, {9, 9}));
  Tensor<double> loss = op::sum_all(&tape, op::mul_ew(&tape, x, x));
  tape.backward(loss);
  const auto& gx = tape.grad(x.node);
  CHECK(gx[0] == doctest::Approx(3.0));
  CHECK(gx[1] == doctest::Approx(-4.0));
  CHECK(gx[2] == doctest::Approx(1.0));
  for (double g : tape.grad(unused.node)) CHECK(g == 0.0);
}

TEST_CASE("backward guards") {
  Tape<double> tape;
  Tensor<double> x = tape.watch(mat({2, 1}, {1, 2}));
  Tensor<double> y = op::mul_ew(&tape, x, x);
  CHECK_THROWS(tape.backward(y));  // not scalar
  Tensor<double> loss = op::sum_all(&tape, y);
  tape.backward(loss);
  CHECK_THROWS(tape.backward(loss));  // consumed
}

TEST_CASE("finite_diff_check on a quadratic") {
  ParamMap<double> params;
  Rng rng(6);
  params.emplace("x", randn(rng, {4, 3}));
  ScalarFn<double> fn = [](Tape<double>* tp, ParamMap<double>& p) {
    return op::sum_all(tp, op::mul_ew(tp, p.at("x"), p.at("x")));
  };
  auto res = finite_diff_check<double>(fn, params, 1e-5);
  CHECK(res.max_rel_err <= 1e-8);
}

TEST_CASE("finite_diff_check with a dead parameter") {
  ParamMap<double> params;
  Rng rng(7);
  params.emplace("x", randn(rng, {3, 1}));
  params.emplace("dead", randn(rng, {2, 1}));
  ScalarFn<double> fn = [](Tape<double>* tp, ParamMap<double>& p) {
    return op::sum_all(tp, op::mul_ew(tp, p.at("x"), p.at("x")));
  };
  auto res = finite_diff_check<double>(fn, params, 1e-5);
  CHECK(res.max_rel_err <= 1e-8);
}

TEST_CASE("composite conv -> attention -> norm -> CE gradient matches finite differences") {
  Rng rng(8);
  const std::size_t tlen = 6, cin = 3, d = 4, k_cls = 3;
  Tensor<double> x = randn(rng, {tlen, cin});
  ParamMap<double> params;
  params.emplace("k", randn(rng, {3, cin, d}));
  params.emplace("b", randn(rng, {d}));
  params.emplace("wq", randn(rng, {d, d}));
  params.emplace("wk", randn(rng, {d, d}));
  params.emplace("wv", randn(rng, {d, d}));
  params.emplace("bias", randn(rng, {5}));
  params.emplace("head", randn(rng, {d, k_cls}));
  Tensor<double> onehot = Tensor<double>::zeros({tlen, k_cls});
  for (std::size_t t = 0; t < tlen; ++t) onehot.at(t, rng.uniform_int(k_cls)) = 1.0;

  ScalarFn<double> fn = [&](Tape<double>* tp, ParamMap<double>& p) {
    Tensor<double> c = op::conv1d_dilated(tp, x, p.at("k"), &p.at("b"), 2);
    Tensor<double> q = op::linear(tp, c, p.at("wq"));
    Tensor<double> k = op::linear(tp, c, p.at("wk"));
    Tensor<double> v = op::linear(tp, c, p.at("wv"));
    Tensor<double> a = op::windowed_attention(tp, q, k, v, 4, &p.at("bias"));
    Tensor<double> n = op::instance_norm(tp, a, 1e-5);
    Tensor<double> probs = op::softmax_rows(tp, op::linear(tp, n, p.at("head")));
    return op::ce_loss(tp, probs, onehot);
  };
  auto res = finite_diff_check<double>(fn, params, 1e-5);
  CHECK(res.max_rel_err <= 1e-4);
}

TEST_CASE("softmax rows and concat backward") {
  Rng rng(9);
  ParamMap<double> params;
  params.emplace("a", randn(rng, {4, 3}));
  params.emplace("b", randn(rng, {4, 2}));
  ScalarFn<double> fn = [](Tape<double>* tp, ParamMap<double>& p) {
    Tensor<double> cat = op::concat_cols(tp, p.at("a"), p.at("b"));
    Tensor<double> sm = op::softmax_rows(tp, cat);
    return op::sum_all(tp, op::mul_ew(tp, sm, sm));
  };
  auto res = finite_diff_check<double>(fn, params, 1e-5);
  CHECK(res.max_rel_err <= 1e-6);
}

TEST_CASE("apply_mask routes gradients to the token") {
  Rng rng(10);
  Tensor<double> f = randn(rng, {5, 3});
  std::vector<std::uint8_t> visible = {1, 0, 1, 0, 0};
  ParamMap<double> params;
  params.emplace("m", randn(rng, {3}));
  ScalarFn<double> fn = [&](Tape<double>* tp, ParamMap<double>& p) {
    Tensor<double> out = op::apply_mask(tp, f, visible, p.at("m"));
    return op::sum_all(tp, op::mul_ew(tp, out, out));
  };
  auto res = finite_diff_check<double>(fn, params, 1e-5);
  CHECK(res.max_rel_err <= 1e-8);
}
