#include "doctest.h"

#include <map>
#include <numeric>
#include <set>

#include "actdiff/losses.hpp"
#include "actdiff/masking.hpp"

using namespace actdiff;

namespace {

std::size_t count_ones(const MaskVector& m) {
  return std::accumulate(m.begin(), m.end(), std::size_t(0));
}

}  // namespace

TEST_CASE("mask_none") {
  MaskVector m = mask_none(4);
  CHECK(m == MaskVector{1, 1, 1, 1});
  CHECK(count_ones(m) == 4);
}

TEST_CASE("mask_anticipative") {
  CHECK(mask_anticipative(5, 2) == MaskVector{1, 1, 0, 0, 0});
  CHECK(mask_anticipative(4, 4) == MaskVector{1, 1, 1, 1});
  Rng rng(1);
  for (int rep = 0; rep < 50; ++rep) {
    const std::size_t n = 1 + rng.uniform_int(60);
    const std::size_t o = rng.uniform_int(n + 1);
    MaskVector m = mask_anticipative(n, o);
    for (std::size_t i = 0; i + 1 < n; ++i) CHECK(m[i] >= m[i + 1]);  // prefix property
    CHECK(count_ones(m) == o);
  }
  CHECK_THROWS(mask_anticipative(3, 4));
}

TEST_CASE("mask_random") {
  Rng rng(2);
  {
    // T=10, Q=5: exactly one of the two clips goes dark
    MaskVector m = mask_random(10, {5, 1}, rng);
    const MaskVector first_hidden{0, 0, 0, 0, 0, 1, 1, 1, 1, 1};
    const MaskVector second_hidden{1, 1, 1, 1, 1, 0, 0, 0, 0, 0};
    CHECK((m == first_hidden || m == second_hidden));
  }
  {
    MaskVector m = mask_random(12, {5, 0}, rng);
    CHECK(count_ones(m) == 12);
  }
  for (int rep = 0; rep < 200; ++rep) {
    const std::size_t T = 1 + rng.uniform_int(80);
    const std::size_t q = 1 + rng.uniform_int(10);
    const std::size_t n_clips_total = (T + q - 1) / q;
    const std::size_t nr = rng.uniform_int(n_clips_total + 1);
    MaskVector m = mask_random(T, {q, nr}, rng);
    CHECK(m.size() == T);
    // masked count: nr*q unless the short tail clip was chosen
    const std::size_t masked = T - count_ones(m);
    const std::size_t tail = T % q;
    if (tail == 0)
      CHECK(masked == nr * q);
    else
      CHECK((masked == nr * q || masked == (nr - 1) * q + tail));
    for (std::uint8_t b : m) CHECK((b == 0 || b == 1));
  }
  CHECK_THROWS(mask_random(10, {5, 3}, rng));
}

TEST_CASE("mask_relation") {
  Rng rng(3);
  const std::vector<int> labels = {0, 0, 1, 1, 0};
  bool saw_b = false;
  for (int rep = 0; rep < 32; ++rep) {
    MaskVector m = mask_relation(labels, {2, 1}, rng);
    // exactly one present class fully hidden, other frames visible
    int hidden_class = -1;
    for (std::size_t i = 0; i < labels.size(); ++i)
      if (!m[i]) hidden_class = labels[i];
    REQUIRE(hidden_class != -1);
    for (std::size_t i = 0; i < labels.size(); ++i)
      CHECK(m[i] == (labels[i] != hidden_class ? 1 : 0));
    if (m == MaskVector{1, 1, 0, 0, 1}) saw_b = true;
  }
  CHECK(saw_b);  // the class-1 draw appears

  // single-class video falls back to a random mask
  const std::vector<int> mono(10, 2);
  MaskVector m = mask_relation(mono, {5, 1}, rng);
  const std::size_t masked = 10 - count_ones(m);
  CHECK(masked == 5);
}

TEST_CASE("mask_boundary") {
  CHECK(mask_boundary({0.1, 0.6, 0.6, 0.1}) == MaskVector{1, 0, 0, 1});
  const std::vector<int> constant(6, 3);
  CHECK(mask_boundary(soft_boundary(constant, 1.0)) == MaskVector{1, 1, 1, 1, 1, 1});
  const std::vector<int> ab = {0, 0, 1, 1};
  CHECK(mask_boundary(soft_boundary(ab, 1.0)) == MaskVector{1, 0, 0, 1});
}

TEST_CASE("choose_training_mask uniform over types") {
  Rng rng(4);
  std::vector<int> labels;
  for (int seg = 0; seg < 5; ++seg) labels.insert(labels.end(), 10, seg % 3);
  const auto sb = soft_boundary(labels, 1.0);
  TrainMaskContext ctx;
  ctx.n_frames = labels.size();
  ctx.labels = &labels;
  ctx.soft_boundary = &sb;
  ctx.random_spec = {10, 2};

  const int n = 10000;
  std::map<MaskType, int> counts;
  for (int i = 0; i < n; ++i) {
    auto [type, m] = choose_training_mask(rng, ctx);
    CHECK(m.size() == labels.size());
    for (std::uint8_t b : m) CHECK((b == 0 || b == 1));
    ++counts[type];
  }
  REQUIRE(counts.size() == 5);
  double chi2 = 0.0;
  for (const auto& [type, c] : counts) {
    CHECK(c >= 0.17 * n);
    CHECK(c <= 0.23 * n);
    const double e = n / 5.0;
    chi2 += (c - e) * (c - e) / e;
  }
  CHECK(chi2 < 13.2767);  // df=4 critical value at p=0.01

  // reproducible sequence
  Rng ra(9), rb(9);
  for (int i = 0; i < 50; ++i) {
    auto [ta, ma] = choose_training_mask(ra, ctx);
    auto [tb, mb] = choose_training_mask(rb, ctx);
    CHECK(ta == tb);
    CHECK(ma == mb);
  }
}

TEST_CASE("choose_training_mask draws alpha from the configured set") {
  Rng rng(5);
  std::vector<int> labels(40, 0);
  for (std::size_t i = 20; i < 40; ++i) labels[i] = 1;
  const auto sb = soft_boundary(labels, 1.0);
  TrainMaskContext ctx;
  ctx.n_frames = 40;
  ctx.labels = &labels;
  ctx.soft_boundary = &sb;
  ctx.random_spec = {10, 2};
  ctx.alpha_set = {0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8};
  std::set<std::size_t> seen;
  for (int i = 0; i < 4000; ++i) {
    auto [type, m] = choose_training_mask(rng, ctx);
    if (type != MaskType::anticipative) continue;
    seen.insert(count_ones(m));
  }
  // ceil(alpha*40) over the set
  CHECK(seen == std::set<std::size_t>{8, 12, 16, 20, 24, 28, 32});
}

TEST_CASE("apply_mask") {
  Rng rng(6);
  Tensor<double> f = Tensor<double>::zeros({4, 3});
  for (auto& v : f.data) v = rng.normal();
  Tensor<double> token = Tensor<double>::zeros({3});
  for (auto& v : token.data) v = rng.normal();

  Tensor<double> same = op::apply_mask<double>(nullptr, f, {1, 1, 1, 1}, token);
  CHECK(same.data == f.data);

  Tensor<double> all_tok = op::apply_mask<double>(nullptr, f, {0, 0, 0, 0}, token);
  for (std::size_t t = 0; t < 4; ++t)
    for (std::size_t c = 0; c < 3; ++c) CHECK(all_tok.at(t, c) == token.data[c]);

  const MaskVector mixed = {1, 0, 0, 1};
  Tensor<double> out = op::apply_mask<double>(nullptr, f, mixed, token);
  for (std::size_t t = 0; t < 4; ++t)
    for (std::size_t c = 0; c < 3; ++c) {
      // elementwise oracle: F*M + (1-M)*m
      const double want = f.at(t, c) * mixed[t] + (1.0 - mixed[t]) * token.data[c];
      CHECK(out.at(t, c) == want);
      // rows never mix
      CHECK((out.at(t, c) == f.at(t, c) || out.at(t, c) == token.data[c]));
    }
}

TEST_CASE("build_anticipation_input") {
  Rng rng(7);
  Tensor<double> obs = Tensor<double>::zeros({5, 2});
  for (auto& v : obs.data) v = rng.normal();
  Tensor<double> token = Tensor<double>::zeros({2});
  token.data = {0.5, -0.5};
  auto [full, mask] = build_anticipation_input(obs, 3, token);
  CHECK(full.rows() == 8);
  CHECK(mask == MaskVector{1, 1, 1, 1, 1, 0, 0, 0});
  for (std::size_t t = 0; t < 5; ++t)
    for (std::size_t c = 0; c < 2; ++c) CHECK(full.at(t, c) == obs.at(t, c));
  for (std::size_t t = 5; t < 8; ++t)
    for (std::size_t c = 0; c < 2; ++c) CHECK(full.at(t, c) == token.data[c]);
  CHECK_THROWS(build_anticipation_input(obs, 0, token));
  Tensor<double> empty = Tensor<double>::zeros({0, 2});
  CHECK_THROWS(build_anticipation_input(empty, 3, token));
}
