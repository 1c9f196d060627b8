// Copyright 2026 The Diff3D Authors
// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <cmath>
#include <limits>

#include "diff3d/error.hpp"
#include "diff3d/numerics/adam.hpp"
#include "diff3d/numerics/grad_check.hpp"
#include "diff3d/numerics/ops.hpp"
#include "diff3d/numerics/parameter_set.hpp"
#include "test_util.hpp"

using namespace diff3d;
using diff3d::testing::random_tensor;
using diff3d::testing::weighted_sum;

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

// Straight triple loop, sum over k in ascending order from 0.
Tensor naive_matmul(const Tensor& a, const Tensor& b) {
  const std::size_t m = a.shape()[0], k = a.shape()[1], n = b.shape()[1];
  Tensor c({m, n});
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      double s = 0.0;
      for (std::size_t p = 0; p < k; ++p) s += a.at(i, p) * b.at(p, j);
      c.at(i, j) = s;
    }
  }
  return c;
}

}  // namespace

TEST_CASE("tensor shape invariant") {
  CHECK_THROWS_AS(Tensor({2, 3}, std::vector<double>(5)), ShapeError);
  Tensor t({2, 3});
  CHECK(t.size() == 6);
  CHECK(t.cols() == 3);
  CHECK_THROWS_AS(t.reshaped({4, 2}), ShapeError);
}

TEST_CASE("matmul examples") {
  Tape tape;
  auto id = tape.constant(Tensor::matrix(2, 2, {1, 0, 0, 1}));
  auto b = tape.constant(Tensor::matrix(2, 2, {3, 4, 5, 6}));
  CHECK(matmul(id, b).value() == Tensor::matrix(2, 2, {3, 4, 5, 6}));

  auto row = tape.constant(Tensor::matrix(1, 2, {1, 2}));
  auto col = tape.constant(Tensor::matrix(2, 1, {3, 4}));
  CHECK(matmul(row, col).value().item() == 11.0);

  CHECK_THROWS_AS(matmul(row, row), ShapeError);
}

TEST_CASE("matmul is bitwise equal to a naive triple loop") {
  Rng rng(11);
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t m = 1 + trial % 5, k = 1 + (trial * 3) % 7, n = 1 + (trial * 5) % 6;
    Tensor a = random_tensor({m, k}, rng), b = random_tensor({k, n}, rng);
    CHECK(matmul_values(a, b) == naive_matmul(a, b));
  }
}

TEST_CASE("gradient of sum(matmul) w.r.t. A is ones·Bᵀ") {
  Rng rng(3);
  Parameter a{"a", random_tensor({3, 4}, rng), {}};
  Parameter b{"b", random_tensor({4, 2}, rng), {}};
  a.zero_grad();
  b.zero_grad();
  Tape tape;
  tape.backward(sum(matmul(tape.param(a), tape.param(b))));
  for (std::size_t i = 0; i < 3; ++i) {
    for (std::size_t p = 0; p < 4; ++p) {
      CHECK(a.grad.at(i, p) == doctest::Approx(b.value.at(p, 0) + b.value.at(p, 1)));
    }
  }
  auto res = grad_check(
      [&](Tape& t) { return sum(matmul(t.param(a), t.param(b))); }, {&a, &b});
  CHECK(res.max_rel_error < 1e-4);
}

TEST_CASE("softmax_rows examples") {
  Tape tape;
  auto x = tape.constant(Tensor::matrix(1, 3, {0, 0, 0}));
  for (double v : softmax_rows(x).value().values()) CHECK(v == doctest::Approx(1.0 / 3.0));

  auto two = tape.constant(Tensor::matrix(1, 2, {0, 0}));
  Tensor y = softmax_rows(two, Tensor::matrix(1, 2, {0, -kInf})).value();
  CHECK(y[0] == 1.0);
  CHECK(y[1] == 0.0);

  auto r = tape.constant(Tensor::matrix(1, 3, {1, 2, 3}));
  Tensor s = softmax_rows(r).value();
  const double z = std::exp(1.0) + std::exp(2.0) + std::exp(3.0);
  CHECK(s[0] == doctest::Approx(std::exp(1.0) / z).epsilon(1e-14));
  CHECK(s[1] == doctest::Approx(std::exp(2.0) / z).epsilon(1e-14));
  CHECK(s[2] == doctest::Approx(std::exp(3.0) / z).epsilon(1e-14));

  CHECK_THROWS_AS(softmax_rows(two, Tensor::matrix(1, 2, {-kInf, -kInf})), InvalidArgument);
  Tensor nan_row = softmax_rows_values(Tensor::matrix(1, 2, {std::nan(""), 0}), nullptr);
  CHECK(std::isnan(nan_row[0]));
  CHECK(std::isnan(nan_row[1]));
}

TEST_CASE("softmax rows sum to one and masked entries are exactly zero") {
  Rng rng(5);
  std::bernoulli_distribution masked(0.3);
  for (int trial = 0; trial < 50; ++trial) {
    Tensor x = random_tensor({4, 7}, rng, 5.0);
    Tensor bias({4, 7});
    for (std::size_t i = 0; i < 4; ++i) {
      for (std::size_t j = 1; j < 7; ++j) bias.at(i, j) = masked(rng) ? -kInf : 0.0;
    }
    Tensor y = softmax_rows_values(x, &bias);
    for (std::size_t i = 0; i < 4; ++i) {
      double s = 0.0;
      for (std::size_t j = 0; j < 7; ++j) {
        s += y.at(i, j);
        if (bias.at(i, j) == -kInf) CHECK(y.at(i, j) == 0.0);
      }
      CHECK(std::abs(s - 1.0) < 1e-6);
    }
  }
}

TEST_CASE("layernorm examples") {
  Tape tape;
  auto gain = tape.constant(Tensor({2}, 1.0));
  auto shift = tape.constant(Tensor({2}, 0.0));
  Tensor y = layernorm(tape.constant(Tensor::matrix(1, 2, {1, 3})), gain, shift).value();
  CHECK(y[0] == doctest::Approx(-1.0).epsilon(1e-5));
  CHECK(y[1] == doctest::Approx(1.0).epsilon(1e-5));

  auto g3 = tape.constant(Tensor({3}, 1.0));
  auto s3 = tape.constant(Tensor({3}, 0.0));
  Tensor flat = layernorm(tape.constant(Tensor::matrix(1, 3, {4, 4, 4})), g3, s3).value();
  for (double v : flat.values()) CHECK(v == 0.0);

  CHECK_THROWS_AS(layernorm(tape.constant(Tensor::matrix(2, 1, {1, 2})),
                            tape.constant(Tensor({1}, 1.0)), tape.constant(Tensor({1}, 0.0))),
                  ShapeError);
}

TEST_CASE("every differentiable primitive passes grad_check over 20 seeds") {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    Rng rng(seed);
    Parameter a{"a", random_tensor({3, 4}, rng), {}};
    Parameter b{"b", random_tensor({4, 5}, rng), {}};
    Parameter c{"c", random_tensor({3, 4}, rng), {}};
    Parameter bt{"bt", random_tensor({5, 4}, rng), {}};
    Parameter v4{"v4", random_tensor({4}, rng), {}};
    Parameter w4{"w4", random_tensor({4}, rng), {}};
    Tensor mask = random_tensor({3, 4}, rng);
    std::optional<Tensor> bias = Tensor({3, 5});
    (*bias).at(0, 2) = -kInf;
    (*bias).at(2, 0) = -kInf;
    const std::vector<long> gather_idx{2, kNoRow, 0, 0, 1};
    const std::vector<long> segments{1, kNoRow, 1};
    const std::uint64_t ws = seed + 100;

    auto check = [&](const char* what, const ScalarFn& f, std::vector<Parameter*> ps) {
      auto r = grad_check(f, ps);
      INFO(std::string(what) << " seed " << seed << " worst " << r.worst_param << "[" << r.worst_index
                << "] analytic " << r.worst_analytic << " numeric " << r.worst_numeric);
      CHECK(r.max_rel_error < 1e-4);
    };

    check("matmul", [&](Tape& t) { return weighted_sum(matmul(t.param(a), t.param(b)), ws); },
          {&a, &b});
    check("matmul_nt",
          [&](Tape& t) { return weighted_sum(matmul_nt(t.param(a), t.param(bt)), ws); },
          {&a, &bt});
    check("add/sub/mul",
          [&](Tape& t) {
            auto x = t.param(a), y = t.param(c);
            return weighted_sum(mul(add(x, y), sub(x, scale(y, 0.7))), ws);
          },
          {&a, &c});
    check("add_bias",
          [&](Tape& t) { return weighted_sum(add_bias(t.param(a), t.param(v4)), ws); },
          {&a, &v4});
    check("mul_const/mask_rows",
          [&](Tape& t) {
            return weighted_sum(mask_rows(mul_const(t.param(a), mask), {true, false, true}), ws);
          },
          {&a});
    check("softmax_rows",
          [&](Tape& t) { return weighted_sum(softmax_rows(matmul(t.param(a), t.param(b)), bias), ws); },
          {&a, &b});
    check("layernorm",
          [&](Tape& t) {
            return weighted_sum(layernorm(t.param(a), t.param(v4), t.param(w4)), ws);
          },
          {&a, &v4, &w4});
    check("gelu", [&](Tape& t) { return weighted_sum(gelu(t.param(a)), ws); }, {&a});
    check("abs", [&](Tape& t) { return mean(abs(t.param(a))); }, {&a});
    check("slice/concat/reshape",
          [&](Tape& t) {
            auto x = t.param(a);
            auto y = concat_cols({slice_cols(x, 2, 4), slice_cols(x, 0, 1), x});
            return weighted_sum(reshape(y, {y.value().size()}), ws);
          },
          {&a});
    check("gather_rows",
          [&](Tape& t) { return weighted_sum(gather_rows(t.param(a), gather_idx), ws); }, {&a});
    check("segment_mean",
          [&](Tape& t) { return weighted_sum(segment_mean(t.param(a), segments, 3), ws); }, {&a});
    check("bce_with_logits",
          [&](Tape& t) {
            auto z = sum(t.param(v4));
            return add(bce_with_logits(z, 1.0, 2.0), bce_with_logits(scale(z, -1.5), 0.0));
          },
          {&v4});
  }
}

TEST_CASE("grad_check trivial cases") {
  Parameter x{"x", Tensor::scalar(3.0), {}};
  auto sq = grad_check([&](Tape& t) { auto v = t.param(x); return mul(v, v); }, {&x});
  CHECK(sq.worst_analytic == doctest::Approx(6.0));
  CHECK(sq.worst_numeric == doctest::Approx(6.0));
  CHECK(sq.max_rel_error < 1e-8);

  auto constant = grad_check(
      [&](Tape& t) {
        t.param(x);
        return t.constant(Tensor::scalar(4.0));
      },
      {&x});
  CHECK(constant.worst_analytic == 0.0);
  CHECK(constant.worst_numeric == 0.0);
  CHECK(x.value.item() == 3.0);
}

TEST_CASE("backward runs in exact reverse recording order") {
  Parameter x{"x", Tensor::matrix(1, 2, {0.5, -1.0}), {}};
  x.zero_grad();
  Tape tape;
  auto v = tape.param(x);
  auto a = gelu(v);
  auto b = scale(a, 2.0);
  auto c = mul(b, v);
  auto loss = sum(c);
  tape.backward(loss);
  const std::vector<std::size_t> expected{loss.id(), c.id(), b.id(), a.id()};
  CHECK(tape.backward_order() == expected);
  CHECK(x.grad.shape() == x.value.shape());
}

TEST_CASE("constants never receive gradients") {
  Tape tape;
  auto c = tape.constant(Tensor::matrix(1, 2, {1, 2}));
  auto loss = sum(gelu(c));
  tape.backward(loss);
  CHECK(tape.grad_sink(c) == nullptr);
  CHECK(tape.backward_order().empty());
}

TEST_CASE("adam examples") {
  SUBCASE("zero gradient leaves parameters unchanged") {
    Parameter p{"p", Tensor::matrix(1, 3, {0.25, -1.5, 2.0}), {}};
    Adam opt({&p}, {.lr = 0.1});
    const Tensor before = p.value;
    opt.step();
    CHECK(p.value == before);
    CHECK(opt.steps() == 1);
  }
  SUBCASE("one bias-corrected step with unit gradient") {
    Parameter p{"p", Tensor::scalar(0.0), {}};
    Adam opt({&p}, {.lr = 0.1});
    p.grad = Tensor::scalar(1.0);
    opt.step();
    const double expected = -0.1 * (1.0 / (1.0 + 1e-8));
    CHECK(std::abs(p.value.item() - expected) < 1e-8);  // f32 storage rounding
    CHECK(opt.first_moment(0).shape() == p.value.shape());
  }
  SUBCASE("1-D quadratic converges within 500 steps") {
    Parameter p{"p", Tensor::scalar(0.0), {}};
    Adam opt({&p}, {.lr = 0.05});
    int steps = 0;
    for (; steps < 500; ++steps) {
      opt.zero_grad();
      Tape t;
      auto v = t.param(p);
      auto d = add(v, t.constant(Tensor::scalar(-3.0)));
      t.backward(mul(d, d));
      opt.step();
    }
    CHECK(std::abs(p.value.item() - 3.0) < 1e-3);
    CHECK(opt.steps() == 500);
  }
  SUBCASE("non-finite gradient aborts without touching parameters") {
    Parameter p{"weights", Tensor::matrix(1, 2, {1, 2}), {}};
    Adam opt({&p}, {});
    p.grad = Tensor::matrix(1, 2, {0.0, std::nan("")});
    CHECK_THROWS_AS(opt.step(), NumericalError);
    CHECK(p.value == Tensor::matrix(1, 2, {1, 2}));
    CHECK(opt.steps() == 0);
  }
}

TEST_CASE("parameter set keeps f32 values and unique names") {
  ParameterSet set;
  set.add("w", Tensor::scalar(0.1));
  CHECK(set.get("w").value.item() == static_cast<double>(0.1f));
  CHECK_THROWS_AS(set.add("w", Tensor::scalar(1.0)), InvalidArgument);
  CHECK_THROWS_AS(set.get("missing"), InvalidArgument);
}

TEST_CASE("named streams are reproducible and distinct") {
  CHECK(stream_seed(7, "kmeans") == stream_seed(7, "kmeans"));
  CHECK(stream_seed(7, "kmeans") != stream_seed(7, "init"));
  CHECK(stream_seed(7, "kmeans") != stream_seed(8, "kmeans"));
}
