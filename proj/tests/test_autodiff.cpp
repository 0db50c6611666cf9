#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>

#include "doctest.h"
#include "uvlm/errors.hpp"
#include "uvlm/ops.hpp"
#include "uvlm/rng.hpp"
#include "uvlm/tensor.hpp"

using namespace uvlm;

namespace {

Tensor randn(std::vector<size_t> shape, Rng& rng, bool req = true) {
  Tensor t(std::move(shape), req);
  for (size_t i = 0; i < t.size(); ++i) t.at(i) = rng.normal(0.0, 1.0);
  return t;
}

constexpr double kFdStep = 1e-5;
constexpr double kFdTol = 1e-4;

}  // namespace

TEST_CASE("softmax forward matches frozen values") {
  Tensor x = Tensor::from_values({1, 2}, {1.0, 2.0});
  Tensor s = softmax(x);
  // 1/(1+e) and e/(1+e)
  CHECK(s.at(0, 0) == doctest::Approx(0.2689414213699951).epsilon(1e-12));
  CHECK(s.at(0, 1) == doctest::Approx(0.7310585786300049).epsilon(1e-12));
  CHECK(s.at(0, 0) + s.at(0, 1) == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("cross entropy of uniform logits is log V") {
  Tensor logits = Tensor::from_values({1, 10}, std::vector<double>(10, 0.3));
  Tensor ce = cross_entropy(logits, {7});
  CHECK(ce.item() == doctest::Approx(std::log(10.0)).epsilon(1e-12));
}

TEST_CASE("log_sigmoid matches frozen value and is stable at extremes") {
  Tensor x = Tensor::from_values({3}, {-3.0, 0.0, 50.0});
  Tensor y = log_sigmoid(x);
  CHECK(y.at(0) == doctest::Approx(-3.048587351573742).epsilon(1e-12));
  CHECK(y.at(1) == doctest::Approx(-std::log(2.0)).epsilon(1e-12));
  CHECK(y.at(2) == doctest::Approx(0.0).epsilon(1e-9));
  Tensor z = Tensor::from_values({1}, {-745.0});
  CHECK(std::isfinite(log_sigmoid(z).item()));
}

TEST_CASE("finite differences: matmul / linear / transpose") {
  Rng rng(11);
  Tensor a = randn({3, 4}, rng);
  Tensor b = randn({4, 5}, rng);
  CHECK(finite_diff_check([&] { return sum(matmul(a, b)); }, a, kFdStep) <
        kFdTol);
  CHECK(finite_diff_check([&] { return sum(matmul(a, b)); }, b, kFdStep) <
        kFdTol);

  Tensor x = randn({3, 4}, rng);
  Tensor w = randn({6, 4}, rng);
  Tensor bias = randn({6}, rng);
  auto f = [&] { return sum(gelu(linear(x, w, bias))); };
  CHECK(finite_diff_check(f, x, kFdStep) < kFdTol);
  CHECK(finite_diff_check(f, w, kFdStep) < kFdTol);
  CHECK(finite_diff_check(f, bias, kFdStep) < kFdTol);

  CHECK(finite_diff_check([&] { return sum(transpose(a)); }, a, kFdStep) <
        kFdTol);
}

TEST_CASE("finite differences: elementwise and norm ops") {
  Rng rng(12);
  Tensor a = randn({2, 5}, rng);
  Tensor b = randn({2, 5}, rng);
  CHECK(finite_diff_check([&] { return sum(mul(add(a, b), sub(a, b))); }, a,
                          kFdStep) < kFdTol);
  CHECK(finite_diff_check([&] { return sum(scale(mul(a, b), 0.7)); }, b,
                          kFdStep) < kFdTol);

  Tensor g = randn({5}, rng);
  Tensor be = randn({5}, rng);
  auto ln = [&] { return sum(mul(layer_norm(a, g, be), b)); };
  CHECK(finite_diff_check(ln, a, kFdStep) < kFdTol);
  CHECK(finite_diff_check(ln, g, kFdStep) < kFdTol);
  CHECK(finite_diff_check(ln, be, kFdStep) < kFdTol);

  Tensor bias = randn({5}, rng);
  CHECK(finite_diff_check([&] { return sum(gelu(add_bias(a, bias))); }, bias,
                          kFdStep) < kFdTol);
}

TEST_CASE("finite differences: softmax / cross entropy / log_sigmoid") {
  Rng rng(13);
  Tensor x = randn({3, 6}, rng);
  Tensor w = randn({3, 6}, rng);
  CHECK(finite_diff_check([&] { return sum(mul(softmax(x), w)); }, x,
                          kFdStep) < kFdTol);
  std::vector<int> targets = {1, 4, 0};
  CHECK(finite_diff_check([&] { return cross_entropy(x, targets); }, x,
                          kFdStep) < kFdTol);
  CHECK(finite_diff_check([&] { return sum(log_sigmoid(x)); }, x, kFdStep) <
        kFdTol);
}

TEST_CASE("finite differences: gather / scatter / concat / slice") {
  Rng rng(14);
  Tensor x = randn({4, 6}, rng);
  Tensor y = randn({2, 6}, rng);
  std::vector<size_t> rows = {2, 0};
  CHECK(finite_diff_check([&] { return sum(mul(gather_rows(x, rows), y)); },
                          x, kFdStep) < kFdTol);
  CHECK(finite_diff_check(
            [&] { return sum(scatter_rows(y, {3, 1}, 5)); }, y, kFdStep) <
        kFdTol);
  CHECK(finite_diff_check(
            [&] { return sum(mul(concat_rows(x, x), concat_rows(x, x))); },
            x, kFdStep) < kFdTol);
  CHECK(finite_diff_check(
            [&] { return sum(mul(slice_cols(x, 1, 3), slice_cols(x, 2, 3))); },
            x, kFdStep) < kFdTol);
  CHECK(finite_diff_check(
            [&] {
              return sum(concat_cols({slice_cols(x, 0, 2), slice_cols(x, 3, 2)}));
            },
            x, kFdStep) < kFdTol);
  std::vector<std::pair<size_t, size_t>> coords = {{0, 1}, {3, 5}, {2, 2}};
  CHECK(finite_diff_check([&] { return sum(gather_elems(x, coords)); }, x,
                          kFdStep) < kFdTol);
}

TEST_CASE("finite differences: embedding lookup") {
  Rng rng(15);
  Tensor table = randn({7, 4}, rng);
  std::vector<int> ids = {3, 3, 0, 6};
  Tensor w = randn({4, 4}, rng);
  CHECK(finite_diff_check(
            [&] { return sum(mul(embedding_lookup(table, ids), w)); }, table,
            kFdStep) < kFdTol);
}

TEST_CASE("finite differences pass over 10 seeds on a composite graph") {
  for (uint64_t seed = 0; seed < 10; ++seed) {
    Rng rng(100 + seed);
    Tensor x = randn({3, 8}, rng);
    Tensor w1 = randn({8, 8}, rng);
    Tensor b1 = randn({8}, rng);
    Tensor g = randn({8}, rng);
    Tensor be = randn({8}, rng);
    std::vector<int> targets = {2, 5, 1};
    auto f = [&] {
      Tensor h = gelu(linear(x, w1, b1));
      Tensor n = layer_norm(h, g, be);
      return cross_entropy(matmul(n, transpose(w1)), targets);
    };
    CHECK(finite_diff_check(f, x, kFdStep) < kFdTol);
    CHECK(finite_diff_check(f, w1, kFdStep) < kFdTol);
  }
}

TEST_CASE("cross entropy backward equals the (probs - onehot)/T oracle") {
  Rng rng(16);
  Tensor logits = randn({2, 4}, rng);
  std::vector<int> targets = {3, 1};
  {
    Tape tape;
    Tensor ce = cross_entropy(logits, targets);
    tape.backward(ce);
  }
  Tensor p = softmax(logits);
  for (size_t i = 0; i < 2; ++i)
    for (size_t j = 0; j < 4; ++j) {
      double expect = (p.at(i, j) - (int(j) == targets[i] ? 1.0 : 0.0)) / 2.0;
      CHECK(logits.grad()[i * 4 + j] ==
            doctest::Approx(expect).epsilon(1e-12));
    }
}

TEST_CASE("backward zeroes non-leaf grads and accumulates into leaves") {
  Tensor x = Tensor::from_values({2}, {1.0, 2.0}, true);
  {
    Tape tape;
    Tensor y = scale(x, 3.0);
    Tensor loss = sum(y);
    tape.backward(loss);
    CHECK(x.grad()[0] == 3.0);
    tape.backward(loss);  // repeated backward accumulates into the leaf
    CHECK(x.grad()[0] == 6.0);
    CHECK_FALSE(y.is_leaf());
  }
}

TEST_CASE("ops run without a tape in inference mode") {
  Tensor x = Tensor::from_values({2}, {1.0, 2.0}, true);
  Tensor y = scale(x, 2.0);  // no active tape
  CHECK(y.at(1) == 4.0);
  CHECK(y.is_leaf());
}

TEST_CASE("ste_gate forwards delta unchanged and routes gradient to gates") {
  Tensor delta = Tensor::from_values({2, 2}, {1.0, 2.0, 3.0, 4.0}, true);
  Tensor gates = Tensor::from_values({2}, {0.5, 0.25}, true);
  {
    Tape tape;
    Tensor out = ste_gate(delta, gates);
    CHECK(out.at(0, 0) == 1.0);
    CHECK(out.at(1, 1) == 4.0);
    Tensor loss = sum(out);
    tape.backward(loss);
  }
  // gate grad = sum_j d_out[i,j] * delta[i,j] / gate[i]
  CHECK(gates.grad()[0] == doctest::Approx((1.0 + 2.0) / 0.5).epsilon(1e-9));
  CHECK(gates.grad()[1] == doctest::Approx((3.0 + 4.0) / 0.25).epsilon(1e-9));
  CHECK(delta.grad()[0] == 1.0);
}

TEST_CASE("backward requires a scalar loss") {
  Tensor x = Tensor::from_values({2}, {1.0, 2.0}, true);
  Tape tape;
  Tensor y = scale(x, 2.0);
  CHECK_THROWS_AS(tape.backward(y), ContractError);
}

TEST_CASE("dimension errors are raised on mismatched shapes") {
  Tensor a(std::vector<size_t>{2, 3});
  Tensor b(std::vector<size_t>{4, 2});
  CHECK_THROWS_AS(matmul(a, b), DimensionError);
  CHECK_THROWS_AS(add(a, b), DimensionError);
  CHECK_THROWS_AS(cross_entropy(a, {0}), DimensionError);
  CHECK_THROWS_AS(cross_entropy(a, {0, 9}), IndexError);
}

TEST_CASE("finite_diff_check with sampled coordinates is deterministic") {
  Rng rng(17);
  Tensor a = randn({6, 6}, rng);
  Tensor b = randn({6, 6}, rng);
  auto f = [&] { return sum(mul(matmul(a, b), a)); };
  double r1 = finite_diff_check(f, a, kFdStep, 10, 5);
  double r2 = finite_diff_check(f, a, kFdStep, 10, 5);
  CHECK(r1 == r2);
  CHECK(r1 < kFdTol);
}
