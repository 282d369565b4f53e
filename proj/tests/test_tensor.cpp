#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <vector>

#include "latl/gradcheck.hpp"
#include "latl/optim.hpp"
#include "latl/rng.hpp"
#include "latl/tensor.hpp"

using latl::GradGraph;
using latl::Mask;
using latl::Rng;
using latl::Tensor;
using TD = Tensor<double>;

namespace {

TD random_tensor(latl::Shape shape, Rng& rng, bool requires_grad = true) {
  std::vector<double> vals(latl::shape_numel(shape));
  for (auto& v : vals) v = rng.uniform(-1.0, 1.0);
  return TD::from(std::move(shape), std::move(vals), requires_grad);
}

// Reduce an arbitrary tensor to a scalar through a fixed random weighting so
// every output coordinate influences the loss.
TD weighted_sum(const TD& x, const std::vector<double>& w) {
  TD weights = TD::from(x.shape(), w);
  return latl::sum(latl::mul(x, weights));
}

std::vector<double> fixed_weights(std::size_t n, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<double> w(n);
  for (auto& v : w) v = rng.uniform(0.5, 1.5);
  return w;
}

}  // namespace

TEST_CASE("matmul basics") {
  TD eye = TD::from({2, 2}, {1, 0, 0, 1});
  TD b = TD::from({2, 3}, {1, 2, 3, 4, 5, 6});
  auto c = latl::matmul(eye, b);
  REQUIRE(c.values() == b.values());

  TD a = TD::from({2, 2}, {1, 2, 3, 4});
  TD ones = TD::from({2, 1}, {1, 1});
  auto r = latl::matmul(a, ones);
  REQUIRE(r.shape() == latl::Shape{2, 1});
  CHECK(r.values()[0] == 3.0);
  CHECK(r.values()[1] == 7.0);

  TD bad = TD::from({2, 3}, std::vector<double>(6, 0.0));
  CHECK_THROWS_WITH(latl::matmul(bad, bad), Catch::Matchers::ContainsSubstring("[2,3]"));
}

TEST_CASE("elementwise basics") {
  TD zero = TD::scalar(0.0);
  CHECK(latl::tanh_op(zero).value() == 0.0);
  CHECK(latl::sigmoid(zero).value() == 0.5);

  TD x = TD::from({3}, {1.0, -2.0, 0.5});
  auto same = latl::add(x, TD::zeros({3}));
  REQUIRE(same.values() == x.values());

  auto prod = latl::mul(TD::from({2}, {2, 3}), TD::from({2}, {4, 5}));
  CHECK(prod.values() == std::vector<double>{8, 15});

  CHECK_THROWS_AS(latl::add(TD::zeros({2}), TD::zeros({3})), latl::Error);
}

TEST_CASE("bias broadcast over last axis") {
  TD m = TD::from({2, 3}, {0, 0, 0, 1, 1, 1});
  TD b = TD::from({3}, {1, 2, 3});
  auto y = latl::add(m, b);
  CHECK(y.values() == std::vector<double>{1, 2, 3, 2, 3, 4});
}

TEST_CASE("row_softmax values") {
  auto uniform = latl::row_softmax(TD::zeros({1, 4}));
  for (double v : uniform.values()) CHECK(v == Catch::Approx(0.25));

  auto big = latl::row_softmax(TD::from({2}, {1000.0, 1000.0}));
  CHECK(big.values()[0] == Catch::Approx(0.5));
  CHECK(big.values()[1] == Catch::Approx(0.5));

  Mask mask = {1, 1, 0};
  auto masked = latl::row_softmax(TD::zeros({3}), mask);
  CHECK(masked.values()[0] == Catch::Approx(0.5));
  CHECK(masked.values()[1] == Catch::Approx(0.5));
  CHECK(masked.values()[2] == 0.0);

  Mask none = {0, 0, 0};
  CHECK_THROWS_WITH(latl::row_softmax(TD::zeros({3}), none), Catch::Matchers::ContainsSubstring("fully masked"));
}

TEST_CASE("row_softmax properties") {
  Rng rng(7);
  for (int trial = 0; trial < 20; ++trial) {
    const int rows = 1 + static_cast<int>(rng.next_index(4));
    const int cols = 2 + static_cast<int>(rng.next_index(5));
    TD x = random_tensor({rows, cols}, rng, false);
    auto y = latl::row_softmax(x);
    for (int r = 0; r < rows; ++r) {
      double s = 0;
      for (int c = 0; c < cols; ++c) {
        CHECK(y.values()[r * cols + c] >= 0.0);
        s += y.values()[r * cols + c];
      }
      CHECK(std::abs(s - 1.0) < 1e-6);
    }
    // invariant under adding a constant to a row
    std::vector<double> shifted = x.values();
    for (int c = 0; c < cols; ++c) shifted[c] += 17.5;
    auto y2 = latl::row_softmax(TD::from({rows, cols}, shifted));
    for (int c = 0; c < cols; ++c) CHECK(y2.values()[c] == Catch::Approx(y.values()[c]).margin(1e-12));
  }
}

TEST_CASE("embedding_lookup") {
  TD table = TD::from({3, 2}, {10, 11, 20, 21, 30, 31}, true);
  auto out = latl::embedding_lookup(table, {0, 0});
  CHECK(out.values() == std::vector<double>{10, 11, 10, 11});

  {
    GradGraph<double> graph;
    auto gathered = latl::embedding_lookup(table, {1, 1});
    auto loss = latl::sum(gathered);
    graph.backward(loss);
  }
  CHECK(table.grad() == std::vector<double>{0, 0, 2, 2, 0, 0});

  CHECK_THROWS_WITH(latl::embedding_lookup(table, {3}), Catch::Matchers::ContainsSubstring("out of range"));
}

TEST_CASE("concat and slice") {
  TD a = TD::from({2, 2}, {1, 2, 3, 4});
  TD b = TD::from({2, 1}, {5, 6});
  auto cat = latl::concat_last_axis(a, b);
  REQUIRE(cat.shape() == latl::Shape{2, 3});
  CHECK(cat.values() == std::vector<double>{1, 2, 5, 3, 4, 6});

  TD m = TD::from({3, 2}, {1, 2, 3, 4, 5, 6});
  auto top = latl::slice_rows(m, 0, 1);
  auto rest = latl::slice_rows(m, 1, 2);
  // complementary slices restack to the original
  auto glued = latl::stack_rows<double>({latl::take_row(top, 0), latl::take_row(rest, 0), latl::take_row(rest, 1)});
  CHECK(glued.values() == m.values());

  TD r3 = TD::from({1, 2, 2}, {1, 2, 3, 4});
  CHECK_THROWS_WITH(latl::concat_last_axis(a, r3), Catch::Matchers::ContainsSubstring("rank"));
}

TEST_CASE("masked_cross_entropy values") {
  Mask mask = {1, 1};
  auto uniform = latl::masked_cross_entropy(TD::zeros({2, 4}), {1, 2}, mask);
  CHECK(uniform.value() == Catch::Approx(std::log(4.0)));

  TD peaked = TD::from({1, 3}, {100.0, 0.0, 0.0});
  auto tiny = latl::masked_cross_entropy(peaked, {0}, Mask{1});
  CHECK(tiny.value() == Catch::Approx(0.0).margin(1e-12));

  CHECK_THROWS_WITH(latl::masked_cross_entropy(TD::zeros({2, 4}), {0, 1}, Mask{0, 0}),
                    Catch::Matchers::ContainsSubstring("all positions masked"));
  CHECK_THROWS_AS(latl::masked_cross_entropy(TD::zeros({2, 4}), {0, 4}, mask), latl::Error);
}

TEST_CASE("masked_cross_entropy gradient vs finite differences") {
  Rng rng(11);
  std::vector<Tensor<double>> params = {random_tensor({4, 5}, rng)};
  std::vector<int> targets = {1, 4, 0, 2};
  Mask mask = {1, 0, 1, 1};
  auto f = [&]() { return latl::masked_cross_entropy(params[0], targets, mask); };
  CHECK(latl::finite_difference_check(f, params, 1e-6) < 1e-5);
}

TEST_CASE("backward basics") {
  TD x = TD::from({3}, {1, 2, 3}, true);
  {
    GradGraph<double> graph;
    auto loss = latl::sum(x);
    graph.backward(loss);
  }
  CHECK(x.grad() == std::vector<double>{1, 1, 1});

  TD y = TD::from({2}, {1, 2}, true);
  {
    GradGraph<double> graph;
    auto loss = latl::sum(latl::mul(y, y));
    graph.backward(loss);
  }
  CHECK(y.grad() == std::vector<double>{2, 4});

  TD z = TD::from({2}, {1, 1}, true);
  GradGraph<double> graph;
  auto loss = latl::sum(z);
  CHECK_THROWS_WITH(graph.backward(z), Catch::Matchers::ContainsSubstring("scalar"));
  graph.backward(loss);
  CHECK(z.grad() == std::vector<double>{1, 1});
  graph.backward(loss);
  CHECK(z.grad() == std::vector<double>{2, 2});
}

TEST_CASE("tensor used twice sums both contributions") {
  // f(x) = x*x + x  =>  df/dx = 2x + 1
  TD x = TD::from({3}, {0.5, -1.0, 2.0}, true);
  {
    GradGraph<double> graph;
    auto loss = latl::sum(latl::add(latl::mul(x, x), x));
    graph.backward(loss);
  }
  CHECK(x.grad()[0] == Catch::Approx(2.0));
  CHECK(x.grad()[1] == Catch::Approx(-1.0));
  CHECK(x.grad()[2] == Catch::Approx(5.0));
}

TEST_CASE("optimizer steps") {
  std::vector<TD> params = {TD::from({1}, {1.0}, true)};
  params[0].grad_mut()[0] = 0.5;
  latl::sgd_step(params, 0.1);
  CHECK(params[0].value() == Catch::Approx(0.95));

  std::vector<TD> p2 = {TD::from({1}, {1.0}, true)};
  p2[0].grad_mut()[0] = 0.5;
  latl::AdamState<double> adam;
  latl::adam_step(p2, adam, 0.1);
  // first step with bias correction collapses to -lr * sign(g) as eps -> 0
  CHECK(p2[0].value() == Catch::Approx(0.9).margin(1e-6));

  std::vector<TD> p3 = {TD::from({2}, {3.0, -4.0}, true)};
  p3[0].zero_grad();
  latl::AdamState<double> adam2;
  latl::adam_step(p3, adam2, 0.1);
  CHECK(p3[0].values() == std::vector<double>{3.0, -4.0});
}

TEST_CASE("clip_grad_norm") {
  std::vector<TD> params = {TD::zeros({2}, true)};
  params[0].grad_mut() = {6.0, 8.0};  // norm 10
  CHECK(latl::clip_grad_norm(params, 5.0) == Catch::Approx(0.5));
  CHECK(params[0].grad()[0] == Catch::Approx(3.0));
  CHECK(params[0].grad()[1] == Catch::Approx(4.0));

  params[0].grad_mut() = {1.0, 0.0};
  CHECK(latl::clip_grad_norm(params, 5.0) == 1.0);

  params[0].grad_mut() = {3.0, 4.0};
  latl::clip_grad_norm(params, 1.0);
  CHECK(params[0].grad()[0] == Catch::Approx(0.6));
  CHECK(params[0].grad()[1] == Catch::Approx(0.8));
}

TEST_CASE("finite_difference_check on quadratic") {
  Rng rng(3);
  std::vector<TD> params = {random_tensor({4}, rng)};
  auto f = [&]() { return latl::sum(latl::mul(params[0], params[0])); };
  CHECK(latl::finite_difference_check(f, params, 1e-5) < 1e-9);
  CHECK_THROWS_WITH(latl::finite_difference_check(f, params, 0.0), Catch::Matchers::ContainsSubstring("step"));
}

TEST_CASE("every op passes the gradient oracle on random shapes") {
  Rng rng(42);
  for (int trial = 0; trial < 5; ++trial) {
    const int m = 2 + static_cast<int>(rng.next_index(3));
    const int k = 2 + static_cast<int>(rng.next_index(3));
    const int n = 2 + static_cast<int>(rng.next_index(3));

    SECTION("matmul trial " + std::to_string(trial)) {
      std::vector<TD> params = {random_tensor({m, k}, rng), random_tensor({k, n}, rng)};
      auto w = fixed_weights(static_cast<std::size_t>(m) * n, 1);
      auto f = [&]() { return weighted_sum(latl::matmul(params[0], params[1]), w); };
      CHECK(latl::finite_difference_check(f, params, 1e-6) < 1e-5);
    }

    SECTION("matvec vecmat trial " + std::to_string(trial)) {
      std::vector<TD> params = {random_tensor({m, k}, rng), random_tensor({k}, rng), random_tensor({m}, rng)};
      auto w1 = fixed_weights(static_cast<std::size_t>(m), 2);
      auto f1 = [&]() { return weighted_sum(latl::matvec(params[0], params[1]), w1); };
      CHECK(latl::finite_difference_check(f1, params, 1e-6) < 1e-5);
      auto w2 = fixed_weights(static_cast<std::size_t>(k), 3);
      auto f2 = [&]() { return weighted_sum(latl::vecmat(params[2], params[0]), w2); };
      CHECK(latl::finite_difference_check(f2, params, 1e-6) < 1e-5);
    }

    SECTION("elementwise and activations trial " + std::to_string(trial)) {
      std::vector<TD> params = {random_tensor({m, n}, rng), random_tensor({m, n}, rng), random_tensor({n}, rng)};
      auto w = fixed_weights(static_cast<std::size_t>(m) * n, 4);
      auto f = [&]() {
        auto t = latl::tanh_op(latl::add(params[0], params[2]));
        auto s = latl::sigmoid(latl::sub(params[1], params[2]));
        return weighted_sum(latl::mul(t, s), w);
      };
      CHECK(latl::finite_difference_check(f, params, 1e-6) < 1e-5);
    }

    SECTION("softmax gather stack trial " + std::to_string(trial)) {
      std::vector<TD> params = {random_tensor({m, n}, rng), random_tensor({3, n}, rng)};
      auto w = fixed_weights(static_cast<std::size_t>(m) * n, 5);
      auto wcat = fixed_weights(static_cast<std::size_t>(2) * n, 6);
      auto f = [&]() {
        auto sm = latl::row_softmax(params[0]);
        auto looked = latl::embedding_lookup(params[1], {2, 0});
        auto stacked = latl::stack_rows<double>({latl::take_row(looked, 0), latl::take_row(looked, 1)});
        return latl::add(weighted_sum(sm, w), weighted_sum(stacked, wcat));
      };
      CHECK(latl::finite_difference_check(f, params, 1e-6) < 1e-5);
    }
  }
}

TEST_CASE("rng streams are deterministic") {
  Rng a(123), b(123);
  for (int i = 0; i < 100; ++i) {
    REQUIRE(a.next_double() == b.next_double());
  }
  Rng c(123);
  std::vector<int> v1 = {1, 2, 3, 4, 5, 6, 7};
  std::vector<int> v2 = v1;
  Rng d(123);
  c.shuffle(v1);
  d.shuffle(v2);
  REQUIRE(v1 == v2);
}
