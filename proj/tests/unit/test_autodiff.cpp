#include <cmath>
#include <functional>
#include <random>

#include "doctest.h"
#include "memmamba/autodiff.hpp"
#include "memmamba/numerics.hpp"

using namespace memmamba;
using ad::Graph;
using ad::Var;

namespace {

// Central finite differences over every entry of every leaf.
void check_gradients(const std::vector<Tensor>& leaves,
                     const std::function<double(std::span<const Tensor>)>& f,
                     const std::function<std::vector<Tensor>()>& analytic,
                     double tol = 1e-7) {
  std::vector<Tensor> work = leaves;
  const std::vector<Tensor> grads = analytic();
  REQUIRE(grads.size() == leaves.size());
  const double h = 1e-6;
  for (std::size_t li = 0; li < work.size(); ++li) {
    for (std::size_t i = 0; i < work[li].size(); ++i) {
      const double keep = work[li][i];
      work[li][i] = keep + h;
      const double fp = f(work);
      work[li][i] = keep - h;
      const double fm = f(work);
      work[li][i] = keep;
      const double fd = (fp - fm) / (2 * h);
      CHECK(std::abs(fd - grads[li][i]) <=
            tol * std::max({1.0, std::abs(fd), std::abs(grads[li][i])}));
    }
  }
}

Tensor rnd(std::mt19937_64& rng, std::vector<std::size_t> shape, double s = 1.0) {
  std::uniform_real_distribution<double> u(-s, s);
  Tensor t(std::move(shape));
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = u(rng);
  return t;
}

}  // namespace

TEST_CASE("scalar chain gradient matches hand derivative") {
  // loss = sigmoid(w*x + b) with scalar tensors
  Graph g;
  Var w = g.leaf(Tensor::vec({0.7}), true);
  Var x = g.leaf(Tensor::vec({-1.3}), false);
  Var b = g.leaf(Tensor::vec({0.2}), true);
  Var loss = g.sigmoid(g.add(g.mul(w, x), b));
  g.backward(loss);
  const double z = 0.7 * -1.3 + 0.2;
  const double s = 1.0 / (1.0 + std::exp(-z));
  CHECK(g.grad(w)[0] == doctest::Approx(s * (1 - s) * -1.3).epsilon(1e-10));
  CHECK(g.grad(b)[0] == doctest::Approx(s * (1 - s)).epsilon(1e-10));
}

TEST_CASE("matvec + dot gradients vs finite differences") {
  std::mt19937_64 rng(5);
  std::vector<Tensor> leaves{rnd(rng, {3, 4}), rnd(rng, {4}), rnd(rng, {3})};
  auto f = [](std::span<const Tensor> v) {
    Graph g;
    Var m = g.leaf(v[0], true), x = g.leaf(v[1], true), y = g.leaf(v[2], true);
    return g.value(g.dot(g.matvec(m, x), y))[0];
  };
  auto analytic = [&]() {
    Graph g;
    Var m = g.leaf(leaves[0], true), x = g.leaf(leaves[1], true),
        y = g.leaf(leaves[2], true);
    g.backward(g.dot(g.matvec(m, x), y));
    return std::vector<Tensor>{g.grad(m), g.grad(x), g.grad(y)};
  };
  check_gradients(leaves, f, analytic);
}

TEST_CASE("attend gradients vs finite differences") {
  std::mt19937_64 rng(7);
  // leaves: q, k0, k1, k2, v0, v1, v2
  std::vector<Tensor> leaves;
  leaves.push_back(rnd(rng, {4}));
  for (int i = 0; i < 3; ++i) leaves.push_back(rnd(rng, {4}));
  for (int i = 0; i < 3; ++i) leaves.push_back(rnd(rng, {5}));
  Tensor probe = rnd(rng, {5});

  auto build = [&](std::span<const Tensor> v, Graph& g) {
    Var q = g.leaf(v[0], true);
    std::vector<Var> keys, vals;
    for (int i = 0; i < 3; ++i) keys.push_back(g.leaf(v[1 + i], true));
    for (int i = 0; i < 3; ++i) vals.push_back(g.leaf(v[4 + i], true));
    Var out = g.attend(q, keys, vals, 0.5, nullptr);
    return g.dot(out, g.leaf(probe, false));
  };
  auto f = [&](std::span<const Tensor> v) {
    Graph g;
    return g.value(build(v, g))[0];
  };
  auto analytic = [&]() {
    Graph g;
    Var root = build(leaves, g);
    g.backward(root);
    std::vector<Tensor> gs;
    for (std::size_t i = 0; i < 7; ++i) gs.push_back(g.grad(Var{static_cast<int>(i)}));
    return gs;
  };
  check_gradients(leaves, f, analytic, 1e-6);
}

TEST_CASE("attention weights sum to one") {
  std::mt19937_64 rng(11);
  Graph g;
  Var q = g.leaf(rnd(rng, {4}), false);
  std::vector<Var> keys, vals;
  for (int i = 0; i < 5; ++i) {
    keys.push_back(g.leaf(rnd(rng, {4}), false));
    vals.push_back(g.leaf(rnd(rng, {4}), false));
  }
  double wsum = 0;
  g.attend(q, keys, vals, 1.0, &wsum);
  CHECK(std::abs(wsum - 1.0) <= 1e-12);
}

TEST_CASE("single-key attention returns the value exactly") {
  Graph g;
  Var q = g.leaf(Tensor::vec({1.0, -2.0}), false);
  Tensor value = Tensor::vec({3.5, 0.25, -1.0});
  std::vector<Var> keys{g.leaf(Tensor::vec({0.3, 0.4}), false)};
  std::vector<Var> vals{g.leaf(value, false)};
  Var out = g.attend(q, keys, vals, 1.0, nullptr);
  CHECK(g.value(out).equals_bits(value));
}

TEST_CASE("nll gradient is softmax minus one-hot") {
  std::mt19937_64 rng(13);
  Tensor logits = rnd(rng, {6}, 2.0);
  Graph g;
  Var l = g.leaf(logits, true);
  Var loss = g.nll(l, 2);
  g.backward(loss);
  Tensor p = softmax(logits, 1.0);
  for (std::size_t i = 0; i < 6; ++i) {
    const double want = p[i] - (i == 2 ? 1.0 : 0.0);
    CHECK(g.grad(l)[i] == doctest::Approx(want).epsilon(1e-12));
  }
  CHECK_THROWS_AS(g.nll(l, 6), InputError);
}

TEST_CASE("group and list reductions route gradients correctly") {
  std::mt19937_64 rng(17);
  std::vector<Tensor> leaves{rnd(rng, {8})};
  Tensor probe = rnd(rng, {4});
  auto f = [&](std::span<const Tensor> v) {
    Graph g;
    return g.value(g.dot(g.group_max(g.leaf(v[0], true), 4), g.leaf(probe, false)))[0];
  };
  auto analytic = [&]() {
    Graph g;
    Var x = g.leaf(leaves[0], true);
    g.backward(g.dot(g.group_max(x, 4), g.leaf(probe, false)));
    return std::vector<Tensor>{g.grad(x)};
  };
  check_gradients(leaves, f, analytic);

  auto fmean = [&](std::span<const Tensor> v) {
    Graph g;
    return g.value(g.dot(g.group_mean(g.leaf(v[0], true), 4), g.leaf(probe, false)))[0];
  };
  auto amean = [&]() {
    Graph g;
    Var x = g.leaf(leaves[0], true);
    g.backward(g.dot(g.group_mean(x, 4), g.leaf(probe, false)));
    return std::vector<Tensor>{g.grad(x)};
  };
  check_gradients(leaves, fmean, amean);
}

TEST_CASE("max_list and mean_list gradients") {
  std::mt19937_64 rng(19);
  std::vector<Tensor> leaves{rnd(rng, {5}), rnd(rng, {5}), rnd(rng, {5})};
  Tensor probe = rnd(rng, {5});
  auto f = [&](std::span<const Tensor> v) {
    Graph g;
    std::vector<Var> xs{g.leaf(v[0], true), g.leaf(v[1], true), g.leaf(v[2], true)};
    return g.value(g.dot(g.max_list(xs, nullptr), g.leaf(probe, false)))[0];
  };
  auto analytic = [&]() {
    Graph g;
    std::vector<Var> xs{g.leaf(leaves[0], true), g.leaf(leaves[1], true),
                        g.leaf(leaves[2], true)};
    g.backward(g.dot(g.max_list(xs, nullptr), g.leaf(probe, false)));
    return std::vector<Tensor>{g.grad(xs[0]), g.grad(xs[1]), g.grad(xs[2])};
  };
  check_gradients(leaves, f, analytic);
}

TEST_CASE("stable_decay gradient") {
  std::mt19937_64 rng(23);
  std::vector<Tensor> leaves{rnd(rng, {6}, 3.0)};
  Tensor probe = rnd(rng, {6});
  auto f = [&](std::span<const Tensor> v) {
    Graph g;
    return g.value(g.dot(g.stable_decay(g.leaf(v[0], true)), g.leaf(probe, false)))[0];
  };
  auto analytic = [&]() {
    Graph g;
    Var x = g.leaf(leaves[0], true);
    g.backward(g.dot(g.stable_decay(x), g.leaf(probe, false)));
    return std::vector<Tensor>{g.grad(x)};
  };
  check_gradients(leaves, f, analytic);
}

TEST_CASE("mul_scalar and mean_scalars gradients") {
  std::mt19937_64 rng(29);
  std::vector<Tensor> leaves{rnd(rng, {4}), rnd(rng, {1})};
  Tensor probe = rnd(rng, {4});
  auto f = [&](std::span<const Tensor> v) {
    Graph g;
    Var a = g.mul_scalar(g.leaf(v[0], true), g.leaf(v[1], true));
    std::vector<Var> parts{g.dot(a, g.leaf(probe, false)),
                           g.dot(g.leaf(v[0], true), g.leaf(v[0], true))};
    return g.value(g.mean_scalars(parts))[0];
  };
  auto analytic = [&]() {
    Graph g;
    Var x = g.leaf(leaves[0], true), s = g.leaf(leaves[1], true);
    Var a = g.mul_scalar(x, s);
    std::vector<Var> parts{g.dot(a, g.leaf(probe, false)), g.dot(x, x)};
    g.backward(g.mean_scalars(parts));
    return std::vector<Tensor>{g.grad(x), g.grad(s)};
  };
  check_gradients(leaves, f, analytic);
}

TEST_CASE("shared subgraph accumulates gradient") {
  // loss = x·x + x·x reuses the same leaf twice through separate dots
  Graph g;
  Var x = g.leaf(Tensor::vec({2.0, -1.0}), true);
  Var d1 = g.dot(x, x);
  std::vector<Var> parts{d1, d1};
  g.backward(g.mean_scalars(parts));
  CHECK(g.grad(x)[0] == doctest::Approx(4.0));
  CHECK(g.grad(x)[1] == doctest::Approx(-2.0));
}

TEST_CASE("backward requires scalar root") {
  Graph g;
  Var x = g.leaf(Tensor::vec({1.0, 2.0}), true);
  CHECK_THROWS_AS(g.backward(x), DimensionError);
}
