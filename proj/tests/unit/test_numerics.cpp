#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>

#include "doctest.h"
#include "memmamba/numerics.hpp"
#include "memmamba/tensor.hpp"

using namespace memmamba;

namespace {

Tensor random_matrix(std::size_t r, std::size_t c, std::mt19937_64& rng, double s = 1.0) {
  std::uniform_real_distribution<double> u(-s, s);
  Tensor t({r, c});
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = u(rng);
  return t;
}

}  // namespace

TEST_CASE("matmul identity and zero") {
  Tensor m = Tensor::mat({{1, 2}, {3, 4}});
  CHECK(matmul(Tensor::identity(2), m).equals_bits(m));
  Tensor z = Tensor::mat({{0}, {0}});
  Tensor out = matmul(m, z);
  CHECK(out.dim(0) == 2);
  CHECK(out[0] == 0.0);
  CHECK(out[1] == 0.0);
}

TEST_CASE("matmul matches naive triple-loop oracle") {
  std::mt19937_64 rng(7);
  Tensor a = random_matrix(5, 7, rng);
  Tensor b = random_matrix(7, 3, rng);
  Tensor got = matmul(a, b);
  // independent accumulation order
  Tensor want({5, 3});
  for (std::size_t t = 0; t < 7; ++t)
    for (std::size_t i = 0; i < 5; ++i)
      for (std::size_t j = 0; j < 3; ++j) want.at2(i, j) += a.at2(i, t) * b.at2(t, j);
  for (std::size_t i = 0; i < want.size(); ++i)
    CHECK(std::abs(got[i] - want[i]) < 1e-12);
}

TEST_CASE("matmul shape errors") {
  CHECK_THROWS_AS(matmul(Tensor({2, 3}), Tensor({2, 3})), DimensionError);
  CHECK_THROWS_AS(matvec(Tensor({2, 3}), Tensor({2})), DimensionError);
}

TEST_CASE("matmul approximately associative") {
  std::mt19937_64 rng(11);
  for (int rep = 0; rep < 20; ++rep) {
    Tensor a = random_matrix(4, 5, rng);
    Tensor b = random_matrix(5, 6, rng);
    Tensor c = random_matrix(6, 3, rng);
    Tensor l = matmul(matmul(a, b), c);
    Tensor r = matmul(a, matmul(b, c));
    for (std::size_t i = 0; i < l.size(); ++i)
      CHECK(std::abs(l[i] - r[i]) <= 1e-9 * (1.0 + std::abs(r[i])));
  }
}

TEST_CASE("softmax of equal entries is uniform") {
  for (double c : {-3.0, 0.0, 42.0}) {
    Tensor s = softmax(Tensor::vec({c, c, c, c}));
    for (std::size_t i = 0; i < 4; ++i) CHECK(s[i] == doctest::Approx(0.25).epsilon(1e-14));
  }
}

TEST_CASE("softmax closed form and stability") {
  Tensor s = softmax(Tensor::vec({0.0, std::log(3.0)}), 1.0);
  CHECK(std::abs(s[0] - 0.25) < 1e-12);
  CHECK(std::abs(s[1] - 0.75) < 1e-12);

  Tensor big = softmax(Tensor::vec({1e6, 0.0}));
  CHECK(big.all_finite());
  CHECK(big[0] == doctest::Approx(1.0));

  CHECK_THROWS_AS(softmax(Tensor::vec({1.0}), 0.0), ParameterError);
}

TEST_CASE("softmax sums to one and is shift invariant") {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(-5, 5);
  for (int rep = 0; rep < 50; ++rep) {
    Tensor v({9});
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = u(rng);
    Tensor s = softmax(v, 0.5 + std::abs(u(rng)));
    double sum = 0.0;
    for (std::size_t i = 0; i < s.size(); ++i) sum += s[i];
    CHECK(std::abs(sum - 1.0) <= 1e-12);

    Tensor shifted(v.shape());
    for (std::size_t i = 0; i < v.size(); ++i) shifted[i] = v[i] + 13.5;
    Tensor s2 = softmax(shifted, 1.0);
    Tensor s1 = softmax(v, 1.0);
    for (std::size_t i = 0; i < s.size(); ++i) CHECK(std::abs(s1[i] - s2[i]) < 1e-12);
  }
}

TEST_CASE("cosine similarity basics") {
  Tensor v = Tensor::vec({0.3, -1.2, 4.0});
  CHECK(cosine_similarity(v, v) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(cosine_similarity(Tensor::vec({1, 0}), Tensor::vec({0, 1})) == 0.0);
  CHECK(cosine_similarity(Tensor::vec({1, 1}), Tensor::vec({1, 0})) ==
        doctest::Approx(1.0 / std::sqrt(2.0)).epsilon(1e-12));
  CHECK(cosine_similarity(Tensor::vec({0, 0}), Tensor::vec({1, 2})) == 0.0);
  CHECK_THROWS_AS(cosine_similarity(Tensor::vec({1}), Tensor::vec({1, 2})),
                  DimensionError);
}

TEST_CASE("ridge recovers identity and planted maps") {
  std::mt19937_64 rng(19);
  Tensor x = random_matrix(30, 4, rng);
  RidgeSolution eye = ridge_fit(x, x, 1e-12);
  for (std::size_t i = 0; i < 4; ++i)
    for (std::size_t j = 0; j < 4; ++j)
      CHECK(eye.w.at2(i, j) == doctest::Approx(i == j ? 1.0 : 0.0).epsilon(1e-6));
  CHECK(eye.residual_fro < 1e-6);

  Tensor wstar = random_matrix(4, 3, rng);
  Tensor x2 = random_matrix(50, 4, rng);
  Tensor y = matmul(x2, wstar);
  RidgeSolution sol = ridge_fit(x2, y, 1e-4);
  for (std::size_t i = 0; i < wstar.size(); ++i)
    CHECK(std::abs(sol.w[i] - wstar[i]) < 1e-3);
}

TEST_CASE("ridge normal equations hold to 1e-8 relative") {
  std::mt19937_64 rng(23);
  Tensor x = random_matrix(40, 6, rng);
  Tensor y = random_matrix(40, 2, rng);
  const double lambda = 1e-3;
  RidgeSolution sol = ridge_fit(x, y, lambda);
  // (XᵀX + λI) W - XᵀY should vanish
  Tensor xtx({6, 6});
  for (std::size_t i = 0; i < 6; ++i)
    for (std::size_t j = 0; j < 6; ++j) {
      double acc = 0;
      for (std::size_t r = 0; r < 40; ++r) acc += x.at2(r, i) * x.at2(r, j);
      xtx.at2(i, j) = acc + (i == j ? lambda : 0.0);
    }
  Tensor xty({6, 2});
  for (std::size_t i = 0; i < 6; ++i)
    for (std::size_t j = 0; j < 2; ++j) {
      double acc = 0;
      for (std::size_t r = 0; r < 40; ++r) acc += x.at2(r, i) * y.at2(r, j);
      xty.at2(i, j) = acc;
    }
  Tensor lhs = matmul(xtx, sol.w);
  double num = 0, den = 0;
  for (std::size_t i = 0; i < lhs.size(); ++i) {
    num += (lhs[i] - xty[i]) * (lhs[i] - xty[i]);
    den += xty[i] * xty[i];
  }
  CHECK(std::sqrt(num) <= 1e-8 * std::sqrt(den));
}

TEST_CASE("ridge shrinkage is monotone in lambda") {
  std::mt19937_64 rng(29);
  Tensor x = random_matrix(25, 5, rng);
  Tensor y = random_matrix(25, 2, rng);
  double prev = 1e300;
  for (double lambda : {1e-6, 1e-3, 1e-1, 1.0, 10.0, 1000.0}) {
    const double n = frobenius_norm(ridge_fit(x, y, lambda).w);
    CHECK(n <= prev + 1e-12);
    prev = n;
  }
  CHECK(prev < 1e-2);  // large lambda drives |W| toward zero
}

TEST_CASE("ridge singular system without regularisation") {
  Tensor x({4, 3});  // rank-deficient: one nonzero column
  for (std::size_t r = 0; r < 4; ++r) x.at2(r, 0) = 1.0;
  Tensor y({4, 1});
  CHECK_THROWS_AS(ridge_fit(x, y, 0.0), SingularityError);
}

TEST_CASE("block max pool by inspection") {
  Tensor h = Tensor::mat({{1}, {5}, {2}, {3}});
  Tensor s = block_max_pool(h, 2);
  CHECK(s.dim(0) == 2);
  CHECK(s[0] == 5.0);
  CHECK(s[1] == 3.0);

  Tensor whole = block_max_pool(h, 4);
  CHECK(whole.dim(0) == 1);
  CHECK(whole[0] == 5.0);

  CHECK_THROWS_AS(block_max_pool(h, 0), ParameterError);
}

TEST_CASE("block max pool dominates each row of its block") {
  std::mt19937_64 rng(31);
  for (int rep = 0; rep < 30; ++rep) {
    const std::size_t w = 1 + rng() % 5, m = 1 + rng() % 6, d = 1 + rng() % 4;
    Tensor h = random_matrix(w * m, d, rng, 3.0);
    Tensor s = block_max_pool(h, w);
    for (std::size_t r = 0; r < h.dim(0); ++r)
      for (std::size_t k = 0; k < d; ++k) CHECK(s.at2(r / w, k) >= h.at2(r, k));
  }
}

TEST_CASE("pool of per-block-constant matrix reconstructs exactly") {
  Tensor h({6, 2});
  for (std::size_t r = 0; r < 6; ++r)
    for (std::size_t k = 0; k < 2; ++k) h.at2(r, k) = static_cast<double>(r / 3);
  Tensor s = block_max_pool(h, 3);
  Tensor back = reconstruct_broadcast(s, 3);
  CHECK(back.equals_bits(h));
}

TEST_CASE("reconstruct broadcast by inspection") {
  Tensor s = Tensor::mat({{5}, {3}});
  Tensor h = reconstruct_broadcast(s, 2);
  CHECK(h.dim(0) == 4);
  CHECK(h[0] == 5.0);
  CHECK(h[1] == 5.0);
  CHECK(h[2] == 3.0);
  CHECK(h[3] == 3.0);
}

TEST_CASE("pooling error decomposes over blocks") {
  std::mt19937_64 rng(37);
  Tensor h = random_matrix(12, 3, rng, 2.0);
  const std::size_t w = 4;
  Tensor s = block_max_pool(h, w);
  Tensor hr = reconstruct_broadcast(s, w);
  double total = 0;
  for (std::size_t i = 0; i < h.size(); ++i) total += (h[i] - hr[i]) * (h[i] - hr[i]);
  double by_block = 0;
  for (std::size_t b = 0; b < 3; ++b)
    for (std::size_t r = b * w; r < (b + 1) * w; ++r)
      for (std::size_t k = 0; k < 3; ++k) {
        const double d = h.at2(r, k) - s.at2(b, k);
        by_block += d * d;
      }
  CHECK(std::abs(total - by_block) < 1e-12);
}

TEST_CASE("partial final block pools as-is") {
  Tensor h = Tensor::mat({{1}, {5}, {2}});
  Tensor s = block_max_pool(h, 2);
  CHECK(s.dim(0) == 2);
  CHECK(s[0] == 5.0);
  CHECK(s[1] == 2.0);
  Tensor back = reconstruct_broadcast(s, 2, 3);
  CHECK(back.dim(0) == 3);
  CHECK(back[2] == 2.0);
}

TEST_CASE("operator norm matches known singular values") {
  Tensor diag = Tensor::mat({{3, 0}, {0, 1}});
  CHECK(operator_norm(diag) == doctest::Approx(3.0).epsilon(1e-9));
  // rank-1: norm is |u||v|
  Tensor r1 = Tensor::mat({{2, 4}, {1, 2}});
  CHECK(operator_norm(r1) == doctest::Approx(5.0).epsilon(1e-9));
  CHECK(operator_norm(Tensor({3, 3})) == 0.0);
}

TEST_CASE("tensor container round trip and corruption") {
  auto dir = std::filesystem::temp_directory_path() / "mmt_test";
  std::filesystem::create_directories(dir);
  std::mt19937_64 rng(41);
  Tensor t = random_matrix(5, 7, rng);
  save_tensor(dir / "t.mmt", t);
  Tensor back = load_tensor(dir / "t.mmt");
  CHECK(back.equals_bits(t));

  std::ofstream bad(dir / "bad.mmt", std::ios::binary);
  bad << "NOPE";
  bad.close();
  CHECK_THROWS_AS(load_tensor(dir / "bad.mmt"), InputError);
  CHECK_THROWS_AS(load_tensor(dir / "missing.mmt"), InputError);
}

TEST_CASE("tensor invariants") {
  CHECK_THROWS_AS(Tensor({2, 3}, {1.0, 2.0}), DimensionError);
  Tensor t = Tensor::vec({1.0, 2.0});
  CHECK(t.all_finite());
  t[1] = std::nan("");
  CHECK(!t.all_finite());
}
