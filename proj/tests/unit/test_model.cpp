#include <cmath>
#include <random>

#include "doctest.h"
#include "memmamba/model.hpp"
#include "memmamba/numerics.hpp"
#include "memmamba/ssm.hpp"

using namespace memmamba;
using namespace memmamba::model;

namespace {

Tensor rnd(std::mt19937_64& rng, std::vector<std::size_t> shape, double s = 1.0) {
  std::uniform_real_distribution<double> u(-s, s);
  Tensor t(std::move(shape));
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = u(rng);
  return t;
}

StateSummary summary_of(Tensor vec, double score, std::size_t step = 0) {
  StateSummary s;
  s.vec = std::move(vec);
  s.score = score;
  s.step = step;
  return s;
}

// Independent plain stacked-SSM language model: embed, per-layer diagonal
// recursion with readout, then the output projection. No pools, no attention.
Tensor plain_ssm_oracle(const ModelConfig& cfg, const Weights& w,
                        std::span<const int> tokens) {
  const Tensor& embed = w.at("embed");
  const Tensor& w_out = w.at("w_out");
  std::vector<Tensor> a(cfg.layers), h(cfg.layers);
  for (std::size_t l = 0; l < cfg.layers; ++l) {
    a[l] = ssm::make_stable_A(w.at("layers." + std::to_string(l) + ".a_raw"));
    h[l] = Tensor({cfg.state_dim});
  }
  Tensor logits({tokens.size(), cfg.vocab});
  Tensor x({cfg.width});
  for (std::size_t t = 0; t < tokens.size(); ++t) {
    for (std::size_t j = 0; j < cfg.width; ++j)
      x[j] = embed.at2(static_cast<std::size_t>(tokens[t]), j);
    for (std::size_t l = 0; l < cfg.layers; ++l) {
      const std::string p = "layers." + std::to_string(l) + ".";
      const Tensor& b = w.at(p + "b_in");
      const Tensor& c = w.at(p + "c_out");
      Tensor bx({cfg.state_dim});
      for (std::size_t i = 0; i < cfg.state_dim; ++i) {
        double acc = 0.0;
        for (std::size_t j = 0; j < cfg.width; ++j) acc += b.at2(i, j) * x[j];
        bx[i] = acc;
      }
      for (std::size_t i = 0; i < cfg.state_dim; ++i) h[l][i] = a[l][i] * h[l][i] + bx[i];
      Tensor y({cfg.width});
      for (std::size_t j = 0; j < cfg.width; ++j) {
        double acc = 0.0;
        for (std::size_t i = 0; i < cfg.state_dim; ++i) acc += c.at2(j, i) * h[l][i];
        y[j] = acc;
      }
      x = y;
    }
    for (std::size_t v = 0; v < cfg.vocab; ++v) {
      double acc = 0.0;
      for (std::size_t j = 0; j < cfg.width; ++j) acc += w_out.at2(v, j) * x[j];
      logits.at2(t, v) = acc;
    }
  }
  return logits;
}

ModelConfig tiny_cfg() {
  ModelConfig cfg;
  cfg.layers = 2;
  cfg.width = 8;
  cfg.state_dim = 6;
  cfg.summary_dim = 4;
  cfg.pool_capacity = 5;
  cfg.vocab = 16;
  cfg.period = 2;
  cfg.lookback = 1;
  cfg.seed = 99;
  return cfg;
}

}  // namespace

TEST_CASE("token and state importance match the closed form") {
  Tensor x = Tensor::vec({0.5, -2.0, 1.0});
  CHECK(token_importance(x, Tensor({3}), 0.0) == 0.5);
  CHECK(token_importance(x, Tensor({3}), 50.0) == doctest::Approx(1.0).epsilon(1e-12));
  std::mt19937_64 rng(3);
  for (int i = 0; i < 20; ++i) {
    Tensor w = rnd(rng, {3});
    const double b = rnd(rng, {1})[0];
    const double z = dot(w, x) + b;
    CHECK(std::abs(token_importance(x, w, b) - 1.0 / (1.0 + std::exp(-z))) < 1e-12);
    CHECK(state_importance(x, w, b) == token_importance(x, w, b));
  }
}

TEST_CASE("state importance is monotone in its logit") {
  Tensor z = Tensor::vec({1.0, 0.0});
  double prev = 0.0;
  for (double w1 : {-2.0, -1.0, 0.0, 1.0, 2.0}) {
    const double s = state_importance(z, Tensor::vec({w1, 0.0}), 0.0);
    CHECK(s > prev);
    prev = s;
  }
}

TEST_CASE("summarize is the linear projection") {
  Tensor proj({2, 4});
  proj.at2(0, 0) = 1.0;
  proj.at2(1, 1) = 1.0;  // truncated identity
  Tensor x = Tensor::vec({7.0, -3.0, 2.0, 9.0});
  Tensor s = summarize(x, proj);
  CHECK(s[0] == 7.0);
  CHECK(s[1] == -3.0);

  CHECK(norm2(summarize(Tensor({4}), proj)) == 0.0);

  std::mt19937_64 rng(5);
  Tensor p2 = rnd(rng, {3, 4});
  Tensor v = rnd(rng, {4});
  Tensor sv = summarize(v, p2);
  Tensor v2(v.shape());
  for (std::size_t i = 0; i < v.size(); ++i) v2[i] = 2.0 * v[i];
  Tensor sv2 = summarize(v2, p2);
  for (std::size_t i = 0; i < sv.size(); ++i) CHECK(std::abs(sv2[i] - 2.0 * sv[i]) < 1e-12);
}

TEST_CASE("pool FIFO evicts the oldest") {
  StatePool pool(2, PoolPolicy::FIFO);
  pool.insert(summary_of(Tensor::vec({1.0}), 0.9, 0));
  pool.insert(summary_of(Tensor::vec({2.0}), 0.1, 1));
  pool.insert(summary_of(Tensor::vec({3.0}), 0.5, 2));
  REQUIRE(pool.size() == 2);
  CHECK(pool.entry(0).vec[0] == 2.0);
  CHECK(pool.entry(1).vec[0] == 3.0);
}

TEST_CASE("priority pool rejects the weakest and evicts the lowest") {
  StatePool pool(2, PoolPolicy::PRIORITY);
  pool.insert(summary_of(Tensor::vec({1.0}), 0.9));
  pool.insert(summary_of(Tensor::vec({2.0}), 0.8));
  auto out = pool.insert(summary_of(Tensor::vec({3.0}), 0.5));
  CHECK(!out.inserted);
  REQUIRE(pool.size() == 2);
  CHECK(pool.entry(0).score == 0.9);
  CHECK(pool.entry(1).score == 0.8);

  StatePool pool2(2, PoolPolicy::PRIORITY);
  pool2.insert(summary_of(Tensor::vec({1.0}), 0.9));
  pool2.insert(summary_of(Tensor::vec({2.0}), 0.5));
  pool2.insert(summary_of(Tensor::vec({3.0}), 0.8));
  REQUIRE(pool2.size() == 2);
  CHECK(pool2.entry(0).score == 0.9);
  CHECK(pool2.entry(1).score == 0.8);
}

TEST_CASE("pool insert dimension check and capacity invariant") {
  StatePool pool(3, PoolPolicy::FIFO);
  pool.insert(summary_of(Tensor::vec({1.0, 2.0}), 0.5));
  CHECK_THROWS_AS(pool.insert(summary_of(Tensor::vec({1.0}), 0.5)), DimensionError);

  std::mt19937_64 rng(7);
  StatePool p2(4, PoolPolicy::PRIORITY);
  for (int i = 0; i < 100; ++i) {
    std::uniform_real_distribution<double> u(0, 1);
    p2.insert(summary_of(Tensor::vec({u(rng)}), u(rng)));
    CHECK(p2.size() <= 4);
  }
}

TEST_CASE("value-semantic pool_insert leaves the original untouched") {
  StatePool pool(2, PoolPolicy::FIFO);
  StatePool grown = pool_insert(pool, summary_of(Tensor::vec({1.0}), 0.5));
  CHECK(pool.size() == 0);
  CHECK(grown.size() == 1);
}

TEST_CASE("cross-token attention: empty pool, single entry, duplicates") {
  std::mt19937_64 rng(11);
  Tensor wq = rnd(rng, {4, 6});
  Tensor wk = rnd(rng, {4, 4});
  Tensor wv = rnd(rng, {6, 4});
  Tensor x = rnd(rng, {6});

  StatePool empty(5, PoolPolicy::FIFO);
  Tensor zero = cross_token_attention(x, empty, wq, wk, wv);
  CHECK(norm2(zero) == 0.0);
  CHECK(zero.size() == 6);

  StatePool one(5, PoolPolicy::FIFO);
  Tensor s1 = rnd(rng, {4});
  one.insert(summary_of(s1, 0.5));
  double wsum = 0.0;
  Tensor out1 = cross_token_attention(x, one, wq, wk, wv, &wsum);
  CHECK(std::abs(wsum - 1.0) <= 1e-12);
  Tensor expect = matvec(wv, s1);
  CHECK(out1.equals_bits(expect));

  StatePool two(5, PoolPolicy::FIFO);
  two.insert(summary_of(s1, 0.5));
  two.insert(summary_of(s1, 0.5));
  Tensor out2 = cross_token_attention(x, two, wq, wk, wv);
  for (std::size_t i = 0; i < out2.size(); ++i)
    CHECK(std::abs(out2[i] - out1[i]) < 1e-12);
}

TEST_CASE("cross-layer attention reductions") {
  std::mt19937_64 rng(13);
  Tensor wq = rnd(rng, {4, 6}), wk = rnd(rng, {4, 4}), wv = rnd(rng, {6, 4});
  Tensor x = rnd(rng, {6});

  StatePool a(5, PoolPolicy::FIFO), b(5, PoolPolicy::FIFO);
  std::vector<const StatePool*> both{&a, &b};
  CHECK(norm2(cross_layer_attention(x, both, wq, wk, wv)) == 0.0);

  Tensor s1 = rnd(rng, {4});
  a.insert(summary_of(s1, 0.6));
  std::vector<const StatePool*> single{&a};
  Tensor via_layer = cross_layer_attention(x, single, wq, wk, wv);
  Tensor via_token = cross_token_attention(x, a, wq, wk, wv);
  CHECK(via_layer.equals_bits(via_token));

  // two disjoint single-entry pools vs a hand-built two-key softmax
  Tensor s2 = rnd(rng, {4});
  b.insert(summary_of(s2, 0.7));
  Tensor got = cross_layer_attention(x, both, wq, wk, wv);

  Tensor q = matvec(wq, x);
  Tensor k1 = matvec(wk, s1), k2 = matvec(wk, s2);
  Tensor v1 = matvec(wv, s1), v2 = matvec(wv, s2);
  const double sc = 1.0 / std::sqrt(4.0);
  const double l1 = dot(q, k1) * sc, l2 = dot(q, k2) * sc;
  const double mx = std::max(l1, l2);
  const double e1 = std::exp(l1 - mx), e2 = std::exp(l2 - mx);
  for (std::size_t i = 0; i < got.size(); ++i) {
    const double want = (e1 * v1[i] + e2 * v2[i]) / (e1 + e2);
    CHECK(std::abs(got[i] - want) < 1e-12);
  }
}

TEST_CASE("fuse reduces to x for zero contexts under every method") {
  std::mt19937_64 rng(17);
  Tensor x = rnd(rng, {5});
  Tensor zero({5});
  Tensor gate = rnd(rng, {5});
  Tensor taps = rnd(rng, {5});
  FuseParams p;
  p.gate = &gate;
  p.conv_token = &taps;
  p.conv_layer = &taps;
  for (Fusion m : {Fusion::GATED, Fusion::RESIDUAL, Fusion::ELEMENTWISE, Fusion::CONV1D,
                   Fusion::WEIGHTED})
    CHECK(fuse(x, zero, zero, m, p).equals_bits(x));
}

TEST_CASE("weighted fusion arithmetic") {
  Tensor x = Tensor::vec({1.0, 2.0});
  Tensor ct = Tensor::vec({0.5, -1.0});
  Tensor zero({2});
  FuseParams p;
  p.alpha_token = 0.8;
  p.alpha_layer = 0.8;
  Tensor out = fuse(x, ct, zero, Fusion::WEIGHTED, p);
  CHECK(out[0] == doctest::Approx(1.0 + 0.8 * 0.5).epsilon(1e-15));
  CHECK(out[1] == doctest::Approx(2.0 - 0.8).epsilon(1e-15));

  FuseParams unit;
  unit.alpha_token = 1.0;
  unit.alpha_layer = 1.0;
  Tensor ct2 = Tensor::vec({0.25, 0.5});
  Tensor cl2 = Tensor::vec({-0.5, 1.0});
  Tensor a = fuse(x, ct2, cl2, Fusion::WEIGHTED, unit);
  Tensor b = fuse(x, ct2, cl2, Fusion::RESIDUAL, unit);
  CHECK(a.equals_bits(b));
}

TEST_CASE("disabled thresholds reproduce the plain SSM bit for bit") {
  ModelConfig cfg = tiny_cfg();
  cfg.tau1 = 1.1;
  cfg.tau2 = 1.1;
  cfg.period = cfg.layers + 1;
  Weights w = init_weights(cfg);

  std::mt19937_64 rng(23);
  for (int rep = 0; rep < 5; ++rep) {
    std::vector<int> tokens(12);
    for (auto& t : tokens) t = static_cast<int>(rng() % cfg.vocab);
    ForwardResult got = model_forward(cfg, w, tokens);
    Tensor want = plain_ssm_oracle(cfg, w, tokens);
    CHECK(got.logits.equals_bits(want));
    for (std::size_t l = 0; l < cfg.layers; ++l)
      for (std::size_t t = 0; t < tokens.size(); ++t) {
        CHECK(got.trace.meta_at(l, t).c_token_norm == 0.0);
        CHECK(got.trace.meta_at(l, t).pool_size == 0);
      }
  }
}

TEST_CASE("always-insert threshold fills the pool to min(t, capacity)") {
  ModelConfig cfg = tiny_cfg();
  cfg.tau1 = -1.0;
  Weights w = init_weights(cfg);
  std::vector<int> tokens(9, 3);
  ForwardResult r = model_forward(cfg, w, tokens);
  for (std::size_t t = 0; t < tokens.size(); ++t)
    CHECK(r.trace.meta_at(0, t).pool_size ==
          std::min<std::size_t>(t + 1, cfg.pool_capacity));
}

TEST_CASE("cross-layer context is exactly zero off the period") {
  ModelConfig cfg = tiny_cfg();
  cfg.layers = 3;
  cfg.period = 2;  // fires only on layer 2 (1-based)
  cfg.tau1 = -1.0;
  cfg.tau2 = -1.0;
  Weights w = init_weights(cfg);
  std::vector<int> tokens(10, 5);
  ForwardResult r = model_forward(cfg, w, tokens);
  for (std::size_t t = 0; t < tokens.size(); ++t) {
    CHECK(r.trace.meta_at(0, t).c_layer_norm == 0.0);
    CHECK(!r.trace.meta_at(0, t).layer_fired);
    CHECK(r.trace.meta_at(1, t).layer_fired);
    CHECK(r.trace.meta_at(2, t).c_layer_norm == 0.0);
  }
  // layer 2 actually attends once layer 1's pool is non-empty
  CHECK(r.trace.meta_at(1, 5).c_layer_norm > 0.0);
}

TEST_CASE("attention weight sums are one whenever a pool is attended") {
  ModelConfig cfg = tiny_cfg();
  cfg.tau1 = -1.0;
  cfg.tau2 = -1.0;
  cfg.period = 2;
  Weights w = init_weights(cfg);
  std::vector<int> tokens(14, 7);
  ForwardResult r = model_forward(cfg, w, tokens);
  bool saw_token = false, saw_layer = false;
  for (std::size_t l = 0; l < cfg.layers; ++l)
    for (std::size_t t = 0; t < tokens.size(); ++t) {
      const StepMeta& m = r.trace.meta_at(l, t);
      if (m.state_gate && m.pool_size > 0 && t > 0) {
        CHECK(std::abs(m.attn_token_weight_sum - 1.0) <= 1e-12);
        saw_token = true;
      }
      if (m.layer_fired && m.c_layer_norm > 0.0) {
        CHECK(std::abs(m.attn_layer_weight_sum - 1.0) <= 1e-12);
        saw_layer = true;
      }
    }
  CHECK(saw_token);
  CHECK(saw_layer);
}

TEST_CASE("model forward is deterministic and shape-correct") {
  ModelConfig cfg = tiny_cfg();
  Weights w = init_weights(cfg);
  std::vector<int> tokens{1};
  ForwardResult a = model_forward(cfg, w, tokens);
  CHECK(a.logits.dim(0) == 1);
  CHECK(a.logits.dim(1) == cfg.vocab);
  CHECK(a.trace.hidden.dim(0) == cfg.layers);
  CHECK(a.trace.hidden.dim(1) == 1);
  CHECK(a.trace.hidden.dim(2) == cfg.width);

  std::vector<int> longer{3, 1, 4, 1, 5, 9, 2, 6};
  ForwardResult r1 = model_forward(cfg, w, longer);
  ForwardResult r2 = model_forward(cfg, w, longer);
  CHECK(r1.logits.equals_bits(r2.logits));
  CHECK(r1.trace.hidden.equals_bits(r2.trace.hidden));

  CHECK_THROWS_AS(model_forward(cfg, w, std::vector<int>{-1}), InputError);
  CHECK_THROWS_AS(model_forward(cfg, w, std::vector<int>{99}), InputError);
}

TEST_CASE("streaming model agrees with the batch forward") {
  ModelConfig cfg = tiny_cfg();
  cfg.tau1 = 0.3;
  cfg.tau2 = 0.3;
  Weights w = init_weights(cfg);
  std::vector<int> tokens{2, 7, 1, 1, 12, 4, 4, 0, 9, 5};
  ForwardResult batch = model_forward(cfg, w, tokens);
  StreamingModel sm(cfg, w);
  for (std::size_t t = 0; t < tokens.size(); ++t) {
    Tensor logits = sm.step(tokens[t]);
    for (std::size_t v = 0; v < cfg.vocab; ++v)
      CHECK(logits[v] == batch.logits.at2(t, v));
  }
  CHECK(sm.state_bytes() > 0);
  sm.reset();
  Tensor again = sm.step(tokens[0]);
  for (std::size_t v = 0; v < cfg.vocab; ++v) CHECK(again[v] == batch.logits.at2(0, v));
}

TEST_CASE("pooled summarizers and note windows run end to end") {
  ModelConfig cfg = tiny_cfg();
  cfg.summarizer = Summarizer::MAXPOOL;
  cfg.note_window = 3;
  cfg.tau1 = -1.0;
  cfg.tau2 = -1.0;
  Weights w = init_weights(cfg);
  std::vector<int> tokens(10, 2);
  ForwardResult r = model_forward(cfg, w, tokens);
  CHECK(r.logits.all_finite());

  cfg.summarizer = Summarizer::MEANPOOL;
  Weights w2 = init_weights(cfg);
  CHECK(model_forward(cfg, w2, tokens).logits.all_finite());

  ModelConfig bad = cfg;
  bad.summary_dim = 3;  // does not divide width=8
  CHECK_THROWS_AS(bad.validate(), ParameterError);
}

TEST_CASE("checkpoint weights registry") {
  ModelConfig cfg = tiny_cfg();
  cfg.fusion = Fusion::GATED;
  Weights w = init_weights(cfg);
  CHECK(w.at("layers.0.gate").size() == cfg.width);
  CHECK_THROWS_AS(w.at("layers.0.conv_token"), ParameterError);
  CHECK(w.count() == w.names.size());
}
