#include "memmamba/bench.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <random>

#include "memmamba/numerics.hpp"
#include "memmamba/seeds.hpp"

namespace memmamba::bench {

namespace {

using Clock = std::chrono::steady_clock;

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

// Matched-width single attention layer: scores are a full n x n softmax, so
// the forward costs O(n^2 d) by construction.
struct QuadraticBaseline {
  Tensor wq, wk, wv;
  explicit QuadraticBaseline(std::size_t d, std::uint64_t seed)
      : wq({d, d}), wk({d, d}), wv({d, d}) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(-0.1, 0.1);
    for (auto* m : {&wq, &wk, &wv})
      for (std::size_t i = 0; i < m->size(); ++i) (*m)[i] = u(rng);
  }

  std::size_t forward(const Tensor& x) {
    const std::size_t n = x.dim(0);
    Tensor q = matmul(x, wq), k = matmul(x, wk), v = matmul(x, wv);
    const std::size_t d = q.dim(1);
    const double sc = 1.0 / std::sqrt(static_cast<double>(d));
    Tensor scores({n, n});
    for (std::size_t i = 0; i < n; ++i) {
      double mx = -1e308;
      for (std::size_t j = 0; j < n; ++j) {
        double acc = 0.0;
        for (std::size_t t = 0; t < d; ++t) acc += q.at2(i, t) * k.at2(j, t);
        scores.at2(i, j) = acc * sc;
        mx = std::max(mx, scores.at2(i, j));
      }
      double sum = 0.0;
      for (std::size_t j = 0; j < n; ++j) {
        scores.at2(i, j) = std::exp(scores.at2(i, j) - mx);
        sum += scores.at2(i, j);
      }
      for (std::size_t j = 0; j < n; ++j) scores.at2(i, j) /= sum;
    }
    Tensor out = matmul(scores, v);
    // keep the result alive so nothing is optimised away
    volatile double sink = out[0];
    (void)sink;
    return (scores.size() + q.size() + k.size() + v.size() + out.size()) * sizeof(double);
  }
};

}  // namespace

std::vector<BenchRecord> benchmark_forward(BenchModel kind,
                                           std::span<const std::size_t> lengths,
                                           std::size_t samples,
                                           const model::ModelConfig& cfg,
                                           std::uint64_t seed) {
  if (samples == 0) throw ParameterError("samples must be >= 1");
  for (std::size_t i = 1; i < lengths.size(); ++i)
    if (lengths[i] <= lengths[i - 1])
      throw ParameterError("lengths must be sorted ascending");

  constexpr double kFloorMs = 0.25;  // below this, repeat-widen the measurement

  std::vector<BenchRecord> out;
  std::mt19937_64 rng(sub_seed(seed, "bench"));

  model::Weights weights = model::init_weights(cfg);

  for (std::size_t len : lengths) {
    BenchRecord rec;
    rec.seq_len = len;
    rec.samples = samples;

    std::vector<int> tokens(len);
    for (auto& t : tokens) t = static_cast<int>(rng() % cfg.vocab);

    if (kind == BenchModel::MEMMAMBA) {
      rec.model_id = "memmamba";
      model::StreamingModel m(cfg, weights);

      auto run_once = [&]() {
        m.reset();
        for (int t : tokens) {
          Tensor logits = m.step(t);
          volatile double sink = logits[0];
          (void)sink;
        }
      };
      run_once();  // warm-up
      rec.peak_state_bytes = m.state_bytes();

      std::size_t repeats = 1;
      for (std::size_t s = 0; s < samples; ++s) {
        double ms;
        for (;;) {
          const auto t0 = Clock::now();
          for (std::size_t r = 0; r < repeats; ++r) run_once();
          const auto t1 = Clock::now();
          ms = std::chrono::duration<double, std::milli>(t1 - t0).count() /
               static_cast<double>(repeats);
          if (ms * static_cast<double>(repeats) >= kFloorMs || repeats >= 4096) break;
          repeats *= 2;
          rec.widened = true;
        }
        rec.sample_ms.push_back(ms);
      }
    } else {
      rec.model_id = "quadratic_baseline";
      QuadraticBaseline base(cfg.width, sub_seed(seed, "baseline"));
      Tensor x({len, cfg.width});
      std::uniform_real_distribution<double> u(-1.0, 1.0);
      for (std::size_t i = 0; i < x.size(); ++i) x[i] = u(rng);

      rec.peak_state_bytes = base.forward(x);  // warm-up
      std::size_t repeats = 1;
      for (std::size_t s = 0; s < samples; ++s) {
        double ms;
        for (;;) {
          const auto t0 = Clock::now();
          for (std::size_t r = 0; r < repeats; ++r) base.forward(x);
          const auto t1 = Clock::now();
          ms = std::chrono::duration<double, std::milli>(t1 - t0).count() /
               static_cast<double>(repeats);
          if (ms * static_cast<double>(repeats) >= kFloorMs || repeats >= 4096) break;
          repeats *= 2;
          rec.widened = true;
        }
        rec.sample_ms.push_back(ms);
      }
    }
    rec.wall_ms = median(rec.sample_ms);
    out.push_back(std::move(rec));
  }
  return out;
}

double fit_scaling_exponent(std::span<const std::pair<double, double>> points) {
  if (points.size() < 4) throw ParameterError("scaling fit needs at least 4 lengths");
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (auto [n, ms] : points) {
    if (!(n > 0.0) || !(ms > 0.0)) throw ParameterError("scaling fit needs positive data");
    const double lx = std::log(n), ly = std::log(ms);
    sx += lx;
    sy += ly;
    sxx += lx * lx;
    sxy += lx * ly;
  }
  const double k = static_cast<double>(points.size());
  return (k * sxy - sx * sy) / (k * sxx - sx * sx);
}

double fit_scaling_exponent(std::span<const BenchRecord> records) {
  std::vector<std::pair<double, double>> pts;
  for (const auto& r : records)
    pts.emplace_back(static_cast<double>(r.seq_len), r.wall_ms);
  return fit_scaling_exponent(pts);
}

}  // namespace memmamba::bench
