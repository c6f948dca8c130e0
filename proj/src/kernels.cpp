#include "memmamba/kernels.hpp"

#include <algorithm>
#include <cmath>

#include "memmamba/numerics.hpp"
#include "memmamba/ssm.hpp"

namespace memmamba::kern {

void attend(const Tensor& q, std::span<const Tensor* const> keys,
            std::span<const Tensor* const> vals, double scale, Tensor& out,
            std::vector<double>& weights) {
  const std::size_t k = keys.size();
  if (k == 0 || vals.size() != k) throw DimensionError("attend needs matching key/value lists");
  weights.assign(k, 0.0);
  double mx = -1e308;
  for (std::size_t i = 0; i < k; ++i) {
    const Tensor& key = *keys[i];
    if (key.size() != q.size()) throw DimensionError("attend key/query width mismatch");
    double acc = 0.0;
    for (std::size_t j = 0; j < q.size(); ++j) acc += q[j] * key[j];
    weights[i] = acc * scale;
    mx = std::max(mx, weights[i]);
  }
  double sum = 0.0;
  for (std::size_t i = 0; i < k; ++i) {
    weights[i] = std::exp(weights[i] - mx);
    sum += weights[i];
  }
  for (std::size_t i = 0; i < k; ++i) weights[i] /= sum;

  const std::size_t d = vals[0]->size();
  out = Tensor({d});
  for (std::size_t i = 0; i < k; ++i) {
    const Tensor& v = *vals[i];
    if (v.size() != d) throw DimensionError("attend value width mismatch");
    for (std::size_t j = 0; j < d; ++j) out[j] += weights[i] * v[j];
  }
}

double nll(const Tensor& logits, int target, std::vector<double>* probs) {
  if (logits.rank() != 1) throw DimensionError("nll logits must be rank-1");
  if (target < 0 || static_cast<std::size_t>(target) >= logits.size())
    throw InputError("nll target index out of range");
  double mx = logits[0];
  for (std::size_t i = 1; i < logits.size(); ++i) mx = std::max(mx, logits[i]);
  double sum = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) sum += std::exp(logits[i] - mx);
  const double lse = mx + std::log(sum);
  if (probs) {
    probs->resize(logits.size());
    for (std::size_t i = 0; i < logits.size(); ++i)
      (*probs)[i] = std::exp(logits[i] - lse);
  }
  return lse - logits[static_cast<std::size_t>(target)];
}

void group_max(const Tensor& x, std::size_t out_dim, DecisionTrace* dt, Tensor& out,
               std::vector<std::int32_t>& arg) {
  if (out_dim == 0 || x.size() % out_dim != 0)
    throw DimensionError("group_max needs out_dim dividing input length");
  const std::size_t gs = x.size() / out_dim;
  out = Tensor({out_dim});
  arg.resize(out_dim);
  for (std::size_t g = 0; g < out_dim; ++g) {
    std::int32_t best = static_cast<std::int32_t>(g * gs);
    for (std::size_t j = g * gs + 1; j < (g + 1) * gs; ++j)
      if (x[j] > x[best]) best = static_cast<std::int32_t>(j);
    if (dt) best = dt->decide(best);
    arg[g] = best;
    out[g] = x[static_cast<std::size_t>(best)];
  }
}

void group_mean(const Tensor& x, std::size_t out_dim, Tensor& out) {
  if (out_dim == 0 || x.size() % out_dim != 0)
    throw DimensionError("group_mean needs out_dim dividing input length");
  const std::size_t gs = x.size() / out_dim;
  out = Tensor({out_dim});
  for (std::size_t g = 0; g < out_dim; ++g) {
    double acc = 0.0;
    for (std::size_t j = g * gs; j < (g + 1) * gs; ++j) acc += x[j];
    out[g] = acc / static_cast<double>(gs);
  }
}

void max_list(std::span<const Tensor* const> xs, DecisionTrace* dt, Tensor& out,
              std::vector<std::int32_t>& arg) {
  if (xs.empty()) throw DimensionError("max_list of empty list");
  const std::size_t d = xs[0]->size();
  out = Tensor({d});
  arg.resize(d);
  for (std::size_t j = 0; j < d; ++j) {
    std::int32_t best = 0;
    for (std::size_t i = 1; i < xs.size(); ++i)
      if ((*xs[i])[j] > (*xs[best])[j]) best = static_cast<std::int32_t>(i);
    if (dt) best = dt->decide(best);
    arg[j] = best;
    out[j] = (*xs[static_cast<std::size_t>(best)])[j];
  }
}

void mean_list(std::span<const Tensor* const> xs, Tensor& out) {
  if (xs.empty()) throw DimensionError("mean_list of empty list");
  const std::size_t d = xs[0]->size();
  out = Tensor({d});
  const double inv = 1.0 / static_cast<double>(xs.size());
  for (std::size_t j = 0; j < d; ++j) {
    double acc = 0.0;
    for (const Tensor* x : xs) acc += (*x)[j];
    out[j] = acc * inv;
  }
}

void sigmoid(const Tensor& x, Tensor& out) {
  out = Tensor({x.size()});
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double v = x[i];
    out[i] = v >= 0.0 ? 1.0 / (1.0 + std::exp(-v))
                      : std::exp(v) / (1.0 + std::exp(v));
  }
}

void stable_decay(const Tensor& raw, Tensor& out, std::vector<double>& sig) {
  out = Tensor({raw.size()});
  sig.resize(raw.size());
  for (std::size_t i = 0; i < raw.size(); ++i) {
    // Same softplus floor as ssm::make_stable_A: decay stays strictly < 1.
    out[i] = std::exp(-std::max(ssm::softplus(raw[i]), 1e-12));
    const double v = raw[i];
    sig[i] = v >= 0.0 ? 1.0 / (1.0 + std::exp(-v))
                      : std::exp(v) / (1.0 + std::exp(v));
  }
}

}  // namespace memmamba::kern
