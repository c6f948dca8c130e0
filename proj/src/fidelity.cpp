#include "memmamba/fidelity.hpp"

#include <cmath>

#include "memmamba/numerics.hpp"

namespace memmamba::fidelity {

namespace {

// Sum of cosines and pair count for one trace at one delta.
std::pair<double, std::size_t> etmf_sums(const model::LayerTrace& trace,
                                         const Tensor& embedding, const Tensor& w_out,
                                         int delta, double temperature) {
  if (trace.layers == 0 || trace.steps == 0) throw ParameterError("empty trace");
  if (embedding.rank() != 2 || w_out.rank() != 2 || embedding.dim(1) != trace.width ||
      w_out.dim(1) != trace.width || embedding.dim(0) != w_out.dim(0))
    throw DimensionError("embedding/w_out inconsistent with trace");
  if (delta < 0) throw ParameterError("delta must be >= 0");
  if (static_cast<std::size_t>(delta) >= trace.steps)
    throw ParameterError("sequence shorter than delta");
  const std::size_t vocab = embedding.dim(0);
  const std::size_t d = trace.width;
  const std::size_t last = trace.layers - 1;

  Tensor h({d}), logits({vocab}), recon({d}), tok({d});
  double acc = 0.0;
  std::size_t count = 0;
  for (std::size_t i = 0; i + static_cast<std::size_t>(delta) < trace.steps; ++i) {
    const std::size_t j = i + static_cast<std::size_t>(delta);
    auto hj = trace.hidden_row(last, j);
    for (std::size_t k = 0; k < d; ++k) h[k] = hj[k];
    for (std::size_t v = 0; v < vocab; ++v) {
      double s = 0.0;
      for (std::size_t k = 0; k < d; ++k) s += h[k] * w_out.at2(v, k);
      logits[v] = s;
    }
    Tensor p = softmax(logits, temperature);
    for (std::size_t k = 0; k < d; ++k) recon[k] = 0.0;
    for (std::size_t v = 0; v < vocab; ++v)
      for (std::size_t k = 0; k < d; ++k) recon[k] += p[v] * embedding.at2(v, k);
    const int token = trace.tokens.at(i);
    for (std::size_t k = 0; k < d; ++k)
      tok[k] = embedding.at2(static_cast<std::size_t>(token), k);
    acc += cosine_similarity(tok, recon);
    ++count;
  }
  return {acc, count};
}

}  // namespace

double etmf(const model::LayerTrace& trace, const Tensor& embedding, const Tensor& w_out,
            double temperature) {
  auto [acc, n] = etmf_sums(trace, embedding, w_out, 0, temperature);
  return acc / static_cast<double>(n);
}

double etmf_delta(const model::LayerTrace& trace, const Tensor& embedding,
                  const Tensor& w_out, int delta, double temperature) {
  auto [acc, n] = etmf_sums(trace, embedding, w_out, delta, temperature);
  return acc / static_cast<double>(n);
}

double eclmf(std::span<const model::LayerTrace> traces, int gap, double lambda) {
  if (traces.empty()) throw ParameterError("no traces");
  const std::size_t layers = traces[0].layers;
  const std::size_t d = traces[0].width;
  if (gap < 1 || static_cast<std::size_t>(gap) >= layers)
    throw ParameterError("gap must satisfy 1 <= gap < layers");

  std::size_t rows = 0;
  for (const auto& tr : traces) {
    if (tr.layers != layers || tr.width != d)
      throw DimensionError("traces have inconsistent shapes");
    rows += tr.steps;
  }

  double acc = 0.0;
  std::size_t pairs = 0;
  Tensor x({rows, d}), y({rows, d});
  for (std::size_t l = 0; l + static_cast<std::size_t>(gap) < layers; ++l) {
    std::size_t r = 0;
    for (const auto& tr : traces)
      for (std::size_t t = 0; t < tr.steps; ++t, ++r) {
        auto xs = tr.hidden_row(l, t);
        auto ys = tr.hidden_row(l + static_cast<std::size_t>(gap), t);
        for (std::size_t k = 0; k < d; ++k) {
          x.at2(r, k) = xs[k];
          y.at2(r, k) = ys[k];
        }
      }
    RidgeSolution sol = ridge_fit(x, y, lambda);
    const double r_err = sol.residual_fro / (frobenius_norm(x) + 1e-6);
    acc += 1.0 - r_err;
    ++pairs;
  }
  return acc / static_cast<double>(pairs);
}

FidelityReport fidelity_report(std::span<const model::LayerTrace> traces,
                               const Tensor& embedding, const Tensor& w_out,
                               const FidelityOptions& opts) {
  if (traces.empty()) throw ParameterError("no traces");
  FidelityReport rep;
  rep.sample_count = traces.size();

  double acc = 0.0;
  std::size_t n = 0;
  for (const auto& tr : traces) {
    auto [a, c] = etmf_sums(tr, embedding, w_out, 0, opts.temperature);
    acc += a;
    n += c;
  }
  rep.etmf = acc / static_cast<double>(n);

  for (int delta : opts.deltas) {
    double da = 0.0;
    std::size_t dn = 0;
    for (const auto& tr : traces) {
      if (static_cast<std::size_t>(delta) >= tr.steps) continue;
      auto [a, c] = etmf_sums(tr, embedding, w_out, delta, opts.temperature);
      da += a;
      dn += c;
    }
    if (dn > 0) rep.etmf_delta[delta] = da / static_cast<double>(dn);
  }

  for (int gap : opts.gaps)
    if (gap >= 1 && static_cast<std::size_t>(gap) < traces[0].layers)
      rep.eclmf[gap] = eclmf(traces, gap, opts.lambda);
  return rep;
}

}  // namespace memmamba::fidelity
