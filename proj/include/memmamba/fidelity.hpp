#pragma once

#include <map>
#include <span>

#include "memmamba/model.hpp"
#include "memmamba/tensor.hpp"

namespace memmamba::fidelity {

/// Token-level memory fidelity: at each position the output distribution
/// reconstructs an embedding-space token, and the score is the mean cosine
/// between the true token embedding and that reconstruction.
double etmf(const model::LayerTrace& trace, const Tensor& embedding, const Tensor& w_out,
            double temperature = 1.0);

/// Distance-shifted variant: cos(t_i, reconstruction at i+delta); delta = 0
/// reduces to etmf. Sequence must be longer than delta.
double etmf_delta(const model::LayerTrace& trace, const Tensor& embedding,
                  const Tensor& w_out, int delta, double temperature = 1.0);

/// Cross-layer memory fidelity through a ridge-regression reconstruction
/// surrogate: for every layer pair (l, l+gap), fit Y ≈ XW on states flattened
/// across traces and score 1 - |Y - XW|_F / (|X|_F + 1e-6); mean over pairs.
double eclmf(std::span<const model::LayerTrace> traces, int gap, double lambda = 1e-4);

struct FidelityReport {
  double etmf = 0.0;
  std::map<int, double> etmf_delta;  // delta -> score
  std::map<int, double> eclmf;       // gap -> score
  std::size_t sample_count = 0;
};

struct FidelityOptions {
  std::vector<int> deltas = {8, 16, 32};
  std::vector<int> gaps = {2, 5, 10};
  double lambda = 1e-4;
  double temperature = 1.0;
};

/// Full report over a batch of traces; infeasible deltas/gaps are skipped.
FidelityReport fidelity_report(std::span<const model::LayerTrace> traces,
                               const Tensor& embedding, const Tensor& w_out,
                               const FidelityOptions& opts = {});

}  // namespace memmamba::fidelity
