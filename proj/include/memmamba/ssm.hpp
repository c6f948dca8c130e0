#pragma once

#include <utility>

#include "memmamba/numerics.hpp"
#include "memmamba/tensor.hpp"

namespace memmamba::ssm {

/// Diagonal linear state-space layer: h_t = a ⊙ h_{t-1} + B x_t, y_t = C h_t.
/// Every diagonal entry of a lies strictly inside (0, 1).
struct SSMParams {
  std::size_t state_dim = 0;  // d_s
  std::size_t width = 0;      // d
  Tensor a_diag;              // [d_s], entries in (0,1)
  Tensor b_in;                // [d_s x d]
  Tensor c_out;               // [d x d_s]

  void validate() const;
};

struct ScanState {
  Tensor h;           // [d_s]
  std::size_t t = 0;  // step counter
};

/// exp(-softplus(raw)) elementwise; maps any finite input into (0, 1).
Tensor make_stable_A(const Tensor& raw);

double softplus(double x);

/// One recursion step; returns the advanced state and the readout y = C h'.
std::pair<ScanState, Tensor> ssm_step(const SSMParams& p, const ScanState& state,
                                      const Tensor& x);

struct ScanResult {
  Tensor h_rows;  // [n x d_s]
  Tensor y_rows;  // [n x d]
};

/// Strictly sequential scan over the rows of X starting from h0.
ScanResult ssm_scan(const SSMParams& p, const Tensor& x_rows, const Tensor& h0);

/// a^k * b * x — the decay envelope of a k-step-old input's influence.
double contribution_bound(double a_norm, double b_norm, double x_norm, std::size_t k);

/// ‖h_t‖ after feeding `probe` k steps before t and zeros elsewhere.
double empirical_contribution(const SSMParams& p, std::size_t k, const Tensor& probe);

}  // namespace memmamba::ssm
