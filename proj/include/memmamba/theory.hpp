#pragma once

#include <cstdint>
#include <span>
#include <string>

#include "memmamba/ssm.hpp"
#include "memmamba/tensor.hpp"

namespace memmamba::theory {

constexpr double kBoundSlack = 1e-9;

struct BoundCheck {
  std::string name;
  double lhs = 0.0;
  double rhs = 0.0;
  bool holds = false;   // lhs <= rhs + slack
  double margin = 0.0;  // rhs - lhs

  static BoundCheck make(std::string name, double lhs, double rhs);
};

/// Frobenius reconstruction error of block-max pooling against its
/// closed-form envelope sqrt(n*d) * Δ, with Δ the largest in-block fluctuation.
BoundCheck pooling_error_check(const Tensor& h, std::size_t w);

/// (max a)^(L*tau) * h0 — the depth-stacked decay envelope.
double layered_decay(std::span<const double> a_norms, std::size_t tau, double h0_norm);

/// Relay simulation: the early signal is held for tau zero-input steps per
/// layer and handed to the next through a gain in (0, 1]; the measured
/// survivor magnitude must stay under the layered_decay envelope.
BoundCheck layered_decay_check(std::span<const double> a_norms,
                               std::span<const double> gains, std::size_t tau,
                               double h0_norm);

/// Steady-state norm envelope B(x + alpha*c)/(1 - A) for bounded inputs.
/// Throws InstabilityError when a_norm >= 1.
double bibo_bound(double a_norm, double b_norm, double x_bound, double alpha,
                  double c_bound);

/// Drives an actual scan with worst-case-norm inputs for `steps` steps and
/// compares max |h| against the closed-form envelope.
BoundCheck bibo_sim_check(const ssm::SSMParams& p, double x_bound, double alpha,
                          double c_bound, std::size_t steps, std::uint64_t seed);

/// Eq.-style contribution inequality on a live scan: |h| after k decay steps
/// vs a^k |B| |probe|.
BoundCheck contribution_check(const ssm::SSMParams& p, std::size_t k, const Tensor& probe);

struct RecallBounds {
  double mamba_upper = 0.0;  // a^k * b * gamma / theta, clamped to [0,1]
  double csa_lower = 0.0;    // alpha * (gamma - delta) / theta, clamped to [0,1]
};

RecallBounds recall_bounds(double a_norm, double b_norm, double gamma, double theta,
                           std::size_t k, double alpha, double delta);

struct EqualBudget {
  double n_attention = 0.0;  // sqrt(C / (L_T d_T)) — quadratic-cost model
  double n_linear = 0.0;     // C / (L_O d_O)      — linear-cost model
};

EqualBudget equal_budget_lengths(double compute, double layers_t, double width_t,
                                 double layers_o, double width_o);

}  // namespace memmamba::theory
