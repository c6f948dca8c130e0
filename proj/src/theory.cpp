#include "memmamba/theory.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "memmamba/numerics.hpp"

namespace memmamba::theory {

BoundCheck BoundCheck::make(std::string name, double lhs, double rhs) {
  BoundCheck c;
  c.name = std::move(name);
  c.lhs = lhs;
  c.rhs = rhs;
  c.holds = lhs <= rhs + kBoundSlack;
  c.margin = rhs - lhs;
  return c;
}

BoundCheck pooling_error_check(const Tensor& h, std::size_t w) {
  if (h.rank() != 2) throw DimensionError("pooling check input must be a matrix");
  if (w == 0 || h.dim(0) % w != 0)
    throw ParameterError("pooling check needs w dividing the row count");
  const std::size_t n = h.dim(0), d = h.dim(1);

  Tensor s = block_max_pool(h, w);
  Tensor hr = reconstruct_broadcast(s, w, n);

  double delta = 0.0;
  for (std::size_t r = 0; r < n; ++r)
    for (std::size_t k = 0; k < d; ++k)
      delta = std::max(delta, s.at2(r / w, k) - h.at2(r, k));

  double err2 = 0.0;
  for (std::size_t i = 0; i < h.size(); ++i) {
    const double dv = h[i] - hr[i];
    err2 += dv * dv;
  }
  const double lhs = std::sqrt(err2);
  const double rhs = std::sqrt(static_cast<double>(n * d)) * delta;
  return BoundCheck::make("pooling_error", lhs, rhs);
}

double layered_decay(std::span<const double> a_norms, std::size_t tau, double h0_norm) {
  if (a_norms.empty()) throw ParameterError("need at least one layer norm");
  double mx = 0.0;
  for (double a : a_norms) {
    if (!(a > 0.0 && a < 1.0)) throw ParameterError("layer norms must lie in (0,1)");
    mx = std::max(mx, a);
  }
  return std::pow(mx, static_cast<double>(a_norms.size() * tau)) * h0_norm;
}

BoundCheck layered_decay_check(std::span<const double> a_norms,
                               std::span<const double> gains, std::size_t tau,
                               double h0_norm) {
  if (gains.size() != a_norms.size())
    throw ParameterError("need one hand-off gain per layer");
  for (double g : gains)
    if (!(g > 0.0 && g <= 1.0)) throw ParameterError("gains must lie in (0,1]");
  // Relay transport: each layer decays the held signal for tau steps, then
  // hands it to the next layer through its gain.
  double signal = h0_norm;
  for (std::size_t l = 0; l < a_norms.size(); ++l) {
    if (!(a_norms[l] > 0.0 && a_norms[l] < 1.0))
      throw ParameterError("layer norms must lie in (0,1)");
    for (std::size_t s = 0; s < tau; ++s) signal *= a_norms[l];
    signal *= gains[l];
  }
  return BoundCheck::make("layered_decay", signal, layered_decay(a_norms, tau, h0_norm));
}

double bibo_bound(double a_norm, double b_norm, double x_bound, double alpha,
                  double c_bound) {
  if (!(a_norm < 1.0)) throw InstabilityError("bibo bound needs |A| < 1");
  if (a_norm < 0.0 || b_norm < 0.0 || x_bound < 0.0 || alpha < 0.0 || c_bound < 0.0)
    throw ParameterError("bibo bound needs non-negative magnitudes");
  return b_norm * (x_bound + alpha * c_bound) / (1.0 - a_norm);
}

BoundCheck bibo_sim_check(const ssm::SSMParams& p, double x_bound, double alpha,
                          double c_bound, std::size_t steps, std::uint64_t seed) {
  p.validate();
  double a_norm = 0.0;
  for (std::size_t i = 0; i < p.a_diag.size(); ++i)
    a_norm = std::max(a_norm, std::abs(p.a_diag[i]));
  const double b_norm = operator_norm(p.b_in);
  const double rhs = bibo_bound(a_norm, b_norm, x_bound, alpha, c_bound);

  std::mt19937_64 rng(seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  const double amp = x_bound + alpha * c_bound;
  Tensor h({p.state_dim});
  Tensor x({p.width});
  double worst = 0.0;
  for (std::size_t t = 0; t < steps; ++t) {
    for (std::size_t j = 0; j < p.width; ++j) x[j] = gauss(rng);
    const double nx = norm2(x);
    if (nx > 0.0)
      for (std::size_t j = 0; j < p.width; ++j) x[j] *= amp / nx;  // worst-case norm
    Tensor bx = matvec(p.b_in, x);
    for (std::size_t i = 0; i < p.state_dim; ++i) h[i] = p.a_diag[i] * h[i] + bx[i];
    worst = std::max(worst, norm2(h));
  }
  return BoundCheck::make("bibo", worst, rhs);
}

BoundCheck contribution_check(const ssm::SSMParams& p, std::size_t k, const Tensor& probe) {
  p.validate();
  double a_norm = 0.0;
  for (std::size_t i = 0; i < p.a_diag.size(); ++i)
    a_norm = std::max(a_norm, std::abs(p.a_diag[i]));
  const double lhs = ssm::empirical_contribution(p, k, probe);
  const double rhs =
      ssm::contribution_bound(a_norm, operator_norm(p.b_in), norm2(probe), k);
  return BoundCheck::make("contribution", lhs, rhs);
}

RecallBounds recall_bounds(double a_norm, double b_norm, double gamma, double theta,
                           std::size_t k, double alpha, double delta) {
  if (!(theta > 0.0)) throw ParameterError("detection threshold must be positive");
  if (!(a_norm > 0.0 && a_norm < 1.0)) throw ParameterError("a_norm must lie in (0,1)");
  if (delta >= gamma) throw ParameterError("fluctuation must stay below signal strength");
  auto clamp01 = [](double v) { return std::clamp(v, 0.0, 1.0); };
  RecallBounds r;
  r.mamba_upper =
      clamp01(std::pow(a_norm, static_cast<double>(k)) * b_norm * gamma / theta);
  r.csa_lower = clamp01(alpha * (gamma - delta) / theta);
  return r;
}

EqualBudget equal_budget_lengths(double compute, double layers_t, double width_t,
                                 double layers_o, double width_o) {
  if (compute <= 0.0 || layers_t <= 0.0 || width_t <= 0.0 || layers_o <= 0.0 ||
      width_o <= 0.0)
    throw ParameterError("equal-budget inputs must be positive");
  EqualBudget b;
  b.n_attention = std::sqrt(compute / (layers_t * width_t));
  b.n_linear = compute / (layers_o * width_o);
  return b;
}

}  // namespace memmamba::theory
