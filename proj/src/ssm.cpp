#include "memmamba/ssm.hpp"

#include <cmath>

namespace memmamba::ssm {

void SSMParams::validate() const {
  if (a_diag.rank() != 1 || a_diag.dim(0) != state_dim)
    throw DimensionError("a_diag must be [state_dim]");
  if (b_in.rank() != 2 || b_in.dim(0) != state_dim || b_in.dim(1) != width)
    throw DimensionError("b_in must be [state_dim x width]");
  if (c_out.rank() != 2 || c_out.dim(0) != width || c_out.dim(1) != state_dim)
    throw DimensionError("c_out must be [width x state_dim]");
  for (std::size_t i = 0; i < a_diag.size(); ++i)
    if (!(std::abs(a_diag[i]) < 1.0))
      throw InstabilityError("state transition entries must satisfy |a| < 1");
  if (!a_diag.all_finite() || !b_in.all_finite() || !c_out.all_finite())
    throw NumericalError("non-finite SSM parameter");
}

double softplus(double x) {
  // log(1 + e^x) without overflow for large |x|.
  return std::log1p(std::exp(-std::abs(x))) + std::max(x, 0.0);
}

Tensor make_stable_A(const Tensor& raw) {
  Tensor a({raw.size()});
  // Floor softplus so very negative inputs cannot round the decay up to 1.0.
  for (std::size_t i = 0; i < raw.size(); ++i)
    a[i] = std::exp(-std::max(softplus(raw[i]), 1e-12));
  return a;
}

std::pair<ScanState, Tensor> ssm_step(const SSMParams& p, const ScanState& state,
                                      const Tensor& x) {
  if (state.h.size() != p.state_dim) throw DimensionError("state dimension mismatch");
  if (x.size() != p.width) throw DimensionError("input dimension mismatch");
  Tensor bx = matvec(p.b_in, x);
  Tensor h2({p.state_dim});
  for (std::size_t i = 0; i < p.state_dim; ++i) h2[i] = p.a_diag[i] * state.h[i] + bx[i];
  Tensor y = matvec(p.c_out, h2);
  return {ScanState{std::move(h2), state.t + 1}, std::move(y)};
}

ScanResult ssm_scan(const SSMParams& p, const Tensor& x_rows, const Tensor& h0) {
  if (x_rows.rank() != 2 || x_rows.dim(1) != p.width)
    throw DimensionError("scan input must be [n x width]");
  const std::size_t n = x_rows.dim(0);
  ScanResult out{Tensor({n, p.state_dim}), Tensor({n, p.width})};
  ScanState st{h0, 0};
  Tensor x({p.width});
  for (std::size_t t = 0; t < n; ++t) {
    for (std::size_t j = 0; j < p.width; ++j) x[j] = x_rows.at2(t, j);
    auto [next, y] = ssm_step(p, st, x);
    for (std::size_t i = 0; i < p.state_dim; ++i) out.h_rows.at2(t, i) = next.h[i];
    for (std::size_t j = 0; j < p.width; ++j) out.y_rows.at2(t, j) = y[j];
    st = std::move(next);
  }
  return out;
}

double contribution_bound(double a_norm, double b_norm, double x_norm, std::size_t k) {
  if (!(a_norm > 0.0 && a_norm < 1.0))
    throw ParameterError("contribution bound needs a_norm in (0,1)");
  return std::pow(a_norm, static_cast<double>(k)) * b_norm * x_norm;
}

double empirical_contribution(const SSMParams& p, std::size_t k, const Tensor& probe) {
  if (probe.size() != p.width) throw DimensionError("probe dimension mismatch");
  // Probe enters at step 0; k further zero-input steps decay it.
  Tensor h = matvec(p.b_in, probe);
  for (std::size_t s = 0; s < k; ++s)
    for (std::size_t i = 0; i < p.state_dim; ++i) h[i] = p.a_diag[i] * h[i];
  return norm2(h);
}

}  // namespace memmamba::ssm
