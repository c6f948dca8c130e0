#pragma once

#include <span>

#include "memmamba/tensor.hpp"

namespace memmamba {

/// Standard matrix product with a fixed i-j-k loop nest so repeated runs are
/// bit-reproducible. Throws DimensionError on inner-dimension mismatch.
Tensor matmul(const Tensor& a, const Tensor& b);

/// y = M x for M[m x n], x[n].
Tensor matvec(const Tensor& m, const Tensor& x);

/// Mᵀ x without materialising the transpose.
Tensor matvec_t(const Tensor& m, const Tensor& x);

/// Numerically stable softmax over a 1-D tensor: logits are divided by
/// `temperature` and shifted by their maximum before exponentiation.
Tensor softmax(const Tensor& v, double temperature = 1.0);

/// a.b / (|a||b| + 1e-12); exactly 0 when either vector is all-zero.
double cosine_similarity(const Tensor& a, const Tensor& b);

double dot(const Tensor& a, const Tensor& b);
double norm2(const Tensor& a);            // Euclidean / Frobenius norm
double frobenius_norm(const Tensor& a);   // alias for readability on matrices

struct RidgeSolution {
  Tensor w;             // Din x Dout
  double lambda = 0.0;
  double residual_fro = 0.0;
};

/// Solves (XᵀX + λI) W = XᵀY by Cholesky factorisation.
/// Throws SingularityError when the regularised normal matrix is not SPD.
RidgeSolution ridge_fit(const Tensor& x, const Tensor& y, double lambda);

/// Per-block column-wise max over windows of `w` rows. A final partial block
/// (when w does not divide n) is pooled as-is.
Tensor block_max_pool(const Tensor& h, std::size_t w);

/// Broadcast each summary row over its window. `n_rows` clips the final block
/// when the original row count was not a multiple of w; 0 means m*w rows.
Tensor reconstruct_broadcast(const Tensor& s, std::size_t w, std::size_t n_rows = 0);

/// Largest singular value via power iteration on MᵀM
/// (tolerance 1e-10, at most 10000 iterations, deterministic start vector).
double operator_norm(const Tensor& m);

}  // namespace memmamba
