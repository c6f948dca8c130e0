#include "memmamba/numerics.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace memmamba {

namespace {

void require_matrix(const Tensor& t, const char* name) {
  if (t.rank() != 2) throw DimensionError(std::string(name) + " must be rank-2");
}

void require_vector(const Tensor& t, const char* name) {
  if (t.rank() != 1) throw DimensionError(std::string(name) + " must be rank-1");
}

}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b) {
  require_matrix(a, "matmul lhs");
  require_matrix(b, "matmul rhs");
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  if (b.dim(0) != k) throw DimensionError("matmul inner dimensions disagree");
  Tensor out({m, n});
  const double* pa = a.data();
  const double* pb = b.data();
  double* po = out.data();
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      double acc = 0.0;
      for (std::size_t t = 0; t < k; ++t) acc += pa[i * k + t] * pb[t * n + j];
      po[i * n + j] = acc;
    }
  }
  return out;
}

Tensor matvec(const Tensor& m, const Tensor& x) {
  require_matrix(m, "matvec lhs");
  require_vector(x, "matvec rhs");
  const std::size_t r = m.dim(0), c = m.dim(1);
  if (x.dim(0) != c) throw DimensionError("matvec dimensions disagree");
  Tensor out({r});
  const double* pm = m.data();
  const double* px = x.data();
  for (std::size_t i = 0; i < r; ++i) {
    double acc = 0.0;
    for (std::size_t j = 0; j < c; ++j) acc += pm[i * c + j] * px[j];
    out[i] = acc;
  }
  return out;
}

Tensor matvec_t(const Tensor& m, const Tensor& x) {
  require_matrix(m, "matvec_t lhs");
  require_vector(x, "matvec_t rhs");
  const std::size_t r = m.dim(0), c = m.dim(1);
  if (x.dim(0) != r) throw DimensionError("matvec_t dimensions disagree");
  Tensor out({c});
  const double* pm = m.data();
  const double* px = x.data();
  for (std::size_t j = 0; j < c; ++j) {
    double acc = 0.0;
    for (std::size_t i = 0; i < r; ++i) acc += pm[i * c + j] * px[i];
    out[j] = acc;
  }
  return out;
}

Tensor softmax(const Tensor& v, double temperature) {
  require_vector(v, "softmax input");
  if (v.size() == 0) throw DimensionError("softmax of empty vector");
  if (!(temperature > 0.0)) throw ParameterError("softmax temperature must be positive");
  Tensor out({v.size()});
  double mx = v[0] / temperature;
  for (std::size_t i = 1; i < v.size(); ++i) mx = std::max(mx, v[i] / temperature);
  double sum = 0.0;
  for (std::size_t i = 0; i < v.size(); ++i) {
    out[i] = std::exp(v[i] / temperature - mx);
    sum += out[i];
  }
  for (std::size_t i = 0; i < v.size(); ++i) out[i] /= sum;
  return out;
}

double dot(const Tensor& a, const Tensor& b) {
  if (a.size() != b.size()) throw DimensionError("dot length mismatch");
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) acc += a[i] * b[i];
  return acc;
}

double norm2(const Tensor& a) {
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) acc += a[i] * a[i];
  return std::sqrt(acc);
}

double frobenius_norm(const Tensor& a) { return norm2(a); }

double cosine_similarity(const Tensor& a, const Tensor& b) {
  require_vector(a, "cosine lhs");
  require_vector(b, "cosine rhs");
  if (a.size() != b.size()) throw DimensionError("cosine length mismatch");
  if (a.size() == 0) throw DimensionError("cosine of empty vectors");
  return dot(a, b) / (norm2(a) * norm2(b) + 1e-12);
}

RidgeSolution ridge_fit(const Tensor& x, const Tensor& y, double lambda) {
  require_matrix(x, "ridge X");
  require_matrix(y, "ridge Y");
  if (x.dim(0) != y.dim(0)) throw DimensionError("ridge row counts disagree");
  if (lambda < 0.0) throw ParameterError("ridge lambda must be non-negative");
  const std::size_t n = x.dim(0), din = x.dim(1), dout = y.dim(1);

  // G = XᵀX + λI, rhs = XᵀY
  Tensor g({din, din});
  for (std::size_t i = 0; i < din; ++i)
    for (std::size_t j = 0; j < din; ++j) {
      double acc = 0.0;
      for (std::size_t r = 0; r < n; ++r) acc += x.at2(r, i) * x.at2(r, j);
      g.at2(i, j) = acc + (i == j ? lambda : 0.0);
    }
  Tensor rhs({din, dout});
  for (std::size_t i = 0; i < din; ++i)
    for (std::size_t j = 0; j < dout; ++j) {
      double acc = 0.0;
      for (std::size_t r = 0; r < n; ++r) acc += x.at2(r, i) * y.at2(r, j);
      rhs.at2(i, j) = acc;
    }

  // Cholesky G = LLᵀ
  Tensor l({din, din});
  for (std::size_t i = 0; i < din; ++i) {
    for (std::size_t j = 0; j <= i; ++j) {
      double acc = g.at2(i, j);
      for (std::size_t t = 0; t < j; ++t) acc -= l.at2(i, t) * l.at2(j, t);
      if (i == j) {
        if (!(acc > 0.0))
          throw SingularityError("ridge system singular; increase lambda");
        l.at2(i, i) = std::sqrt(acc);
      } else {
        l.at2(i, j) = acc / l.at2(j, j);
      }
    }
  }

  // Solve L z = rhs, then Lᵀ w = z, column by column.
  Tensor w({din, dout});
  std::vector<double> z(din);
  for (std::size_t col = 0; col < dout; ++col) {
    for (std::size_t i = 0; i < din; ++i) {
      double acc = rhs.at2(i, col);
      for (std::size_t t = 0; t < i; ++t) acc -= l.at2(i, t) * z[t];
      z[i] = acc / l.at2(i, i);
    }
    for (std::size_t ii = din; ii-- > 0;) {
      double acc = z[ii];
      for (std::size_t t = ii + 1; t < din; ++t) acc -= l.at2(t, ii) * w.at2(t, col);
      w.at2(ii, col) = acc / l.at2(ii, ii);
    }
  }

  double res = 0.0;
  for (std::size_t r = 0; r < n; ++r)
    for (std::size_t j = 0; j < dout; ++j) {
      double acc = 0.0;
      for (std::size_t t = 0; t < din; ++t) acc += x.at2(r, t) * w.at2(t, j);
      const double d = y.at2(r, j) - acc;
      res += d * d;
    }
  return RidgeSolution{std::move(w), lambda, std::sqrt(res)};
}

Tensor block_max_pool(const Tensor& h, std::size_t w) {
  require_matrix(h, "block_max_pool input");
  if (w == 0) throw ParameterError("pooling window must be positive");
  const std::size_t n = h.dim(0), d = h.dim(1);
  const std::size_t m = (n + w - 1) / w;
  Tensor s({m, d});
  for (std::size_t i = 0; i < m; ++i) {
    const std::size_t lo = i * w, hi = std::min(n, lo + w);
    for (std::size_t k = 0; k < d; ++k) {
      double mx = h.at2(lo, k);
      for (std::size_t j = lo + 1; j < hi; ++j) mx = std::max(mx, h.at2(j, k));
      s.at2(i, k) = mx;
    }
  }
  return s;
}

Tensor reconstruct_broadcast(const Tensor& s, std::size_t w, std::size_t n_rows) {
  require_matrix(s, "reconstruct input");
  if (w == 0) throw ParameterError("pooling window must be positive");
  const std::size_t m = s.dim(0), d = s.dim(1);
  const std::size_t n = n_rows == 0 ? m * w : n_rows;
  if (n > m * w || n <= (m - 1) * w)
    throw DimensionError("row count inconsistent with summary/window");
  Tensor h({n, d});
  for (std::size_t r = 0; r < n; ++r) {
    const std::size_t i = r / w;
    for (std::size_t k = 0; k < d; ++k) h.at2(r, k) = s.at2(i, k);
  }
  return h;
}

double operator_norm(const Tensor& m) {
  require_matrix(m, "operator_norm input");
  const std::size_t c = m.dim(1);
  // Fixed seeded start so results are reproducible.
  Tensor v({c});
  std::uint64_t state = 0x9e3779b97f4a7c15ull;
  for (std::size_t i = 0; i < c; ++i) {
    state ^= state << 13;
    state ^= state >> 7;
    state ^= state << 17;
    v[i] = 0.5 + static_cast<double>(state % 1000) / 1000.0;
  }
  double nv = norm2(v);
  for (std::size_t i = 0; i < c; ++i) v[i] /= nv;

  double sigma = 0.0;
  for (int it = 0; it < 10000; ++it) {
    Tensor mv = matvec(m, v);
    Tensor u = matvec_t(m, mv);
    double nu = norm2(u);
    if (nu == 0.0) return 0.0;
    for (std::size_t i = 0; i < c; ++i) u[i] /= nu;
    double next = norm2(matvec(m, u));
    v = std::move(u);
    if (std::abs(next - sigma) <= 1e-10 * std::max(1.0, next)) return next;
    sigma = next;
  }
  return sigma;
}

}  // namespace memmamba
