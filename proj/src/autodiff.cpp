#include "memmamba/autodiff.hpp"

#include <cmath>

#include "memmamba/kernels.hpp"
#include "memmamba/numerics.hpp"

namespace memmamba::ad {

std::size_t Graph::check(Var v) const {
  if (!v.valid() || static_cast<std::size_t>(v.id) >= nodes_.size())
    throw ParameterError("invalid graph handle");
  return static_cast<std::size_t>(v.id);
}

Var Graph::push(Node n) {
  nodes_.push_back(std::move(n));
  return Var{static_cast<std::int32_t>(nodes_.size() - 1)};
}

Tensor& Graph::grad_buf(std::int32_t id) {
  Node& n = nodes_[static_cast<std::size_t>(id)];
  if (n.grad.empty()) n.grad = Tensor(n.val.shape());
  return n.grad;
}

const Tensor& Graph::grad(Var v) {
  return grad_buf(static_cast<std::int32_t>(check(v)));
}

void Graph::clear() {
  nodes_.clear();
  ext_.clear();
  aux_.clear();
  iaux_.clear();
}

Var Graph::leaf(Tensor value, bool requires_grad) {
  Node n;
  n.op = Op::Leaf;
  n.rg = requires_grad;
  n.val = std::move(value);
  return push(std::move(n));
}

Var Graph::add(Var a, Var b) {
  const Tensor& ta = nodes_[check(a)].val;
  const Tensor& tb = nodes_[check(b)].val;
  if (ta.size() != tb.size()) throw DimensionError("add size mismatch");
  Node n;
  n.op = Op::Add;
  n.a = a.id;
  n.b = b.id;
  n.rg = rg_of(a) || rg_of(b);
  Tensor out(ta.shape());
  for (std::size_t i = 0; i < ta.size(); ++i) out[i] = ta[i] + tb[i];
  n.val = std::move(out);
  return push(std::move(n));
}

Var Graph::mul(Var a, Var b) {
  const Tensor& ta = nodes_[check(a)].val;
  const Tensor& tb = nodes_[check(b)].val;
  if (ta.size() != tb.size()) throw DimensionError("mul size mismatch");
  Node n;
  n.op = Op::Mul;
  n.a = a.id;
  n.b = b.id;
  n.rg = rg_of(a) || rg_of(b);
  Tensor out(ta.shape());
  for (std::size_t i = 0; i < ta.size(); ++i) out[i] = ta[i] * tb[i];
  n.val = std::move(out);
  return push(std::move(n));
}

Var Graph::scale(Var a, double c) {
  const Tensor& ta = nodes_[check(a)].val;
  Node n;
  n.op = Op::Scale;
  n.a = a.id;
  n.rg = rg_of(a);
  n.aux_ofs = static_cast<std::uint32_t>(aux_.size());
  n.aux_len = 1;
  aux_.push_back(c);
  Tensor out(ta.shape());
  for (std::size_t i = 0; i < ta.size(); ++i) out[i] = ta[i] * c;
  n.val = std::move(out);
  return push(std::move(n));
}

Var Graph::mul_scalar(Var v, Var s) {
  const Tensor& tv = nodes_[check(v)].val;
  const Tensor& ts = nodes_[check(s)].val;
  if (ts.size() != 1) throw DimensionError("mul_scalar needs a length-1 scalar");
  Node n;
  n.op = Op::MulScalar;
  n.a = v.id;
  n.b = s.id;
  n.rg = rg_of(v) || rg_of(s);
  Tensor out(tv.shape());
  for (std::size_t i = 0; i < tv.size(); ++i) out[i] = tv[i] * ts[0];
  n.val = std::move(out);
  return push(std::move(n));
}

Var Graph::matvec(Var m, Var x) {
  const Tensor& tm = nodes_[check(m)].val;
  const Tensor& tx = nodes_[check(x)].val;
  Node n;
  n.op = Op::MatVec;
  n.a = m.id;
  n.b = x.id;
  n.rg = rg_of(m) || rg_of(x);
  n.val = memmamba::matvec(tm, tx);
  return push(std::move(n));
}

Var Graph::dot(Var a, Var b) {
  const Tensor& ta = nodes_[check(a)].val;
  const Tensor& tb = nodes_[check(b)].val;
  Node n;
  n.op = Op::Dot;
  n.a = a.id;
  n.b = b.id;
  n.rg = rg_of(a) || rg_of(b);
  n.val = Tensor::vec({memmamba::dot(ta, tb)});
  return push(std::move(n));
}

Var Graph::sigmoid(Var a) {
  const Tensor& ta = nodes_[check(a)].val;
  Node n;
  n.op = Op::Sigmoid;
  n.a = a.id;
  n.rg = rg_of(a);
  Tensor out;
  kern::sigmoid(ta, out);
  n.val = std::move(out);
  return push(std::move(n));
}

Var Graph::stable_decay(Var raw) {
  const Tensor& tr = nodes_[check(raw)].val;
  Node n;
  n.op = Op::StableDecay;
  n.a = raw.id;
  n.rg = rg_of(raw);
  Tensor out;
  std::vector<double> sig;
  kern::stable_decay(tr, out, sig);
  n.aux_ofs = static_cast<std::uint32_t>(aux_.size());
  n.aux_len = static_cast<std::uint32_t>(sig.size());
  aux_.insert(aux_.end(), sig.begin(), sig.end());
  n.val = std::move(out);
  return push(std::move(n));
}

Var Graph::attend(Var q, std::span<const Var> keys, std::span<const Var> values,
                  double scale, double* weight_sum) {
  if (keys.empty() || keys.size() != values.size())
    throw DimensionError("attend needs matching non-empty key/value lists");
  const std::size_t k = keys.size();
  std::vector<const Tensor*> kp(k), vp(k);
  bool rg = rg_of(q);
  for (std::size_t i = 0; i < k; ++i) {
    kp[i] = &nodes_[check(keys[i])].val;
    vp[i] = &nodes_[check(values[i])].val;
    rg = rg || rg_of(keys[i]) || rg_of(values[i]);
  }
  Tensor out;
  std::vector<double> w;
  kern::attend(nodes_[check(q)].val, kp, vp, scale, out, w);
  if (weight_sum) {
    double s = 0.0;
    for (double wi : w) s += wi;
    *weight_sum = s;
  }

  Node n;
  n.op = Op::Attend;
  n.a = q.id;
  n.rg = rg;
  n.ext_ofs = static_cast<std::uint32_t>(ext_.size());
  n.ext_len = static_cast<std::uint32_t>(2 * k);
  for (Var kv : keys) ext_.push_back(kv.id);
  for (Var vv : values) ext_.push_back(vv.id);
  n.aux_ofs = static_cast<std::uint32_t>(aux_.size());
  n.aux_len = static_cast<std::uint32_t>(1 + k);
  aux_.push_back(scale);
  aux_.insert(aux_.end(), w.begin(), w.end());
  n.val = std::move(out);
  return push(std::move(n));
}

Var Graph::group_max(Var x, std::size_t out_dim, DecisionTrace* dt) {
  const Tensor& tx = nodes_[check(x)].val;
  Tensor out;
  std::vector<std::int32_t> arg;
  kern::group_max(tx, out_dim, dt, out, arg);
  Node n;
  n.op = Op::GroupMax;
  n.a = x.id;
  n.rg = rg_of(x);
  n.iaux_ofs = static_cast<std::uint32_t>(iaux_.size());
  n.iaux_len = static_cast<std::uint32_t>(arg.size());
  iaux_.insert(iaux_.end(), arg.begin(), arg.end());
  n.val = std::move(out);
  return push(std::move(n));
}

Var Graph::group_mean(Var x, std::size_t out_dim) {
  const Tensor& tx = nodes_[check(x)].val;
  Tensor out;
  kern::group_mean(tx, out_dim, out);
  Node n;
  n.op = Op::GroupMean;
  n.a = x.id;
  n.rg = rg_of(x);
  n.val = std::move(out);
  return push(std::move(n));
}

Var Graph::max_list(std::span<const Var> xs, DecisionTrace* dt) {
  if (xs.empty()) throw DimensionError("max_list of empty list");
  std::vector<const Tensor*> ptrs(xs.size());
  bool rg = false;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    ptrs[i] = &nodes_[check(xs[i])].val;
    rg = rg || rg_of(xs[i]);
  }
  Tensor out;
  std::vector<std::int32_t> arg;
  kern::max_list(ptrs, dt, out, arg);
  Node n;
  n.op = Op::MaxList;
  n.rg = rg;
  n.ext_ofs = static_cast<std::uint32_t>(ext_.size());
  n.ext_len = static_cast<std::uint32_t>(xs.size());
  for (Var v : xs) ext_.push_back(v.id);
  n.iaux_ofs = static_cast<std::uint32_t>(iaux_.size());
  n.iaux_len = static_cast<std::uint32_t>(arg.size());
  iaux_.insert(iaux_.end(), arg.begin(), arg.end());
  n.val = std::move(out);
  return push(std::move(n));
}

Var Graph::mean_list(std::span<const Var> xs) {
  if (xs.empty()) throw DimensionError("mean_list of empty list");
  std::vector<const Tensor*> ptrs(xs.size());
  bool rg = false;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    ptrs[i] = &nodes_[check(xs[i])].val;
    rg = rg || rg_of(xs[i]);
  }
  Tensor out;
  kern::mean_list(ptrs, out);
  Node n;
  n.op = Op::MeanList;
  n.rg = rg;
  n.ext_ofs = static_cast<std::uint32_t>(ext_.size());
  n.ext_len = static_cast<std::uint32_t>(xs.size());
  for (Var v : xs) ext_.push_back(v.id);
  n.val = std::move(out);
  return push(std::move(n));
}

Var Graph::row(Var m, std::size_t i) {
  const Tensor& tm = nodes_[check(m)].val;
  if (tm.rank() != 2) throw DimensionError("row of non-matrix");
  if (i >= tm.dim(0)) throw InputError("row index out of range");
  const std::size_t c = tm.dim(1);
  Tensor out({c});
  for (std::size_t j = 0; j < c; ++j) out[j] = tm.at2(i, j);
  Node n;
  n.op = Op::Row;
  n.a = m.id;
  n.rg = rg_of(m);
  n.iaux_ofs = static_cast<std::uint32_t>(iaux_.size());
  n.iaux_len = 1;
  iaux_.push_back(static_cast<std::int32_t>(i));
  n.val = std::move(out);
  return push(std::move(n));
}

Var Graph::nll(Var logits, int target) {
  const Tensor& tl = nodes_[check(logits)].val;
  std::vector<double> p;
  const double loss = kern::nll(tl, target, &p);
  Node n;
  n.op = Op::Nll;
  n.a = logits.id;
  n.rg = rg_of(logits);
  n.iaux_ofs = static_cast<std::uint32_t>(iaux_.size());
  n.iaux_len = 1;
  iaux_.push_back(target);
  n.aux_ofs = static_cast<std::uint32_t>(aux_.size());
  n.aux_len = static_cast<std::uint32_t>(p.size());
  aux_.insert(aux_.end(), p.begin(), p.end());
  n.val = Tensor::vec({loss});
  return push(std::move(n));
}

Var Graph::mean_scalars(std::span<const Var> xs) {
  if (xs.empty()) throw DimensionError("mean_scalars of empty list");
  double acc = 0.0;
  bool rg = false;
  for (Var v : xs) {
    const Tensor& t = nodes_[check(v)].val;
    if (t.size() != 1) throw DimensionError("mean_scalars input must be scalar");
    acc += t[0];
    rg = rg || rg_of(v);
  }
  Node n;
  n.op = Op::MeanScalars;
  n.rg = rg;
  n.ext_ofs = static_cast<std::uint32_t>(ext_.size());
  n.ext_len = static_cast<std::uint32_t>(xs.size());
  for (Var v : xs) ext_.push_back(v.id);
  n.val = Tensor::vec({acc / static_cast<double>(xs.size())});
  return push(std::move(n));
}

void Graph::backward(Var root) {
  Node& r = nodes_[check(root)];
  if (r.val.size() != 1) throw DimensionError("backward root must be scalar");
  for (Node& n : nodes_) n.grad = Tensor();
  grad_buf(root.id) = Tensor::vec({1.0});
  for (std::size_t i = nodes_.size(); i-- > 0;) {
    Node& n = nodes_[i];
    if (!n.rg || n.grad.empty() || n.op == Op::Leaf) continue;
    backward_node(i);
  }
}

void Graph::backward_node(std::size_t i) {
  Node& n = nodes_[i];
  const Tensor& g = n.grad;
  auto accum = [&](std::int32_t id, auto&& fn) {
    if (id < 0) return;
    Node& src = nodes_[static_cast<std::size_t>(id)];
    if (!src.rg) return;
    fn(grad_buf(id), src.val);
  };

  switch (n.op) {
    case Op::Add:
      accum(n.a, [&](Tensor& ga, const Tensor&) {
        for (std::size_t j = 0; j < g.size(); ++j) ga[j] += g[j];
      });
      accum(n.b, [&](Tensor& gb, const Tensor&) {
        for (std::size_t j = 0; j < g.size(); ++j) gb[j] += g[j];
      });
      break;
    case Op::Mul: {
      const Tensor& va = nodes_[static_cast<std::size_t>(n.a)].val;
      const Tensor& vb = nodes_[static_cast<std::size_t>(n.b)].val;
      accum(n.a, [&](Tensor& ga, const Tensor&) {
        for (std::size_t j = 0; j < g.size(); ++j) ga[j] += g[j] * vb[j];
      });
      accum(n.b, [&](Tensor& gb, const Tensor&) {
        for (std::size_t j = 0; j < g.size(); ++j) gb[j] += g[j] * va[j];
      });
      break;
    }
    case Op::Scale: {
      const double c = aux_[n.aux_ofs];
      accum(n.a, [&](Tensor& ga, const Tensor&) {
        for (std::size_t j = 0; j < g.size(); ++j) ga[j] += g[j] * c;
      });
      break;
    }
    case Op::MulScalar: {
      const Tensor& vv = nodes_[static_cast<std::size_t>(n.a)].val;
      const double s = nodes_[static_cast<std::size_t>(n.b)].val[0];
      accum(n.a, [&](Tensor& ga, const Tensor&) {
        for (std::size_t j = 0; j < g.size(); ++j) ga[j] += g[j] * s;
      });
      accum(n.b, [&](Tensor& gs, const Tensor&) {
        double acc = 0.0;
        for (std::size_t j = 0; j < g.size(); ++j) acc += g[j] * vv[j];
        gs[0] += acc;
      });
      break;
    }
    case Op::MatVec: {
      const Tensor& vm = nodes_[static_cast<std::size_t>(n.a)].val;
      const Tensor& vx = nodes_[static_cast<std::size_t>(n.b)].val;
      const std::size_t r = vm.dim(0), c = vm.dim(1);
      accum(n.a, [&](Tensor& gm, const Tensor&) {
        for (std::size_t ii = 0; ii < r; ++ii)
          for (std::size_t jj = 0; jj < c; ++jj) gm[ii * c + jj] += g[ii] * vx[jj];
      });
      accum(n.b, [&](Tensor& gx, const Tensor&) {
        for (std::size_t jj = 0; jj < c; ++jj) {
          double acc = 0.0;
          for (std::size_t ii = 0; ii < r; ++ii) acc += vm[ii * c + jj] * g[ii];
          gx[jj] += acc;
        }
      });
      break;
    }
    case Op::Dot: {
      const Tensor& va = nodes_[static_cast<std::size_t>(n.a)].val;
      const Tensor& vb = nodes_[static_cast<std::size_t>(n.b)].val;
      const double g0 = g[0];
      accum(n.a, [&](Tensor& ga, const Tensor&) {
        for (std::size_t j = 0; j < va.size(); ++j) ga[j] += g0 * vb[j];
      });
      accum(n.b, [&](Tensor& gb, const Tensor&) {
        for (std::size_t j = 0; j < vb.size(); ++j) gb[j] += g0 * va[j];
      });
      break;
    }
    case Op::Sigmoid: {
      const Tensor& y = n.val;
      accum(n.a, [&](Tensor& ga, const Tensor&) {
        for (std::size_t j = 0; j < g.size(); ++j) ga[j] += g[j] * y[j] * (1.0 - y[j]);
      });
      break;
    }
    case Op::StableDecay: {
      const Tensor& y = n.val;
      accum(n.a, [&](Tensor& ga, const Tensor&) {
        for (std::size_t j = 0; j < g.size(); ++j)
          ga[j] += -g[j] * y[j] * aux_[n.aux_ofs + j];
      });
      break;
    }
    case Op::Attend: {
      const std::size_t k = n.ext_len / 2;
      const double sc = aux_[n.aux_ofs];
      const double* w = &aux_[n.aux_ofs + 1];
      const Tensor& vq = nodes_[static_cast<std::size_t>(n.a)].val;
      // a_i = g · v_i ; dz_i = w_i (a_i - Σ w_j a_j)
      std::vector<double> a(k);
      double common = 0.0;
      for (std::size_t ii = 0; ii < k; ++ii) {
        const Tensor& vv = nodes_[static_cast<std::size_t>(ext_[n.ext_ofs + k + ii])].val;
        double acc = 0.0;
        for (std::size_t j = 0; j < g.size(); ++j) acc += g[j] * vv[j];
        a[ii] = acc;
        common += w[ii] * acc;
      }
      for (std::size_t ii = 0; ii < k; ++ii) {
        const std::int32_t kid = ext_[n.ext_ofs + ii];
        const std::int32_t vid = ext_[n.ext_ofs + k + ii];
        const double dz = w[ii] * (a[ii] - common) * sc;
        const Tensor& vk = nodes_[static_cast<std::size_t>(kid)].val;
        accum(vid, [&](Tensor& gv, const Tensor&) {
          for (std::size_t j = 0; j < g.size(); ++j) gv[j] += w[ii] * g[j];
        });
        accum(kid, [&](Tensor& gk, const Tensor&) {
          for (std::size_t j = 0; j < vq.size(); ++j) gk[j] += dz * vq[j];
        });
        accum(n.a, [&](Tensor& gq, const Tensor&) {
          for (std::size_t j = 0; j < vq.size(); ++j) gq[j] += dz * vk[j];
        });
      }
      break;
    }
    case Op::GroupMax:
      accum(n.a, [&](Tensor& ga, const Tensor&) {
        for (std::size_t j = 0; j < g.size(); ++j)
          ga[static_cast<std::size_t>(iaux_[n.iaux_ofs + j])] += g[j];
      });
      break;
    case Op::GroupMean: {
      const std::size_t gs = nodes_[static_cast<std::size_t>(n.a)].val.size() / g.size();
      accum(n.a, [&](Tensor& ga, const Tensor&) {
        const double inv = 1.0 / static_cast<double>(gs);
        for (std::size_t j = 0; j < ga.size(); ++j) ga[j] += g[j / gs] * inv;
      });
      break;
    }
    case Op::MaxList:
      for (std::size_t j = 0; j < g.size(); ++j) {
        const std::int32_t src = ext_[n.ext_ofs + static_cast<std::uint32_t>(
                                                      iaux_[n.iaux_ofs + j])];
        accum(src, [&](Tensor& gx, const Tensor&) { gx[j] += g[j]; });
      }
      break;
    case Op::MeanList: {
      const double inv = 1.0 / static_cast<double>(n.ext_len);
      for (std::uint32_t ii = 0; ii < n.ext_len; ++ii)
        accum(ext_[n.ext_ofs + ii], [&](Tensor& gx, const Tensor&) {
          for (std::size_t j = 0; j < g.size(); ++j) gx[j] += g[j] * inv;
        });
      break;
    }
    case Op::Row: {
      const std::size_t ri = static_cast<std::size_t>(iaux_[n.iaux_ofs]);
      accum(n.a, [&](Tensor& gm, const Tensor& vm) {
        const std::size_t c = vm.dim(1);
        for (std::size_t j = 0; j < c; ++j) gm[ri * c + j] += g[j];
      });
      break;
    }
    case Op::Nll: {
      const int target = iaux_[n.iaux_ofs];
      const double g0 = g[0];
      accum(n.a, [&](Tensor& gl, const Tensor&) {
        for (std::size_t j = 0; j < gl.size(); ++j) {
          double d = aux_[n.aux_ofs + j];
          if (j == static_cast<std::size_t>(target)) d -= 1.0;
          gl[j] += g0 * d;
        }
      });
      break;
    }
    case Op::MeanScalars: {
      const double share = g[0] / static_cast<double>(n.ext_len);
      for (std::uint32_t ii = 0; ii < n.ext_len; ++ii)
        accum(ext_[n.ext_ofs + ii],
              [&](Tensor& gx, const Tensor&) { gx[0] += share; });
      break;
    }
    case Op::Leaf:
      break;
  }
}

}  // namespace memmamba::ad
