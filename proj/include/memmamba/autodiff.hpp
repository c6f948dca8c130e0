#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "memmamba/decisions.hpp"
#include "memmamba/tensor.hpp"

namespace memmamba::ad {

/// Handle into a Graph; cheap to copy, invalid when default-constructed.
struct Var {
  std::int32_t id = -1;
  bool valid() const { return id >= 0; }
};

/// Tape-based reverse-mode differentiation over Tensor-valued nodes.
///
/// The op set is exactly what the sequence model needs; nodes are created in
/// topological order, so backward() is a single reverse sweep. One Graph per
/// forward/backward pass; clear() recycles the storage.
class Graph {
 public:
  Var leaf(Tensor value, bool requires_grad);

  Var add(Var a, Var b);
  Var mul(Var a, Var b);                  // elementwise
  Var scale(Var a, double c);
  Var mul_scalar(Var v, Var s);           // v * s[0]
  Var matvec(Var m, Var x);
  Var dot(Var a, Var b);                  // -> [1]
  Var sigmoid(Var a);
  Var stable_decay(Var raw);              // exp(-softplus(raw)) elementwise

  /// Single-query attention over pooled entries: out = Σ softmax(q·kᵢ·scale)ᵢ vᵢ.
  /// Softmax weights are kept for the backward pass; their sum is written to
  /// weight_sum when given.
  Var attend(Var q, std::span<const Var> keys, std::span<const Var> values,
             double scale, double* weight_sum = nullptr);

  /// Contiguous-group max / mean reduction of a vector to out_dim entries.
  /// Argmax picks go through the decision stream when one is supplied.
  Var group_max(Var x, std::size_t out_dim, DecisionTrace* dt = nullptr);
  Var group_mean(Var x, std::size_t out_dim);

  /// Elementwise max / mean across a list of equally shaped vectors.
  Var max_list(std::span<const Var> xs, DecisionTrace* dt = nullptr);
  Var mean_list(std::span<const Var> xs);

  Var row(Var m, std::size_t i);          // view of matrix row, grads accumulate back
  Var nll(Var logits, int target);        // -log softmax(logits)[target] -> [1]
  Var mean_scalars(std::span<const Var> xs);

  const Tensor& value(Var v) const { return nodes_[check(v)].val; }
  /// Gradient of the last backward() root w.r.t. v (zero tensor if untouched).
  const Tensor& grad(Var v);

  void backward(Var root);
  void clear();
  std::size_t node_count() const { return nodes_.size(); }

 private:
  enum class Op : std::uint8_t {
    Leaf, Add, Mul, Scale, MulScalar, MatVec, Dot, Sigmoid, StableDecay,
    Attend, GroupMax, GroupMean, MaxList, MeanList, Row, Nll, MeanScalars,
  };

  struct Node {
    Op op = Op::Leaf;
    std::int32_t a = -1, b = -1;
    std::uint32_t ext_ofs = 0, ext_len = 0;    // extra inputs
    std::uint32_t aux_ofs = 0, aux_len = 0;    // doubles
    std::uint32_t iaux_ofs = 0, iaux_len = 0;  // ints
    bool rg = false;
    Tensor val;
    Tensor grad;
  };

  std::size_t check(Var v) const;
  Var push(Node n);
  bool rg_of(Var v) const { return nodes_[check(v)].rg; }
  Tensor& grad_buf(std::int32_t id);
  void backward_node(std::size_t i);

  std::vector<Node> nodes_;
  std::vector<std::int32_t> ext_;
  std::vector<double> aux_;
  std::vector<std::int32_t> iaux_;
  Tensor zero_;
};

}  // namespace memmamba::ad
