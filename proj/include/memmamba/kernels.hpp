#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "memmamba/decisions.hpp"
#include "memmamba/tensor.hpp"

namespace memmamba::kern {

// Value-level kernels shared verbatim by the inference engine and the tape,
// so both paths perform identical arithmetic in identical order.

/// out = Σ softmax(scale·q·kᵢ)ᵢ vᵢ. `weights` receives the softmax vector.
void attend(const Tensor& q, std::span<const Tensor* const> keys,
            std::span<const Tensor* const> vals, double scale, Tensor& out,
            std::vector<double>& weights);

/// -log softmax(logits)[target]; fills `probs` with the softmax when given.
double nll(const Tensor& logits, int target, std::vector<double>* probs);

/// Contiguous-group max of x down to out_dim entries; argmax indices go
/// through the decision stream when present (and are recorded into `arg`).
void group_max(const Tensor& x, std::size_t out_dim, DecisionTrace* dt, Tensor& out,
               std::vector<std::int32_t>& arg);
void group_mean(const Tensor& x, std::size_t out_dim, Tensor& out);

/// Elementwise max / mean across equally shaped vectors.
void max_list(std::span<const Tensor* const> xs, DecisionTrace* dt, Tensor& out,
              std::vector<std::int32_t>& arg);
void mean_list(std::span<const Tensor* const> xs, Tensor& out);

void sigmoid(const Tensor& x, Tensor& out);
/// a = exp(-softplus(raw)); `sig` receives σ(raw) for the backward pass.
void stable_decay(const Tensor& raw, Tensor& out, std::vector<double>& sig);

}  // namespace memmamba::kern
