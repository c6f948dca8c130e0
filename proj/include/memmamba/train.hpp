#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <vector>

#include "memmamba/model.hpp"
#include "memmamba/tasks.hpp"
#include "memmamba/tensor.hpp"

namespace memmamba::train {

struct TrainConfig {
  double lr = 1e-4;
  double weight_decay = 0.1;
  double clip_norm = 1.0;
  std::size_t accum_steps = 4;
  std::size_t steps = 0;
  std::uint64_t seed = 123;
  std::size_t context_len = 128;

  void validate() const;
};

/// Mean negative log-likelihood of `targets` under row-wise softmax(logits).
double cross_entropy(const Tensor& logits, std::span<const int> targets);

/// Reverse-mode gradients of the masked sequence loss for every parameter,
/// in registry order. Throws NumericalError naming the parameter when a
/// gradient is non-finite.
struct BackwardResult {
  double loss = 0.0;
  std::vector<Tensor> grads;
};
BackwardResult backward(const model::ModelConfig& cfg, const model::Weights& w,
                        std::span<const int> tokens, std::span<const int> targets,
                        DecisionTrace* decisions = nullptr);

struct AdamState {
  std::vector<Tensor> m, v;
  std::size_t t = 0;
};

/// AdamW step: global-norm clips grads, applies decoupled weight decay, then
/// bias-corrected Adam moments (beta1=0.9, beta2=0.999, eps=1e-8).
void optimizer_step(model::Weights& w, const std::vector<Tensor>& grads,
                    const TrainConfig& cfg, AdamState& state);

struct StepLog {
  std::size_t step;
  double loss;
  double grad_norm;
  double lr;
};

struct TrainResult {
  model::Weights weights;
  std::vector<StepLog> log;
};

/// Gradient-accumulated AdamW training on samples drawn from `task`,
/// deterministic per cfg.seed. Step logs optionally stream to a CSV.
/// Aborts with NumericalError (naming the step) if the loss diverges.
TrainResult train(const model::ModelConfig& mcfg, const TrainConfig& tcfg,
                  const tasks::TaskSpec& task,
                  const std::optional<std::filesystem::path>& log_csv = std::nullopt,
                  const std::function<void(const StepLog&)>& on_step = nullptr);

/// exp(mean next-token cross-entropy) over non-overlapping context windows.
double perplexity(const model::ModelConfig& cfg, const model::Weights& w,
                  std::span<const int> corpus, std::size_t context_len);

}  // namespace memmamba::train
