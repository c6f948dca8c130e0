#pragma once

#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "memmamba/autodiff.hpp"
#include "memmamba/decisions.hpp"
#include "memmamba/tensor.hpp"

namespace memmamba::model {

enum class PoolPolicy { FIFO, PRIORITY };
enum class Fusion { GATED, RESIDUAL, ELEMENTWISE, CONV1D, WEIGHTED };
enum class Summarizer { PROJ, MAXPOOL, MEANPOOL };

const char* to_string(PoolPolicy p);
const char* to_string(Fusion f);
const char* to_string(Summarizer s);
PoolPolicy pool_policy_from(std::string_view s);
Fusion fusion_from(std::string_view s);
Summarizer summarizer_from(std::string_view s);

struct ModelConfig {
  std::size_t layers = 2;        // stacked block layers
  std::size_t width = 32;        // model width d
  std::size_t state_dim = 16;    // SSM state dimension
  std::size_t summary_dim = 64;  // note vector dimension
  std::size_t pool_capacity = 50;
  double tau1 = 0.5;             // note-taking threshold
  double tau2 = 0.5;             // forgetting-detection threshold
  std::size_t period = 4;        // cross-layer attention every `period` layers
  std::size_t lookback = 3;      // pools gathered from this many previous layers
  Fusion fusion = Fusion::WEIGHTED;
  double alpha = 0.8;            // weighted-fusion coefficient
  std::size_t vocab = 256;
  std::uint64_t seed = 123;
  PoolPolicy pool_policy = PoolPolicy::FIFO;
  Summarizer summarizer = Summarizer::PROJ;
  std::size_t note_window = 1;   // inputs aggregated per note

  void validate() const;  // throws ParameterError
};

/// Ordered, named parameter registry. Order is fixed at construction and is
/// the contract between gradients, the optimizer, and checkpoints.
struct Weights {
  std::vector<std::string> names;
  std::vector<Tensor> values;
  std::unordered_map<std::string, std::size_t> slots;

  std::size_t add(std::string name, Tensor value);
  Tensor& at(std::string_view name);
  const Tensor& at(std::string_view name) const;
  std::size_t slot(std::string_view name) const;
  std::size_t count() const { return values.size(); }
  std::size_t scalar_count() const;
};

/// Seeded parameter initialisation (sub-seed "init" of cfg.seed).
Weights init_weights(const ModelConfig& cfg);

// ---------------------------------------------------------------------------
// Note pool

struct StateSummary {
  Tensor vec;
  std::size_t layer = 0;
  std::size_t step = 0;
  double score = 0.0;
};

constexpr int kPoolReject = -2;
constexpr int kPoolAppend = -1;

/// Eviction choice for an incoming score: kPoolReject, kPoolAppend, or the
/// index to erase before appending. FIFO erases the oldest entry; PRIORITY
/// erases the lowest-scored one (oldest among ties) and rejects the incoming
/// summary when its score is lowest.
int pool_decide(PoolPolicy policy, std::span<const double> scores, std::size_t capacity,
                double incoming_score);

class StatePool {
 public:
  StatePool(std::size_t capacity, PoolPolicy policy);

  struct InsertOutcome {
    bool inserted = false;
    int erased = kPoolAppend;  // index removed to make room, -1 if none
  };
  InsertOutcome insert(StateSummary s);

  std::size_t size() const { return entries_.size(); }
  std::size_t capacity() const { return capacity_; }
  PoolPolicy policy() const { return policy_; }
  const StateSummary& entry(std::size_t i) const { return entries_.at(i); }
  std::span<const StateSummary> entries() const { return entries_; }

 private:
  std::vector<StateSummary> entries_;
  std::size_t capacity_;
  PoolPolicy policy_;
};

/// Value-semantic insertion used by tests and bindings.
StatePool pool_insert(StatePool pool, StateSummary s);

// ---------------------------------------------------------------------------
// Block-layer operations (inference-level; the tape path mirrors these)

/// sigmoid(w·x + b).
double token_importance(const Tensor& x, const Tensor& w, double b);
double state_importance(const Tensor& z, const Tensor& w, double b);

/// Linear note compression: proj · x.
Tensor summarize(const Tensor& x, const Tensor& proj);

/// Attention from the current input to pooled summaries. Empty pool yields
/// the zero vector. wq: [a x d], wk: [a x d_sum], wv: [d x d_sum]; logits are
/// scaled by 1/sqrt(a).
Tensor cross_token_attention(const Tensor& x, const StatePool& pool, const Tensor& wq,
                             const Tensor& wk, const Tensor& wv,
                             double* weight_sum = nullptr);

/// Same attention over the concatenated entries of the given pools.
Tensor cross_layer_attention(const Tensor& x, std::span<const StatePool* const> pools,
                             const Tensor& wq, const Tensor& wk, const Tensor& wv,
                             double* weight_sum = nullptr);

struct FuseParams {
  double alpha_token = 0.8;
  double alpha_layer = 0.8;
  const Tensor* gate = nullptr;        // GATED: width-d logits
  const Tensor* conv_token = nullptr;  // CONV1D: per-channel taps
  const Tensor* conv_layer = nullptr;
};

/// Merge attention contexts back into the token stream. Every method returns
/// x unchanged when both contexts are zero.
Tensor fuse(const Tensor& x, const Tensor& c_token, const Tensor& c_layer, Fusion method,
            const FuseParams& params);

// ---------------------------------------------------------------------------
// Whole-model forward

struct StepMeta {
  bool note_taken = false;
  bool token_gate = false;
  bool state_gate = false;
  bool layer_fired = false;  // cross-layer attention ran at this layer/step
  double token_score = 0.0;
  double state_score = 0.0;
  double c_token_norm = 0.0;
  double c_layer_norm = 0.0;
  double attn_token_weight_sum = 0.0;
  double attn_layer_weight_sum = 0.0;
  std::size_t pool_size = 0;
};

/// Per-layer, per-step record of a forward pass: post-block states for the
/// fidelity metrics plus lightweight gate/pool telemetry.
struct LayerTrace {
  std::size_t layers = 0, steps = 0, width = 0;
  std::vector<int> tokens;
  Tensor hidden;               // [layers x steps x width]
  std::vector<StepMeta> meta;  // index = layer * steps + t

  std::span<const double> hidden_row(std::size_t layer, std::size_t t) const;
  const StepMeta& meta_at(std::size_t layer, std::size_t t) const;
};

struct ForwardOptions {
  bool want_trace = true;
  bool want_meta = true;
  DecisionTrace* decisions = nullptr;
};

struct ForwardResult {
  Tensor logits;  // [n x vocab]
  LayerTrace trace;
};

/// Full-sequence inference forward. Deterministic for fixed weights/tokens.
ForwardResult model_forward(const ModelConfig& cfg, const Weights& w,
                            std::span<const int> tokens, const ForwardOptions& opts = {});

/// Incremental forward with O(1) state in sequence length; used for long
/// evaluations and latency measurements.
class StreamingModel {
 public:
  StreamingModel(const ModelConfig& cfg, const Weights& w);
  ~StreamingModel();
  StreamingModel(StreamingModel&&) noexcept;
  StreamingModel& operator=(StreamingModel&&) noexcept;

  Tensor step(int token);  // logits for this position
  void reset();
  std::size_t state_bytes() const;
  const StepMeta& last_meta(std::size_t layer) const;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

/// One recorded differentiable run: leaves in registry order plus the loss.
struct TapeRun {
  ad::Graph graph;
  std::vector<ad::Var> params;
  ad::Var loss;
  double loss_value = 0.0;
};

/// Mean next-token loss over positions with targets[t] >= 0, on the tape.
void tape_loss(TapeRun& run, const ModelConfig& cfg, const Weights& w,
               std::span<const int> tokens, std::span<const int> targets,
               DecisionTrace* decisions = nullptr);

/// Same quantity through the inference engine (used for finite differences).
double value_loss(const ModelConfig& cfg, const Weights& w, std::span<const int> tokens,
                  std::span<const int> targets, DecisionTrace* decisions = nullptr);

}  // namespace memmamba::model
