#include "memmamba/train.hpp"

#include <cmath>
#include <fstream>

#include "memmamba/csvio.hpp"
#include "memmamba/kernels.hpp"
#include "memmamba/seeds.hpp"

namespace memmamba::train {

void TrainConfig::validate() const {
  if (!(lr > 0.0)) throw ParameterError("lr must be positive");
  if (!(clip_norm > 0.0)) throw ParameterError("clip_norm must be positive");
  if (accum_steps == 0) throw ParameterError("accum_steps must be >= 1");
  if (weight_decay < 0.0) throw ParameterError("weight_decay must be >= 0");
  if (context_len < 2) throw ParameterError("context_len must be >= 2");
}

double cross_entropy(const Tensor& logits, std::span<const int> targets) {
  if (logits.rank() != 2) throw DimensionError("cross_entropy logits must be [n x vocab]");
  if (logits.dim(0) != targets.size())
    throw DimensionError("cross_entropy target count mismatch");
  const std::size_t vocab = logits.dim(1);
  Tensor row({vocab});
  double acc = 0.0;
  std::size_t counted = 0;
  for (std::size_t t = 0; t < targets.size(); ++t) {
    if (targets[t] < 0) continue;
    for (std::size_t v = 0; v < vocab; ++v) row[v] = logits.at2(t, v);
    acc += kern::nll(row, targets[t], nullptr);
    ++counted;
  }
  if (counted == 0) throw ParameterError("no supervised positions");
  return acc / static_cast<double>(counted);
}

BackwardResult backward(const model::ModelConfig& cfg, const model::Weights& w,
                        std::span<const int> tokens, std::span<const int> targets,
                        DecisionTrace* decisions) {
  model::TapeRun run;
  model::tape_loss(run, cfg, w, tokens, targets, decisions);
  run.graph.backward(run.loss);

  BackwardResult out;
  out.loss = run.loss_value;
  out.grads.reserve(run.params.size());
  for (std::size_t i = 0; i < run.params.size(); ++i) {
    Tensor g = run.graph.grad(run.params[i]);
    if (!g.all_finite())
      throw NumericalError("non-finite gradient for parameter " + w.names[i]);
    out.grads.push_back(std::move(g));
  }
  return out;
}

void optimizer_step(model::Weights& w, const std::vector<Tensor>& grads,
                    const TrainConfig& cfg, AdamState& state) {
  cfg.validate();
  if (grads.size() != w.count()) throw DimensionError("gradient count mismatch");
  if (state.m.empty()) {
    state.m.reserve(w.count());
    state.v.reserve(w.count());
    for (const Tensor& p : w.values) {
      state.m.emplace_back(p.shape());
      state.v.emplace_back(p.shape());
    }
  }
  for (std::size_t i = 0; i < grads.size(); ++i)
    if (!grads[i].same_shape(w.values[i]))
      throw DimensionError("gradient shape mismatch at " + w.names[i]);

  double sq = 0.0;
  for (const Tensor& g : grads)
    for (std::size_t j = 0; j < g.size(); ++j) sq += g[j] * g[j];
  const double gnorm = std::sqrt(sq);
  const double clip = gnorm > cfg.clip_norm ? cfg.clip_norm / gnorm : 1.0;

  constexpr double kBeta1 = 0.9, kBeta2 = 0.999, kEps = 1e-8;
  state.t += 1;
  const double bc1 = 1.0 - std::pow(kBeta1, static_cast<double>(state.t));
  const double bc2 = 1.0 - std::pow(kBeta2, static_cast<double>(state.t));

  for (std::size_t i = 0; i < grads.size(); ++i) {
    Tensor& p = w.values[i];
    Tensor& m = state.m[i];
    Tensor& v = state.v[i];
    for (std::size_t j = 0; j < p.size(); ++j) {
      const double g = grads[i][j] * clip;
      m[j] = kBeta1 * m[j] + (1.0 - kBeta1) * g;
      v[j] = kBeta2 * v[j] + (1.0 - kBeta2) * g * g;
      p[j] -= cfg.lr * cfg.weight_decay * p[j];  // decoupled decay
      p[j] -= cfg.lr * (m[j] / bc1) / (std::sqrt(v[j] / bc2) + kEps);
    }
  }
}

TrainResult train(const model::ModelConfig& mcfg, const TrainConfig& tcfg,
                  const tasks::TaskSpec& task,
                  const std::optional<std::filesystem::path>& log_csv,
                  const std::function<void(const StepLog&)>& on_step) {
  mcfg.validate();
  tcfg.validate();
  TrainResult out;
  out.weights = model::init_weights(mcfg);
  AdamState adam;

  std::optional<csv::Writer> log;
  if (log_csv) {
    log.emplace(*log_csv);
    log->row({"step", "loss", "grad_norm", "lr"});
  }

  const std::uint64_t data_seed = sub_seed(tcfg.seed, "data");
  std::vector<Tensor> accum;
  std::size_t sample_index = 0;
  for (std::size_t step = 0; step < tcfg.steps; ++step) {
    accum.clear();
    double loss_sum = 0.0;
    for (std::size_t a = 0; a < tcfg.accum_steps; ++a) {
      tasks::TaskSample smp = task.sample(sample_index++, data_seed, tcfg.context_len);
      BackwardResult b = backward(mcfg, out.weights, smp.tokens, smp.targets);
      loss_sum += b.loss;
      if (accum.empty()) {
        accum = std::move(b.grads);
      } else {
        for (std::size_t i = 0; i < accum.size(); ++i)
          for (std::size_t j = 0; j < accum[i].size(); ++j) accum[i][j] += b.grads[i][j];
      }
    }
    const double inv = 1.0 / static_cast<double>(tcfg.accum_steps);
    for (Tensor& g : accum)
      for (std::size_t j = 0; j < g.size(); ++j) g[j] *= inv;
    const double loss = loss_sum * inv;
    if (!std::isfinite(loss))
      throw NumericalError("training diverged at step " + std::to_string(step));

    double sq = 0.0;
    for (const Tensor& g : accum)
      for (std::size_t j = 0; j < g.size(); ++j) sq += g[j] * g[j];
    const double gnorm = std::sqrt(sq);

    optimizer_step(out.weights, accum, tcfg, adam);

    StepLog entry{step, loss, gnorm, tcfg.lr};
    out.log.push_back(entry);
    if (log)
      log->row({std::to_string(step), csv::fmt(loss), csv::fmt(gnorm), csv::fmt(tcfg.lr)});
    if (on_step) on_step(entry);
  }
  return out;
}

double perplexity(const model::ModelConfig& cfg, const model::Weights& w,
                  std::span<const int> corpus, std::size_t context_len) {
  if (corpus.empty()) throw InputError("empty corpus");
  model::StreamingModel mdl(cfg, w);
  double acc = 0.0;
  std::size_t counted = 0;
  for (auto [begin, len] : tasks::corpus_windows(corpus.size(), context_len)) {
    if (len < 2) continue;
    mdl.reset();  // pools and states reset at sequence start
    for (std::size_t i = 0; i + 1 < len; ++i) {
      Tensor logits = mdl.step(corpus[begin + i]);
      acc += kern::nll(logits, corpus[begin + i + 1], nullptr);
      ++counted;
    }
  }
  if (counted == 0) throw InputError("corpus too short for any window");
  return std::exp(acc / static_cast<double>(counted));
}

}  // namespace memmamba::train
