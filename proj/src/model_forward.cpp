// Engine-templated forward pass: the same block-layer control flow drives
// both the plain inference path (V = Tensor) and the recorded tape path
// (V = ad::Var), so training and inference cannot drift apart.

#include <cmath>
#include <deque>

#include "memmamba/autodiff.hpp"
#include "memmamba/kernels.hpp"
#include "memmamba/model.hpp"
#include "memmamba/numerics.hpp"

namespace memmamba::model {

namespace {

struct ValueEngine {
  using V = Tensor;
  V leaf(const Tensor& t, bool) const { return t; }
  const Tensor& value(const V& v) const { return v; }

  V row(const V& m, std::size_t i) const {
    if (m.rank() != 2) throw DimensionError("row of non-matrix");
    if (i >= m.dim(0)) throw InputError("row index out of range");
    const std::size_t c = m.dim(1);
    Tensor out({c});
    for (std::size_t j = 0; j < c; ++j) out[j] = m.at2(i, j);
    return out;
  }
  V add(const V& a, const V& b) const {
    if (a.size() != b.size()) throw DimensionError("add size mismatch");
    Tensor out(a.shape());
    for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] + b[i];
    return out;
  }
  V mul(const V& a, const V& b) const {
    if (a.size() != b.size()) throw DimensionError("mul size mismatch");
    Tensor out(a.shape());
    for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] * b[i];
    return out;
  }
  V scale(const V& a, double c) const {
    Tensor out(a.shape());
    for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] * c;
    return out;
  }
  V mul_scalar(const V& v, const V& s) const {
    Tensor out(v.shape());
    for (std::size_t i = 0; i < v.size(); ++i) out[i] = v[i] * s[0];
    return out;
  }
  V matvec(const V& m, const V& x) const { return memmamba::matvec(m, x); }
  V dot(const V& a, const V& b) const { return Tensor::vec({memmamba::dot(a, b)}); }
  V sigmoid(const V& a) const {
    Tensor out;
    kern::sigmoid(a, out);
    return out;
  }
  V stable_decay(const V& raw) const {
    Tensor out;
    std::vector<double> sig;
    kern::stable_decay(raw, out, sig);
    return out;
  }
  V attend(const V& q, std::span<const V> keys, std::span<const V> vals, double sc,
           double* wsum) const {
    std::vector<const Tensor*> kp(keys.size()), vp(vals.size());
    for (std::size_t i = 0; i < keys.size(); ++i) kp[i] = &keys[i];
    for (std::size_t i = 0; i < vals.size(); ++i) vp[i] = &vals[i];
    Tensor out;
    std::vector<double> w;
    kern::attend(q, kp, vp, sc, out, w);
    if (wsum) {
      double s = 0.0;
      for (double wi : w) s += wi;
      *wsum = s;
    }
    return out;
  }
  V group_max(const V& x, std::size_t out_dim, DecisionTrace* dt) const {
    Tensor out;
    std::vector<std::int32_t> arg;
    kern::group_max(x, out_dim, dt, out, arg);
    return out;
  }
  V group_mean(const V& x, std::size_t out_dim) const {
    Tensor out;
    kern::group_mean(x, out_dim, out);
    return out;
  }
  V max_list(std::span<const V> xs, DecisionTrace* dt) const {
    std::vector<const Tensor*> p(xs.size());
    for (std::size_t i = 0; i < xs.size(); ++i) p[i] = &xs[i];
    Tensor out;
    std::vector<std::int32_t> arg;
    kern::max_list(p, dt, out, arg);
    return out;
  }
  V mean_list(std::span<const V> xs) const {
    std::vector<const Tensor*> p(xs.size());
    for (std::size_t i = 0; i < xs.size(); ++i) p[i] = &xs[i];
    Tensor out;
    kern::mean_list(p, out);
    return out;
  }
  V nll(const V& logits, int target) const {
    return Tensor::vec({kern::nll(logits, target, nullptr)});
  }
  V mean_scalars(std::span<const V> xs) const {
    double acc = 0.0;
    for (const V& v : xs) acc += v[0];
    return Tensor::vec({acc / static_cast<double>(xs.size())});
  }
};

struct TapeEngine {
  using V = ad::Var;
  ad::Graph* g = nullptr;

  V leaf(const Tensor& t, bool rg) const { return g->leaf(t, rg); }
  const Tensor& value(V v) const { return g->value(v); }
  V row(V m, std::size_t i) const { return g->row(m, i); }
  V add(V a, V b) const { return g->add(a, b); }
  V mul(V a, V b) const { return g->mul(a, b); }
  V scale(V a, double c) const { return g->scale(a, c); }
  V mul_scalar(V v, V s) const { return g->mul_scalar(v, s); }
  V matvec(V m, V x) const { return g->matvec(m, x); }
  V dot(V a, V b) const { return g->dot(a, b); }
  V sigmoid(V a) const { return g->sigmoid(a); }
  V stable_decay(V raw) const { return g->stable_decay(raw); }
  V attend(V q, std::span<const V> keys, std::span<const V> vals, double sc,
           double* wsum) const {
    return g->attend(q, keys, vals, sc, wsum);
  }
  V group_max(V x, std::size_t out_dim, DecisionTrace* dt) const {
    return g->group_max(x, out_dim, dt);
  }
  V group_mean(V x, std::size_t out_dim) const { return g->group_mean(x, out_dim); }
  V max_list(std::span<const V> xs, DecisionTrace* dt) const { return g->max_list(xs, dt); }
  V mean_list(std::span<const V> xs) const { return g->mean_list(xs); }
  V nll(V logits, int target) const { return g->nll(logits, target); }
  V mean_scalars(std::span<const V> xs) const { return g->mean_scalars(xs); }
};

struct LayerSlots {
  std::size_t a_raw, b_in, c_out, note_proj, wq, wk, wv, tok_w, tok_b, state_w, state_b;
  std::size_t gate = SIZE_MAX, conv_t = SIZE_MAX, conv_l = SIZE_MAX;
};

struct Slots {
  std::size_t embed, w_out;
  std::vector<LayerSlots> layer;
};

Slots find_slots(const ModelConfig& cfg, const Weights& w) {
  Slots s;
  s.embed = w.slot("embed");
  s.w_out = w.slot("w_out");
  s.layer.resize(cfg.layers);
  for (std::size_t l = 0; l < cfg.layers; ++l) {
    const std::string p = "layers." + std::to_string(l) + ".";
    LayerSlots& ls = s.layer[l];
    ls.a_raw = w.slot(p + "a_raw");
    ls.b_in = w.slot(p + "b_in");
    ls.c_out = w.slot(p + "c_out");
    ls.note_proj = w.slot(p + "note_proj");
    ls.wq = w.slot(p + "wq");
    ls.wk = w.slot(p + "wk");
    ls.wv = w.slot(p + "wv");
    ls.tok_w = w.slot(p + "tok_w");
    ls.tok_b = w.slot(p + "tok_b");
    ls.state_w = w.slot(p + "state_w");
    ls.state_b = w.slot(p + "state_b");
    if (cfg.fusion == Fusion::GATED) ls.gate = w.slot(p + "gate");
    if (cfg.fusion == Fusion::CONV1D) {
      ls.conv_t = w.slot(p + "conv_token");
      ls.conv_l = w.slot(p + "conv_layer");
    }
  }
  return s;
}

template <class E>
class BasicModel {
 public:
  using V = typename E::V;

  BasicModel(const ModelConfig& cfg, const Weights& w, E& eng, DecisionTrace* dt)
      : cfg_(cfg), eng_(eng), dt_(dt), slots_(find_slots(cfg, w)) {
    cfg.validate();
    bound_.reserve(w.count());
    for (std::size_t i = 0; i < w.count(); ++i)
      bound_.push_back(eng_.leaf(w.values[i], true));
    zero_width_ = eng_.leaf(Tensor({cfg.width}), false);
    ones_width_ = eng_.leaf(Tensor::full({cfg.width}, 1.0), false);
    layers_.resize(cfg.layers);
    reset();
  }

  void reset() {
    step_ = 0;
    for (std::size_t l = 0; l < cfg_.layers; ++l) {
      LayerState& st = layers_[l];
      st.h = eng_.leaf(Tensor({cfg_.state_dim}), false);
      st.z = zero_width_;
      st.has_z = false;
      st.pool.clear();
      st.window.clear();
      st.a_diag = eng_.stable_decay(bound_[slots_.layer[l].a_raw]);
      st.meta = StepMeta{};
    }
  }

  std::span<const V> params() const { return bound_; }
  const StepMeta& last_meta(std::size_t layer) const { return layers_.at(layer).meta; }
  /// Post-block output of `layer` at the most recent step.
  const V& last_output(std::size_t layer) const { return layers_.at(layer).z; }

  std::size_t state_bytes() const {
    std::size_t n = 0;
    for (const LayerState& st : layers_) {
      n += eng_.value(st.h).size() + eng_.value(st.z).size() +
           eng_.value(st.a_diag).size();
      for (const V& v : st.window) n += eng_.value(v).size();
      for (const Entry& e : st.pool) {
        n += eng_.value(e.vec).size() + eng_.value(e.key).size() +
             eng_.value(e.val).size();
        for (const auto& [ol, ov] : e.xkeys) n += eng_.value(ov).size();
        for (const auto& [ol, ov] : e.xvals) n += eng_.value(ov).size();
      }
    }
    return n * sizeof(double);
  }

  V step(int token) {
    if (token < 0 || static_cast<std::size_t>(token) >= cfg_.vocab)
      throw InputError("token id out of range");
    const double att_scale = 1.0 / std::sqrt(static_cast<double>(cfg_.summary_dim));
    V x = eng_.row(bound_[slots_.embed], static_cast<std::size_t>(token));

    for (std::size_t l = 0; l < cfg_.layers; ++l) {
      LayerState& st = layers_[l];
      const LayerSlots& ls = slots_.layer[l];
      StepMeta meta;

      // Importance scores. The hard comparisons go through the decision
      // stream so replayed forwards keep the recorded branch structure.
      V tok_score =
          eng_.sigmoid(eng_.add(eng_.dot(bound_[ls.tok_w], x), bound_[ls.tok_b]));
      const double tok_s = eng_.value(tok_score)[0];
      const V& z_in = st.has_z ? st.z : zero_width_;
      V state_score =
          eng_.sigmoid(eng_.add(eng_.dot(bound_[ls.state_w], z_in), bound_[ls.state_b]));
      const double state_s = eng_.value(state_score)[0];
      const bool tok_gate = dt_ ? dt_->decide_bool(tok_s > cfg_.tau1) : tok_s > cfg_.tau1;
      const bool state_gate =
          dt_ ? dt_->decide_bool(state_s > cfg_.tau2) : state_s > cfg_.tau2;
      meta.token_score = tok_s;
      meta.state_score = state_s;
      meta.token_gate = tok_gate;
      meta.state_gate = state_gate;

      V q;
      bool have_q = false;
      auto query = [&]() -> const V& {
        if (!have_q) {
          q = eng_.matvec(bound_[ls.wq], x);
          have_q = true;
        }
        return q;
      };

      // Cross-token attention over the pool as it stood after the previous
      // step (the current token's note is inserted below, afterwards).
      V c_tok;
      bool have_ct = false;
      if (state_gate && !st.pool.empty()) {
        keys_.clear();
        vals_.clear();
        for (const Entry& e : st.pool) {
          keys_.push_back(e.key);
          vals_.push_back(e.val);
        }
        c_tok = eng_.attend(query(), keys_, vals_, att_scale, &meta.attn_token_weight_sum);
        have_ct = true;
        meta.c_token_norm = norm2(eng_.value(c_tok));
      }

      // Cross-layer attention, sparsely triggered on 1-based layer index.
      V c_lay;
      bool have_cl = false;
      if ((l + 1) % cfg_.period == 0) {
        meta.layer_fired = true;
        keys_.clear();
        vals_.clear();
        const std::size_t lo = l >= cfg_.lookback ? l - cfg_.lookback : 0;
        for (std::size_t j = lo; j < l; ++j)
          for (Entry& e : layers_[j].pool) {
            keys_.push_back(cross_proj(e, e.xkeys, ls.wk, l));
            vals_.push_back(cross_proj(e, e.xvals, ls.wv, l));
          }
        if (!keys_.empty()) {
          c_lay =
              eng_.attend(query(), keys_, vals_, att_scale, &meta.attn_layer_weight_sum);
          have_cl = true;
          meta.c_layer_norm = norm2(eng_.value(c_lay));
        }
      }

      // Note taking: aggregate the recent input window, compress, and store
      // the summary scaled by its importance so the scorer trains end-to-end.
      st.window.push_back(x);
      if (st.window.size() > cfg_.note_window) st.window.erase(st.window.begin());
      if (tok_gate) {
        V note = make_note(st, l);
        V scaled = eng_.mul_scalar(note, tok_score);
        scores_.clear();
        for (const Entry& e : st.pool) scores_.push_back(e.score);
        int slot = pool_decide(cfg_.pool_policy, scores_, cfg_.pool_capacity, tok_s);
        if (dt_) slot = dt_->decide(slot);
        if (slot != kPoolReject) {
          if (slot >= 0) st.pool.erase(st.pool.begin() + slot);
          Entry e;
          e.vec = scaled;
          e.key = eng_.matvec(bound_[ls.wk], scaled);
          e.val = eng_.matvec(bound_[ls.wv], scaled);
          e.score = tok_s;
          e.layer = l;
          e.step = step_;
          st.pool.push_back(std::move(e));
          meta.note_taken = true;
        }
      }
      meta.pool_size = st.pool.size();

      // Fuse contexts, then the state-space update.
      V xf = fuse_contexts(x, have_ct ? &c_tok : nullptr, have_cl ? &c_lay : nullptr, ls);
      V h2 = eng_.add(eng_.mul(st.a_diag, st.h), eng_.matvec(bound_[ls.b_in], xf));
      V y = eng_.matvec(bound_[ls.c_out], h2);
      st.h = h2;
      st.z = y;
      st.has_z = true;
      st.meta = meta;
      x = y;
    }
    ++step_;
    return eng_.matvec(bound_[slots_.w_out], x);
  }

 private:
  struct Entry {
    V vec, key, val;
    double score = 0.0;
    std::size_t layer = 0, step = 0;
    // Projections through other layers' wk/wv, memoised per attending layer.
    std::vector<std::pair<std::size_t, V>> xkeys, xvals;
  };
  struct LayerState {
    V h, z, a_diag;
    bool has_z = false;
    std::vector<Entry> pool;
    std::vector<V> window;
    StepMeta meta;
  };

  const V& cross_proj(Entry& e, std::vector<std::pair<std::size_t, V>>& cache,
                      std::size_t w_slot_field, std::size_t attending) {
    for (auto& [al, v] : cache)
      if (al == attending) return v;
    cache.emplace_back(attending, eng_.matvec(bound_[w_slot_field], e.vec));
    return cache.back().second;
  }

  V make_note(LayerState& st, std::size_t layer) {
    V u;
    if (st.window.size() == 1) {
      u = st.window.front();
    } else if (cfg_.summarizer == Summarizer::MAXPOOL) {
      u = eng_.max_list(st.window, dt_);
    } else {
      u = eng_.mean_list(st.window);
    }
    switch (cfg_.summarizer) {
      case Summarizer::PROJ:
        return eng_.matvec(bound_[slots_.layer[layer].note_proj], u);
      case Summarizer::MAXPOOL:
        return eng_.group_max(u, cfg_.summary_dim, dt_);
      case Summarizer::MEANPOOL:
        return eng_.group_mean(u, cfg_.summary_dim);
    }
    throw ParameterError("unknown summarizer");
  }

  V fuse_contexts(const V& x, const V* ct, const V* cl, const LayerSlots& ls) {
    if (!ct && !cl) return x;  // zero contexts pass the input through untouched
    auto csum = [&]() -> V {
      if (ct && cl) return eng_.add(*ct, *cl);
      return ct ? *ct : *cl;
    };
    switch (cfg_.fusion) {
      case Fusion::WEIGHTED: {
        V r = x;
        if (ct) r = eng_.add(r, eng_.scale(*ct, cfg_.alpha));
        if (cl) r = eng_.add(r, eng_.scale(*cl, cfg_.alpha));
        return r;
      }
      case Fusion::RESIDUAL: {
        V r = x;
        if (ct) r = eng_.add(r, *ct);
        if (cl) r = eng_.add(r, *cl);
        return r;
      }
      case Fusion::GATED:
        return eng_.add(x, eng_.mul(eng_.sigmoid(bound_[ls.gate]), csum()));
      case Fusion::ELEMENTWISE:
        return eng_.mul(x, eng_.add(ones_width_, csum()));
      case Fusion::CONV1D: {
        V r = x;
        if (ct) r = eng_.add(r, eng_.mul(bound_[ls.conv_t], *ct));
        if (cl) r = eng_.add(r, eng_.mul(bound_[ls.conv_l], *cl));
        return r;
      }
    }
    throw ParameterError("unknown fusion method");
  }

  ModelConfig cfg_;
  E& eng_;
  DecisionTrace* dt_;
  Slots slots_;
  std::vector<V> bound_;
  V zero_width_, ones_width_;
  std::vector<LayerState> layers_;
  std::size_t step_ = 0;
  // scratch
  std::vector<V> keys_, vals_;
  std::vector<double> scores_;
};

template <class E>
typename E::V run_loss(E& eng, BasicModel<E>& m, std::span<const int> tokens,
                       std::span<const int> targets) {
  if (tokens.size() != targets.size())
    throw DimensionError("tokens/targets length mismatch");
  std::vector<typename E::V> losses;
  for (std::size_t t = 0; t < tokens.size(); ++t) {
    typename E::V logits = m.step(tokens[t]);
    if (targets[t] >= 0) losses.push_back(eng.nll(logits, targets[t]));
  }
  if (losses.empty()) throw ParameterError("no supervised positions in sample");
  return eng.mean_scalars(losses);
}

}  // namespace

ForwardResult model_forward(const ModelConfig& cfg, const Weights& w,
                            std::span<const int> tokens, const ForwardOptions& opts) {
  if (tokens.empty()) throw ParameterError("empty token sequence");
  ValueEngine eng;
  BasicModel<ValueEngine> m(cfg, w, eng, opts.decisions);

  ForwardResult out;
  out.logits = Tensor({tokens.size(), cfg.vocab});
  LayerTrace& tr = out.trace;
  if (opts.want_trace) {
    tr.layers = cfg.layers;
    tr.steps = tokens.size();
    tr.width = cfg.width;
    tr.tokens.assign(tokens.begin(), tokens.end());
    tr.hidden = Tensor({cfg.layers, tokens.size(), cfg.width});
    if (opts.want_meta) tr.meta.resize(cfg.layers * tokens.size());
  }

  for (std::size_t t = 0; t < tokens.size(); ++t) {
    Tensor logits = m.step(tokens[t]);
    for (std::size_t v = 0; v < cfg.vocab; ++v) out.logits.at2(t, v) = logits[v];
    if (opts.want_trace) {
      for (std::size_t l = 0; l < cfg.layers; ++l) {
        const Tensor& y = m.last_output(l);
        double* dst = tr.hidden.data() + (l * tr.steps + t) * tr.width;
        for (std::size_t j = 0; j < cfg.width; ++j) dst[j] = y[j];
        if (opts.want_meta) tr.meta[l * tr.steps + t] = m.last_meta(l);
      }
    }
  }
  return out;
}

struct StreamingModel::Impl {
  ValueEngine eng;
  BasicModel<ValueEngine> m;
  Impl(const ModelConfig& cfg, const Weights& w) : m(cfg, w, eng, nullptr) {}
};

StreamingModel::StreamingModel(const ModelConfig& cfg, const Weights& w)
    : impl_(std::make_unique<Impl>(cfg, w)) {}
StreamingModel::~StreamingModel() = default;
StreamingModel::StreamingModel(StreamingModel&&) noexcept = default;
StreamingModel& StreamingModel::operator=(StreamingModel&&) noexcept = default;

Tensor StreamingModel::step(int token) { return impl_->m.step(token); }
void StreamingModel::reset() { impl_->m.reset(); }
std::size_t StreamingModel::state_bytes() const { return impl_->m.state_bytes(); }
const StepMeta& StreamingModel::last_meta(std::size_t layer) const {
  return impl_->m.last_meta(layer);
}

void tape_loss(TapeRun& run, const ModelConfig& cfg, const Weights& w,
               std::span<const int> tokens, std::span<const int> targets,
               DecisionTrace* decisions) {
  run.graph.clear();
  TapeEngine eng{&run.graph};
  BasicModel<TapeEngine> m(cfg, w, eng, decisions);
  run.params.assign(m.params().begin(), m.params().end());
  run.loss = run_loss(eng, m, tokens, targets);
  run.loss_value = run.graph.value(run.loss)[0];
}

double value_loss(const ModelConfig& cfg, const Weights& w, std::span<const int> tokens,
                  std::span<const int> targets, DecisionTrace* decisions) {
  ValueEngine eng;
  BasicModel<ValueEngine> m(cfg, w, eng, decisions);
  return run_loss(eng, m, tokens, targets)[0];
}

}  // namespace memmamba::model
