#include "memmamba/runconfig.hpp"

#include <cstdlib>
#include <ctime>
#include <fstream>
#include <set>

#include "memmamba/seeds.hpp"

namespace memmamba::cli {

using nlohmann::json;

namespace {

// Strict object reader: every key must be consumed, leftovers are schema
// errors reported with their full path.
class Reader {
 public:
  Reader(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object())
      throw ParameterError("config: expected an object at '" +
                           (path_.empty() ? "<root>" : path_) + "'");
  }

  template <class T>
  void get(const char* key, T& out) {
    if (!j_.contains(key)) return;
    seen_.insert(key);
    try {
      out = j_.at(key).get<T>();
    } catch (const json::exception&) {
      throw ParameterError("config: bad value type at '" + path_ + key + "'");
    }
  }

  void get_enum(const char* key, model::Fusion& out) {
    std::string s;
    get(key, s);
    if (!s.empty()) out = model::fusion_from(s);
  }
  void get_enum(const char* key, model::PoolPolicy& out) {
    std::string s;
    get(key, s);
    if (!s.empty()) out = model::pool_policy_from(s);
  }
  void get_enum(const char* key, model::Summarizer& out) {
    std::string s;
    get(key, s);
    if (!s.empty()) out = model::summarizer_from(s);
  }
  void get_enum(const char* key, tasks::TaskSpec::Kind& out) {
    std::string s;
    get(key, s);
    if (!s.empty()) out = tasks::TaskSpec::kind_from(s);
  }

  const json* obj(const char* key) {
    if (!j_.contains(key)) return nullptr;
    seen_.insert(key);
    return &j_.at(key);
  }

  void done() {
    for (auto it = j_.begin(); it != j_.end(); ++it)
      if (!seen_.count(it.key()))
        throw ParameterError("config: unknown key '" + path_ + it.key() + "'");
  }

 private:
  const json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

void apply_override(json& j, const std::string& kv) {
  const auto eq = kv.find('=');
  if (eq == std::string::npos)
    throw ParameterError("override must look like key.path=value: " + kv);
  const std::string path = kv.substr(0, eq);
  const std::string raw = kv.substr(eq + 1);
  json value;
  try {
    value = json::parse(raw);
  } catch (const json::exception&) {
    value = raw;  // bare strings are fine
  }
  json* cur = &j;
  std::size_t pos = 0;
  for (;;) {
    const auto dotp = path.find('.', pos);
    const std::string key = path.substr(pos, dotp - pos);
    if (key.empty()) throw ParameterError("bad override path: " + path);
    if (dotp == std::string::npos) {
      (*cur)[key] = value;
      return;
    }
    cur = &(*cur)[key];
    pos = dotp + 1;
  }
}

}  // namespace

tasks::TaskSpec TaskConfig::spec() const {
  tasks::TaskSpec s;
  s.kind = kind;
  s.seq_len = seq_len;
  s.payload_len = payload_len;
  s.vocab = vocab;
  s.needle_docs = needle_docs;
  s.noise_docs = noise_docs;
  if (kind == tasks::TaskSpec::Kind::LM) {
    if (corpus.empty()) throw ParameterError("lm task needs task.corpus");
    // Training draws from the leading 90%; evaluations use the held-out tail.
    std::vector<int> full = tasks::load_corpus(corpus);
    full.resize(full.size() * 9 / 10);
    s.corpus = std::move(full);
    s.vocab = 256;
  }
  return s;
}

std::filesystem::path RunConfig::resolved_out_dir() const {
  if (const char* root = std::getenv("MEMMAMBA_OUT_ROOT"))
    return std::filesystem::path(root) / out_dir;
  return out_dir;
}

RunConfig run_config_from_json(json j) {
  RunConfig rc;
  Reader r(j, "");
  if (const json* m = r.obj("model")) {
    Reader mr(*m, "model.");
    mr.get("layers", rc.model.layers);
    mr.get("width", rc.model.width);
    mr.get("state_dim", rc.model.state_dim);
    mr.get("summary_dim", rc.model.summary_dim);
    mr.get("pool_capacity", rc.model.pool_capacity);
    mr.get("tau1", rc.model.tau1);
    mr.get("tau2", rc.model.tau2);
    mr.get("period", rc.model.period);
    mr.get("lookback", rc.model.lookback);
    mr.get_enum("fusion", rc.model.fusion);
    mr.get("alpha", rc.model.alpha);
    mr.get("vocab", rc.model.vocab);
    mr.get_enum("pool_policy", rc.model.pool_policy);
    mr.get_enum("summarizer", rc.model.summarizer);
    mr.get("note_window", rc.model.note_window);
    mr.done();
  }
  if (const json* t = r.obj("train")) {
    Reader tr(*t, "train.");
    tr.get("lr", rc.train.lr);
    tr.get("weight_decay", rc.train.weight_decay);
    tr.get("clip_norm", rc.train.clip_norm);
    tr.get("accum_steps", rc.train.accum_steps);
    tr.get("steps", rc.train.steps);
    tr.get("context_len", rc.train.context_len);
    tr.done();
  }
  if (const json* t = r.obj("task")) {
    Reader tr(*t, "task.");
    tr.get_enum("kind", rc.task.kind);
    tr.get("corpus", rc.task.corpus);
    tr.get("seq_len", rc.task.seq_len);
    tr.get("payload_len", rc.task.payload_len);
    tr.get("vocab", rc.task.vocab);
    tr.get("needle_docs", rc.task.needle_docs);
    tr.get("noise_docs", rc.task.noise_docs);
    tr.get("lengths", rc.task.lengths);
    tr.get("samples", rc.task.samples);
    tr.done();
  }
  if (const json* b = r.obj("bench")) {
    Reader br(*b, "bench.");
    br.get("model", rc.bench.model);
    br.get("lengths", rc.bench.lengths);
    br.get("samples", rc.bench.samples);
    br.done();
  }
  if (const json* f = r.obj("fidelity")) {
    Reader fr(*f, "fidelity.");
    fr.get("deltas", rc.fidelity.deltas);
    fr.get("gaps", rc.fidelity.gaps);
    fr.get("lambda", rc.fidelity.lambda);
    fr.get("temperature", rc.fidelity.temperature);
    fr.get("windows", rc.fidelity.windows);
    fr.get("context_len", rc.fidelity.context_len);
    fr.done();
  }
  if (const json* s = r.obj("sweep")) {
    Reader sr(*s, "sweep.");
    sr.get("axis", rc.sweep.axis);
    sr.get("values", rc.sweep.values);
    sr.get("steps", rc.sweep.steps);
    sr.get("eval_windows", rc.sweep.eval_windows);
    sr.done();
  }
  r.get("seed", rc.seed);
  r.get("out_dir", rc.out_dir);
  r.get("checkpoint", rc.checkpoint);
  r.done();

  // one master seed; consumers derive named sub-streams
  rc.model.seed = rc.seed;
  rc.train.seed = rc.seed;
  rc.model.validate();
  rc.train.validate();
  return rc;
}

RunConfig load_run_config(const std::filesystem::path& path,
                          std::span<const std::string> overrides) {
  std::ifstream is(path);
  if (!is) throw InputError("cannot open config: " + path.string());
  json j;
  try {
    j = json::parse(is);
  } catch (const json::exception& e) {
    throw ParameterError("config parse error in " + path.string() + ": " + e.what());
  }
  for (const std::string& kv : overrides) apply_override(j, kv);
  return run_config_from_json(std::move(j));
}

json model_config_to_json(const model::ModelConfig& mc) {
  json j;
  j["layers"] = mc.layers;
  j["width"] = mc.width;
  j["state_dim"] = mc.state_dim;
  j["summary_dim"] = mc.summary_dim;
  j["pool_capacity"] = mc.pool_capacity;
  j["tau1"] = mc.tau1;
  j["tau2"] = mc.tau2;
  j["period"] = mc.period;
  j["lookback"] = mc.lookback;
  j["fusion"] = model::to_string(mc.fusion);
  j["alpha"] = mc.alpha;
  j["vocab"] = mc.vocab;
  j["pool_policy"] = model::to_string(mc.pool_policy);
  j["summarizer"] = model::to_string(mc.summarizer);
  j["note_window"] = mc.note_window;
  return j;
}

model::ModelConfig model_config_from_json(const json& j) {
  model::ModelConfig mc;
  Reader r(j, "config.");
  r.get("layers", mc.layers);
  r.get("width", mc.width);
  r.get("state_dim", mc.state_dim);
  r.get("summary_dim", mc.summary_dim);
  r.get("pool_capacity", mc.pool_capacity);
  r.get("tau1", mc.tau1);
  r.get("tau2", mc.tau2);
  r.get("period", mc.period);
  r.get("lookback", mc.lookback);
  r.get_enum("fusion", mc.fusion);
  r.get("alpha", mc.alpha);
  r.get("vocab", mc.vocab);
  r.get_enum("pool_policy", mc.pool_policy);
  r.get_enum("summarizer", mc.summarizer);
  r.get("note_window", mc.note_window);
  r.done();
  mc.validate();
  return mc;
}

json run_config_to_json(const RunConfig& rc) {
  json j;
  j["model"] = model_config_to_json(rc.model);
  j["train"] = {{"lr", rc.train.lr},
                {"weight_decay", rc.train.weight_decay},
                {"clip_norm", rc.train.clip_norm},
                {"accum_steps", rc.train.accum_steps},
                {"steps", rc.train.steps},
                {"context_len", rc.train.context_len}};
  j["task"] = {{"kind", tasks::TaskSpec::kind_name(rc.task.kind)},
               {"corpus", rc.task.corpus},
               {"seq_len", rc.task.seq_len},
               {"payload_len", rc.task.payload_len},
               {"vocab", rc.task.vocab},
               {"needle_docs", rc.task.needle_docs},
               {"noise_docs", rc.task.noise_docs},
               {"lengths", rc.task.lengths},
               {"samples", rc.task.samples}};
  j["bench"] = {{"model", rc.bench.model},
                {"lengths", rc.bench.lengths},
                {"samples", rc.bench.samples}};
  j["fidelity"] = {{"deltas", rc.fidelity.deltas},
                   {"gaps", rc.fidelity.gaps},
                   {"lambda", rc.fidelity.lambda},
                   {"temperature", rc.fidelity.temperature},
                   {"windows", rc.fidelity.windows},
                   {"context_len", rc.fidelity.context_len}};
  j["sweep"] = {{"axis", rc.sweep.axis},
                {"values", rc.sweep.values},
                {"steps", rc.sweep.steps},
                {"eval_windows", rc.sweep.eval_windows}};
  j["seed"] = rc.seed;
  j["out_dir"] = rc.out_dir;
  j["checkpoint"] = rc.checkpoint;
  return j;
}

std::string config_hash(const json& j) {
  const std::uint64_t h = fnv1a64(j.dump());
  char buf[20];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

void write_manifest(const std::filesystem::path& dir, const std::string& command,
                    const json& config, const std::vector<std::string>& outputs) {
  std::filesystem::create_directories(dir);
  json m;
  m["command"] = command;
  m["config"] = config;
  m["config_hash"] = config_hash(config);
  m["revision"] = "memmamba-0.1.0+" + config_hash(config).substr(0, 8);
  m["outputs"] = outputs;
  m["created_unix"] = static_cast<long long>(std::time(nullptr));
  std::ofstream os(dir / "manifest.json");
  if (!os) throw InputError("cannot write manifest in " + dir.string());
  os << m.dump(2) << "\n";
}

}  // namespace memmamba::cli
