// Command-line front end: every experiment is a config-driven subcommand that
// writes CSV/JSON artifacts plus a manifest into its output directory.

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <random>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "memmamba/bench.hpp"
#include "memmamba/checkpoint.hpp"
#include "memmamba/csvio.hpp"
#include "memmamba/fidelity.hpp"
#include "memmamba/runconfig.hpp"
#include "memmamba/seeds.hpp"
#include "memmamba/tasks.hpp"
#include "memmamba/theory.hpp"
#include "memmamba/train.hpp"

namespace mm = memmamba;
namespace fs = std::filesystem;

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitMissingCheckpoint = 3;

struct CommonArgs {
  std::string config_path;
  std::vector<std::string> overrides;
};

void add_common(CLI::App* cmd, CommonArgs& args) {
  cmd->add_option("--config", args.config_path, "JSON run configuration")->required();
  cmd->add_option("--set", args.overrides,
                  "dotted-path override, e.g. --set model.layers=4")
      ->take_all();
}

mm::cli::RunConfig load(const CommonArgs& args) {
  return mm::cli::load_run_config(args.config_path, args.overrides);
}

mm::checkpoint::Checkpoint require_checkpoint(const mm::cli::RunConfig& rc) {
  if (rc.checkpoint.empty())
    throw mm::InputError("this command needs a 'checkpoint' path in the config");
  if (!fs::exists(fs::path(rc.checkpoint) / "manifest.json"))
    throw mm::InputError("checkpoint not found: " + rc.checkpoint);
  return mm::checkpoint::load(rc.checkpoint);
}

// Training samples draw from the leading 90% of an LM corpus; evaluations use
// the held-out tail.
std::span<const int> heldout_tail(const std::vector<int>& corpus) {
  const std::size_t cut = corpus.size() * 9 / 10;
  return {corpus.data() + cut, corpus.size() - cut};
}

int cmd_train(const CommonArgs& args) {
  mm::cli::RunConfig rc = load(args);
  const fs::path out = rc.resolved_out_dir();
  fs::create_directories(out);
  mm::tasks::TaskSpec task = rc.task.spec();

  auto result = mm::train::train(rc.model, rc.train, task, out / "metrics.csv");
  mm::checkpoint::save(out / "checkpoint", rc.model, result.weights);
  mm::cli::write_manifest(out, "train", mm::cli::run_config_to_json(rc),
                          {"metrics.csv", "checkpoint"});
  std::cout << "trained " << rc.train.steps << " steps; final loss "
            << (result.log.empty() ? 0.0 : result.log.back().loss) << "\n";
  return 0;
}

int cmd_eval_ppl(const CommonArgs& args) {
  mm::cli::RunConfig rc = load(args);
  auto ck = require_checkpoint(rc);
  if (rc.task.corpus.empty()) throw mm::InputError("eval-ppl needs task.corpus");
  const std::vector<int> corpus = mm::tasks::load_corpus(rc.task.corpus);
  const auto tail = heldout_tail(corpus);

  const fs::path out = rc.resolved_out_dir();
  mm::csv::Writer w(out / "ppl.csv");
  w.row({"model_id", "context_len", "ppl"});
  for (std::size_t ctx : rc.task.lengths) {
    if (tail.size() < ctx + 1) continue;
    const double ppl = mm::train::perplexity(ck.config, ck.weights, tail, ctx);
    w.row({"memmamba", std::to_string(ctx), mm::csv::fmt(ppl)});
    std::cout << "ppl@" << ctx << " = " << ppl << "\n";
  }
  mm::cli::write_manifest(out, "eval-ppl", mm::cli::run_config_to_json(rc), {"ppl.csv"});
  return 0;
}

int cmd_passkey(const CommonArgs& args) {
  mm::cli::RunConfig rc = load(args);
  auto ck = require_checkpoint(rc);
  auto predictor = mm::tasks::model_predictor(ck.config, ck.weights);
  auto rows = mm::tasks::eval_passkey(predictor, rc.task.lengths, rc.task.samples,
                                      ck.config.vocab, mm::sub_seed(rc.seed, "eval"));
  const fs::path out = rc.resolved_out_dir();
  mm::csv::Writer w(out / "passkey.csv");
  w.row({"model_id", "length", "accuracy", "samples"});
  for (const auto& r : rows) {
    w.row({"memmamba", std::to_string(r.length), mm::csv::fmt(r.accuracy),
           std::to_string(r.samples)});
    std::cout << "passkey@" << r.length << " = " << r.accuracy << "\n";
  }
  mm::cli::write_manifest(out, "passkey", mm::cli::run_config_to_json(rc),
                          {"passkey.csv"});
  return 0;
}

int cmd_fidelity(const CommonArgs& args) {
  mm::cli::RunConfig rc = load(args);
  auto ck = require_checkpoint(rc);
  if (rc.task.corpus.empty()) throw mm::InputError("fidelity needs task.corpus");
  const std::vector<int> corpus = mm::tasks::load_corpus(rc.task.corpus);
  const auto tail = heldout_tail(corpus);
  const std::size_t ctx =
      rc.fidelity.context_len ? rc.fidelity.context_len : rc.train.context_len;
  if (tail.size() < ctx + 1) throw mm::InputError("held-out corpus shorter than context");

  std::vector<mm::model::LayerTrace> traces;
  for (std::size_t i = 0; i < rc.fidelity.windows; ++i) {
    const std::size_t begin = (i * ctx) % (tail.size() - ctx);
    std::vector<int> window(tail.begin() + begin, tail.begin() + begin + ctx);
    traces.push_back(mm::model::model_forward(ck.config, ck.weights, window).trace);
  }
  mm::fidelity::FidelityOptions opts;
  opts.deltas = rc.fidelity.deltas;
  opts.gaps = rc.fidelity.gaps;
  opts.lambda = rc.fidelity.lambda;
  opts.temperature = rc.fidelity.temperature;
  auto rep = mm::fidelity::fidelity_report(traces, ck.weights.at("embed"),
                                           ck.weights.at("w_out"), opts);

  const fs::path out = rc.resolved_out_dir();
  mm::csv::Writer w(out / "fidelity.csv");
  w.row({"model_id", "metric", "delta_or_gap", "value"});
  w.row({"memmamba", "etmf", "0", mm::csv::fmt(rep.etmf)});
  for (auto [delta, v] : rep.etmf_delta)
    w.row({"memmamba", "etmf_delta", std::to_string(delta), mm::csv::fmt(v)});
  for (auto [gap, v] : rep.eclmf)
    w.row({"memmamba", "eclmf", std::to_string(gap), mm::csv::fmt(v)});

  nlohmann::json j;
  j["etmf"] = rep.etmf;
  for (auto [delta, v] : rep.etmf_delta) j["etmf_delta"][std::to_string(delta)] = v;
  for (auto [gap, v] : rep.eclmf) j["eclmf"][std::to_string(gap)] = v;
  j["sample_count"] = rep.sample_count;
  std::ofstream js(out / "fidelity.json");
  js << j.dump(2) << "\n";

  mm::cli::write_manifest(out, "fidelity", mm::cli::run_config_to_json(rc),
                          {"fidelity.csv", "fidelity.json"});
  std::cout << "etmf = " << rep.etmf << "\n";
  return 0;
}

int cmd_theory_check(const CommonArgs& args) {
  mm::cli::RunConfig rc = load(args);
  const fs::path out = rc.resolved_out_dir();
  mm::csv::Writer w(out / "theory.csv");
  w.row({"name", "lhs", "rhs", "holds", "margin"});
  std::size_t failures = 0;
  auto emit = [&](const mm::theory::BoundCheck& c, std::size_t idx) {
    w.row({c.name + "_" + std::to_string(idx), mm::csv::fmt(c.lhs), mm::csv::fmt(c.rhs),
           c.holds ? "1" : "0", mm::csv::fmt(c.margin)});
    if (!c.holds) ++failures;
  };

  const std::size_t kInstances = 1000;
  std::mt19937_64 rng(mm::sub_seed(rc.seed, "theory"));
  std::uniform_real_distribution<double> u01(0.0, 1.0);

  for (std::size_t i = 0; i < kInstances; ++i) {
    const std::size_t w_ = 1 + rng() % 6;
    const std::size_t m_ = 1 + rng() % 6;
    const std::size_t d_ = 1 + rng() % 5;
    mm::Tensor h({w_ * m_, d_});
    for (std::size_t k = 0; k < h.size(); ++k) h[k] = 4.0 * u01(rng) - 2.0;
    emit(mm::theory::pooling_error_check(h, w_), i);
  }
  for (std::size_t i = 0; i < kInstances; ++i) {
    const std::size_t layers = 1 + rng() % 6;
    std::vector<double> a(layers), g(layers);
    for (auto& v : a) v = 0.05 + 0.9 * u01(rng);
    for (auto& v : g) v = 0.1 + 0.9 * u01(rng);
    emit(mm::theory::layered_decay_check(a, g, 1 + rng() % 12, 10.0 * u01(rng)), i);
  }
  for (std::size_t i = 0; i < kInstances; ++i) {
    mm::ssm::SSMParams p;
    p.state_dim = 1 + rng() % 4;
    p.width = 1 + rng() % 4;
    mm::Tensor raw({p.state_dim});
    for (std::size_t k = 0; k < raw.size(); ++k) raw[k] = 6.0 * u01(rng) - 5.0;
    p.a_diag = mm::ssm::make_stable_A(raw);
    p.b_in = mm::Tensor({p.state_dim, p.width});
    for (std::size_t k = 0; k < p.b_in.size(); ++k) p.b_in[k] = 2.0 * u01(rng) - 1.0;
    p.c_out = mm::Tensor({p.width, p.state_dim});
    for (std::size_t k = 0; k < p.c_out.size(); ++k) p.c_out[k] = 2.0 * u01(rng) - 1.0;
    emit(mm::theory::bibo_sim_check(p, 0.5 + u01(rng), u01(rng), u01(rng), 2000,
                                    rng()),
         i);
    mm::Tensor probe({p.width});
    for (std::size_t k = 0; k < probe.size(); ++k) probe[k] = 2.0 * u01(rng) - 1.0;
    emit(mm::theory::contribution_check(p, rng() % 65, probe), i);
  }

  // worked recall inequalities
  auto rb = mm::theory::recall_bounds(0.9, 1.0, 1.0, 1.0, 100, 0.8, 0.1);
  emit(mm::theory::BoundCheck::make("recall_mamba_k100", rb.mamba_upper, 0.01), 0);
  auto rb2 = mm::theory::recall_bounds(0.9, 1.0, 1.0, 0.7, 100, 0.8, 0.1);
  emit(mm::theory::BoundCheck::make("recall_csa_floor", 0.9, rb2.csa_lower), 0);

  mm::cli::write_manifest(out, "theory-check", mm::cli::run_config_to_json(rc),
                          {"theory.csv"});
  std::cout << (failures == 0 ? "all bound checks hold\n"
                              : std::to_string(failures) + " bound checks FAILED\n");
  return failures == 0 ? 0 : 1;
}

int cmd_bench(const CommonArgs& args) {
  mm::cli::RunConfig rc = load(args);
  const fs::path out = rc.resolved_out_dir();
  mm::csv::Writer w(out / "bench.csv");
  w.row({"model_id", "seq_len", "wall_ms_median", "peak_state_bytes"});
  mm::csv::Writer wl(out / "bench_long.csv");
  wl.row({"model_id", "seq_len", "sample_idx", "wall_ms"});
  mm::csv::Writer wf(out / "bench_fit.csv");
  wf.row({"model_id", "exponent"});

  std::vector<mm::bench::BenchModel> kinds;
  if (rc.bench.model == "memmamba" || rc.bench.model == "both")
    kinds.push_back(mm::bench::BenchModel::MEMMAMBA);
  if (rc.bench.model == "quadratic" || rc.bench.model == "both")
    kinds.push_back(mm::bench::BenchModel::QUADRATIC_BASELINE);
  if (kinds.empty()) throw mm::ParameterError("bench.model must be memmamba|quadratic|both");

  for (auto kind : kinds) {
    auto records = mm::bench::benchmark_forward(kind, rc.bench.lengths, rc.bench.samples,
                                                rc.model, rc.seed);
    for (const auto& r : records) {
      w.row({r.model_id, std::to_string(r.seq_len), mm::csv::fmt(r.wall_ms),
             std::to_string(r.peak_state_bytes)});
      for (std::size_t s = 0; s < r.sample_ms.size(); ++s)
        wl.row({r.model_id, std::to_string(r.seq_len), std::to_string(s),
                mm::csv::fmt(r.sample_ms[s])});
    }
    const double expo = mm::bench::fit_scaling_exponent(records);
    wf.row({records.front().model_id, mm::csv::fmt(expo)});
    std::cout << records.front().model_id << " scaling exponent = " << expo << "\n";
  }
  mm::cli::write_manifest(out, "bench", mm::cli::run_config_to_json(rc),
                          {"bench.csv", "bench_long.csv", "bench_fit.csv"});
  return 0;
}

int cmd_sweep(const CommonArgs& args) {
  mm::cli::RunConfig rc = load(args);
  if (rc.task.kind != mm::tasks::TaskSpec::Kind::LM)
    throw mm::ParameterError("sweep runs on the lm task");
  mm::tasks::TaskSpec task = rc.task.spec();  // trains on the leading 90%
  const std::vector<int> full_corpus = mm::tasks::load_corpus(rc.task.corpus);
  const auto tail = heldout_tail(full_corpus);

  struct Point {
    std::string value;
    mm::model::ModelConfig cfg;
  };
  std::vector<Point> points;
  if (rc.sweep.axis == "fusion") {
    for (auto f : {mm::model::Fusion::GATED, mm::model::Fusion::RESIDUAL,
                   mm::model::Fusion::ELEMENTWISE, mm::model::Fusion::CONV1D,
                   mm::model::Fusion::WEIGHTED}) {
      Point p{mm::model::to_string(f), rc.model};
      p.cfg.fusion = f;
      points.push_back(std::move(p));
    }
  } else if (rc.sweep.axis == "pooling") {
    for (auto s : {mm::model::Summarizer::MAXPOOL, mm::model::Summarizer::MEANPOOL}) {
      Point p{mm::model::to_string(s), rc.model};
      p.cfg.summarizer = s;
      points.push_back(std::move(p));
    }
  } else if (rc.sweep.axis == "pool_capacity") {
    for (std::size_t v : rc.sweep.values) {
      Point p{std::to_string(v), rc.model};
      p.cfg.pool_capacity = v;
      points.push_back(std::move(p));
    }
  } else if (rc.sweep.axis == "window") {
    for (std::size_t v : rc.sweep.values) {
      Point p{std::to_string(v), rc.model};
      p.cfg.note_window = v;
      points.push_back(std::move(p));
    }
  } else {
    throw mm::ParameterError("sweep.axis must be fusion|pooling|pool_capacity|window");
  }
  if (points.empty()) throw mm::ParameterError("sweep has no points; set sweep.values");

  mm::train::TrainConfig tcfg = rc.train;
  if (rc.sweep.steps) tcfg.steps = rc.sweep.steps;

  const fs::path out = rc.resolved_out_dir();
  mm::csv::Writer w(out / "sweep.csv");
  w.row({"axis", "value", "ppl"});
  for (const Point& p : points) {
    auto result = mm::train::train(p.cfg, tcfg, task, std::nullopt);
    const std::size_t eval_len =
        std::min(tail.size() - 1, tcfg.context_len * rc.sweep.eval_windows);
    const double ppl = mm::train::perplexity(
        p.cfg, result.weights, tail.subspan(0, eval_len + 1), tcfg.context_len);
    w.row({rc.sweep.axis, p.value, mm::csv::fmt(ppl)});
    std::cout << rc.sweep.axis << "=" << p.value << " ppl=" << ppl << "\n";
  }
  mm::cli::write_manifest(out, "sweep", mm::cli::run_config_to_json(rc), {"sweep.csv"});
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"memmamba: long-memory state-space sequence model workbench"};
  app.require_subcommand(1);

  CommonArgs train_a, ppl_a, pk_a, fid_a, theory_a, bench_a, sweep_a;
  add_common(app.add_subcommand("train", "train a model on the configured task"), train_a);
  add_common(app.add_subcommand("eval-ppl", "held-out perplexity of a checkpoint"), ppl_a);
  add_common(app.add_subcommand("passkey", "passkey retrieval accuracy by length"), pk_a);
  add_common(app.add_subcommand("fidelity", "token/cross-layer memory fidelity metrics"),
             fid_a);
  add_common(app.add_subcommand("theory-check", "run the numerical bound suite"), theory_a);
  add_common(app.add_subcommand("bench", "forward-latency scaling measurements"), bench_a);
  add_common(app.add_subcommand("sweep", "hyperparameter sensitivity sweep"), sweep_a);

  CLI11_PARSE(app, argc, argv);

  try {
    if (app.got_subcommand("train")) return cmd_train(train_a);
    if (app.got_subcommand("eval-ppl")) return cmd_eval_ppl(ppl_a);
    if (app.got_subcommand("passkey")) return cmd_passkey(pk_a);
    if (app.got_subcommand("fidelity")) return cmd_fidelity(fid_a);
    if (app.got_subcommand("theory-check")) return cmd_theory_check(theory_a);
    if (app.got_subcommand("bench")) return cmd_bench(bench_a);
    if (app.got_subcommand("sweep")) return cmd_sweep(sweep_a);
  } catch (const mm::ParameterError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const mm::InputError& e) {
    const std::string what = e.what();
    std::cerr << "input error: " << what << "\n";
    return what.find("checkpoint") != std::string::npos ? kExitMissingCheckpoint
                                                        : kExitConfig;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
