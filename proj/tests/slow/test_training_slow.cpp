// Longer-running behavioural tests: actual learning on the copy task,
// training-effect checks, and timing stability. Kept out of the fast suite.

#include <cmath>
#include <filesystem>
#include <fstream>

#include "doctest.h"
#include "memmamba/bench.hpp"
#include "memmamba/csvio.hpp"
#include "memmamba/seeds.hpp"
#include "memmamba/tasks.hpp"
#include "memmamba/train.hpp"

using namespace memmamba;

TEST_CASE("copy task training cuts the loss by 10x") {
  model::ModelConfig cfg;
  cfg.layers = 2;
  cfg.width = 24;
  cfg.state_dim = 16;
  cfg.summary_dim = 12;
  cfg.pool_capacity = 64;
  cfg.vocab = 32;
  cfg.tau1 = 0.0;  // note every token
  cfg.tau2 = 0.0;
  cfg.period = 2;
  cfg.lookback = 1;
  cfg.seed = 123;

  train::TrainConfig tc;
  tc.steps = 2000;
  tc.accum_steps = 2;
  tc.lr = 5e-3;
  tc.weight_decay = 0.01;
  tc.context_len = 48;
  tc.seed = 123;

  tasks::TaskSpec task;
  task.kind = tasks::TaskSpec::Kind::COPY;
  task.seq_len = 48;
  task.payload_len = 6;
  task.vocab = 32;

  train::TrainResult r = train::train(cfg, tc, task);
  const double first = r.log.front().loss;
  double tail = 0.0;
  for (std::size_t i = r.log.size() - 50; i < r.log.size(); ++i) tail += r.log[i].loss;
  tail /= 50.0;
  CHECK(tail < 0.1 * first);
}

TEST_CASE("metrics CSV streams one row per step") {
  model::ModelConfig cfg;
  cfg.layers = 1;
  cfg.width = 12;
  cfg.state_dim = 8;
  cfg.summary_dim = 6;
  cfg.vocab = 32;
  cfg.seed = 5;
  train::TrainConfig tc;
  tc.steps = 7;
  tc.accum_steps = 1;
  tc.lr = 1e-3;
  tc.context_len = 16;
  tc.seed = 5;
  tasks::TaskSpec task;
  task.kind = tasks::TaskSpec::Kind::COPY;
  task.seq_len = 16;
  task.payload_len = 2;
  task.vocab = 32;

  auto path = std::filesystem::temp_directory_path() / "mm_train_log.csv";
  train::train(cfg, tc, task, path);
  auto rows = csv::read(path);
  REQUIRE(rows.size() == 8);  // header + 7 steps
  CHECK(rows[0] == std::vector<std::string>{"step", "loss", "grad_norm", "lr"});
  CHECK(rows[1][0] == "0");
}

TEST_CASE("training lowers held-out perplexity below the untrained model") {
  auto corpus_path = std::filesystem::temp_directory_path() / "mm_slow_corpus.txt";
  tasks::make_synthetic_corpus(corpus_path, 400000, 11);
  std::vector<int> corpus = tasks::load_corpus(corpus_path);
  const std::size_t cut = corpus.size() * 9 / 10;
  std::vector<int> head(corpus.begin(), corpus.begin() + cut);
  std::span<const int> tail(corpus.data() + cut, corpus.size() - cut);

  model::ModelConfig cfg;
  cfg.layers = 2;
  cfg.width = 24;
  cfg.state_dim = 12;
  cfg.summary_dim = 12;
  cfg.vocab = 256;
  cfg.tau1 = 0.45;
  cfg.tau2 = 0.45;
  cfg.period = 2;
  cfg.lookback = 1;
  cfg.seed = 123;

  train::TrainConfig tc;
  tc.steps = 400;
  tc.accum_steps = 2;
  tc.lr = 3e-3;
  tc.weight_decay = 0.01;
  tc.context_len = 64;
  tc.seed = 123;

  tasks::TaskSpec task;
  task.kind = tasks::TaskSpec::Kind::LM;
  task.corpus = head;

  const double before =
      train::perplexity(cfg, model::init_weights(cfg), tail.subspan(0, 8193), 64);
  train::TrainResult r = train::train(cfg, tc, task);
  const double after = train::perplexity(cfg, r.weights, tail.subspan(0, 8193), 64);
  CHECK(after < before);
  CHECK(after < 40.0);  // far below the 256 chance level
}

TEST_CASE("trained passkey beats the untrained model at training length") {
  model::ModelConfig cfg;
  cfg.layers = 2;
  cfg.width = 24;
  cfg.state_dim = 16;
  cfg.summary_dim = 12;
  cfg.pool_capacity = 160;
  cfg.vocab = 64;
  cfg.tau1 = 0.0;
  cfg.tau2 = 0.0;
  cfg.period = 2;
  cfg.lookback = 1;
  cfg.seed = 123;

  train::TrainConfig tc;
  tc.steps = 700;
  tc.accum_steps = 4;
  tc.lr = 1e-2;
  tc.weight_decay = 0.01;
  tc.context_len = 96;
  tc.seed = 123;

  tasks::TaskSpec task;
  task.kind = tasks::TaskSpec::Kind::PASSKEY;
  task.seq_len = 96;
  task.vocab = 64;

  const std::vector<std::size_t> lengths{96};
  auto untrained = tasks::eval_passkey(
      tasks::model_predictor(cfg, model::init_weights(cfg)), lengths, 100, 64, 17);
  train::TrainResult r = train::train(cfg, tc, task);
  auto trained =
      tasks::eval_passkey(tasks::model_predictor(cfg, r.weights), lengths, 100, 64, 17);
  CHECK(trained[0].accuracy > untrained[0].accuracy);
  CHECK(trained[0].accuracy > 0.5);
}

TEST_CASE("doc retrieval training lifts accuracy above chance") {
  model::ModelConfig cfg;
  cfg.layers = 2;
  cfg.width = 24;
  cfg.state_dim = 12;
  cfg.summary_dim = 12;
  cfg.pool_capacity = 128;
  cfg.vocab = 64;
  cfg.tau1 = 0.0;
  cfg.tau2 = 0.0;
  cfg.period = 2;
  cfg.lookback = 1;
  cfg.seed = 123;

  train::TrainConfig tc;
  tc.steps = 600;
  tc.accum_steps = 4;
  tc.lr = 1e-2;
  tc.weight_decay = 0.01;
  tc.context_len = 64;
  tc.seed = 123;

  tasks::TaskSpec task;
  task.kind = tasks::TaskSpec::Kind::DOCS;
  task.vocab = 64;
  task.needle_docs = 2;
  task.noise_docs = 8;

  train::TrainResult r = train::train(cfg, tc, task);
  auto predictor = tasks::model_predictor(cfg, r.weights);
  std::vector<tasks::TaskSample> samples;
  for (std::uint64_t s = 0; s < 100; ++s)
    samples.push_back(tasks::gen_doc_retrieval(2, 8, 64, splitmix64(0xd0c5 + s)));
  const double acc = tasks::eval_samples(predictor, samples);
  CHECK(acc > 0.3);  // chance over the 8 value tokens is 0.125
}

TEST_CASE("median latency is stable between 1 and 32 samples") {
  model::ModelConfig cfg;
  cfg.layers = 2;
  cfg.width = 32;
  cfg.state_dim = 16;
  cfg.summary_dim = 16;
  cfg.pool_capacity = 50;
  cfg.tau1 = 0.45;
  cfg.tau2 = 0.45;
  cfg.vocab = 64;
  cfg.seed = 1;
  const std::vector<std::size_t> lengths{1024};
  auto one = bench::benchmark_forward(bench::BenchModel::MEMMAMBA, lengths, 1, cfg, 9);
  auto many = bench::benchmark_forward(bench::BenchModel::MEMMAMBA, lengths, 32, cfg, 9);
  const double rel = std::abs(one[0].wall_ms - many[0].wall_ms) / many[0].wall_ms;
  CHECK(rel < 0.25);
}
