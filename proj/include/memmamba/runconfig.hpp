#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "memmamba/model.hpp"
#include "memmamba/tasks.hpp"
#include "memmamba/train.hpp"

namespace memmamba::cli {

struct TaskConfig {
  tasks::TaskSpec::Kind kind = tasks::TaskSpec::Kind::LM;
  std::string corpus;  // LM corpus path
  std::size_t seq_len = 128;
  std::size_t payload_len = 8;
  std::size_t vocab = 256;
  std::size_t needle_docs = 1;
  std::size_t noise_docs = 8;
  std::vector<std::size_t> lengths = {64, 128, 256, 512, 1024};
  std::size_t samples = 200;

  tasks::TaskSpec spec() const;  // loads the corpus for LM tasks
};

struct BenchConfig {
  std::string model = "memmamba";  // or "quadratic"
  std::vector<std::size_t> lengths = {256, 512, 1024, 2048, 4096, 8192};
  std::size_t samples = 5;
};

struct FidelityConfig {
  std::vector<int> deltas = {8, 16, 32};
  std::vector<int> gaps = {2, 5, 10};
  double lambda = 1e-4;
  double temperature = 1.0;
  std::size_t windows = 8;       // held-out windows to trace
  std::size_t context_len = 0;   // 0 = train.context_len
};

struct SweepConfig {
  std::string axis = "fusion";   // fusion | pooling | pool_capacity | window
  std::vector<std::size_t> values;  // numeric axes
  std::size_t steps = 0;         // 0 = train.steps
  std::size_t eval_windows = 16;
};

/// One experiment: every command reads this document. A single top-level
/// seed fans out to named sub-seeds (init/data/eval) so runs stay paired.
struct RunConfig {
  model::ModelConfig model;
  train::TrainConfig train;
  TaskConfig task;
  BenchConfig bench;
  FidelityConfig fidelity;
  SweepConfig sweep;
  std::uint64_t seed = 123;
  std::string out_dir = "runs/out";
  std::string checkpoint;  // input checkpoint for eval commands

  std::filesystem::path resolved_out_dir() const;  // honours MEMMAMBA_OUT_ROOT
};

/// Parse + schema-validate a config document. Unknown keys are rejected with
/// their full path; `overrides` are dotted key=value pairs applied first.
RunConfig load_run_config(const std::filesystem::path& path,
                          std::span<const std::string> overrides);
RunConfig run_config_from_json(nlohmann::json j);

nlohmann::json run_config_to_json(const RunConfig& rc);
nlohmann::json model_config_to_json(const model::ModelConfig& mc);
model::ModelConfig model_config_from_json(const nlohmann::json& j);

/// FNV-1a over the canonical (sorted-key) dump.
std::string config_hash(const nlohmann::json& j);

/// Revision-stamped run manifest written beside every command's outputs.
/// Wall-clock lives only here; metric CSVs stay byte-reproducible.
void write_manifest(const std::filesystem::path& dir, const std::string& command,
                    const nlohmann::json& config,
                    const std::vector<std::string>& outputs);

}  // namespace memmamba::cli
