#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "memmamba/model.hpp"

namespace memmamba::tasks {

/// One supervised sequence. targets[i] is the token the model should predict
/// after consuming tokens[0..i]; -1 marks unsupervised positions.
struct TaskSample {
  std::vector<int> tokens;
  std::vector<int> targets;
  struct Meta {
    int passkey_pos = -1;  // position of the secret token, when applicable
    int distance = 0;      // gap between the secret and the answer position
  } meta;
};

/// Reserved token ranges for the retrieval tasks. Filler, marker/query and
/// passkey ranges are pairwise disjoint.
struct RetrievalVocab {
  int marker = 0;
  int query = 1;
  int key_lo = 2, key_hi = 0;      // passkey candidates: [key_lo, key_hi)
  int filler_lo = 0, filler_hi = 0;
};
RetrievalVocab retrieval_vocab(std::size_t vocab);

/// Uniform filler with a marker+passkey pair at a random interior position
/// and a two-token query suffix; the answer is supervised at the final step.
TaskSample gen_passkey(std::size_t seq_len, std::size_t vocab, std::uint64_t seed);

/// Payload, separator, filler, separator, then the payload again under
/// teacher forcing; supervised on the echo.
TaskSample gen_copy(std::size_t seq_len, std::size_t payload_len, std::size_t vocab,
                    std::uint64_t seed);

/// Miniature cross-document retrieval: needle documents carrying key/value
/// pairs buried among noise documents; the query asks one needle's value.
TaskSample gen_doc_retrieval(std::size_t needle_docs, std::size_t noise_docs,
                             std::size_t vocab, std::uint64_t seed);

/// Byte-level tokens (vocab 256) of a whole file. Empty file is an error.
std::vector<int> load_corpus(const std::filesystem::path& path);

/// Non-overlapping [begin, len) windows covering every token exactly once.
std::vector<std::pair<std::size_t, std::size_t>> corpus_windows(std::size_t corpus_len,
                                                                std::size_t context_len);

/// Next-token supervision within one corpus window.
TaskSample lm_sample(std::span<const int> corpus, std::size_t begin, std::size_t len);

/// Deterministic English-like byte corpus: Zipf-weighted common words plus
/// per-document rare entities that recur far apart, so long-range reuse is
/// actually present in the data.
void make_synthetic_corpus(const std::filesystem::path& path, std::size_t bytes,
                           std::uint64_t seed);

struct TaskSpec {
  enum class Kind { PASSKEY, COPY, LM, DOCS };
  Kind kind = Kind::LM;
  std::size_t seq_len = 128;
  std::size_t payload_len = 8;
  std::size_t vocab = 256;
  std::size_t needle_docs = 1;
  std::size_t noise_docs = 8;
  std::vector<int> corpus;  // LM only

  static Kind kind_from(std::string_view s);
  static const char* kind_name(Kind k);

  /// index-th training sample of the stream owned by `seed`.
  TaskSample sample(std::size_t index, std::uint64_t seed, std::size_t context_len) const;
};

using Predictor = std::function<int(const TaskSample&)>;

struct PasskeyAccuracy {
  std::size_t length;
  double accuracy;
  std::size_t samples;
};

/// Fraction of samples whose final-position prediction equals the passkey,
/// per sequence length. Fresh samples are derived from `seed`.
std::vector<PasskeyAccuracy> eval_passkey(const Predictor& predict,
                                          std::span<const std::size_t> lengths,
                                          std::size_t samples_per_length, std::size_t vocab,
                                          std::uint64_t seed);

/// Answer-position accuracy over explicit samples (doc retrieval et al.).
double eval_samples(const Predictor& predict, std::span<const TaskSample> samples);

/// Streaming argmax predictor at the final supervised position.
Predictor model_predictor(const model::ModelConfig& cfg, const model::Weights& w);

}  // namespace memmamba::tasks
