#include "memmamba/tasks.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <random>

#include "memmamba/seeds.hpp"

namespace memmamba::tasks {

RetrievalVocab retrieval_vocab(std::size_t vocab) {
  if (vocab < 16)
    throw ParameterError("retrieval tasks need vocab >= 16 to reserve token ranges");
  RetrievalVocab v;
  const int keys = std::max<int>(4, static_cast<int>(vocab / 4));
  v.key_lo = 2;
  v.key_hi = 2 + keys;
  v.filler_lo = v.key_hi;
  v.filler_hi = static_cast<int>(vocab);
  return v;
}

TaskSample gen_passkey(std::size_t seq_len, std::size_t vocab, std::uint64_t seed) {
  if (seq_len < 8) throw ParameterError("passkey needs seq_len >= 8");
  const RetrievalVocab v = retrieval_vocab(vocab);
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<int> filler(v.filler_lo, v.filler_hi - 1);
  std::uniform_int_distribution<int> key(v.key_lo, v.key_hi - 1);

  TaskSample s;
  s.tokens.resize(seq_len);
  s.targets.assign(seq_len, -1);
  for (auto& t : s.tokens) t = filler(rng);

  // marker at pos, passkey at pos+1, both clear of the two-token query suffix
  std::uniform_int_distribution<std::size_t> where(1, seq_len - 4);
  const std::size_t pos = where(rng);
  const int passkey = key(rng);
  s.tokens[pos] = v.marker;
  s.tokens[pos + 1] = passkey;
  s.tokens[seq_len - 2] = v.query;
  s.tokens[seq_len - 1] = v.marker;
  s.targets[seq_len - 1] = passkey;
  s.meta.passkey_pos = static_cast<int>(pos + 1);
  s.meta.distance = static_cast<int>(seq_len - 2 - pos);
  return s;
}

TaskSample gen_copy(std::size_t seq_len, std::size_t payload_len, std::size_t vocab,
                    std::uint64_t seed) {
  if (payload_len == 0 || payload_len >= seq_len / 2)
    throw ParameterError("copy needs 0 < payload_len < seq_len/2");
  const RetrievalVocab v = retrieval_vocab(vocab);
  if (seq_len < 2 * payload_len + 3) throw ParameterError("copy sequence too short");
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<int> filler(v.filler_lo, v.filler_hi - 1);
  std::uniform_int_distribution<int> key(v.key_lo, v.key_hi - 1);

  TaskSample s;
  s.tokens.resize(seq_len);
  s.targets.assign(seq_len, -1);
  std::vector<int> payload(payload_len);
  for (auto& p : payload) p = key(rng);

  std::size_t i = 0;
  for (std::size_t j = 0; j < payload_len; ++j) s.tokens[i++] = payload[j];
  s.tokens[i++] = v.marker;
  while (i < seq_len - payload_len - 1) s.tokens[i++] = filler(rng);
  s.tokens[i++] = v.marker;  // echo cue
  // Teacher forcing: the echo is in the input, supervision is one step ahead.
  for (std::size_t j = 0; j < payload_len; ++j) {
    s.targets[i - 1 + j] = payload[j];
    s.tokens[i + j] = payload[j];
  }
  s.meta.distance = static_cast<int>(seq_len - 2 * payload_len - 1);
  return s;
}

TaskSample gen_doc_retrieval(std::size_t needle_docs, std::size_t noise_docs,
                             std::size_t vocab, std::uint64_t seed) {
  if (needle_docs == 0) throw ParameterError("need at least one needle document");
  const std::size_t docs = needle_docs + noise_docs;
  const int kVals = 8, kDocLen = 6;
  const int sep = 0, query = 1;
  const int key_lo = 2, val_lo = key_lo + static_cast<int>(docs);
  const int filler_lo = val_lo + kVals;
  if (vocab < static_cast<std::size_t>(filler_lo) + 8)
    throw ParameterError("doc retrieval vocab too small for this many documents");
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<int> filler(filler_lo, static_cast<int>(vocab) - 1);

  // every document gets a distinct key so the query is unambiguous
  std::vector<int> keys(docs), vals(docs);
  for (std::size_t d = 0; d < docs; ++d) keys[d] = key_lo + static_cast<int>(d);
  std::shuffle(keys.begin(), keys.end(), rng);
  for (std::size_t d = 0; d < docs; ++d)
    vals[d] = val_lo + static_cast<int>(rng() % kVals);

  std::vector<std::size_t> order(docs);
  for (std::size_t d = 0; d < docs; ++d) order[d] = d;
  std::shuffle(order.begin(), order.end(), rng);

  TaskSample s;
  for (std::size_t d : order) {
    s.tokens.push_back(sep);
    s.tokens.push_back(keys[d]);
    s.tokens.push_back(vals[d]);
    for (int f = 0; f < kDocLen - 3; ++f) s.tokens.push_back(filler(rng));
  }
  const std::size_t target_doc = rng() % needle_docs;  // needles are docs 0..n-1
  s.tokens.push_back(query);
  s.tokens.push_back(keys[target_doc]);
  s.targets.assign(s.tokens.size(), -1);
  s.targets.back() = vals[target_doc];
  return s;
}

std::vector<int> load_corpus(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw InputError("cannot open corpus: " + path.string());
  std::vector<char> raw((std::istreambuf_iterator<char>(is)),
                        std::istreambuf_iterator<char>());
  if (raw.empty()) throw InputError("empty corpus: " + path.string());
  std::vector<int> tokens(raw.size());
  for (std::size_t i = 0; i < raw.size(); ++i)
    tokens[i] = static_cast<int>(static_cast<unsigned char>(raw[i]));
  return tokens;
}

std::vector<std::pair<std::size_t, std::size_t>> corpus_windows(std::size_t corpus_len,
                                                                std::size_t context_len) {
  if (context_len < 2) throw ParameterError("context_len must be >= 2");
  std::vector<std::pair<std::size_t, std::size_t>> out;
  for (std::size_t b = 0; b < corpus_len; b += context_len)
    out.emplace_back(b, std::min(context_len, corpus_len - b));
  return out;
}

TaskSample lm_sample(std::span<const int> corpus, std::size_t begin, std::size_t len) {
  if (begin + len > corpus.size()) throw ParameterError("window exceeds corpus");
  TaskSample s;
  s.tokens.assign(corpus.begin() + begin, corpus.begin() + begin + len);
  s.targets.resize(len);
  for (std::size_t i = 0; i + 1 < len; ++i) s.targets[i] = s.tokens[i + 1];
  s.targets[len - 1] = -1;
  return s;
}

namespace {

std::string make_word(std::mt19937_64& rng, std::size_t min_len, std::size_t max_len) {
  static const char* kConsonants = "bcdfghjklmnpqrstvwz";
  static const char* kVowels = "aeiou";
  std::uniform_int_distribution<std::size_t> len(min_len, max_len);
  const std::size_t n = len(rng);
  std::string w;
  for (std::size_t i = 0; i < n; ++i)
    w += (i % 2 == 0) ? kConsonants[rng() % 19] : kVowels[rng() % 5];
  return w;
}

}  // namespace

void make_synthetic_corpus(const std::filesystem::path& path, std::size_t bytes,
                           std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  const std::size_t kWords = 400;
  std::vector<std::string> common(kWords);
  for (auto& w : common) w = make_word(rng, 2, 7);

  std::uniform_real_distribution<double> u01(0.0, 1.0);
  auto zipf_word = [&]() -> const std::string& {
    const auto idx = static_cast<std::size_t>(static_cast<double>(kWords) *
                                              std::pow(u01(rng), 2.5));
    return common[std::min(idx, kWords - 1)];
  };

  std::ofstream os(path, std::ios::binary);
  if (!os) throw InputError("cannot write corpus: " + path.string());
  std::string buf;
  buf.reserve(1 << 16);
  while (buf.size() < bytes) {
    // One document: a handful of rare entities recur across the whole block,
    // far beyond any short recurrence the common words provide.
    std::vector<std::string> entities(4);
    for (auto& e : entities) e = make_word(rng, 8, 12);
    std::uniform_int_distribution<int> sent_len(5, 12);
    const std::size_t doc_end = std::min(bytes, buf.size() + 4096 + rng() % 4096);
    while (buf.size() < doc_end) {
      const int n = sent_len(rng);
      for (int i = 0; i < n; ++i) {
        if (u01(rng) < 0.22)
          buf += entities[rng() % entities.size()];
        else
          buf += zipf_word();
        buf += (i + 1 == n) ? "." : " ";
      }
      buf += u01(rng) < 0.2 ? "\n" : " ";
    }
    buf += "\n\n";
  }
  buf.resize(bytes);
  os.write(buf.data(), static_cast<std::streamsize>(buf.size()));
}

TaskSpec::Kind TaskSpec::kind_from(std::string_view s) {
  if (s == "passkey") return Kind::PASSKEY;
  if (s == "copy") return Kind::COPY;
  if (s == "lm") return Kind::LM;
  if (s == "docs") return Kind::DOCS;
  throw ParameterError("unknown task kind: " + std::string(s));
}

const char* TaskSpec::kind_name(Kind k) {
  switch (k) {
    case Kind::PASSKEY: return "passkey";
    case Kind::COPY: return "copy";
    case Kind::LM: return "lm";
    case Kind::DOCS: return "docs";
  }
  return "?";
}

TaskSample TaskSpec::sample(std::size_t index, std::uint64_t seed,
                            std::size_t context_len) const {
  const std::uint64_t s = splitmix64(seed + 0x9e3779b97f4a7c15ull * (index + 1));
  switch (kind) {
    case Kind::PASSKEY:
      return gen_passkey(seq_len ? seq_len : context_len, vocab, s);
    case Kind::COPY:
      return gen_copy(seq_len ? seq_len : context_len, payload_len, vocab, s);
    case Kind::DOCS:
      return gen_doc_retrieval(needle_docs, noise_docs, vocab, s);
    case Kind::LM: {
      if (corpus.size() < context_len + 1)
        throw ParameterError("corpus shorter than context length");
      std::mt19937_64 rng(s);
      std::uniform_int_distribution<std::size_t> start(0, corpus.size() - context_len - 1);
      const std::size_t b = start(rng);
      TaskSample smp = lm_sample(corpus, b, context_len);
      // cross-window target for the last position keeps every step supervised
      smp.targets[context_len - 1] = corpus[b + context_len];
      return smp;
    }
  }
  throw ParameterError("unknown task kind");
}

std::vector<PasskeyAccuracy> eval_passkey(const Predictor& predict,
                                          std::span<const std::size_t> lengths,
                                          std::size_t samples_per_length, std::size_t vocab,
                                          std::uint64_t seed) {
  std::vector<PasskeyAccuracy> out;
  for (std::size_t len : lengths) {
    std::size_t hits = 0;
    for (std::size_t i = 0; i < samples_per_length; ++i) {
      const std::uint64_t s =
          splitmix64(seed ^ (len * 0x100000001b3ull) ^ (i * 0x9e3779b97f4a7c15ull));
      TaskSample smp = gen_passkey(len, vocab, s);
      if (predict(smp) == smp.targets.back()) ++hits;
    }
    out.push_back({len, static_cast<double>(hits) / static_cast<double>(samples_per_length),
                   samples_per_length});
  }
  return out;
}

double eval_samples(const Predictor& predict, std::span<const TaskSample> samples) {
  if (samples.empty()) throw ParameterError("no samples to evaluate");
  std::size_t hits = 0;
  for (const TaskSample& s : samples)
    if (predict(s) == s.targets.back()) ++hits;
  return static_cast<double>(hits) / static_cast<double>(samples.size());
}

Predictor model_predictor(const model::ModelConfig& cfg, const model::Weights& w) {
  auto mdl = std::make_shared<model::StreamingModel>(cfg, w);
  return [mdl](const TaskSample& s) -> int {
    mdl->reset();
    Tensor logits;
    for (int t : s.tokens) logits = mdl->step(t);
    int best = 0;
    for (std::size_t v = 1; v < logits.size(); ++v)
      if (logits[v] > logits[static_cast<std::size_t>(best)]) best = static_cast<int>(v);
    return best;
  };
}

}  // namespace memmamba::tasks
