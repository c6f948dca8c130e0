#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "memmamba/model.hpp"

namespace memmamba::bench {

enum class BenchModel { MEMMAMBA, QUADRATIC_BASELINE };

struct BenchRecord {
  std::string model_id;
  std::size_t seq_len = 0;
  double wall_ms = 0.0;  // median over samples
  std::size_t peak_state_bytes = 0;
  std::size_t samples = 0;
  bool widened = false;            // repeats were added for timer resolution
  std::vector<double> sample_ms;   // long-format detail
};

/// Median single-threaded forward latency per length (one warm-up excluded).
/// When a forward lands under the timer-resolution floor, each measurement is
/// widened to repeated forwards and the record is flagged.
std::vector<BenchRecord> benchmark_forward(BenchModel kind,
                                           std::span<const std::size_t> lengths,
                                           std::size_t samples,
                                           const model::ModelConfig& cfg,
                                           std::uint64_t seed);

/// Least-squares slope of log(wall_ms) against log(seq_len).
/// Needs at least 4 distinct lengths.
double fit_scaling_exponent(std::span<const BenchRecord> records);
double fit_scaling_exponent(std::span<const std::pair<double, double>> points);

}  // namespace memmamba::bench
