#pragma once

#include <cstdint>
#include <vector>

#include "memmamba/errors.hpp"

namespace memmamba {

/// Flat stream of every discrete choice a forward pass makes (threshold
/// gates, pool evictions, argmax selections), in execution order.
///
/// Record mode appends live choices; replay mode feeds the recorded choices
/// back so a perturbed forward traverses the identical branch structure.
/// Gradient checks difference the replayed (piecewise-smooth) function.
class DecisionTrace {
 public:
  void record(std::int32_t v) { stream_.push_back(v); }

  std::int32_t next() {
    if (cursor_ >= stream_.size())
      throw ParameterError("decision replay exhausted; control flow diverged");
    return stream_[cursor_++];
  }

  /// Switch to replay and rewind. Call before every replayed forward.
  void rewind_for_replay() {
    replay_ = true;
    cursor_ = 0;
  }

  bool replaying() const { return replay_; }
  std::size_t size() const { return stream_.size(); }

  /// Route one decision: replay consumes, record appends.
  std::int32_t decide(std::int32_t live) {
    if (replay_) return next();
    record(live);
    return live;
  }

  bool decide_bool(bool live) { return decide(live ? 1 : 0) != 0; }

 private:
  std::vector<std::int32_t> stream_;
  std::size_t cursor_ = 0;
  bool replay_ = false;
};

}  // namespace memmamba
