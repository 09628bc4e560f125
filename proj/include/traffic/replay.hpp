#pragma once

#include <cstddef>
#include <stdexcept>
#include <vector>

#include "traffic/rng.hpp"

namespace traffic {

struct Transition {
  std::vector<double> state;
  int action = 0;
  double reward = 0.0;  // normalized, in [0,1]
  std::vector<double> next_state;
  bool terminal = false;
};

/// Fixed-capacity experience memory; once full, the oldest entries are
/// overwritten first.
class ReplayBuffer {
 public:
  explicit ReplayBuffer(size_t capacity) : capacity_(capacity) {
    if (capacity == 0) throw std::invalid_argument("replay capacity must be positive");
    storage_.reserve(capacity);
  }

  size_t capacity() const { return capacity_; }
  size_t size() const { return storage_.size(); }

  void push(Transition t) {
    if (storage_.size() < capacity_) {
      storage_.push_back(std::move(t));
    } else {
      storage_[head_] = std::move(t);
      head_ = (head_ + 1) % capacity_;
    }
  }

  const Transition& at(size_t i) const { return storage_[i]; }

  /// batch_size independent uniform draws with replacement.
  std::vector<const Transition*> sample_minibatch(size_t batch_size, Rng& rng) const {
    if (storage_.empty()) throw std::logic_error("cannot sample from an empty replay buffer");
    std::vector<const Transition*> out;
    out.reserve(batch_size);
    for (size_t i = 0; i < batch_size; ++i) {
      const auto idx = static_cast<size_t>(
          rng.uniform_int(0, static_cast<int64_t>(storage_.size()) - 1));
      out.push_back(&storage_[idx]);
    }
    return out;
  }

 private:
  size_t capacity_;
  size_t head_ = 0;  // next slot to overwrite once full
  std::vector<Transition> storage_;
};

}  // namespace traffic
