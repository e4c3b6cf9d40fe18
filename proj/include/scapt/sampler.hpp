#pragma once

#include <condition_variable>
#include <cstddef>
#include <deque>
#include <mutex>
#include <optional>
#include <span>
#include <vector>

#include "scapt/graph.hpp"
#include "scapt/types.hpp"

namespace scapt {

/// One epoch of index batches in which every label present in `labels`
/// appears at least twice per batch. Each batch first reserves two slots
/// per label, then fills up to `batch_size` from the shuffled remainder.
/// The batch count is capped by the rarest label, so surplus examples of
/// the common labels are dropped; the final batch may be short.
/// Throws ConfigError for batch_size < 4, a single-label corpus, or more
/// labels than batch_size / 2.
std::vector<std::vector<std::size_t>> balanced_batches(std::span<const Polarity> labels,
                                                       std::size_t batch_size, Rng& rng);

/// Plain shuffled batches covering every index once.
std::vector<std::vector<std::size_t>> shuffled_batches(std::size_t count, std::size_t batch_size,
                                                       Rng& rng);

/// Fixed-capacity blocking queue for a single producer and consumer.
template <typename T>
class BoundedQueue {
 public:
  explicit BoundedQueue(std::size_t capacity) : capacity_(capacity == 0 ? 1 : capacity) {}

  void push(T item) {
    std::unique_lock lock(mu_);
    not_full_.wait(lock, [&] { return items_.size() < capacity_ || closed_; });
    if (closed_) return;
    items_.push_back(std::move(item));
    not_empty_.notify_one();
  }

  /// Blocks until an item arrives; nullopt once closed and drained.
  std::optional<T> pop() {
    std::unique_lock lock(mu_);
    not_empty_.wait(lock, [&] { return !items_.empty() || closed_; });
    if (items_.empty()) return std::nullopt;
    T item = std::move(items_.front());
    items_.pop_front();
    not_full_.notify_one();
    return item;
  }

  void close() {
    std::lock_guard lock(mu_);
    closed_ = true;
    not_empty_.notify_all();
    not_full_.notify_all();
  }

  std::size_t capacity() const { return capacity_; }

 private:
  std::size_t capacity_;
  std::mutex mu_;
  std::condition_variable not_empty_, not_full_;
  std::deque<T> items_;
  bool closed_ = false;
};

}  // namespace scapt
