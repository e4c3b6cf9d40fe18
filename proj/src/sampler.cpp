#include "scapt/sampler.hpp"

#include <algorithm>
#include <map>

#include "scapt/errors.hpp"

namespace scapt {

namespace {

template <typename T>
void shuffle(std::vector<T>& v, Rng& rng) {
  for (std::size_t i = v.size(); i > 1; --i) {
    std::uniform_int_distribution<std::size_t> pick(0, i - 1);
    std::swap(v[i - 1], v[pick(rng)]);
  }
}

}  // namespace

std::vector<std::vector<std::size_t>> balanced_batches(std::span<const Polarity> labels,
                                                       std::size_t batch_size, Rng& rng) {
  if (batch_size < 4) throw ConfigError("balanced batches need batch_size >= 4");
  std::map<Polarity, std::vector<std::size_t>> pools;
  for (std::size_t i = 0; i < labels.size(); ++i) pools[labels[i]].push_back(i);
  if (pools.size() < 2) throw ConfigError("balanced batches need at least two labels in the corpus");
  if (2 * pools.size() > batch_size)
    throw ConfigError("batch_size " + std::to_string(batch_size) + " cannot hold two of each of " +
                      std::to_string(pools.size()) + " labels");

  for (auto& [_, pool] : pools) shuffle(pool, rng);
  std::size_t n_batches = (labels.size() + batch_size - 1) / batch_size;
  for (const auto& [_, pool] : pools) n_batches = std::min(n_batches, pool.size() / 2);

  std::vector<std::vector<std::size_t>> batches(n_batches);
  std::vector<std::size_t> rest;
  for (auto& [_, pool] : pools) {
    for (std::size_t b = 0; b < n_batches; ++b) {
      batches[b].push_back(pool[2 * b]);
      batches[b].push_back(pool[2 * b + 1]);
    }
    rest.insert(rest.end(), pool.begin() + static_cast<std::ptrdiff_t>(2 * n_batches), pool.end());
  }
  shuffle(rest, rng);
  std::size_t next = 0;
  for (auto& batch : batches) {
    while (batch.size() < batch_size && next < rest.size()) batch.push_back(rest[next++]);
    shuffle(batch, rng);
  }
  return batches;
}

std::vector<std::vector<std::size_t>> shuffled_batches(std::size_t count, std::size_t batch_size,
                                                       Rng& rng) {
  if (batch_size == 0) throw ConfigError("batch_size must be positive");
  std::vector<std::size_t> order(count);
  for (std::size_t i = 0; i < count; ++i) order[i] = i;
  shuffle(order, rng);
  std::vector<std::vector<std::size_t>> out;
  for (std::size_t s = 0; s < count; s += batch_size)
    out.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(s),
                     order.begin() + static_cast<std::ptrdiff_t>(std::min(count, s + batch_size)));
  return out;
}

}  // namespace scapt
