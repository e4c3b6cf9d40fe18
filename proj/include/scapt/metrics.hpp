#pragma once

#include <array>
#include <cstddef>
#include <optional>
#include <span>
#include <vector>

#include <nlohmann/json.hpp>

#include "scapt/corpus.hpp"
#include "scapt/types.hpp"

namespace scapt {

struct ClassMetrics {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  std::size_t support = 0;    // gold count
  std::size_t predicted = 0;  // predicted count
};

struct MetricsReport {
  std::size_t total = 0;
  std::size_t correct = 0;
  double accuracy = 0.0;
  /// Unweighted mean of per-class F1 over classes that occur in gold.
  double macro_f1 = 0.0;
  std::array<ClassMetrics, kNumPolarities> per_class{};
  /// confusion[gold][pred]
  std::array<std::array<std::size_t, kNumPolarities>, kNumPolarities> confusion{};
  std::vector<Polarity> excluded_from_macro;

  std::size_t ese_count = 0;
  std::size_t ise_count = 0;
  std::optional<double> ese_accuracy;  // absent when the slice is empty or untagged
  std::optional<double> ise_accuracy;

  nlohmann::json to_json() const;
};

/// Precision (recall) of a class with no predictions (no gold) is 0.
/// Throws ContractError on an empty or misaligned input.
MetricsReport compute_metrics(std::span<const Polarity> gold, std::span<const Polarity> predicted,
                              std::span<const SliceTag> tags = {});

struct ClusterScore {
  double intra = 0.0;  // mean dot product over same-label pairs
  double inter = 0.0;  // mean dot product over different-label pairs
  std::size_t intra_pairs = 0;
  std::size_t inter_pairs = 0;

  /// intra - inter; a group without pairs contributes 0.
  double score() const { return intra - inter; }
};

/// Pairwise (i < j) dot-product cluster separation.
ClusterScore clustering_score(std::span<const std::vector<double>> reps,
                              std::span<const Polarity> labels);

}  // namespace scapt
