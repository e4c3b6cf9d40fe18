#include "scapt/metrics.hpp"

#include "scapt/errors.hpp"

namespace scapt {

MetricsReport compute_metrics(std::span<const Polarity> gold, std::span<const Polarity> predicted,
                              std::span<const SliceTag> tags) {
  if (gold.empty()) throw ContractError("cannot evaluate an empty dataset");
  if (gold.size() != predicted.size())
    throw ContractError("gold and predicted label counts differ");
  if (!tags.empty() && tags.size() != gold.size())
    throw ContractError("slice tag count differs from example count");

  MetricsReport r;
  r.total = gold.size();
  std::size_t ese_correct = 0, ise_correct = 0;
  for (std::size_t i = 0; i < gold.size(); ++i) {
    const bool ok = gold[i] == predicted[i];
    r.correct += ok ? 1 : 0;
    ++r.confusion[index_of(gold[i])][index_of(predicted[i])];
    if (!tags.empty()) {
      if (tags[i] == SliceTag::ESE) {
        ++r.ese_count;
        ese_correct += ok ? 1 : 0;
      } else {
        ++r.ise_count;
        ise_correct += ok ? 1 : 0;
      }
    }
  }
  r.accuracy = static_cast<double>(r.correct) / static_cast<double>(r.total);
  if (r.ese_count) r.ese_accuracy = static_cast<double>(ese_correct) / static_cast<double>(r.ese_count);
  if (r.ise_count) r.ise_accuracy = static_cast<double>(ise_correct) / static_cast<double>(r.ise_count);

  double f1_sum = 0.0;
  std::size_t classes = 0;
  for (std::size_t c = 0; c < kNumPolarities; ++c) {
    auto& m = r.per_class[c];
    const std::size_t tp = r.confusion[c][c];
    for (std::size_t k = 0; k < kNumPolarities; ++k) {
      m.support += r.confusion[c][k];
      m.predicted += r.confusion[k][c];
    }
    m.precision = m.predicted ? static_cast<double>(tp) / static_cast<double>(m.predicted) : 0.0;
    m.recall = m.support ? static_cast<double>(tp) / static_cast<double>(m.support) : 0.0;
    m.f1 = m.precision + m.recall > 0.0 ? 2.0 * m.precision * m.recall / (m.precision + m.recall)
                                        : 0.0;
    if (m.support == 0) {
      r.excluded_from_macro.push_back(static_cast<Polarity>(c));
      continue;
    }
    f1_sum += m.f1;
    ++classes;
  }
  r.macro_f1 = f1_sum / static_cast<double>(classes);
  return r;
}

nlohmann::json MetricsReport::to_json() const {
  nlohmann::json per = nlohmann::json::object();
  for (std::size_t c = 0; c < kNumPolarities; ++c) {
    const auto& m = per_class[c];
    per[std::string(to_string(static_cast<Polarity>(c)))] = {
        {"precision", m.precision}, {"recall", m.recall}, {"f1", m.f1},
        {"support", m.support},     {"predicted", m.predicted}};
  }
  nlohmann::json excluded = nlohmann::json::array();
  for (auto p : excluded_from_macro) excluded.push_back(std::string(to_string(p)));
  nlohmann::json j = {{"total", total},
                      {"correct", correct},
                      {"accuracy", accuracy},
                      {"macro_f1", macro_f1},
                      {"macro_f1_excluded_classes", excluded},
                      {"per_class", per},
                      {"confusion", confusion},
                      {"ese_count", ese_count},
                      {"ise_count", ise_count}};
  // absent slices are omitted, never reported as 0
  if (ese_accuracy) j["ese_accuracy"] = *ese_accuracy;
  if (ise_accuracy) j["ise_accuracy"] = *ise_accuracy;
  return j;
}

ClusterScore clustering_score(std::span<const std::vector<double>> reps,
                              std::span<const Polarity> labels) {
  if (reps.size() != labels.size()) throw ContractError("representation/label count mismatch");
  ClusterScore s;
  double intra = 0.0, inter = 0.0;
  for (std::size_t i = 0; i < reps.size(); ++i)
    for (std::size_t j = i + 1; j < reps.size(); ++j) {
      if (reps[i].size() != reps[j].size()) throw DimensionError("representation widths differ");
      double dot = 0.0;
      for (std::size_t k = 0; k < reps[i].size(); ++k) dot += reps[i][k] * reps[j][k];
      if (labels[i] == labels[j]) {
        intra += dot;
        ++s.intra_pairs;
      } else {
        inter += dot;
        ++s.inter_pairs;
      }
    }
  if (s.intra_pairs) s.intra = intra / static_cast<double>(s.intra_pairs);
  if (s.inter_pairs) s.inter = inter / static_cast<double>(s.inter_pairs);
  return s;
}

}  // namespace scapt
