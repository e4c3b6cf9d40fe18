#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "scapt/finetune.hpp"
#include "scapt/metrics.hpp"
#include "scapt/model.hpp"
#include "scapt/pretrain.hpp"

namespace scapt {

enum class Profile { Desk, Paper };
enum class Stage { Pretrain, Finetune };

struct RunConfig {
  std::uint64_t seed = 13;
  std::size_t epochs = 10;
  std::size_t batch_size = 16;
  double base_lr = 1e-3;
  std::size_t warmup_steps = 100;
  /// Global gradient-norm clip; 0 disables it.
  double clip_norm = 0.0;
  /// Pre-training batches prepared ahead on a worker thread; 0 = inline.
  std::size_t prefetch = 2;
  std::size_t min_count = 1;
  PretrainConfig pretrain;
  EncoderConfig encoder;
  std::string checkpoint_path;
  std::string curves_path;

  static RunConfig defaults(Profile profile, Stage stage);
  void validate() const;
};

void to_json(nlohmann::json& j, const RunConfig& c);
/// Missing keys keep the values already in `c`.
void merge_json(const nlohmann::json& j, RunConfig& c);

/// Independent deterministic stream derived from the run seed.
Rng make_stream(std::uint64_t seed, std::uint64_t stream);

struct PretrainStep {
  std::size_t step = 0;
  double total = 0.0;
  double sup = 0.0;
  double rec = 0.0;
  double map = 0.0;
  double map_raw = 0.0;
  double lr = 0.0;
};

struct PretrainResult {
  std::vector<PretrainStep> curve;
  std::size_t degenerate_batches = 0;
  std::size_t empty_map = 0;
};

/// Balanced batches -> joint loss -> Adam, for `cfg.epochs` epochs. Writes
/// the loss curve CSV and an end-of-epoch checkpoint when the paths are set.
/// A non-finite loss aborts with NumericError and leaves the previous
/// checkpoint on disk untouched.
PretrainResult pretrain_loop(ScaptModel& model, std::span<const LabeledSentence> corpus,
                             const RunConfig& cfg);

struct FinetuneStep {
  std::size_t step = 0;
  double loss = 0.0;
  double lr = 0.0;
};

struct FinetuneResult {
  std::vector<FinetuneStep> curve;
};

/// Drops the decoder and masked-prediction head, attaches a fresh aspect
/// classifier, then trains every remaining parameter on the ABSA data.
FinetuneResult finetune_loop(ScaptModel& model, std::span<const AbsaSentence> train,
                             const RunConfig& cfg);

/// Throws IncompatibleError unless `model` was built for `cfg`.
void check_compatible(const ScaptModel& model, const EncoderConfig& cfg);

MetricsReport evaluate(ScaptModel& model, std::span<const AbsaSentence> data,
                       std::size_t threads = 1);

/// Writes one CSV row per aspect example (id, gold, slice, s_0..s_{d-1})
/// and returns the clustering score of the exported rows.
ClusterScore export_embeddings(ScaptModel& model, std::span<const AbsaSentence> data,
                               const std::filesystem::path& out_path);

}  // namespace scapt
