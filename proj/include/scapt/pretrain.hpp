#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "scapt/graph.hpp"
#include "scapt/model.hpp"
#include "scapt/types.hpp"

namespace scapt {

/// A noisy-labeled review sentence used for pre-training.
struct LabeledSentence {
  std::vector<std::string> tokens;
  Polarity label = Polarity::Positive;  // positive or negative only
  std::vector<Span> aspects;

  /// Throws ContractError unless there is at least one aspect, every span is
  /// non-empty and in bounds, spans do not overlap, and the label is binary.
  void validate() const;
};

enum class MaskOutcome : unsigned char { Masked, Random, Kept };

/// Corrupted input for masked aspect prediction. Positions are in formatted
/// coordinates, so token i of the sentence is position i + 1.
struct MaskedInput {
  std::vector<std::size_t> corrupted_ids;
  std::vector<std::size_t> original_ids;
  std::vector<std::size_t> mask_positions;  // ascending
  std::vector<MaskOutcome> outcomes;        // parallel to mask_positions
  std::vector<char> from_aspect;            // parallel to mask_positions
  const LabeledSentence* source = nullptr;

  std::size_t token_count() const { return original_ids.size() - 2; }
};

struct PretrainConfig {
  double tau = 0.07;
  double alpha = 1.0;
  double beta = 1.0;
  double mask_floor = 0.15;
  /// Row-normalize sentiment representations before the dot product.
  bool normalize = false;
  /// Feed the contrastive and reconstruction heads from a second, clean
  /// encoder pass instead of the corrupted one.
  bool clean_sentence_rep = false;

  void validate() const;
};

void to_json(nlohmann::json& j, const PretrainConfig& c);
void from_json(const nlohmann::json& j, PretrainConfig& c);

/// Two-step masking: every aspect token is corrupted 80/10/10
/// ([MASK] / random regular token / unchanged) and always becomes a target;
/// then, while the masked share is below `mask_floor`, extra non-aspect
/// positions are drawn without replacement and corrupted the same way.
MaskedInput mask_review(const LabeledSentence& sentence, const Vocab& vocab, std::size_t max_len,
                        double mask_floor, Rng& rng);

/// s = W_s h for each row of `sentence_reps`; no bias, no nonlinearity.
Var sentiment_projection(Var sentence_reps, Var w_s);

/// Supervised contrastive loss summed over anchors that have at least one
/// in-batch positive. Similarity is the raw dot product unless `normalize`.
/// Throws DegenerateBatchError when no anchor has a positive.
Var supervised_contrastive_loss(Var reps, std::span<const Polarity> labels, double tau,
                                bool normalize = false);

/// Target sequence for reconstruction: the uncorrupted tokens followed by [SEP].
std::vector<std::size_t> reconstruction_target(std::span<const std::size_t> original_ids);

/// Per-sentence mean token cross-entropy of the teacher-forced decoder
/// against the clean sentence. One batched decoder pass.
std::vector<Var> reconstruction_losses(Graph& g, ParameterStore& params, const Decoder& decoder,
                                       Var sentence_reps,
                                       std::span<const std::vector<std::size_t>> original_ids,
                                       Rng* dropout_rng = nullptr);

struct MapLoss {
  Var loss;               // raw sum / |mask_positions|, or 0 when nothing is masked
  double raw_sum = 0.0;   // sum of -log P over masked positions
  std::size_t positions = 0;
};

/// Masked aspect prediction for one sentence. `hidden_states` are the
/// encoder outputs over `masked.corrupted_ids` (length x d, padding allowed).
MapLoss masked_aspect_prediction_loss(Var hidden_states, const MaskedInput& masked, Var w_o);

struct JointLoss {
  Var total;
  double sup = 0.0;
  double rec = 0.0;      // sum over the batch of per-sentence reconstruction losses
  double map = 0.0;      // sum over the batch of per-sentence (normalized) MAP losses
  double map_raw = 0.0;  // sum over the batch of raw MAP sums
  std::size_t empty_map = 0;
};

/// L = L_sup + alpha * sum_b L_rec + beta * sum_b L_map over already-masked
/// inputs. A single encoder pass over the corrupted batch feeds all heads
/// unless `clean_sentence_rep` is set.
JointLoss joint_pretrain_loss(Graph& g, ScaptModel& model, const Encoder& encoder,
                              std::span<const MaskedInput> batch, const PretrainConfig& cfg,
                              Rng* dropout_rng = nullptr);

/// Masks every sentence with `mask_rng`, then computes the joint loss.
JointLoss joint_pretrain_loss(Graph& g, ScaptModel& model, const Encoder& encoder,
                              std::span<const LabeledSentence> batch, const PretrainConfig& cfg,
                              Rng& mask_rng, Rng* dropout_rng = nullptr);

}  // namespace scapt
