#pragma once

#include <array>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "scapt/graph.hpp"
#include "scapt/model.hpp"
#include "scapt/types.hpp"

namespace scapt {

/// One annotated aspect inside an ABSA sentence.
struct AspectAnnotation {
  std::string term;
  Span span;
  Polarity polarity = Polarity::Neutral;
  /// Only used for explicit/implicit slicing; never shown to the model.
  std::vector<Span> opinions;
};

/// A review sentence with all of its annotated aspects.
struct AbsaSentence {
  std::string id;
  std::string text;
  std::vector<std::string> tokens;
  std::vector<AspectAnnotation> aspects;

  void validate() const;
};

/// Flattened (sentence, aspect) pair: the fine-tuning and evaluation unit.
struct AspectExample {
  std::vector<std::string> tokens;
  Span aspect;
  Polarity polarity = Polarity::Neutral;
  std::vector<Span> opinions;
  std::size_t sentence_index = 0;
  std::size_t aspect_index = 0;
};

std::vector<AspectExample> flatten(std::span<const AbsaSentence> sentences);

/// Mean of the hidden states covering `span` (shifted by one for [CLS]).
/// `hidden_states` is length x d; `valid_length` counts [CLS] and [SEP].
Var aspect_representation(Var hidden_states, Span span, std::size_t valid_length);

/// Pools every span from one set of hidden states; overlapping spans allowed.
std::vector<Var> pool_aspects(Var hidden_states, std::span<const Span> spans,
                              std::size_t valid_length);

/// Encodes `tokens` once and pools each span from the shared hidden states.
std::vector<Var> extract_all_aspects(Graph& g, ParameterStore& params, const Encoder& encoder,
                                     const Vocab& vocab, std::span<const std::string> tokens,
                                     std::span<const Span> spans);

struct AspectPrediction {
  std::array<double, kNumPolarities> probs{};
  Polarity label = Polarity::Positive;
};

/// Logits W_a [s ; h_a] + b for stacked rows of s and h_a (n x d each).
Var classifier_logits(Var s_ab, Var h_ab_a, Var w_a, Var b_a);

/// softmax(W_a [s ; h_a] + b) for a single aspect; ties go to the earlier
/// class in positive < neutral < negative order.
AspectPrediction classify_aspect(Var s_ab, Var h_ab_a, Var w_a, Var b_a);

Polarity argmax_polarity(std::span<const double> scores);

/// Logits for every aspect of every sentence in `batch`, one encoder pass
/// for the whole batch. Rows follow sentence order, then aspect order.
Var aspect_logits(Graph& g, ScaptModel& model, const Encoder& encoder,
                  std::span<const AbsaSentence* const> batch, Rng* dropout_rng = nullptr);

/// Mean cross-entropy over all (sentence, aspect) pairs in `batch`.
Var finetune_loss(Graph& g, ScaptModel& model, const Encoder& encoder,
                  std::span<const AbsaSentence* const> batch, Rng* dropout_rng = nullptr);

/// Inference over a dataset, sharded across `threads` workers; the merge is
/// in dataset order so results do not depend on the thread count.
std::vector<AspectPrediction> predict(ScaptModel& model, std::span<const AbsaSentence> data,
                                      std::size_t batch_size = 16, std::size_t threads = 1,
                                      const Encoder* encoder = nullptr);

/// Sentiment representations s = W_s h for each aspect example in data
/// order (one row per aspect; repeated for aspects of the same sentence).
std::vector<std::vector<double>> sentiment_representations(ScaptModel& model,
                                                           std::span<const AbsaSentence> data,
                                                           std::size_t batch_size = 16);

}  // namespace scapt
