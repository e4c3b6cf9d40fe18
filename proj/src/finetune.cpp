#include "scapt/finetune.hpp"

#include <algorithm>
#include <cmath>
#include <thread>

#include "scapt/errors.hpp"
#include "scapt/pretrain.hpp"

namespace scapt {

void AbsaSentence::validate() const {
  for (const auto& a : aspects) {
    if (a.span.empty() || a.span.end > tokens.size())
      throw ContractError("sentence '" + id + "': aspect span [" + std::to_string(a.span.start) +
                          ", " + std::to_string(a.span.end) + ") outside " +
                          std::to_string(tokens.size()) + " tokens");
    for (const auto& o : a.opinions)
      if (o.empty() || o.end > tokens.size())
        throw ContractError("sentence '" + id + "': opinion span out of bounds");
  }
}

std::vector<AspectExample> flatten(std::span<const AbsaSentence> sentences) {
  std::vector<AspectExample> out;
  for (std::size_t s = 0; s < sentences.size(); ++s)
    for (std::size_t a = 0; a < sentences[s].aspects.size(); ++a) {
      const auto& ann = sentences[s].aspects[a];
      out.push_back({sentences[s].tokens, ann.span, ann.polarity, ann.opinions, s, a});
    }
  return out;
}

Var aspect_representation(Var hidden_states, Span span, std::size_t valid_length) {
  if (span.empty()) throw ContractError("aspect span is empty");
  // rows span.start + 1 .. span.end; [SEP] sits at valid_length - 1
  if (span.end + 2 > valid_length)
    throw IndexError("aspect span [" + std::to_string(span.start) + ", " +
                     std::to_string(span.end) + ") falls outside the encoded tokens");
  return mean_rows(slice_rows(hidden_states, span.start + 1, span.size()));
}

std::vector<Var> pool_aspects(Var hidden_states, std::span<const Span> spans,
                              std::size_t valid_length) {
  std::vector<Var> out;
  out.reserve(spans.size());
  for (const auto& s : spans) out.push_back(aspect_representation(hidden_states, s, valid_length));
  return out;
}

std::vector<Var> extract_all_aspects(Graph& g, ParameterStore& params, const Encoder& encoder,
                                     const Vocab& vocab, std::span<const std::string> tokens,
                                     std::span<const Span> spans) {
  std::vector<std::vector<std::size_t>> ids{format_input(tokens, vocab, encoder.config().max_len)};
  const TokenBatch tb = TokenBatch::pad(ids);
  const EncodedBatch enc = encoder.encode(g, params, tb);
  return pool_aspects(enc.hidden_states(0), spans, tb.valid_length(0));
}

Var classifier_logits(Var s_ab, Var h_ab_a, Var w_a, Var b_a) {
  if (w_a.value().rank() != 2 || w_a.cols() != s_ab.cols() + h_ab_a.cols())
    throw DimensionError("classifier: W_a " + shape_str(w_a.shape()) + " does not take [" +
                         std::to_string(s_ab.cols()) + " ; " + std::to_string(h_ab_a.cols()) +
                         "] inputs");
  const std::vector<Var> parts{s_ab, h_ab_a};
  return add_bias(matmul(concat_cols(parts), transpose(w_a)), b_a);
}

Polarity argmax_polarity(std::span<const double> scores) {
  std::size_t best = 0;
  for (std::size_t k = 1; k < scores.size(); ++k)
    if (scores[k] > scores[best]) best = k;
  return static_cast<Polarity>(best);
}

AspectPrediction classify_aspect(Var s_ab, Var h_ab_a, Var w_a, Var b_a) {
  Var probs = softmax(classifier_logits(s_ab, h_ab_a, w_a, b_a));
  AspectPrediction p;
  std::copy_n(probs.value().data().begin(), kNumPolarities, p.probs.begin());
  p.label = argmax_polarity(p.probs);
  return p;
}

Var aspect_logits(Graph& g, ScaptModel& model, const Encoder& encoder,
                  std::span<const AbsaSentence* const> batch, Rng* dropout_rng) {
  if (!model.has_classifier()) throw ContractError("model has no aspect classifier");
  std::vector<std::vector<std::size_t>> ids;
  ids.reserve(batch.size());
  for (const auto* s : batch) ids.push_back(format_input(s->tokens, model.vocab, model.config.max_len));
  const TokenBatch tb = TokenBatch::pad(ids);
  const EncodedBatch enc = encoder.encode(g, model.params, tb, dropout_rng);
  Var s = sentiment_projection(enc.sentence, g.param(model.params.get(param_names::kSentiment)));

  std::vector<std::size_t> owner;
  std::vector<Var> pooled;
  for (std::size_t b = 0; b < batch.size(); ++b) {
    if (batch[b]->aspects.empty()) continue;
    Var hs = enc.hidden_states(b);
    for (const auto& a : batch[b]->aspects) {
      pooled.push_back(aspect_representation(hs, a.span, tb.valid_length(b)));
      owner.push_back(b);
    }
  }
  if (pooled.empty()) throw ContractError("batch has no aspects");
  Var s_rows = gather_rows(s, owner);
  Var h_rows = pooled.size() == 1 ? pooled[0] : concat_rows(pooled);
  return classifier_logits(s_rows, h_rows, g.param(model.params.get(param_names::kClassifier)),
                           g.param(model.params.get(param_names::kClassifierBias)));
}

Var finetune_loss(Graph& g, ScaptModel& model, const Encoder& encoder,
                  std::span<const AbsaSentence* const> batch, Rng* dropout_rng) {
  std::vector<std::size_t> gold;
  for (const auto* s : batch)
    for (const auto& a : s->aspects) gold.push_back(index_of(a.polarity));
  return cross_entropy(aspect_logits(g, model, encoder, batch, dropout_rng), gold);
}

namespace {

void predict_range(ScaptModel& model, const Encoder& encoder, std::span<const AbsaSentence> data,
                   std::size_t begin, std::size_t end, std::size_t batch_size,
                   std::vector<std::vector<AspectPrediction>>& out) {
  for (std::size_t start = begin; start < end; start += batch_size) {
    std::vector<const AbsaSentence*> batch;
    for (std::size_t i = start; i < std::min(end, start + batch_size); ++i)
      if (!data[i].aspects.empty()) batch.push_back(&data[i]);
    if (batch.empty()) continue;
    Graph g;
    Var probs = softmax(aspect_logits(g, model, encoder, batch));
    std::size_t row = 0;
    for (const auto* s : batch) {
      auto& dst = out[static_cast<std::size_t>(s - data.data())];
      for (std::size_t a = 0; a < s->aspects.size(); ++a, ++row) {
        AspectPrediction p;
        for (std::size_t k = 0; k < kNumPolarities; ++k) p.probs[k] = probs.value().at(row, k);
        p.label = argmax_polarity(p.probs);
        dst.push_back(p);
      }
    }
  }
}

}  // namespace

std::vector<AspectPrediction> predict(ScaptModel& model, std::span<const AbsaSentence> data,
                                      std::size_t batch_size, std::size_t threads,
                                      const Encoder* encoder) {
  if (batch_size == 0) batch_size = 1;
  threads = std::max<std::size_t>(1, std::min(threads, data.size()));
  const Encoder local = model.encoder();
  const Encoder& enc = encoder ? *encoder : local;
  std::vector<std::vector<AspectPrediction>> per_sentence(data.size());
  if (threads <= 1) {
    predict_range(model, enc, data, 0, data.size(), batch_size, per_sentence);
  } else {
    std::vector<std::thread> workers;
    const std::size_t chunk = (data.size() + threads - 1) / threads;
    for (std::size_t t = 0; t < threads; ++t) {
      const std::size_t b = t * chunk, e = std::min(data.size(), b + chunk);
      if (b >= e) break;
      workers.emplace_back([&, b, e] {
        predict_range(model, enc, data, b, e, batch_size, per_sentence);
      });
    }
    for (auto& w : workers) w.join();
  }
  std::vector<AspectPrediction> out;
  for (auto& v : per_sentence) out.insert(out.end(), v.begin(), v.end());
  return out;
}

std::vector<std::vector<double>> sentiment_representations(ScaptModel& model,
                                                           std::span<const AbsaSentence> data,
                                                           std::size_t batch_size) {
  if (batch_size == 0) batch_size = 1;
  const Encoder encoder = model.encoder();
  std::vector<std::vector<double>> out;
  for (std::size_t start = 0; start < data.size(); start += batch_size) {
    const std::size_t end = std::min(data.size(), start + batch_size);
    std::vector<std::vector<std::size_t>> ids;
    for (std::size_t i = start; i < end; ++i)
      ids.push_back(format_input(data[i].tokens, model.vocab, model.config.max_len));
    Graph g;
    const EncodedBatch enc = encoder.encode(g, model.params, TokenBatch::pad(ids));
    Var s = sentiment_projection(enc.sentence, g.param(model.params.get(param_names::kSentiment)));
    const std::size_t d = s.cols();
    for (std::size_t i = start; i < end; ++i) {
      const auto* row = &s.value().data()[(i - start) * d];
      for (std::size_t a = 0; a < data[i].aspects.size(); ++a) out.emplace_back(row, row + d);
    }
  }
  return out;
}

}  // namespace scapt
