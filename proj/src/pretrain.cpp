#include "scapt/pretrain.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "scapt/errors.hpp"

namespace scapt {

void LabeledSentence::validate() const {
  if (label == Polarity::Neutral) throw ContractError("pre-training labels are binary");
  if (aspects.empty()) throw ContractError("labeled sentence needs at least one aspect span");
  std::vector<Span> sorted = aspects;
  std::sort(sorted.begin(), sorted.end(),
            [](const Span& a, const Span& b) { return a.start < b.start; });
  for (std::size_t i = 0; i < sorted.size(); ++i) {
    if (sorted[i].empty() || sorted[i].end > tokens.size())
      throw ContractError("aspect span [" + std::to_string(sorted[i].start) + ", " +
                          std::to_string(sorted[i].end) + ") outside sentence of " +
                          std::to_string(tokens.size()) + " tokens");
    if (i > 0 && sorted[i - 1].overlaps(sorted[i])) throw ContractError("aspect spans overlap");
  }
}

void PretrainConfig::validate() const {
  if (!(tau > 0.0)) throw ConfigError("tau must be positive");
  if (mask_floor < 0.0 || mask_floor > 1.0) throw ConfigError("mask_floor must be in [0, 1]");
  if (alpha < 0.0 || beta < 0.0) throw ConfigError("alpha and beta must be non-negative");
}

void to_json(nlohmann::json& j, const PretrainConfig& c) {
  j = {{"tau", c.tau},
       {"alpha", c.alpha},
       {"beta", c.beta},
       {"mask_floor", c.mask_floor},
       {"normalize", c.normalize},
       {"clean_sentence_rep", c.clean_sentence_rep}};
}

void from_json(const nlohmann::json& j, PretrainConfig& c) {
  PretrainConfig d;
  c.tau = j.value("tau", d.tau);
  c.alpha = j.value("alpha", d.alpha);
  c.beta = j.value("beta", d.beta);
  c.mask_floor = j.value("mask_floor", d.mask_floor);
  c.normalize = j.value("normalize", d.normalize);
  c.clean_sentence_rep = j.value("clean_sentence_rep", d.clean_sentence_rep);
}

MaskedInput mask_review(const LabeledSentence& sentence, const Vocab& vocab, std::size_t max_len,
                        double mask_floor, Rng& rng) {
  MaskedInput out;
  out.source = &sentence;
  out.original_ids = format_input(sentence.tokens, vocab, max_len);
  out.corrupted_ids = out.original_ids;
  const std::size_t n = out.token_count();
  const std::size_t vocab_size = vocab.size();

  auto corrupt = [&](std::size_t pos) {
    const double u = uniform01(rng);
    MaskOutcome o;
    if (u < 0.8) {
      out.corrupted_ids[pos] = special::kMask;
      o = MaskOutcome::Masked;
    } else if (u < 0.9) {
      if (vocab_size > special::kCount) {
        std::uniform_int_distribution<std::size_t> pick(special::kCount, vocab_size - 1);
        out.corrupted_ids[pos] = pick(rng);
      } else {
        out.corrupted_ids[pos] = special::kMask;
      }
      o = MaskOutcome::Random;
    } else {
      o = MaskOutcome::Kept;
    }
    return o;
  };

  std::vector<char> is_aspect(n + 2, 0);
  for (const auto& span : sentence.aspects)
    for (std::size_t i = span.start; i < std::min(span.end, n); ++i) is_aspect[i + 1] = 1;

  struct Entry {
    std::size_t pos;
    MaskOutcome outcome;
    char aspect;
  };
  std::vector<Entry> entries;
  for (std::size_t pos = 1; pos <= n; ++pos)
    if (is_aspect[pos]) entries.push_back({pos, corrupt(pos), 1});

  const auto target = n == 0 ? std::size_t{0}
                             : static_cast<std::size_t>(
                                   std::ceil(mask_floor * static_cast<double>(n) - 1e-9));
  if (entries.size() < target) {
    std::vector<std::size_t> rest;
    for (std::size_t pos = 1; pos <= n; ++pos)
      if (!is_aspect[pos]) rest.push_back(pos);
    const std::size_t need = std::min(target - entries.size(), rest.size());
    for (std::size_t k = 0; k < need; ++k) {
      std::uniform_int_distribution<std::size_t> pick(k, rest.size() - 1);
      std::swap(rest[k], rest[pick(rng)]);
      entries.push_back({rest[k], corrupt(rest[k]), 0});
    }
  }
  std::sort(entries.begin(), entries.end(),
            [](const Entry& a, const Entry& b) { return a.pos < b.pos; });
  for (const auto& e : entries) {
    out.mask_positions.push_back(e.pos);
    out.outcomes.push_back(e.outcome);
    out.from_aspect.push_back(e.aspect);
  }
  return out;
}

Var sentiment_projection(Var sentence_reps, Var w_s) {
  if (w_s.value().rank() != 2 || w_s.cols() != sentence_reps.cols())
    throw DimensionError("sentiment_projection: W_s " + shape_str(w_s.shape()) +
                         " does not apply to " + shape_str(sentence_reps.shape()));
  return matmul(sentence_reps, transpose(w_s));
}

Var supervised_contrastive_loss(Var reps, std::span<const Polarity> labels, double tau,
                                bool normalize) {
  const std::size_t B = reps.rows();
  if (labels.size() != B)
    throw DimensionError("contrastive loss: " + std::to_string(labels.size()) + " labels for " +
                         std::to_string(B) + " representations");
  if (B < 2) throw ContractError("contrastive loss needs a batch of at least 2");
  if (!(tau > 0.0)) throw ContractError("contrastive loss needs tau > 0");

  std::vector<char> keep_all(B * B, 0), keep_pos(B * B, 0);
  Tensor log_count({B});
  Tensor weight({B});
  std::size_t anchors = 0;
  for (std::size_t i = 0; i < B; ++i) {
    std::size_t c = 0;
    for (std::size_t j = 0; j < B; ++j) {
      if (j == i) continue;
      keep_all[i * B + j] = 1;
      if (labels[j] == labels[i]) {
        keep_pos[i * B + j] = 1;
        ++c;
      }
    }
    if (c > 0) {
      log_count[i] = std::log(static_cast<double>(c));
      weight[i] = 1.0;
      ++anchors;
    }
  }
  if (anchors == 0)
    throw DegenerateBatchError("degenerate batch: no anchor has an in-batch positive");

  Graph& g = *reps.graph;
  Var x = normalize ? normalize_rows(reps) : reps;
  Var sims = scale(matmul(x, transpose(x)), 1.0 / tau);
  // -log( (1/C) sum_pos P ) = lse_{b != i} - lse_{pos} + log C
  Var per_anchor = add_constant(
      sub(masked_row_logsumexp(sims, keep_all), masked_row_logsumexp(sims, keep_pos)), log_count);
  return sum(mul(per_anchor, g.constant(std::move(weight))));
}

std::vector<std::size_t> reconstruction_target(std::span<const std::size_t> original_ids) {
  if (original_ids.size() < 2) throw ContractError("reconstruction target needs [CLS] ... [SEP]");
  return {original_ids.begin() + 1, original_ids.end()};
}

std::vector<Var> reconstruction_losses(Graph& g, ParameterStore& params, const Decoder& decoder,
                                       Var sentence_reps,
                                       std::span<const std::vector<std::size_t>> original_ids,
                                       Rng* dropout_rng) {
  std::vector<std::vector<std::size_t>> targets;
  targets.reserve(original_ids.size());
  for (const auto& ids : original_ids) targets.push_back(reconstruction_target(ids));
  Var logits = decoder.decode(g, params, sentence_reps, targets, dropout_rng);
  const std::size_t T = logits.rows() / targets.size();
  std::vector<Var> out;
  out.reserve(targets.size());
  for (std::size_t b = 0; b < targets.size(); ++b)
    out.push_back(cross_entropy(slice_rows(logits, b * T, targets[b].size()), targets[b]));
  return out;
}

MapLoss masked_aspect_prediction_loss(Var hidden_states, const MaskedInput& masked, Var w_o) {
  MapLoss out;
  out.positions = masked.mask_positions.size();
  if (out.positions == 0) {
    out.loss = hidden_states.graph->constant(Tensor::scalar(0.0));
    return out;
  }
  std::vector<std::size_t> gold;
  for (auto p : masked.mask_positions) gold.push_back(masked.original_ids[p]);
  Var logits = matmul(gather_rows(hidden_states, masked.mask_positions), transpose(w_o));
  out.loss = cross_entropy(logits, gold);
  out.raw_sum = out.loss.value().item() * static_cast<double>(out.positions);
  return out;
}

namespace {

Var sum_scalars(Graph& g, const std::vector<Var>& parts) {
  if (parts.empty()) return g.constant(Tensor::scalar(0.0));
  if (parts.size() == 1) return parts[0];
  return sum(concat_rows(parts));
}

}  // namespace

JointLoss joint_pretrain_loss(Graph& g, ScaptModel& model, const Encoder& encoder,
                              std::span<const MaskedInput> batch, const PretrainConfig& cfg,
                              Rng* dropout_rng) {
  cfg.validate();
  if (batch.empty()) throw ContractError("joint loss on an empty batch");
  auto& params = model.params;

  std::vector<std::vector<std::size_t>> corrupted, originals;
  std::vector<Polarity> labels;
  for (const auto& m : batch) {
    if (m.source == nullptr) throw ContractError("masked input lost its source sentence");
    corrupted.push_back(m.corrupted_ids);
    originals.push_back(m.original_ids);
    labels.push_back(m.source->label);
  }
  const TokenBatch tb = TokenBatch::pad(corrupted);
  const EncodedBatch enc = encoder.encode(g, params, tb, dropout_rng);
  Var reps = enc.sentence;
  if (cfg.clean_sentence_rep) reps = encoder.encode(g, params, TokenBatch::pad(originals), dropout_rng).sentence;

  JointLoss out;
  Var s = sentiment_projection(reps, g.param(params.get(param_names::kSentiment)));
  Var sup = supervised_contrastive_loss(s, labels, cfg.tau, cfg.normalize);
  out.sup = sup.value().item();

  Var rec = sum_scalars(g, reconstruction_losses(g, params, model.decoder(), reps, originals, dropout_rng));
  out.rec = rec.value().item();

  std::vector<std::size_t> rows;
  for (std::size_t b = 0; b < batch.size(); ++b)
    for (auto p : batch[b].mask_positions) rows.push_back(b * tb.length + p);
  std::vector<Var> map_parts;
  if (!rows.empty()) {
    Var logits = matmul(gather_rows(enc.hidden, rows),
                        transpose(g.param(params.get(param_names::kMapOutput))));
    std::size_t offset = 0;
    for (const auto& m : batch) {
      const std::size_t k = m.mask_positions.size();
      if (k == 0) {
        ++out.empty_map;
        continue;
      }
      std::vector<std::size_t> gold;
      for (auto p : m.mask_positions) gold.push_back(m.original_ids[p]);
      Var ce = cross_entropy(slice_rows(logits, offset, k), gold);
      out.map_raw += ce.value().item() * static_cast<double>(k);
      map_parts.push_back(ce);
      offset += k;
    }
  } else {
    out.empty_map = batch.size();
  }
  Var map = sum_scalars(g, map_parts);
  out.map = map.value().item();

  out.total = add(sup, add(scale(rec, cfg.alpha), scale(map, cfg.beta)));
  return out;
}

JointLoss joint_pretrain_loss(Graph& g, ScaptModel& model, const Encoder& encoder,
                              std::span<const LabeledSentence> batch, const PretrainConfig& cfg,
                              Rng& mask_rng, Rng* dropout_rng) {
  std::vector<MaskedInput> masked;
  masked.reserve(batch.size());
  for (const auto& s : batch)
    masked.push_back(mask_review(s, model.vocab, model.config.max_len, cfg.mask_floor, mask_rng));
  return joint_pretrain_loss(g, model, encoder, masked, cfg, dropout_rng);
}

}  // namespace scapt
