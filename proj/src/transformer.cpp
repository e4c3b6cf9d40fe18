#include "scapt/transformer.hpp"

#include <algorithm>
#include <cmath>

#include "scapt/errors.hpp"

namespace scapt {

EncoderConfig EncoderConfig::paper() {
  EncoderConfig c;
  c.d_model = 300;
  c.n_layers = 6;
  c.n_heads = 6;
  c.d_ff = 1200;
  c.max_len = 128;
  return c;
}

void EncoderConfig::validate() const {
  if (d_model == 0 || n_layers == 0 || n_heads == 0 || d_ff == 0)
    throw ConfigError("encoder dimensions must be positive");
  if (d_model % n_heads != 0)
    throw ConfigError("d_model " + std::to_string(d_model) + " is not divisible by n_heads " +
                      std::to_string(n_heads));
  if (max_len < 2) throw ConfigError("max_len must leave room for [CLS] and [SEP]");
  if (dropout_rate < 0.0 || dropout_rate >= 1.0) throw ConfigError("dropout_rate must be in [0, 1)");
}

void to_json(nlohmann::json& j, const EncoderConfig& c) {
  j = {{"d_model", c.d_model}, {"n_layers", c.n_layers}, {"n_heads", c.n_heads},
       {"d_ff", c.d_ff},       {"max_len", c.max_len},   {"dropout_rate", c.dropout_rate}};
}

void from_json(const nlohmann::json& j, EncoderConfig& c) {
  EncoderConfig d;
  c.d_model = j.value("d_model", d.d_model);
  c.n_layers = j.value("n_layers", d.n_layers);
  c.n_heads = j.value("n_heads", d.n_heads);
  c.d_ff = j.value("d_ff", d.d_ff);
  c.max_len = j.value("max_len", d.max_len);
  c.dropout_rate = j.value("dropout_rate", d.dropout_rate);
}

std::vector<std::size_t> format_input(std::span<const std::string> tokens, const Vocab& vocab,
                                      std::size_t max_len) {
  if (max_len < 2) throw ConfigError("max_len must be at least 2");
  const std::size_t keep = std::min(tokens.size(), max_len - 2);
  std::vector<std::size_t> ids;
  ids.reserve(keep + 2);
  ids.push_back(special::kCls);
  for (std::size_t i = 0; i < keep; ++i) ids.push_back(vocab.id(tokens[i]));
  ids.push_back(special::kSep);
  return ids;
}

TokenBatch TokenBatch::pad(std::span<const std::vector<std::size_t>> sequences,
                           std::size_t min_length) {
  if (sequences.empty()) throw ContractError("TokenBatch::pad: empty batch");
  TokenBatch b;
  b.batch = sequences.size();
  b.length = min_length;
  for (const auto& s : sequences) {
    if (s.empty()) throw ContractError("TokenBatch::pad: empty sequence");
    b.length = std::max(b.length, s.size());
  }
  b.ids.assign(b.batch * b.length, special::kPad);
  b.mask.assign(b.batch * b.length, 0);
  for (std::size_t i = 0; i < b.batch; ++i)
    for (std::size_t t = 0; t < sequences[i].size(); ++t) {
      b.ids[i * b.length + t] = sequences[i][t];
      b.mask[i * b.length + t] = 1;
    }
  return b;
}

std::size_t TokenBatch::valid_length(std::size_t b) const {
  std::size_t n = 0;
  for (std::size_t t = 0; t < length; ++t) n += mask[b * length + t] ? 1 : 0;
  return n;
}

Var EncodedBatch::hidden_states(std::size_t b) const { return slice_rows(hidden, b * length, length); }

Var EncodedBatch::sentence_rep(std::size_t b) const { return slice_rows(sentence, b, 1); }

Tensor sinusoidal_positions(std::size_t positions, std::size_t d_model) {
  Tensor pe({positions, d_model});
  for (std::size_t pos = 0; pos < positions; ++pos)
    for (std::size_t i = 0; i < d_model; ++i) {
      const double expo = static_cast<double>(i - i % 2) / static_cast<double>(d_model);
      const double angle = static_cast<double>(pos) / std::pow(10000.0, expo);
      pe.at(pos, i) = i % 2 == 0 ? std::sin(angle) : std::cos(angle);
    }
  return pe;
}

namespace {

Tensor uniform_tensor(Shape shape, double limit, Rng& rng) {
  Tensor t(std::move(shape));
  for (auto& v : t.data()) v = (2.0 * uniform01(rng) - 1.0) * limit;
  return t;
}

Tensor xavier(std::size_t in, std::size_t out, Rng& rng) {
  return uniform_tensor({in, out}, std::sqrt(6.0 / static_cast<double>(in + out)), rng);
}

void init_linear(ParameterStore& p, const std::string& name, std::size_t in, std::size_t out,
                 Rng& rng, bool bias = true) {
  p.add(name + "_w", xavier(in, out, rng));
  if (bias) p.add(name + "_b", Tensor({out}));
}

void init_layer(ParameterStore& p, const std::string& prefix, const EncoderConfig& cfg, Rng& rng) {
  const std::size_t d = cfg.d_model;
  // a key bias shifts every score of a query equally and cancels in the softmax
  for (const char* name : {"q", "k", "v", "o"})
    init_linear(p, prefix + ".attn_" + name, d, d, rng, std::string_view(name) != "k");
  p.add(prefix + ".ln1_g", Tensor({d}, 1.0));
  p.add(prefix + ".ln1_b", Tensor({d}));
  init_linear(p, prefix + ".ff1", d, cfg.d_ff, rng);
  init_linear(p, prefix + ".ff2", cfg.d_ff, d, rng);
  p.add(prefix + ".ln2_g", Tensor({d}, 1.0));
  p.add(prefix + ".ln2_b", Tensor({d}));
}

Var linear(Graph& g, ParameterStore& p, const std::string& name, Var x) {
  Var y = matmul(x, g.param(p.get(name + "_w")));
  const std::string bias = name + "_b";
  return p.contains(bias) ? add_bias(y, g.param(p.get(bias))) : y;
}

constexpr double kMasked = -1e9;
constexpr double kLayerNormEps = 1e-5;

/// Additive attention mask for one sequence of the batch.
Tensor attention_mask(std::span<const char> valid, bool causal) {
  const std::size_t L = valid.size();
  Tensor m({L, L});
  for (std::size_t i = 0; i < L; ++i)
    for (std::size_t j = 0; j < L; ++j)
      if (!valid[j] || (causal && j > i)) m.at(i, j) = kMasked;
  return m;
}

Var self_attention(Graph& g, ParameterStore& p, const std::string& prefix, Var x,
                   std::size_t batch, std::size_t length, std::span<const char> valid,
                   bool causal, std::size_t n_heads) {
  const std::size_t d = x.cols();
  const std::size_t dk = d / n_heads;
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(dk));
  Var q = linear(g, p, prefix + ".attn_q", x);
  Var k = linear(g, p, prefix + ".attn_k", x);
  Var v = linear(g, p, prefix + ".attn_v", x);
  std::vector<Var> per_seq;
  per_seq.reserve(batch);
  for (std::size_t b = 0; b < batch; ++b) {
    const Tensor mask = attention_mask(valid.subspan(b * length, length), causal);
    Var qb = slice_rows(q, b * length, length);
    Var kb = slice_rows(k, b * length, length);
    Var vb = slice_rows(v, b * length, length);
    std::vector<Var> heads;
    heads.reserve(n_heads);
    for (std::size_t h = 0; h < n_heads; ++h) {
      Var qh = n_heads == 1 ? qb : slice_cols(qb, h * dk, dk);
      Var kh = n_heads == 1 ? kb : slice_cols(kb, h * dk, dk);
      Var vh = n_heads == 1 ? vb : slice_cols(vb, h * dk, dk);
      Var scores = add_constant(scale(matmul(qh, transpose(kh)), inv_sqrt), mask);
      heads.push_back(matmul(softmax(scores), vh));
    }
    per_seq.push_back(n_heads == 1 ? heads[0] : concat_cols(heads));
  }
  Var merged = batch == 1 ? per_seq[0] : concat_rows(per_seq);
  return linear(g, p, prefix + ".attn_o", merged);
}

Var transformer_layer(Graph& g, ParameterStore& p, const std::string& prefix, Var x,
                      std::size_t batch, std::size_t length, std::span<const char> valid,
                      bool causal, const EncoderConfig& cfg, Rng* rng) {
  auto drop = [&](Var v) { return rng ? dropout(v, cfg.dropout_rate, *rng) : v; };
  Var attn = self_attention(g, p, prefix, x, batch, length, valid, causal, cfg.n_heads);
  x = layer_norm(add(x, drop(attn)), g.param(p.get(prefix + ".ln1_g")),
                 g.param(p.get(prefix + ".ln1_b")), kLayerNormEps);
  Var ff = linear(g, p, prefix + ".ff2", relu(linear(g, p, prefix + ".ff1", x)));
  return layer_norm(add(x, drop(ff)), g.param(p.get(prefix + ".ln2_g")),
                    g.param(p.get(prefix + ".ln2_b")), kLayerNormEps);
}

/// Position encodings tiled over the batch.
Tensor tiled_positions(std::size_t batch, std::size_t length, std::size_t d) {
  const Tensor pe = sinusoidal_positions(length, d);
  Tensor out({batch * length, d});
  for (std::size_t b = 0; b < batch; ++b)
    std::copy(pe.data().begin(), pe.data().end(), out.data().begin() + b * length * d);
  return out;
}

}  // namespace

void init_encoder_params(ParameterStore& params, const EncoderConfig& cfg,
                         std::size_t vocab_size, Rng& rng) {
  cfg.validate();
  params.add("enc.tok_emb", uniform_tensor({vocab_size, cfg.d_model}, 0.1, rng));
  for (std::size_t l = 0; l < cfg.n_layers; ++l)
    init_layer(params, "enc.l" + std::to_string(l), cfg, rng);
}

void init_decoder_params(ParameterStore& params, const EncoderConfig& cfg,
                         std::size_t vocab_size, Rng& rng) {
  cfg.validate();
  params.add("dec.tok_emb", uniform_tensor({vocab_size, cfg.d_model}, 0.1, rng));
  for (std::size_t l = 0; l < cfg.decoder_layers(); ++l)
    init_layer(params, "dec.l" + std::to_string(l), cfg, rng);
  init_linear(params, "dec.out", cfg.d_model, vocab_size, rng);
}

Encoder::Encoder(EncoderConfig cfg, std::size_t vocab_size)
    : cfg_(std::move(cfg)), vocab_size_(vocab_size) {
  cfg_.validate();
}

EncodedBatch Encoder::encode(Graph& g, ParameterStore& params, const TokenBatch& batch,
                             Rng* dropout_rng) const {
  ++calls_;
  if (batch.length > cfg_.max_len)
    throw ContractError("sequence length " + std::to_string(batch.length) + " exceeds max_len " +
                        std::to_string(cfg_.max_len));
  for (std::size_t b = 0; b < batch.batch; ++b)
    if (!batch.mask[b * batch.length])
      throw ContractError("position 0 of every sequence must be valid");
  const std::size_t d = cfg_.d_model;
  Var emb = gather_rows(g.param(params.get("enc.tok_emb")), batch.ids);
  Var x = add_constant(scale(emb, std::sqrt(static_cast<double>(d))),
                       tiled_positions(batch.batch, batch.length, d));
  if (dropout_rng) x = dropout(x, cfg_.dropout_rate, *dropout_rng);
  for (std::size_t l = 0; l < cfg_.n_layers; ++l)
    x = transformer_layer(g, params, "enc.l" + std::to_string(l), x, batch.batch, batch.length,
                          batch.mask, false, cfg_, dropout_rng);
  EncodedBatch out;
  out.hidden = x;
  out.batch = batch.batch;
  out.length = batch.length;
  if (batch.batch == 1) {
    out.sentence = slice_rows(x, 0, 1);
  } else {
    std::vector<std::size_t> cls_rows(batch.batch);
    for (std::size_t b = 0; b < batch.batch; ++b) cls_rows[b] = b * batch.length;
    out.sentence = gather_rows(x, cls_rows);
  }
  return out;
}

Decoder::Decoder(EncoderConfig cfg, std::size_t vocab_size)
    : cfg_(std::move(cfg)), vocab_size_(vocab_size) {
  cfg_.validate();
}

Var Decoder::decode(Graph& g, ParameterStore& params, Var sentence_reps,
                    std::span<const std::vector<std::size_t>> targets, Rng* dropout_rng) const {
  const std::size_t batch = targets.size();
  const std::size_t d = cfg_.d_model;
  if (batch == 0) throw ContractError("decode: empty batch");
  if (sentence_reps.rows() != batch || sentence_reps.cols() != d)
    throw DimensionError("decode: sentence reps " + shape_str(sentence_reps.shape()) +
                         " do not match batch of " + std::to_string(batch));
  std::size_t T = 0;
  for (const auto& t : targets) {
    if (t.empty()) throw ContractError("decode: empty target sequence");
    T = std::max(T, t.size());
  }
  if (T > cfg_.max_len) throw ContractError("decode: target longer than max_len");

  // Inputs per sequence: [rep, tgt[0], ..., tgt[T-2]], right-padded to T.
  std::vector<char> valid(batch * T, 0);
  std::vector<std::size_t> shifted_ids;
  std::vector<std::size_t> shifted_rows;
  for (std::size_t b = 0; b < batch; ++b) {
    for (std::size_t t = 0; t < targets[b].size(); ++t) valid[b * T + t] = 1;
    for (std::size_t t = 1; t < T; ++t) {
      shifted_ids.push_back(t - 1 < targets[b].size() ? targets[b][t - 1] : special::kPad);
      shifted_rows.push_back(b * T + t);
    }
  }
  Var x;
  if (T == 1) {
    x = sentence_reps;
  } else {
    Var tok = scale(gather_rows(g.param(params.get("dec.tok_emb")), shifted_ids),
                    std::sqrt(static_cast<double>(d)));
    std::vector<Var> rows;
    rows.reserve(2 * batch);
    for (std::size_t b = 0; b < batch; ++b) {
      rows.push_back(slice_rows(sentence_reps, b, 1));
      rows.push_back(slice_rows(tok, b * (T - 1), T - 1));
    }
    x = concat_rows(rows);
  }
  x = add_constant(x, tiled_positions(batch, T, d));
  if (dropout_rng) x = dropout(x, cfg_.dropout_rate, *dropout_rng);
  for (std::size_t l = 0; l < cfg_.decoder_layers(); ++l)
    x = transformer_layer(g, params, "dec.l" + std::to_string(l), x, batch, T, valid, true, cfg_,
                          dropout_rng);
  return linear(g, params, "dec.out", x);
}

std::vector<std::size_t> Decoder::generate(ParameterStore& params, const Tensor& sentence_rep,
                                           std::size_t max_steps) const {
  std::vector<std::size_t> out;
  max_steps = std::min(max_steps, cfg_.max_len);
  while (out.size() < max_steps) {
    Graph g;
    std::vector<std::vector<std::size_t>> tgt{out};
    tgt[0].push_back(special::kPad);
    Var logits = decode(g, params, g.constant(sentence_rep), tgt);
    const auto& v = logits.value();
    const std::size_t row = out.size();
    std::size_t best = 0;
    for (std::size_t j = 1; j < v.cols(); ++j)
      if (v.at(row, j) > v.at(row, best)) best = j;
    out.push_back(best);
    if (best == special::kSep) break;
  }
  return out;
}

}  // namespace scapt
