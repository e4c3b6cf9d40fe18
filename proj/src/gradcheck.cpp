#include "scapt/gradcheck.hpp"

#include <algorithm>
#include <cmath>

#include "scapt/finetune.hpp"
#include "scapt/model.hpp"
#include "scapt/pretrain.hpp"

namespace scapt {

double relative_error(double analytic, double numeric, double floor) {
  const double denom = std::max({std::abs(analytic), std::abs(numeric), floor});
  return std::abs(analytic - numeric) / denom;
}

GradCheckResult check_gradients(const std::string& name, ParameterStore& params, const LossFn& loss,
                                const GradCheckOptions& opts) {
  params.zero_grad();
  double base = 0.0;
  {
    Graph g;
    Var l = loss(g, params);
    base = l.value().item();
    g.backward(l);
  }
  auto eval = [&] {
    Graph g;
    return loss(g, params).value().item();
  };

  GradCheckResult r;
  r.name = name;
  r.loss = base;
  Rng rng(opts.seed);
  for (const auto& pname : params.names()) {
    Tensor& p = params.get(pname);
    if (!p.requires_grad()) continue;
    const std::vector<double> analytic = p.grad();
    std::vector<std::size_t> entries(p.size());
    for (std::size_t i = 0; i < entries.size(); ++i) entries[i] = i;
    if (opts.entries_per_param > 0 && opts.entries_per_param < entries.size()) {
      for (std::size_t k = 0; k < opts.entries_per_param; ++k) {
        std::uniform_int_distribution<std::size_t> pick(k, entries.size() - 1);
        std::swap(entries[k], entries[pick(rng)]);
      }
      entries.resize(opts.entries_per_param);
    }
    for (auto i : entries) {
      const double saved = p[i];
      p[i] = saved + opts.step;
      const double up = eval();
      p[i] = saved - opts.step;
      const double down = eval();
      p[i] = saved;
      const double numeric = (up - down) / (2.0 * opts.step);
      const double err = relative_error(analytic[i], numeric);
      if (err > r.max_rel_err || r.worst_param.empty()) {
        if (err >= r.max_rel_err) {
          r.max_rel_err = err;
          r.worst_param = pname + "[" + std::to_string(i) + "]";
        }
      }
      ++r.checked;
    }
  }
  params.clear_grads();
  r.pass = r.max_rel_err < opts.threshold;
  return r;
}

namespace {

Tensor random_tensor(Shape shape, Rng& rng) {
  Tensor t(std::move(shape));
  for (auto& v : t.data()) v = 2.0 * uniform01(rng) - 1.0;
  return t;
}

/// Scalarizes an op output with fixed random weights.
Var project(Var out, const Tensor& weights) {
  return sum(mul(out, out.graph->constant(weights)));
}

struct OpCase {
  std::string name;
  std::vector<std::pair<std::string, Shape>> inputs;
  Shape out_shape;  // empty for scalar-output ops
  std::function<Var(Graph&, ParameterStore&)> op;
};

std::vector<OpCase> op_cases() {
  auto P = [](Graph& g, ParameterStore& p, const char* n) { return g.param(p.get(n)); };
  std::vector<OpCase> c;
  c.push_back({"matmul", {{"a", {4, 5}}, {"b", {5, 3}}}, {4, 3},
               [=](Graph& g, ParameterStore& p) { return matmul(P(g, p, "a"), P(g, p, "b")); }});
  c.push_back({"transpose", {{"a", {3, 4}}}, {4, 3},
               [=](Graph& g, ParameterStore& p) { return transpose(P(g, p, "a")); }});
  c.push_back({"add", {{"a", {3, 4}}, {"b", {3, 4}}}, {3, 4},
               [=](Graph& g, ParameterStore& p) { return add(P(g, p, "a"), P(g, p, "b")); }});
  c.push_back({"sub", {{"a", {3, 4}}, {"b", {3, 4}}}, {3, 4},
               [=](Graph& g, ParameterStore& p) { return sub(P(g, p, "a"), P(g, p, "b")); }});
  c.push_back({"mul", {{"a", {3, 4}}, {"b", {3, 4}}}, {3, 4},
               [=](Graph& g, ParameterStore& p) { return mul(P(g, p, "a"), P(g, p, "b")); }});
  c.push_back({"scale", {{"a", {3, 4}}}, {3, 4},
               [=](Graph& g, ParameterStore& p) { return scale(P(g, p, "a"), -1.7); }});
  c.push_back({"add_bias", {{"a", {3, 4}}, {"b", {4}}}, {3, 4},
               [=](Graph& g, ParameterStore& p) { return add_bias(P(g, p, "a"), P(g, p, "b")); }});
  c.push_back({"relu", {{"a", {3, 4}}}, {3, 4},
               [=](Graph& g, ParameterStore& p) { return relu(P(g, p, "a")); }});
  c.push_back({"softmax", {{"a", {3, 5}}}, {3, 5},
               [=](Graph& g, ParameterStore& p) { return softmax(P(g, p, "a")); }});
  c.push_back({"log_softmax", {{"a", {3, 5}}}, {3, 5},
               [=](Graph& g, ParameterStore& p) { return log_softmax(P(g, p, "a")); }});
  c.push_back({"layer_norm", {{"x", {3, 6}}, {"g", {6}}, {"b", {6}}}, {3, 6},
               [=](Graph& g, ParameterStore& p) {
                 return layer_norm(P(g, p, "x"), P(g, p, "g"), P(g, p, "b"), 1e-5);
               }});
  c.push_back({"cross_entropy", {{"a", {4, 3}}}, {},
               [=](Graph& g, ParameterStore& p) {
                 const std::vector<std::size_t> t{0, 2, 1, 1};
                 return cross_entropy(P(g, p, "a"), t);
               }});
  c.push_back({"gather_rows", {{"a", {5, 3}}}, {4, 3},
               [=](Graph& g, ParameterStore& p) {
                 const std::vector<std::size_t> ids{0, 3, 3, 1};
                 return gather_rows(P(g, p, "a"), ids);
               }});
  c.push_back({"slice_rows", {{"a", {5, 3}}}, {2, 3},
               [=](Graph& g, ParameterStore& p) { return slice_rows(P(g, p, "a"), 2, 2); }});
  c.push_back({"slice_cols", {{"a", {3, 5}}}, {3, 2},
               [=](Graph& g, ParameterStore& p) { return slice_cols(P(g, p, "a"), 1, 2); }});
  c.push_back({"concat_rows", {{"a", {2, 3}}, {"b", {1, 3}}}, {3, 3},
               [=](Graph& g, ParameterStore& p) {
                 const std::vector<Var> parts{P(g, p, "a"), P(g, p, "b")};
                 return concat_rows(parts);
               }});
  c.push_back({"concat_cols", {{"a", {2, 3}}, {"b", {2, 2}}}, {2, 5},
               [=](Graph& g, ParameterStore& p) {
                 const std::vector<Var> parts{P(g, p, "a"), P(g, p, "b")};
                 return concat_cols(parts);
               }});
  c.push_back({"mean_rows", {{"a", {4, 3}}}, {1, 3},
               [=](Graph& g, ParameterStore& p) { return mean_rows(P(g, p, "a")); }});
  c.push_back({"normalize_rows", {{"a", {3, 4}}}, {3, 4},
               [=](Graph& g, ParameterStore& p) { return normalize_rows(P(g, p, "a")); }});
  c.push_back({"sum", {{"a", {3, 4}}}, {},
               [=](Graph& g, ParameterStore& p) { return sum(P(g, p, "a")); }});
  c.push_back({"masked_row_logsumexp", {{"a", {3, 4}}}, {3},
               [=](Graph& g, ParameterStore& p) {
                 const std::vector<char> keep{1, 0, 1, 1, 0, 1, 0, 0, 0, 0, 0, 0};
                 return masked_row_logsumexp(P(g, p, "a"), keep);
               }});
  c.push_back({"dropout", {{"a", {3, 4}}}, {3, 4},
               [=](Graph& g, ParameterStore& p) {
                 Rng fixed(99);
                 return dropout(P(g, p, "a"), 0.3, fixed);
               }});
  return c;
}

}  // namespace

std::vector<GradCheckResult> run_gradcheck_suite(const EncoderConfig& cfg, std::uint64_t seed,
                                                 const GradCheckOptions& opts) {
  std::vector<GradCheckResult> results;
  Rng rng(seed);

  GradCheckOptions op_opts = opts;
  op_opts.entries_per_param = 0;
  for (auto& c : op_cases()) {
    ParameterStore p;
    for (auto& [n, shape] : c.inputs) p.add(n, random_tensor(shape, rng));
    LossFn fn = c.op;
    if (!c.out_shape.empty()) {
      const Tensor w = random_tensor(c.out_shape, rng);
      fn = [op = c.op, w](Graph& g, ParameterStore& ps) { return project(op(g, ps), w); };
    }
    results.push_back(check_gradients(c.name, p, fn, op_opts));
  }

  // Model-level checks on a small vocabulary.
  std::vector<std::string> words;
  for (int i = 0; i < 18; ++i) words.push_back("w" + std::to_string(i));
  ScaptModel model = ScaptModel::initialize(cfg, Vocab::from_tokens(words), seed);
  Rng head_rng(seed + 1);
  model.reset_classifier(head_rng);
  const Encoder encoder = model.encoder();
  const Decoder decoder = model.decoder();

  std::vector<LabeledSentence> sentences;
  const std::vector<Polarity> labels{Polarity::Positive, Polarity::Positive, Polarity::Negative,
                                     Polarity::Negative};
  for (std::size_t s = 0; s < labels.size(); ++s) {
    LabeledSentence ls;
    const std::size_t len = 5 + s % 3;
    for (std::size_t t = 0; t < len; ++t) ls.tokens.push_back(words[(s * 5 + t * 3) % words.size()]);
    ls.label = labels[s];
    ls.aspects = {{1, 3}};
    sentences.push_back(std::move(ls));
  }
  std::vector<MaskedInput> masked;
  for (const auto& s : sentences)
    masked.push_back(mask_review(s, model.vocab, cfg.max_len, 0.15, rng));
  std::vector<std::vector<std::size_t>> corrupted, originals;
  for (const auto& m : masked) {
    corrupted.push_back(m.corrupted_ids);
    originals.push_back(m.original_ids);
  }
  const TokenBatch tb = TokenBatch::pad(corrupted);
  PretrainConfig pcfg;

  std::vector<AbsaSentence> absa(2);
  absa[0].tokens = {"w1", "w2", "w3", "w4", "w5"};
  absa[0].aspects = {{"", {1, 2}, Polarity::Positive, {}}, {"", {3, 5}, Polarity::Negative, {}}};
  absa[1].tokens = {"w7", "w8", "w9", "w10"};
  absa[1].aspects = {{"", {0, 1}, Polarity::Neutral, {}}};
  std::vector<const AbsaSentence*> absa_ptrs{&absa[0], &absa[1]};

  const std::size_t hidden_rows = tb.batch * tb.length;
  const Tensor w_hidden = random_tensor({hidden_rows, cfg.d_model}, rng);
  std::size_t T = 0;
  for (const auto& o : originals) T = std::max(T, o.size() - 1);
  const Tensor w_logits = random_tensor({tb.batch * T, model.vocab.size()}, rng);

  auto run = [&](const std::string& name, const LossFn& fn) {
    results.push_back(check_gradients(name, model.params, fn, opts));
  };
  run("encoder", [&](Graph& g, ParameterStore& p) {
    return project(encoder.encode(g, p, tb).hidden, w_hidden);
  });
  run("decoder", [&](Graph& g, ParameterStore& p) {
    Var reps = encoder.encode(g, p, tb).sentence;
    std::vector<std::vector<std::size_t>> targets;
    for (const auto& o : originals) targets.push_back(reconstruction_target(o));
    return project(decoder.decode(g, p, reps, targets), w_logits);
  });
  run("supervised_contrastive_loss", [&](Graph& g, ParameterStore& p) {
    Var s = sentiment_projection(encoder.encode(g, p, tb).sentence,
                                 g.param(p.get(param_names::kSentiment)));
    return supervised_contrastive_loss(s, labels, pcfg.tau);
  });
  run("reconstruction_loss", [&](Graph& g, ParameterStore& p) {
    Var reps = encoder.encode(g, p, tb).sentence;
    auto parts = reconstruction_losses(g, p, decoder, reps, originals);
    return sum(concat_rows(parts));
  });
  run("masked_aspect_prediction_loss", [&](Graph& g, ParameterStore& p) {
    const EncodedBatch enc = encoder.encode(g, p, tb);
    Var w_o = g.param(p.get(param_names::kMapOutput));
    std::vector<Var> parts;
    for (std::size_t b = 0; b < masked.size(); ++b)
      parts.push_back(masked_aspect_prediction_loss(enc.hidden_states(b), masked[b], w_o).loss);
    return sum(concat_rows(parts));
  });
  run("joint_pretrain_loss", [&](Graph& g, ParameterStore&) {
    return joint_pretrain_loss(g, model, encoder, masked, pcfg).total;
  });
  run("finetune_loss", [&](Graph& g, ParameterStore&) {
    return finetune_loss(g, model, encoder, absa_ptrs);
  });
  return results;
}

}  // namespace scapt
