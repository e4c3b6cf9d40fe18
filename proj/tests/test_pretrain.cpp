#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>

#include "oracles.hpp"
#include "scapt/errors.hpp"
#include "scapt/model.hpp"
#include "scapt/pretrain.hpp"

using namespace scapt;

namespace {

Vocab word_vocab(std::size_t n) {
  std::vector<std::string> w;
  for (std::size_t i = 0; i < n; ++i) w.push_back("w" + std::to_string(i));
  return Vocab::from_tokens(w);
}

LabeledSentence sentence(std::size_t n, std::vector<Span> aspects,
                         Polarity label = Polarity::Positive) {
  LabeledSentence s;
  for (std::size_t i = 0; i < n; ++i) s.tokens.push_back("w" + std::to_string(i % 20));
  s.aspects = std::move(aspects);
  s.label = label;
  return s;
}

Var contrastive_of(Graph& g, const std::vector<std::vector<double>>& s,
                   const std::vector<Polarity>& labels, double tau) {
  Tensor t({s.size(), s[0].size()});
  for (std::size_t i = 0; i < s.size(); ++i)
    for (std::size_t k = 0; k < s[i].size(); ++k) t.at(i, k) = s[i][k];
  return supervised_contrastive_loss(g.constant(t), labels, tau);
}

EncoderConfig tiny() {
  EncoderConfig c;
  c.d_model = 8;
  c.n_layers = 2;
  c.n_heads = 2;
  c.d_ff = 16;
  c.max_len = 32;
  c.dropout_rate = 0.0;
  return c;
}

constexpr auto P = Polarity::Positive;
constexpr auto N = Polarity::Negative;

}  // namespace

TEST_CASE("labeled sentence validation") {
  CHECK_NOTHROW(sentence(5, {{1, 3}}).validate());
  CHECK_THROWS_AS(sentence(5, {}).validate(), ContractError);
  CHECK_THROWS_AS(sentence(5, {{3, 3}}).validate(), ContractError);
  CHECK_THROWS_AS(sentence(5, {{4, 6}}).validate(), ContractError);
  CHECK_THROWS_AS(sentence(5, {{0, 2}, {1, 3}}).validate(), ContractError);
  CHECK_THROWS_AS(sentence(5, {{0, 2}}, Polarity::Neutral).validate(), ContractError);
}

TEST_CASE("masking: floor already met by the aspect span") {
  const Vocab v = word_vocab(20);
  const auto s = sentence(10, {{3, 5}});
  Rng rng(1);
  for (int trial = 0; trial < 50; ++trial) {
    const auto m = mask_review(s, v, 64, 0.15, rng);
    CHECK(m.mask_positions == std::vector<std::size_t>{4, 5});
    CHECK(std::all_of(m.from_aspect.begin(), m.from_aspect.end(), [](char c) { return c == 1; }));
  }
}

TEST_CASE("masking: aspect covering the whole sentence") {
  const Vocab v = word_vocab(20);
  const auto s = sentence(4, {{0, 4}});
  Rng rng(2);
  const auto m = mask_review(s, v, 64, 0.15, rng);
  CHECK(m.mask_positions == std::vector<std::size_t>{1, 2, 3, 4});
}

TEST_CASE("masking: extra positions reach the floor and every target round-trips") {
  const Vocab v = word_vocab(20);
  const auto s = sentence(20, {{7, 8}});
  Rng rng(3);
  for (int trial = 0; trial < 200; ++trial) {
    const auto m = mask_review(s, v, 64, 0.15, rng);
    REQUIRE(m.mask_positions.size() == 3);  // ceil(0.15 * 20)
    CHECK(std::find(m.mask_positions.begin(), m.mask_positions.end(), 8) != m.mask_positions.end());
    CHECK(std::is_sorted(m.mask_positions.begin(), m.mask_positions.end()));
    CHECK(m.corrupted_ids.front() == special::kCls);
    CHECK(m.corrupted_ids.back() == special::kSep);
    for (std::size_t k = 0; k < m.mask_positions.size(); ++k) {
      const auto p = m.mask_positions[k];
      CHECK(p >= 1);
      CHECK(p <= 20);
      CHECK(m.original_ids[p] == v.id(s.tokens[p - 1]));
      switch (m.outcomes[k]) {
        case MaskOutcome::Masked: CHECK(m.corrupted_ids[p] == special::kMask); break;
        case MaskOutcome::Kept: CHECK(m.corrupted_ids[p] == m.original_ids[p]); break;
        case MaskOutcome::Random:
          CHECK(m.corrupted_ids[p] >= special::kCount);
          CHECK(m.corrupted_ids[p] < v.size());
          break;
      }
    }
    for (std::size_t p = 0; p < m.original_ids.size(); ++p)
      if (std::find(m.mask_positions.begin(), m.mask_positions.end(), p) == m.mask_positions.end())
        CHECK(m.corrupted_ids[p] == m.original_ids[p]);
  }
}

TEST_CASE("masking: aspect outcome rates roughly 80/10/10") {
  const Vocab v = word_vocab(20);
  const auto s = sentence(12, {{2, 5}});
  Rng rng(4);
  std::array<double, 3> counts{};
  double total = 0.0;
  for (int trial = 0; trial < 3000; ++trial) {
    const auto m = mask_review(s, v, 64, 0.15, rng);
    for (std::size_t k = 0; k < m.outcomes.size(); ++k)
      if (m.from_aspect[k]) {
        counts[static_cast<std::size_t>(m.outcomes[k])] += 1.0;
        total += 1.0;
      }
  }
  CHECK(counts[0] / total == doctest::Approx(0.8).epsilon(0.03));
  CHECK(counts[1] / total == doctest::Approx(0.1).epsilon(0.2));
  CHECK(counts[2] / total == doctest::Approx(0.1).epsilon(0.2));
}

TEST_CASE("sentiment projection") {
  Graph g;
  const Tensor h = Tensor::matrix(2, 3, {1, 2, 3, -1, 0.5, 4});
  Var id = sentiment_projection(g.constant(h), g.constant(Tensor::identity(3)));
  CHECK(id.value().data() == h.data());
  Var zero = sentiment_projection(g.constant(h), g.constant(Tensor({3, 3})));
  for (double x : zero.value().data()) CHECK(x == 0.0);
  const Tensor w = Tensor::matrix(3, 3, {1, 2, 0, 0, 1, -1, 3, 0, 1});
  Var s = sentiment_projection(g.constant(h), g.constant(w));
  // s_i = W h_i
  for (std::size_t i = 0; i < 2; ++i)
    for (std::size_t r = 0; r < 3; ++r) {
      double e = 0.0;
      for (std::size_t c = 0; c < 3; ++c) e += w.at(r, c) * h.at(i, c);
      CHECK(s.value().at(i, r) == doctest::Approx(e).epsilon(1e-15));
    }
  CHECK_THROWS_AS(sentiment_projection(g.constant(h), g.constant(Tensor({2, 2}))), DimensionError);
}

TEST_CASE("contrastive loss: identical positives give zero") {
  Graph g;
  const std::vector<std::vector<double>> s{{0.3, -1.2}, {0.3, -1.2}};
  for (double tau : {0.07, 1.0, 5.0}) CHECK(contrastive_of(g, s, {P, P}, tau).value().item() == 0.0);
}

TEST_CASE("contrastive loss: three-vector hand example, tau grid") {
  const std::vector<std::vector<double>> s{{1, 0}, {0.9, 0.1}, {-1, 0}};
  const std::vector<Polarity> y{P, P, N};
  for (double tau : {1.0, 0.5, 0.07}) {
    Graph g;
    CHECK(std::abs(contrastive_of(g, s, y, tau).value().item() - oracle::contrastive(s, y, tau)) <
          1e-10);
  }
  // the negative sits closer to the first anchor than its positive does
  const std::vector<std::vector<double>> hard{{1, 0}, {0.2, 0.9}, {0.9, 0.1}};
  double prev = -1.0;
  for (double tau : {1.0, 0.5, 0.07}) {
    Graph g;
    const double got = contrastive_of(g, hard, y, tau).value().item();
    CHECK(std::abs(got - oracle::contrastive(hard, y, tau)) < 1e-10);
    CHECK(got > prev);
    prev = got;
  }
  // tau = 1 by hand: anchor 1 -> -log(e^.9 / (e^.9 + e^-1)), anchor 2 -> -log(e^.9 / (e^.9 + e^-.9))
  Graph g;
  const double a1 = -std::log(std::exp(0.9) / (std::exp(0.9) + std::exp(-1.0)));
  const double a2 = -std::log(std::exp(0.9) / (std::exp(0.9) + std::exp(-0.9)));
  CHECK(std::abs(contrastive_of(g, s, y, 1.0).value().item() - (a1 + a2)) < 1e-12);
}

TEST_CASE("contrastive loss: constant similarity shift, permutation, sign") {
  Rng rng(8);
  std::vector<std::vector<double>> s(5, std::vector<double>(3));
  for (auto& r : s)
    for (auto& x : r) x = uniform01(rng) * 2.0 - 1.0;
  const std::vector<Polarity> y{P, N, P, N, N};
  Graph g;
  const double base = contrastive_of(g, s, y, 0.5).value().item();
  CHECK(base >= 0.0);

  // an extra constant coordinate adds c^2 to every pairwise dot product
  auto shifted = s;
  for (auto& r : shifted) r.push_back(1.7);
  CHECK(std::abs(contrastive_of(g, shifted, y, 0.5).value().item() - base) < 1e-12);

  std::vector<std::size_t> perm{3, 0, 4, 2, 1};
  std::vector<std::vector<double>> ps;
  std::vector<Polarity> py;
  for (auto i : perm) {
    ps.push_back(s[i]);
    py.push_back(y[i]);
  }
  CHECK(std::abs(contrastive_of(g, ps, py, 0.5).value().item() - base) < 1e-12);
}

TEST_CASE("contrastive loss: skipped anchors and degenerate batches") {
  Graph g;
  const std::vector<std::vector<double>> s{{1, 0}, {0, 1}, {0.5, 0.5}};
  // the lone negative contributes nothing
  CHECK(std::abs(contrastive_of(g, s, {P, P, N}, 0.3).value().item() -
                 oracle::contrastive(s, {P, P, N}, 0.3)) < 1e-12);
  CHECK_THROWS_AS(contrastive_of(g, {{1, 0}, {0, 1}}, {P, N}, 0.3), DegenerateBatchError);
  CHECK_THROWS_AS(contrastive_of(g, {{1, 0}}, {P}, 0.3), ContractError);
  CHECK_THROWS_AS(contrastive_of(g, s, {P, P}, 0.3), DimensionError);
}

TEST_CASE("contrastive loss with row normalization is scale free") {
  Graph g;
  const Tensor a = Tensor::matrix(3, 2, {1, 0, 2, 0.2, -1, 0.3});
  Tensor b = a;
  for (auto& x : b.data()) x *= 10.0;
  const std::vector<Polarity> y{P, P, N};
  const double la = supervised_contrastive_loss(g.constant(a), y, 0.2, true).value().item();
  const double lb = supervised_contrastive_loss(g.constant(b), y, 0.2, true).value().item();
  CHECK(std::abs(la - lb) < 1e-12);
}

TEST_CASE("reconstruction: target layout and zero decoder") {
  const std::vector<std::size_t> ids{special::kCls, 7, 8, special::kSep};
  CHECK(reconstruction_target(ids) == std::vector<std::size_t>{7, 8, special::kSep});

  ScaptModel m = ScaptModel::initialize(tiny(), word_vocab(10), 1, true);
  for (const auto& n : m.params.names())
    if (n.starts_with("dec.")) std::fill(m.params.get(n).data().begin(), m.params.get(n).data().end(), 0.0);
  const std::vector<std::vector<std::size_t>> originals{ids, {special::kCls, 9, special::kSep}};
  Graph g;
  Tensor reps({2, 8}, 0.3);
  auto losses = reconstruction_losses(g, m.params, m.decoder(), g.constant(reps), originals);
  REQUIRE(losses.size() == 2);
  for (auto& l : losses)
    CHECK(std::abs(l.value().item() - std::log(static_cast<double>(m.vocab.size()))) < 1e-12);
}

TEST_CASE("masked aspect prediction") {
  const Vocab v = word_vocab(10);
  const std::size_t V = v.size();
  Graph g;
  Rng rng(5);
  Tensor hidden({6, 4});
  for (auto& x : hidden.data()) x = uniform01(rng) - 0.5;
  MaskedInput m;
  m.original_ids = {special::kCls, 6, 7, 8, 9, special::kSep};
  m.corrupted_ids = m.original_ids;
  m.mask_positions = {2, 4};

  auto zero = masked_aspect_prediction_loss(g.constant(hidden), m, g.constant(Tensor({V, 4})));
  CHECK(std::abs(zero.loss.value().item() - std::log(static_cast<double>(V))) < 1e-12);
  CHECK(std::abs(zero.raw_sum - 2.0 * std::log(static_cast<double>(V))) < 1e-12);
  CHECK(zero.positions == 2);

  // one masked position against a direct softmax
  Tensor w({V, 4});
  for (auto& x : w.data()) x = uniform01(rng) - 0.5;
  MaskedInput one = m;
  one.mask_positions = {3};
  const double got = masked_aspect_prediction_loss(g.constant(hidden), one, g.constant(w)).loss.value().item();
  std::vector<double> logits(V, 0.0);
  for (std::size_t r = 0; r < V; ++r)
    for (std::size_t c = 0; c < 4; ++c) logits[r] += w.at(r, c) * hidden.at(3, c);
  double z = 0.0;
  for (double l : logits) z += std::exp(l);
  CHECK(std::abs(got - (std::log(z) - logits[8])) < 1e-12);

  // hidden states at unmasked positions do not enter the loss
  Tensor other = hidden;
  for (std::size_t c = 0; c < 4; ++c) other.at(1, c) += 3.0, other.at(5, c) -= 2.0;
  const double again = masked_aspect_prediction_loss(g.constant(other), one, g.constant(w)).loss.value().item();
  CHECK(again == got);

  MaskedInput none = m;
  none.mask_positions.clear();
  auto empty = masked_aspect_prediction_loss(g.constant(hidden), none, g.constant(w));
  CHECK(empty.positions == 0);
  CHECK(empty.loss.value().item() == 0.0);
}

TEST_CASE("joint loss: component arithmetic, ablation and single pass") {
  const Vocab v = word_vocab(20);
  std::vector<LabeledSentence> batch{sentence(6, {{1, 2}}, P), sentence(7, {{0, 2}}, P),
                                     sentence(5, {{3, 4}}, N), sentence(9, {{2, 5}}, N)};
  ScaptModel m = ScaptModel::initialize(tiny(), v, 3, true);
  const Encoder enc = m.encoder();
  std::vector<MaskedInput> masked;
  Rng rng(6);
  for (const auto& s : batch) masked.push_back(mask_review(s, v, 32, 0.15, rng));

  PretrainConfig cfg;
  {
    Graph g;
    const auto before = enc.calls();
    const auto jl = joint_pretrain_loss(g, m, enc, masked, cfg);
    CHECK(enc.calls() - before == 1);
    CHECK(std::abs(jl.total.value().item() - (jl.sup + jl.rec + jl.map)) < 1e-12);
    CHECK(std::isfinite(jl.sup));
    CHECK(jl.rec > 0.0);
    CHECK(jl.map > 0.0);
    CHECK(jl.map_raw >= jl.map);
  }
  cfg.alpha = 0.0;
  cfg.beta = 0.0;
  {
    Graph g;
    const auto jl = joint_pretrain_loss(g, m, enc, masked, cfg);
    CHECK(jl.total.value().item() == jl.sup);
  }
  cfg.alpha = 0.3;
  cfg.beta = 2.5;
  cfg.clean_sentence_rep = true;
  {
    Graph g;
    const auto before = enc.calls();
    const auto jl = joint_pretrain_loss(g, m, enc, masked, cfg);
    CHECK(enc.calls() - before == 2);
    CHECK(std::abs(jl.total.value().item() - (jl.sup + 0.3 * jl.rec + 2.5 * jl.map)) < 1e-9);
  }
}

TEST_CASE("pretrain config validation and JSON") {
  PretrainConfig c;
  CHECK(c.tau == 0.07);
  CHECK(c.alpha == 1.0);
  CHECK(c.beta == 1.0);
  CHECK(c.mask_floor == 0.15);
  c.tau = 0.0;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c.tau = 0.5;
  c.mask_floor = 1.5;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c.mask_floor = 0.2;
  nlohmann::json j = c;
  const auto back = j.get<PretrainConfig>();
  CHECK(back.tau == 0.5);
  CHECK(back.mask_floor == 0.2);
}
