// End-to-end acceptance checks. Run without arguments for all of them, or
// pass criterion numbers (e.g. `scapt_acceptance 2 7`) to run a subset.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <set>
#include <sstream>
#include <string>

#include <spdlog/spdlog.h>

#include "oracles.hpp"
#include "scapt/corpus.hpp"
#include "scapt/errors.hpp"
#include "scapt/gradcheck.hpp"
#include "scapt/metrics.hpp"
#include "scapt/trainer.hpp"
#include "synthetic.hpp"

using namespace scapt;
namespace fs = std::filesystem;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

struct Outcome {
  bool pass = true;
  std::string detail;
};

void require(Outcome& o, bool cond, const std::string& what) {
  if (!cond) {
    o.pass = false;
    o.detail += (o.detail.empty() ? "" : "; ") + what;
  }
}

std::string fmt(double v, int prec = 4) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", prec, v);
  return buf;
}

// 1 -----------------------------------------------------------------------

Outcome gradients() {
  Outcome o;
  const auto t0 = Clock::now();

  EncoderConfig toy;
  toy.d_model = 8;
  toy.n_layers = 2;
  toy.n_heads = 2;
  toy.d_ff = 16;
  toy.max_len = 32;
  toy.dropout_rate = 0.0;
  GradCheckOptions full;
  full.entries_per_param = 0;

  EncoderConfig desk = EncoderConfig::desk();
  desk.n_layers = 2;
  desk.dropout_rate = 0.0;
  GradCheckOptions sampled;
  sampled.entries_per_param = 6;

  double worst = 0.0;
  std::size_t checks = 0;
  for (const auto& [cfg, opts, label] :
       {std::tuple{toy, full, "all entries, d=8"}, std::tuple{desk, sampled, "sampled, d=64"}}) {
    for (const auto& r : run_gradcheck_suite(cfg, 11, opts)) {
      ++checks;
      worst = std::max(worst, r.max_rel_err);
      require(o, r.pass, std::string(label) + " " + r.name + " rel err " + fmt(r.max_rel_err, 8));
    }
  }
  const double secs = seconds_since(t0);
  require(o, secs < 300.0, "took " + fmt(secs, 1) + " s");
  o.detail = std::to_string(checks) + " checks, max rel err " + fmt(worst, 8) + ", " + fmt(secs, 1) + " s" +
             (o.detail.empty() ? "" : " | " + o.detail);
  return o;
}

// 2 -----------------------------------------------------------------------

Outcome contrastive_oracle() {
  Outcome o;
  const std::vector<std::vector<double>> hand{{1.0, 0.0, 0.5},  {0.8, 0.3, -0.2}, {-1.0, 0.4, 0.1},
                                              {0.0, -1.0, 0.7}, {0.2, 0.2, 0.2},  {1.0, 0.0, 0.5}};
  const std::vector<Polarity> labels{Polarity::Positive, Polarity::Positive, Polarity::Negative,
                                     Polarity::Negative, Polarity::Neutral, Polarity::Positive};
  const double tau = 0.4;
  std::size_t compared = 0, degenerate = 0, zero = 0, skipped = 0;
  double worst = 0.0;
  for (unsigned mask = 1; mask < 64; ++mask) {
    std::vector<std::vector<double>> s;
    std::vector<Polarity> y;
    for (unsigned i = 0; i < 6; ++i)
      if (mask & (1u << i)) {
        s.push_back(hand[i]);
        y.push_back(labels[i]);
      }
    Tensor reps({s.size(), 3});
    for (std::size_t i = 0; i < s.size(); ++i)
      for (std::size_t k = 0; k < 3; ++k) reps.at(i, k) = s[i][k];
    std::map<Polarity, int> count;
    for (auto l : y) ++count[l];
    const bool any_pos = std::any_of(count.begin(), count.end(), [](auto& kv) { return kv.second > 1; });
    const bool some_alone = std::any_of(count.begin(), count.end(), [](auto& kv) { return kv.second == 1; });
    Graph g;
    try {
      const double got = supervised_contrastive_loss(g.constant(reps), y, tau).value().item();
      const double want = oracle::contrastive(s, y, tau);
      worst = std::max(worst, std::abs(got - want));
      require(o, any_pos, "loss returned for a batch without positives");
      ++compared;
      if (want == 0.0) zero += got == 0.0;
      if (some_alone) ++skipped;
    } catch (const DegenerateBatchError&) {
      require(o, !any_pos, "degenerate error on a batch with positives");
      ++degenerate;
    } catch (const ContractError&) {
      require(o, s.size() == 1, "contract error on a batch of " + std::to_string(s.size()));
    }
  }
  require(o, worst < 1e-10, "max deviation " + fmt(worst, 14));
  require(o, zero > 0, "no zero-loss batch");
  require(o, skipped > 0, "no batch with a skipped anchor");
  o.detail = std::to_string(compared) + " batches, max |diff| " + fmt(worst, 14) + ", " + std::to_string(zero) +
             " zero-loss, " + std::to_string(skipped) + " with skipped anchors, " + std::to_string(degenerate) +
             " degenerate" + (o.detail.empty() ? "" : " | " + o.detail);
  return o;
}

// 3 -----------------------------------------------------------------------

Outcome masking_statistics() {
  Outcome o;
  std::vector<std::string> words;
  for (int i = 0; i < 40; ++i) words.push_back("w" + std::to_string(i));
  const Vocab vocab = Vocab::from_tokens(words);
  Rng shape_rng(17), mask_rng(18);
  std::size_t outcomes[3] = {0, 0, 0};
  std::size_t below_floor = 0;
  const std::size_t trials = 20000;
  for (std::size_t t = 0; t < trials; ++t) {
    LabeledSentence s;
    const std::size_t n = 1 + shape_rng() % 30;
    for (std::size_t i = 0; i < n; ++i) s.tokens.push_back(words[shape_rng() % words.size()]);
    const std::size_t begin = shape_rng() % n;
    const std::size_t len = 1 + shape_rng() % std::min<std::size_t>(3, n - begin);
    s.aspects = {{begin, begin + len}};
    const auto m = mask_review(s, vocab, 64, 0.15, mask_rng);
    for (std::size_t k = 0; k < m.mask_positions.size(); ++k)
      if (m.from_aspect[k]) ++outcomes[static_cast<int>(m.outcomes[k])];
    if (static_cast<double>(m.mask_positions.size()) < 0.15 * static_cast<double>(n)) ++below_floor;
  }
  const double total = static_cast<double>(outcomes[0] + outcomes[1] + outcomes[2]);
  const double rate[3] = {outcomes[0] / total, outcomes[1] / total, outcomes[2] / total};
  const double want[3] = {0.8, 0.1, 0.1};
  for (int k = 0; k < 3; ++k)
    require(o, std::abs(rate[k] - want[k]) <= 0.015, "outcome " + std::to_string(k) + " rate " + fmt(rate[k]));
  require(o, below_floor == 0, std::to_string(below_floor) + " sentences under the masking floor");
  o.detail = std::to_string(trials) + " trials, " + std::to_string(static_cast<std::size_t>(total)) +
             " aspect tokens: mask " + fmt(rate[0]) + " random " + fmt(rate[1]) + " keep " + fmt(rate[2]) +
             (o.detail.empty() ? "" : " | " + o.detail);
  return o;
}

// 4 + 5 -------------------------------------------------------------------

struct SyntheticRun {
  double scapt_ise = 0.0, scapt_ese = 0.0, scapt_acc = 0.0;
  double base_ise = 0.0, base_ese = 0.0, base_acc = 0.0;
  ClusterScore ese_cluster, ise_cluster;
};

RunConfig synthetic_pretrain_cfg(std::uint64_t seed, const EncoderConfig& enc) {
  RunConfig c = RunConfig::defaults(Profile::Desk, Stage::Pretrain);
  c.encoder = enc;
  c.seed = seed;
  c.epochs = 4;
  c.batch_size = 32;
  c.warmup_steps = 50;
  c.pretrain.tau = 0.5;
  return c;
}

RunConfig synthetic_finetune_cfg(std::uint64_t seed, const EncoderConfig& enc) {
  RunConfig c = RunConfig::defaults(Profile::Desk, Stage::Finetune);
  c.encoder = enc;
  c.seed = seed;
  c.epochs = 10;
  c.batch_size = 16;
  c.warmup_steps = 20;
  return c;
}

ClusterScore slice_cluster(const std::vector<std::vector<double>>& reps, const std::vector<AspectExample>& ex,
                           const SliceReport& slices, SliceTag tag) {
  std::vector<std::vector<double>> r;
  std::vector<Polarity> y;
  for (std::size_t i = 0; i < ex.size(); ++i)
    if (slices.tags[i] == tag) {
      r.push_back(reps[i]);
      y.push_back(ex[i].polarity);
    }
  return clustering_score(r, y);
}

SyntheticRun synthetic_run(const synthetic::Domain& d, std::uint64_t seed) {
  std::vector<std::vector<std::string>> sentences;
  for (const auto& s : d.pretrain) sentences.push_back(s.tokens);
  for (const auto& s : d.train) sentences.push_back(s.tokens);
  const Vocab vocab = Vocab::build(sentences);
  // with four-token sentences, dropout noise on [CLS] swamps the raw dot-product gaps
  EncoderConfig enc = EncoderConfig::desk();
  enc.dropout_rate = 0.0;
  SyntheticRun out;

  ScaptModel scapt = ScaptModel::initialize(enc, vocab, seed);
  pretrain_loop(scapt, d.pretrain, synthetic_pretrain_cfg(seed, enc));

  const auto examples = flatten(d.test);
  const auto slices = slice_ese_ise(examples);
  const auto reps = sentiment_representations(scapt, d.test);
  out.ese_cluster = slice_cluster(reps, examples, slices, SliceTag::ESE);
  out.ise_cluster = slice_cluster(reps, examples, slices, SliceTag::ISE);

  finetune_loop(scapt, d.train, synthetic_finetune_cfg(seed, enc));
  const auto m1 = evaluate(scapt, d.test, 4);
  out.scapt_acc = m1.accuracy;
  out.scapt_ese = m1.ese_accuracy.value_or(0.0);
  out.scapt_ise = m1.ise_accuracy.value_or(0.0);

  ScaptModel base = ScaptModel::initialize(enc, vocab, seed, false);
  finetune_loop(base, d.train, synthetic_finetune_cfg(seed, enc));
  const auto m2 = evaluate(base, d.test, 4);
  out.base_acc = m2.accuracy;
  out.base_ese = m2.ese_accuracy.value_or(0.0);
  out.base_ise = m2.ise_accuracy.value_or(0.0);
  return out;
}

std::vector<SyntheticRun> g_synthetic;

Outcome synthetic_domain() {
  Outcome o;
  const auto t0 = Clock::now();
  const auto domain = synthetic::make_domain(2024);
  std::vector<double> gaps;
  std::ostringstream log;
  for (std::uint64_t seed : {1, 2, 3, 4, 5}) {
    const auto r = synthetic_run(domain, seed);
    g_synthetic.push_back(r);
    gaps.push_back(100.0 * (r.scapt_ise - r.base_ise));
    log << "\n    seed " << seed << ": implicit " << fmt(100 * r.scapt_ise, 1) << " vs " << fmt(100 * r.base_ise, 1)
        << ", explicit " << fmt(100 * r.scapt_ese, 1) << " vs " << fmt(100 * r.base_ese, 1) << " ("
        << fmt(seconds_since(t0), 0) << " s)";
  }
  std::vector<double> sorted = gaps;
  std::sort(sorted.begin(), sorted.end());
  const double median = sorted[sorted.size() / 2];
  const double secs = seconds_since(t0);
  require(o, median >= 10.0, "median implicit gain " + fmt(median, 1) + " points");
  require(o, secs < 1800.0, "took " + fmt(secs, 0) + " s");
  o.detail = "median implicit-slice gain " + fmt(median, 1) + " points over 5 seeds, " + fmt(secs, 0) + " s" +
             (o.detail.empty() ? "" : " | " + o.detail) + log.str();
  return o;
}

Outcome representation_clusters() {
  Outcome o;
  if (g_synthetic.empty()) {
    // criterion 4 not requested: pre-train one seed just for this check
    const auto domain = synthetic::make_domain(2024);
    g_synthetic.push_back(synthetic_run(domain, 1));
  }
  std::ostringstream log;
  for (std::size_t i = 0; i < g_synthetic.size(); ++i) {
    const auto& r = g_synthetic[i];
    require(o, r.ese_cluster.intra > r.ese_cluster.inter, "run " + std::to_string(i + 1) + " explicit slice");
    require(o, r.ise_cluster.intra > r.ise_cluster.inter, "run " + std::to_string(i + 1) + " implicit slice");
    log << "\n    run " << i + 1 << ": explicit intra " << fmt(r.ese_cluster.intra) << " inter "
        << fmt(r.ese_cluster.inter) << ", implicit intra " << fmt(r.ise_cluster.intra) << " inter "
        << fmt(r.ise_cluster.inter);
  }
  o.detail = std::to_string(g_synthetic.size()) + " pre-trained models" + (o.detail.empty() ? "" : " | " + o.detail) +
             log.str();
  return o;
}

// 6 -----------------------------------------------------------------------

Outcome corpus_fixture() {
  Outcome o;
  const fs::path fixtures{SCAPT_FIXTURES};
  const auto dir = fs::temp_directory_path() / "scapt_acceptance_corpus";
  fs::create_directories(dir);
  auto slurp = [](const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
  };
  const std::set<std::string> topics{"restaurant"};
  const auto a = build_pretrain_corpus(fixtures / "reviews20.jsonl", fixtures / "absa_lexicon.jsonl", topics,
                                       dir / "a.jsonl");
  const auto b = build_pretrain_corpus(fixtures / "reviews20.jsonl", fixtures / "absa_lexicon.jsonl", topics,
                                       dir / "b.jsonl");
  const auto bytes = slurp(dir / "a.jsonl");
  require(o, !bytes.empty() && bytes == slurp(dir / "b.jsonl"), "outputs differ between runs");
  const std::vector<std::pair<std::string, std::pair<std::size_t, std::size_t>>> counts{
      {"ingested", {a.ingested, 20}}, {"rating_kept", {a.rating_kept, 16}},
      {"domain_kept", {a.domain_kept, 12}}, {"missing_topic", {a.missing_topic, 1}},
      {"sentences", {a.sentences, 20}}, {"matched", {a.matched, 12}},
      {"positive", {a.positive, 8}}, {"negative", {a.negative, 4}}};
  for (const auto& [name, v] : counts)
    require(o, v.first == v.second, name + " " + std::to_string(v.first) + " != " + std::to_string(v.second));
  require(o, a == b, "counters differ between runs");
  fs::remove_all(dir);
  o.detail = std::to_string(bytes.size()) + " identical bytes, " + std::to_string(a.matched) + " sentences" +
             (o.detail.empty() ? "" : " | " + o.detail);
  return o;
}

// 7 -----------------------------------------------------------------------

Outcome metrics_oracle() {
  Outcome o;
  using P = Polarity;
  const std::vector<P> gold{P::Positive, P::Positive, P::Negative, P::Negative, P::Neutral, P::Neutral};
  const std::vector<P> pred{P::Positive, P::Negative, P::Negative, P::Negative, P::Neutral, P::Positive};
  const auto m = compute_metrics(gold, pred);
  require(o, std::abs(m.accuracy - 4.0 / 6.0) < 1e-12, "accuracy " + fmt(m.accuracy, 6));
  require(o, std::abs(m.per_class[index_of(P::Positive)].f1 - 0.5) < 1e-12, "positive F1");
  require(o, std::abs(m.per_class[index_of(P::Negative)].f1 - 0.8) < 1e-12, "negative F1");
  require(o, std::abs(m.per_class[index_of(P::Neutral)].f1 - 2.0 / 3.0) < 1e-12, "neutral F1");
  require(o, std::abs(m.macro_f1 - 0.65556) < 5e-6, "macro F1 " + fmt(m.macro_f1, 6));
  const auto perfect = compute_metrics(gold, gold);
  require(o, perfect.accuracy == 1.0 && perfect.macro_f1 == 1.0, "perfect predictions");
  o.detail = "accuracy " + fmt(m.accuracy, 5) + ", macro-F1 " + fmt(m.macro_f1, 5) + (o.detail.empty() ? "" : " | " + o.detail);
  return o;
}

// 8 -----------------------------------------------------------------------

Outcome joint_loss_identity() {
  Outcome o;
  synthetic::DomainSizes sizes;
  sizes.pretrain = 256;
  const auto d = synthetic::make_domain(7, sizes);
  std::vector<std::vector<std::string>> sentences;
  for (const auto& s : d.pretrain) sentences.push_back(s.tokens);
  EncoderConfig enc;
  enc.d_model = 16;
  enc.n_heads = 2;
  enc.d_ff = 32;
  std::size_t steps = 0;
  double worst = 0.0;
  for (const auto& [alpha, beta] : {std::pair{0.0, 0.0}, std::pair{0.6, 1.4}, std::pair{1.0, 1.0}}) {
    ScaptModel m = ScaptModel::initialize(enc, Vocab::build(sentences), 3);
    RunConfig cfg = RunConfig::defaults(Profile::Desk, Stage::Pretrain);
    cfg.encoder = enc;
    cfg.epochs = 2;
    cfg.pretrain.alpha = alpha;
    cfg.pretrain.beta = beta;
    const auto r = pretrain_loop(m, d.pretrain, cfg);
    require(o, !r.curve.empty(), "empty curve");
    for (const auto& s : r.curve) {
      ++steps;
      if (alpha == 0.0 && beta == 0.0) require(o, s.total == s.sup, "ablated total differs at step " + std::to_string(s.step));
      const double dev = std::abs(s.total - (s.sup + alpha * s.rec + beta * s.map));
      worst = std::max(worst, dev);
    }
  }
  require(o, worst <= 1e-9, "max deviation " + fmt(worst, 12));
  o.detail = std::to_string(steps) + " steps, max |total - sum| " + fmt(worst, 14) +
             (o.detail.empty() ? "" : " | " + o.detail);
  return o;
}

const char* kNames[] = {"",
                        "gradient check",
                        "contrastive oracle",
                        "masking statistics",
                        "synthetic implicit gain",
                        "representation clusters",
                        "corpus determinism",
                        "metrics oracle",
                        "joint loss identity"};

}  // namespace

int main(int argc, char** argv) {
  spdlog::set_level(spdlog::level::warn);
  const std::function<Outcome()> checks[] = {nullptr,          gradients,       contrastive_oracle,
                                             masking_statistics, synthetic_domain, representation_clusters,
                                             corpus_fixture,   metrics_oracle,  joint_loss_identity};
  std::vector<int> selected;
  for (int i = 1; i < argc; ++i) selected.push_back(std::atoi(argv[i]));
  if (selected.empty())
    for (int i = 1; i <= 8; ++i) selected.push_back(i);

  int failures = 0;
  for (int id : selected) {
    if (id < 1 || id > 8) {
      std::fprintf(stderr, "unknown criterion %d\n", id);
      return 2;
    }
    Outcome o;
    try {
      o = checks[id]();
    } catch (const std::exception& e) {
      o.pass = false;
      o.detail = std::string("threw: ") + e.what();
    }
    failures += !o.pass;
    std::printf("[%s] %d %s: %s\n", o.pass ? "PASS" : "FAIL", id, kNames[id], o.detail.c_str());
    std::fflush(stdout);
  }
  std::printf("%d of %zu criteria failed\n", failures, selected.size());
  return failures == 0 ? 0 : 1;
}
