#include "scapt/trainer.hpp"

#include <cmath>
#include <exception>
#include <fstream>
#include <iomanip>
#include <thread>

#include <spdlog/spdlog.h>

#include "scapt/errors.hpp"
#include "scapt/optim.hpp"
#include "scapt/sampler.hpp"

namespace scapt {

RunConfig RunConfig::defaults(Profile profile, Stage stage) {
  RunConfig c;
  if (profile == Profile::Paper) {
    c.encoder = EncoderConfig::paper();
    c.epochs = stage == Stage::Pretrain ? 80 : 10;
    c.base_lr = stage == Stage::Pretrain ? 1e-3 : 5e-5;
    c.batch_size = stage == Stage::Pretrain ? 64 : 16;
    c.warmup_steps = 1000;
  } else {
    c.encoder = EncoderConfig::desk();
    c.epochs = 10;
    c.base_lr = 1e-3;
    c.batch_size = 16;
    c.warmup_steps = stage == Stage::Pretrain ? 100 : 50;
  }
  return c;
}

void RunConfig::validate() const {
  encoder.validate();
  pretrain.validate();
  if (batch_size == 0) throw ConfigError("batch_size must be positive");
  if (!(base_lr > 0.0)) throw ConfigError("learning rate must be positive");
  if (clip_norm < 0.0) throw ConfigError("clip_norm must be non-negative");
}

void to_json(nlohmann::json& j, const RunConfig& c) {
  j = {{"seed", c.seed},
       {"epochs", c.epochs},
       {"batch_size", c.batch_size},
       {"lr", c.base_lr},
       {"warmup_steps", c.warmup_steps},
       {"clip_norm", c.clip_norm},
       {"prefetch", c.prefetch},
       {"min_count", c.min_count},
       {"pretrain", c.pretrain},
       {"encoder", c.encoder},
       {"checkpoint_path", c.checkpoint_path},
       {"curves_path", c.curves_path}};
}

void merge_json(const nlohmann::json& j, RunConfig& c) {
  if (!j.is_object()) throw ConfigError("config must be a JSON object");
  c.seed = j.value("seed", c.seed);
  c.epochs = j.value("epochs", c.epochs);
  c.batch_size = j.value("batch_size", c.batch_size);
  c.base_lr = j.value("lr", c.base_lr);
  c.warmup_steps = j.value("warmup_steps", c.warmup_steps);
  c.clip_norm = j.value("clip_norm", c.clip_norm);
  c.prefetch = j.value("prefetch", c.prefetch);
  c.min_count = j.value("min_count", c.min_count);
  c.checkpoint_path = j.value("checkpoint_path", c.checkpoint_path);
  c.curves_path = j.value("curves_path", c.curves_path);
  if (j.contains("pretrain")) {
    nlohmann::json base = c.pretrain;
    base.update(j.at("pretrain"));
    c.pretrain = base.get<PretrainConfig>();
  }
  if (j.contains("encoder")) {
    nlohmann::json base = c.encoder;
    base.update(j.at("encoder"));
    c.encoder = base.get<EncoderConfig>();
  }
}

Rng make_stream(std::uint64_t seed, std::uint64_t stream) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(stream), 0x5ca97u};
  return Rng(seq);
}

void check_compatible(const ScaptModel& model, const EncoderConfig& cfg) {
  const auto& m = model.config;
  if (m.d_model != cfg.d_model || m.n_layers != cfg.n_layers || m.n_heads != cfg.n_heads ||
      m.d_ff != cfg.d_ff)
    throw IncompatibleError("checkpoint encoder (d_model=" + std::to_string(m.d_model) +
                            ", layers=" + std::to_string(m.n_layers) +
                            ", heads=" + std::to_string(m.n_heads) + ", d_ff=" +
                            std::to_string(m.d_ff) + ") does not match the requested encoder (d_model=" +
                            std::to_string(cfg.d_model) + ", layers=" +
                            std::to_string(cfg.n_layers) + ", heads=" +
                            std::to_string(cfg.n_heads) + ", d_ff=" + std::to_string(cfg.d_ff) + ")");
}

namespace {

std::ofstream open_curves(const std::string& path, const char* header) {
  std::ofstream out;
  if (path.empty()) return out;
  const std::filesystem::path p(path);
  if (p.has_parent_path()) std::filesystem::create_directories(p.parent_path());
  out.open(p);
  if (!out) throw std::runtime_error("cannot write loss curve " + path);
  out << header << '\n' << std::setprecision(17);
  return out;
}

void apply_update(ScaptModel& model, AdamState& adam, double clip_norm) {
  if (clip_norm > 0.0) clip_grad_norm(model.params, clip_norm);
  adam_step(model.params, adam);
}

AdamState make_adam(const RunConfig& cfg) {
  AdamState a;
  a.base_lr = cfg.base_lr;
  a.warmup_steps = cfg.warmup_steps;
  return a;
}

/// Produces masked batches for one epoch, optionally on a worker thread.
class MaskedBatchSource {
 public:
  MaskedBatchSource(std::span<const LabeledSentence> corpus,
                    std::vector<std::vector<std::size_t>> batches, const ScaptModel& model,
                    double mask_floor, Rng& mask_rng, std::size_t prefetch)
      : corpus_(corpus),
        batches_(std::move(batches)),
        model_(model),
        mask_floor_(mask_floor),
        mask_rng_(mask_rng),
        queue_(prefetch) {
    if (prefetch > 0) worker_ = std::thread([this] { produce(); });
  }

  ~MaskedBatchSource() {
    queue_.close();
    if (worker_.joinable()) worker_.join();
  }

  std::optional<std::vector<MaskedInput>> next() {
    if (!worker_.joinable()) {
      if (inline_next_ >= batches_.size()) return std::nullopt;
      return make(batches_[inline_next_++]);
    }
    auto item = queue_.pop();
    if (!item && error_) std::rethrow_exception(error_);
    return item;
  }

 private:
  std::vector<MaskedInput> make(const std::vector<std::size_t>& idx) {
    std::vector<MaskedInput> out;
    out.reserve(idx.size());
    for (auto i : idx)
      out.push_back(mask_review(corpus_[i], model_.vocab, model_.config.max_len, mask_floor_, mask_rng_));
    return out;
  }

  void produce() {
    try {
      for (const auto& b : batches_) queue_.push(make(b));
    } catch (...) {
      error_ = std::current_exception();
    }
    queue_.close();
  }

  std::span<const LabeledSentence> corpus_;
  std::vector<std::vector<std::size_t>> batches_;
  const ScaptModel& model_;
  double mask_floor_;
  Rng& mask_rng_;
  BoundedQueue<std::vector<MaskedInput>> queue_;
  std::exception_ptr error_;
  std::size_t inline_next_ = 0;
  std::thread worker_;
};

}  // namespace

PretrainResult pretrain_loop(ScaptModel& model, std::span<const LabeledSentence> corpus,
                             const RunConfig& cfg) {
  cfg.validate();
  check_compatible(model, cfg.encoder);
  if (!model.params.contains(param_names::kMapOutput))
    throw ContractError("pre-training needs the decoder and masked-prediction head");
  for (const auto& s : corpus) s.validate();

  std::vector<Polarity> labels;
  labels.reserve(corpus.size());
  for (const auto& s : corpus) labels.push_back(s.label);

  Rng batch_rng = make_stream(cfg.seed, 1);
  Rng mask_rng = make_stream(cfg.seed, 2);
  Rng drop_rng = make_stream(cfg.seed, 3);
  AdamState adam = make_adam(cfg);
  const Encoder encoder = model.encoder();
  auto curves = open_curves(cfg.curves_path, "step,total,sup,rec,map,lr");
  const bool use_dropout = model.config.dropout_rate > 0.0;

  PretrainResult result;
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    MaskedBatchSource source(corpus, balanced_batches(labels, cfg.batch_size, batch_rng), model,
                             cfg.pretrain.mask_floor, mask_rng, cfg.prefetch);
    double epoch_loss = 0.0;
    std::size_t epoch_steps = 0;
    while (auto batch = source.next()) {
      model.params.zero_grad();
      Graph g;
      JointLoss jl;
      try {
        jl = joint_pretrain_loss(g, model, encoder, *batch, cfg.pretrain,
                                 use_dropout ? &drop_rng : nullptr);
      } catch (const DegenerateBatchError& e) {
        ++result.degenerate_batches;
        spdlog::warn("skipping batch: {}", e.what());
        continue;
      } catch (const NumericError& e) {
        throw NumericError(std::string("pre-training diverged at step ") +
                           std::to_string(adam.step) + " (" + e.what() +
                           "); last good checkpoint retained");
      }
      const double total = jl.total.value().item();
      if (!std::isfinite(total))
        throw NumericError("non-finite pre-training loss at step " + std::to_string(adam.step) +
                           "; last good checkpoint retained");
      g.backward(jl.total);
      const double lr = adam.effective_lr();
      PretrainStep rec{adam.step, total, jl.sup, jl.rec, jl.map, jl.map_raw, lr};
      apply_update(model, adam, cfg.clip_norm);
      result.curve.push_back(rec);
      result.empty_map += jl.empty_map;
      if (curves)
        curves << rec.step << ',' << rec.total << ',' << rec.sup << ',' << rec.rec << ','
               << rec.map << ',' << rec.lr << '\n';
      epoch_loss += total;
      ++epoch_steps;
    }
    spdlog::info("pretrain epoch {}/{}: {} steps, mean loss {:.4f}", epoch + 1, cfg.epochs,
                 epoch_steps, epoch_steps ? epoch_loss / static_cast<double>(epoch_steps) : 0.0);
    if (!cfg.checkpoint_path.empty()) {
      nlohmann::json extra = {{"run", cfg}, {"epoch", epoch + 1}, {"stage", "pretrain"}};
      model.save(cfg.checkpoint_path, extra);
    }
  }
  model.params.clear_grads();
  return result;
}

FinetuneResult finetune_loop(ScaptModel& model, std::span<const AbsaSentence> train,
                             const RunConfig& cfg) {
  cfg.validate();
  check_compatible(model, cfg.encoder);
  if (train.empty()) throw ContractError("fine-tuning needs a non-empty training set");
  for (const auto& s : train) s.validate();

  model.drop_pretrain_heads();
  Rng init_rng = make_stream(cfg.seed, 4);
  model.reset_classifier(init_rng);

  Rng batch_rng = make_stream(cfg.seed, 5);
  Rng drop_rng = make_stream(cfg.seed, 6);
  AdamState adam = make_adam(cfg);
  const Encoder encoder = model.encoder();
  auto curves = open_curves(cfg.curves_path, "step,loss,lr");
  const bool use_dropout = model.config.dropout_rate > 0.0;

  FinetuneResult result;
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    double epoch_loss = 0.0;
    std::size_t epoch_steps = 0;
    for (const auto& idx : shuffled_batches(train.size(), cfg.batch_size, batch_rng)) {
      std::vector<const AbsaSentence*> batch;
      for (auto i : idx)
        if (!train[i].aspects.empty()) batch.push_back(&train[i]);
      if (batch.empty()) continue;
      model.params.zero_grad();
      Graph g;
      Var loss;
      try {
        loss = finetune_loss(g, model, encoder, batch, use_dropout ? &drop_rng : nullptr);
      } catch (const NumericError& e) {
        throw NumericError(std::string("fine-tuning diverged at step ") +
                           std::to_string(adam.step) + " (" + e.what() + ")");
      }
      g.backward(loss);
      const double lr = adam.effective_lr();
      FinetuneStep rec{adam.step, loss.value().item(), lr};
      apply_update(model, adam, cfg.clip_norm);
      result.curve.push_back(rec);
      if (curves) curves << rec.step << ',' << rec.loss << ',' << rec.lr << '\n';
      epoch_loss += rec.loss;
      ++epoch_steps;
    }
    spdlog::info("finetune epoch {}/{}: {} steps, mean loss {:.4f}", epoch + 1, cfg.epochs,
                 epoch_steps, epoch_steps ? epoch_loss / static_cast<double>(epoch_steps) : 0.0);
    if (!cfg.checkpoint_path.empty()) {
      nlohmann::json extra = {{"run", cfg}, {"epoch", epoch + 1}, {"stage", "finetune"}};
      model.save(cfg.checkpoint_path, extra);
    }
  }
  model.params.clear_grads();
  return result;
}

MetricsReport evaluate(ScaptModel& model, std::span<const AbsaSentence> data, std::size_t threads) {
  const auto examples = flatten(data);
  if (examples.empty()) throw ContractError("cannot evaluate an empty dataset");
  const auto preds = predict(model, data, 16, threads);
  std::vector<Polarity> gold, pred;
  for (std::size_t i = 0; i < examples.size(); ++i) {
    gold.push_back(examples[i].polarity);
    pred.push_back(preds[i].label);
  }
  const auto slices = slice_ese_ise(examples);
  return compute_metrics(gold, pred, slices.tags);
}

ClusterScore export_embeddings(ScaptModel& model, std::span<const AbsaSentence> data,
                               const std::filesystem::path& out_path) {
  const auto examples = flatten(data);
  const auto reps = sentiment_representations(model, data);
  const auto slices = slice_ese_ise(examples);
  if (out_path.has_parent_path()) std::filesystem::create_directories(out_path.parent_path());
  std::ofstream out(out_path);
  if (!out) throw std::runtime_error("cannot write embeddings " + out_path.string());
  out << std::setprecision(17) << "id,gold,slice";
  const std::size_t d = model.config.d_model;
  for (std::size_t k = 0; k < d; ++k) out << ",s" << k;
  out << '\n';
  std::vector<Polarity> labels;
  for (std::size_t i = 0; i < examples.size(); ++i) {
    const auto& e = examples[i];
    out << data[e.sentence_index].id << '#' << e.aspect_index << ',' << to_string(e.polarity) << ','
        << to_string(slices.tags[i]);
    for (double v : reps[i]) out << ',' << v;
    out << '\n';
    labels.push_back(e.polarity);
  }
  return clustering_score(reps, labels);
}

}  // namespace scapt
