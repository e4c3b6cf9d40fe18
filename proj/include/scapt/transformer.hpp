#pragma once

#include <atomic>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "scapt/graph.hpp"
#include "scapt/params.hpp"
#include "scapt/text.hpp"

namespace scapt {

struct EncoderConfig {
  std::size_t d_model = 64;
  std::size_t n_layers = 2;
  std::size_t n_heads = 4;
  std::size_t d_ff = 256;
  std::size_t max_len = 128;
  double dropout_rate = 0.1;

  /// Six layers, six heads, 300 dimensions.
  static EncoderConfig paper();
  static EncoderConfig desk() { return {}; }

  /// The reconstruction decoder mirrors the encoder at half depth.
  std::size_t decoder_layers() const { return n_layers / 2 == 0 ? 1 : n_layers / 2; }
  void validate() const;
  bool operator==(const EncoderConfig&) const = default;
};

void to_json(nlohmann::json& j, const EncoderConfig& c);
void from_json(const nlohmann::json& j, EncoderConfig& c);

/// [CLS] + tokens + [SEP] with OOV tokens mapped to [UNK]. Tokens beyond
/// max_len - 2 are dropped from the tail. Token i sits at position i + 1.
std::vector<std::size_t> format_input(std::span<const std::string> tokens, const Vocab& vocab,
                                      std::size_t max_len);

/// Right-padded id matrix with a 1/0 validity mask.
struct TokenBatch {
  std::size_t batch = 0;
  std::size_t length = 0;
  std::vector<std::size_t> ids;
  std::vector<char> mask;

  static TokenBatch pad(std::span<const std::vector<std::size_t>> sequences,
                        std::size_t min_length = 0);
  std::size_t valid_length(std::size_t b) const;
};

/// Encoder output for a padded batch. `hidden` stacks every sequence's
/// last-layer states as (batch * length) x d_model rows.
struct EncodedBatch {
  Var hidden;
  Var sentence;  // batch x d_model; row b is hidden row b * length (the [CLS] slot)
  std::size_t batch = 0;
  std::size_t length = 0;

  Var hidden_states(std::size_t b) const;
  Var sentence_rep(std::size_t b) const;
};

/// Sinusoidal position table, positions x d_model.
Tensor sinusoidal_positions(std::size_t positions, std::size_t d_model);

/// Adds encoder ("enc.*") parameters to `params`.
void init_encoder_params(ParameterStore& params, const EncoderConfig& cfg,
                         std::size_t vocab_size, Rng& rng);
/// Adds reconstruction decoder ("dec.*") parameters to `params`.
void init_decoder_params(ParameterStore& params, const EncoderConfig& cfg,
                         std::size_t vocab_size, Rng& rng);

class Encoder {
 public:
  Encoder(EncoderConfig cfg, std::size_t vocab_size);

  /// `dropout_rng` may be null, which disables dropout.
  EncodedBatch encode(Graph& g, ParameterStore& params, const TokenBatch& batch,
                      Rng* dropout_rng = nullptr) const;

  const EncoderConfig& config() const { return cfg_; }
  std::size_t vocab_size() const { return vocab_size_; }
  std::size_t calls() const { return calls_.load(); }

 private:
  EncoderConfig cfg_;
  std::size_t vocab_size_;
  mutable std::atomic<std::size_t> calls_{0};
};

/// Teacher-forced reconstruction decoder. The sentence representation is the
/// step-0 input embedding; step t > 0 sees target token t - 1. Causal
/// self-attention only.
class Decoder {
 public:
  Decoder(EncoderConfig cfg, std::size_t vocab_size);

  /// `sentence_reps` is batch x d_model; targets[b] is non-empty.
  /// Returns logits of shape (batch * T) x vocab where T is the longest
  /// target; row b * T + t scores target[b][t].
  Var decode(Graph& g, ParameterStore& params, Var sentence_reps,
             std::span<const std::vector<std::size_t>> targets, Rng* dropout_rng = nullptr) const;

  /// Greedy argmax generation, at most `max_steps` tokens, stops on [SEP].
  std::vector<std::size_t> generate(ParameterStore& params, const Tensor& sentence_rep,
                                    std::size_t max_steps) const;

 private:
  EncoderConfig cfg_;
  std::size_t vocab_size_;
};

}  // namespace scapt
