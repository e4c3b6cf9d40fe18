#pragma once

#include <cstdint>
#include <filesystem>

#include <nlohmann/json.hpp>

#include "scapt/params.hpp"
#include "scapt/text.hpp"
#include "scapt/transformer.hpp"

namespace scapt {

namespace param_names {
inline constexpr const char* kSentiment = "sent.W_s";   // d x d, s = W_s h
inline constexpr const char* kMapOutput = "map.W_o";    // V x d
inline constexpr const char* kClassifier = "cls.W_a";   // 3 x 2d
inline constexpr const char* kClassifierBias = "cls.b_a";
}  // namespace param_names

/// Encoder, reconstruction decoder and heads sharing one parameter store.
struct ScaptModel {
  EncoderConfig config;
  Vocab vocab;
  ParameterStore params;

  /// Fresh encoder + sentiment perceptron. With `pretrain_heads`, also the
  /// decoder and the masked-prediction projection.
  static ScaptModel initialize(const EncoderConfig& config, Vocab vocab, std::uint64_t seed,
                               bool pretrain_heads = true);

  Encoder encoder() const { return Encoder(config, vocab.size()); }
  Decoder decoder() const { return Decoder(config, vocab.size()); }

  bool has_classifier() const { return params.contains(param_names::kClassifier); }
  /// Replaces any existing aspect classifier with a freshly initialized one.
  void reset_classifier(Rng& rng);
  /// Removes decoder and masked-prediction parameters.
  void drop_pretrain_heads();

  nlohmann::json meta() const;
  void save(const std::filesystem::path& path, const nlohmann::json& extra = {}) const;
  static ScaptModel load(const std::filesystem::path& path, nlohmann::json* meta_out = nullptr);
};

}  // namespace scapt
