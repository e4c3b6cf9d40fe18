#include "scapt/model.hpp"

#include <cmath>
#include <vector>

#include "scapt/errors.hpp"
#include "scapt/types.hpp"

namespace scapt {

namespace {

Tensor xavier_out_in(std::size_t out, std::size_t in, Rng& rng) {
  const double limit = std::sqrt(6.0 / static_cast<double>(in + out));
  Tensor t({out, in});
  for (auto& v : t.data()) v = (2.0 * uniform01(rng) - 1.0) * limit;
  return t;
}

}  // namespace

ScaptModel ScaptModel::initialize(const EncoderConfig& config, Vocab vocab, std::uint64_t seed,
                                  bool pretrain_heads) {
  ScaptModel m;
  m.config = config;
  m.vocab = std::move(vocab);
  Rng rng(seed);
  const std::size_t V = m.vocab.size();
  const std::size_t d = config.d_model;
  init_encoder_params(m.params, config, V, rng);
  m.params.add(param_names::kSentiment, xavier_out_in(d, d, rng));
  if (pretrain_heads) {
    init_decoder_params(m.params, config, V, rng);
    m.params.add(param_names::kMapOutput, xavier_out_in(V, d, rng));
  }
  return m;
}

void ScaptModel::reset_classifier(Rng& rng) {
  params.erase(param_names::kClassifier);
  params.erase(param_names::kClassifierBias);
  params.add(param_names::kClassifier, xavier_out_in(kNumPolarities, 2 * config.d_model, rng));
  params.add(param_names::kClassifierBias, Tensor({kNumPolarities}));
}

void ScaptModel::drop_pretrain_heads() {
  std::vector<std::string> doomed;
  for (const auto& name : params.names())
    if (name.starts_with("dec.") || name == param_names::kMapOutput) doomed.push_back(name);
  for (const auto& name : doomed) params.erase(name);
}

nlohmann::json ScaptModel::meta() const {
  std::vector<std::string> tokens(vocab.regular_tokens().begin(), vocab.regular_tokens().end());
  return {{"encoder", config}, {"vocab", tokens}};
}

void ScaptModel::save(const std::filesystem::path& path, const nlohmann::json& extra) const {
  auto m = meta();
  if (!extra.is_null())
    for (auto& [k, v] : extra.items()) m[k] = v;
  save_checkpoint(path, params, m);
}

ScaptModel ScaptModel::load(const std::filesystem::path& path, nlohmann::json* meta_out) {
  nlohmann::json meta;
  ScaptModel m;
  m.params = load_checkpoint(path, &meta);
  if (!meta.contains("encoder") || !meta.contains("vocab"))
    throw IncompatibleError(path.string() + ": checkpoint lacks encoder config or vocab");
  m.config = meta.at("encoder").get<EncoderConfig>();
  m.config.validate();
  m.vocab = Vocab::from_tokens(meta.at("vocab").get<std::vector<std::string>>());
  const auto& emb = m.params.get("enc.tok_emb");
  if (emb.rows() != m.vocab.size() || emb.cols() != m.config.d_model)
    throw IncompatibleError(path.string() + ": embedding shape " + shape_str(emb.shape()) +
                            " disagrees with vocab/config");
  if (meta_out) *meta_out = std::move(meta);
  return m;
}

}  // namespace scapt
