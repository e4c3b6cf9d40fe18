#pragma once

#include <filesystem>
#include <map>
#include <memory>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "scapt/tensor.hpp"

namespace scapt {

inline constexpr std::string_view kCheckpointFormat = "scapt-ckpt-v1";

/// Named parameters in insertion order. Addresses are stable for the
/// lifetime of the store, so graphs may hold pointers into it.
class ParameterStore {
 public:
  ParameterStore() = default;
  ParameterStore(const ParameterStore& other);
  ParameterStore& operator=(const ParameterStore& other);
  ParameterStore(ParameterStore&&) noexcept = default;
  ParameterStore& operator=(ParameterStore&&) noexcept = default;

  Tensor& add(const std::string& name, Tensor init, bool requires_grad = true);
  Tensor& get(std::string_view name);
  const Tensor& get(std::string_view name) const;
  bool contains(std::string_view name) const;
  void erase(std::string_view name);

  const std::vector<std::string>& names() const { return order_; }
  std::size_t size() const { return order_.size(); }
  std::size_t scalar_count() const;

  /// Gives every parameter a zero-filled gradient slot.
  void zero_grad();
  void clear_grads();

  /// Bitwise equality of names, shapes, and values.
  bool same_values(const ParameterStore& other) const;

 private:
  std::vector<std::string> order_;
  std::map<std::string, std::unique_ptr<Tensor>, std::less<>> params_;
};

/// JSON checkpoint:
///   {"format": "scapt-ckpt-v1", "meta": {...},
///    "params": {name: {"shape": [...], "values": [...]}, ...}}
/// Doubles round-trip exactly through the JSON text.
nlohmann::json checkpoint_to_json(const ParameterStore& store, const nlohmann::json& meta);
ParameterStore checkpoint_from_json(const nlohmann::json& j, nlohmann::json* meta_out = nullptr);

void save_checkpoint(const std::filesystem::path& path, const ParameterStore& store,
                     const nlohmann::json& meta);
ParameterStore load_checkpoint(const std::filesystem::path& path,
                               nlohmann::json* meta_out = nullptr);

}  // namespace scapt
