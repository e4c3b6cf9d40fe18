#include "scapt/params.hpp"

#include <fstream>

#include "scapt/errors.hpp"

namespace scapt {

ParameterStore::ParameterStore(const ParameterStore& other) { *this = other; }

ParameterStore& ParameterStore::operator=(const ParameterStore& other) {
  if (this == &other) return *this;
  order_ = other.order_;
  params_.clear();
  for (const auto& [name, t] : other.params_) params_.emplace(name, std::make_unique<Tensor>(*t));
  return *this;
}

Tensor& ParameterStore::add(const std::string& name, Tensor init, bool requires_grad) {
  if (params_.contains(name)) throw ContractError("duplicate parameter '" + name + "'");
  init.set_requires_grad(requires_grad);
  init.clear_grad();
  auto [it, _] = params_.emplace(name, std::make_unique<Tensor>(std::move(init)));
  order_.push_back(name);
  return *it->second;
}

Tensor& ParameterStore::get(std::string_view name) {
  auto it = params_.find(name);
  if (it == params_.end()) throw ContractError("unknown parameter '" + std::string(name) + "'");
  return *it->second;
}

const Tensor& ParameterStore::get(std::string_view name) const {
  auto it = params_.find(name);
  if (it == params_.end()) throw ContractError("unknown parameter '" + std::string(name) + "'");
  return *it->second;
}

bool ParameterStore::contains(std::string_view name) const { return params_.find(name) != params_.end(); }

void ParameterStore::erase(std::string_view name) {
  auto it = params_.find(name);
  if (it == params_.end()) return;
  params_.erase(it);
  std::erase(order_, std::string(name));
}

std::size_t ParameterStore::scalar_count() const {
  std::size_t n = 0;
  for (const auto& [_, t] : params_) n += t->size();
  return n;
}

void ParameterStore::zero_grad() {
  for (auto& [_, t] : params_) t->zero_grad();
}

void ParameterStore::clear_grads() {
  for (auto& [_, t] : params_) t->clear_grad();
}

bool ParameterStore::same_values(const ParameterStore& other) const {
  if (order_ != other.order_) return false;
  for (const auto& name : order_) {
    const auto& a = get(name);
    const auto& b = other.get(name);
    if (a.shape() != b.shape() || a.data() != b.data()) return false;
  }
  return true;
}

nlohmann::json checkpoint_to_json(const ParameterStore& store, const nlohmann::json& meta) {
  nlohmann::json params = nlohmann::json::object();
  nlohmann::json order = nlohmann::json::array();
  for (const auto& name : store.names()) {
    const auto& t = store.get(name);
    params[name] = {{"shape", t.shape()}, {"values", t.data()}};
    order.push_back(name);
  }
  return {{"format", kCheckpointFormat}, {"meta", meta}, {"order", order}, {"params", params}};
}

ParameterStore checkpoint_from_json(const nlohmann::json& j, nlohmann::json* meta_out) {
  if (!j.is_object() || j.value("format", "") != kCheckpointFormat)
    throw IncompatibleError("checkpoint format is not " + std::string(kCheckpointFormat));
  ParameterStore store;
  const auto& params = j.at("params");
  for (const auto& name : j.at("order")) {
    const auto& p = params.at(name.get<std::string>());
    store.add(name.get<std::string>(),
              Tensor(p.at("shape").get<Shape>(), p.at("values").get<std::vector<double>>()));
  }
  if (meta_out) *meta_out = j.value("meta", nlohmann::json::object());
  return store;
}

void save_checkpoint(const std::filesystem::path& path, const ParameterStore& store,
                     const nlohmann::json& meta) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  const auto tmp = std::filesystem::path(path.string() + ".tmp");
  {
    std::ofstream out(tmp);
    if (!out) throw std::runtime_error("cannot write checkpoint " + tmp.string());
    out << checkpoint_to_json(store, meta).dump() << '\n';
    if (!out) throw std::runtime_error("failed writing checkpoint " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

ParameterStore load_checkpoint(const std::filesystem::path& path, nlohmann::json* meta_out) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open checkpoint " + path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(path.string() + ": " + e.what());
  }
  return checkpoint_from_json(j, meta_out);
}

}  // namespace scapt
