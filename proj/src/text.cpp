#include "scapt/text.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <map>

#include "scapt/errors.hpp"

namespace scapt {

std::vector<std::string> tokenize(std::string_view text) {
  std::vector<std::string> out;
  std::string cur;
  auto flush = [&] {
    if (!cur.empty()) out.push_back(std::move(cur));
    cur.clear();
  };
  for (char ch : text) {
    const auto c = static_cast<unsigned char>(ch);
    if (std::isspace(c)) {
      flush();
    } else if (std::ispunct(c)) {
      flush();
      out.emplace_back(1, ch);
    } else {
      cur.push_back(static_cast<char>(std::tolower(c)));
    }
  }
  flush();
  return out;
}

Vocab::Vocab() {
  for (const char* t : {"[PAD]", "[UNK]", "[CLS]", "[SEP]", "[MASK]", "[BOS]"}) add(t);
}

void Vocab::add(std::string token) {
  if (ids_.contains(token)) throw ContractError("duplicate vocab token '" + token + "'");
  ids_.emplace(token, tokens_.size());
  tokens_.push_back(std::move(token));
}

Vocab Vocab::build(std::span<const std::vector<std::string>> sentences, std::size_t min_count) {
  std::map<std::string, std::size_t> counts;
  for (const auto& s : sentences)
    for (const auto& t : s) ++counts[t];
  std::vector<std::pair<std::string, std::size_t>> kept;
  for (auto& [tok, n] : counts)
    if (n >= min_count) kept.emplace_back(tok, n);
  std::stable_sort(kept.begin(), kept.end(),
                   [](const auto& a, const auto& b) { return a.second > b.second; });
  Vocab v;
  for (auto& [tok, _] : kept)
    if (!v.contains(tok)) v.add(tok);
  return v;
}

Vocab Vocab::from_tokens(std::span<const std::string> tokens) {
  Vocab v;
  for (const auto& t : tokens) v.add(t);
  return v;
}

std::size_t Vocab::id(std::string_view token) const {
  auto it = ids_.find(std::string(token));
  return it == ids_.end() ? special::kUnk : it->second;
}

const std::string& Vocab::token(std::size_t id) const {
  if (id >= tokens_.size()) throw IndexError("token id " + std::to_string(id) + " out of range");
  return tokens_[id];
}

bool Vocab::contains(std::string_view token) const { return ids_.contains(std::string(token)); }

void Vocab::save(const std::filesystem::path& path) const {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write vocab " + path.string());
  for (const auto& t : regular_tokens()) out << t << '\n';
}

Vocab Vocab::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open vocab " + path.string());
  std::vector<std::string> tokens;
  std::string line;
  while (std::getline(in, line)) tokens.push_back(line);
  return from_tokens(tokens);
}

}  // namespace scapt
