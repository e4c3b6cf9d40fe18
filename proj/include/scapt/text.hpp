#pragma once

#include <cstddef>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace scapt {

/// Lowercases, splits on whitespace, and emits each ASCII punctuation
/// character as its own token.
std::vector<std::string> tokenize(std::string_view text);

namespace special {
inline constexpr std::size_t kPad = 0;
inline constexpr std::size_t kUnk = 1;
inline constexpr std::size_t kCls = 2;
inline constexpr std::size_t kSep = 3;
inline constexpr std::size_t kMask = 4;
inline constexpr std::size_t kBos = 5;
inline constexpr std::size_t kCount = 6;
}  // namespace special

/// Token <-> id map. Ids 0..5 are reserved ([PAD] [UNK] [CLS] [SEP] [MASK]
/// [BOS]); kept tokens follow in order of decreasing frequency, ties broken
/// lexicographically.
class Vocab {
 public:
  Vocab();

  static Vocab build(std::span<const std::vector<std::string>> sentences, std::size_t min_count = 1);
  /// Non-reserved tokens in id order (id = 6 + index).
  static Vocab from_tokens(std::span<const std::string> tokens);

  std::size_t id(std::string_view token) const;
  const std::string& token(std::size_t id) const;
  bool contains(std::string_view token) const;
  std::size_t size() const { return tokens_.size(); }
  std::span<const std::string> regular_tokens() const {
    return std::span(tokens_).subspan(special::kCount);
  }

  /// One non-reserved token per line; line i holds id 6 + i.
  void save(const std::filesystem::path& path) const;
  static Vocab load(const std::filesystem::path& path);

  bool operator==(const Vocab& other) const { return tokens_ == other.tokens_; }

 private:
  void add(std::string token);

  std::vector<std::string> tokens_;
  std::unordered_map<std::string, std::size_t> ids_;
};

}  // namespace scapt
