#pragma once

#include <array>
#include <cstddef>
#include <optional>
#include <string>
#include <string_view>

namespace scapt {

/// Half-open token range [start, end) in sentence coordinates (no [CLS]).
struct Span {
  std::size_t start = 0;
  std::size_t end = 0;

  std::size_t size() const { return end > start ? end - start : 0; }
  bool empty() const { return end <= start; }
  bool overlaps(const Span& o) const { return start < o.end && o.start < end; }
  bool operator==(const Span&) const = default;
};

/// Class order doubles as the argmax tie-break order.
enum class Polarity : std::size_t { Positive = 0, Neutral = 1, Negative = 2 };

inline constexpr std::size_t kNumPolarities = 3;
inline constexpr std::array<Polarity, 3> kAllPolarities{Polarity::Positive, Polarity::Neutral,
                                                        Polarity::Negative};

std::string_view to_string(Polarity p);
std::optional<Polarity> parse_polarity(std::string_view s);
inline std::size_t index_of(Polarity p) { return static_cast<std::size_t>(p); }

}  // namespace scapt
