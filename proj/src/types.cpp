#include "scapt/types.hpp"

namespace scapt {

std::string_view to_string(Polarity p) {
  switch (p) {
    case Polarity::Positive:
      return "positive";
    case Polarity::Neutral:
      return "neutral";
    case Polarity::Negative:
      return "negative";
  }
  return "unknown";
}

std::optional<Polarity> parse_polarity(std::string_view s) {
  if (s == "positive") return Polarity::Positive;
  if (s == "neutral") return Polarity::Neutral;
  if (s == "negative") return Polarity::Negative;
  return std::nullopt;
}

}  // namespace scapt
