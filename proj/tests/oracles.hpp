#pragma once

#include <cmath>
#include <cstddef>
#include <vector>

#include "scapt/types.hpp"

namespace scapt::oracle {

/// Direct evaluation: for every anchor with at least one positive,
/// -log( (1/C_i) * sum_pos exp(s_i.s_c/tau) / sum_{b != i} exp(s_i.s_b/tau) ).
inline double contrastive(const std::vector<std::vector<double>>& s,
                          const std::vector<Polarity>& labels, double tau) {
  auto dot = [&](std::size_t i, std::size_t j) {
    double d = 0.0;
    for (std::size_t k = 0; k < s[i].size(); ++k) d += s[i][k] * s[j][k];
    return d;
  };
  double loss = 0.0;
  for (std::size_t i = 0; i < s.size(); ++i) {
    double denom = 0.0, num = 0.0;
    std::size_t c = 0;
    for (std::size_t b = 0; b < s.size(); ++b) {
      if (b == i) continue;
      const double e = std::exp(dot(i, b) / tau);
      denom += e;
      if (labels[b] == labels[i]) {
        num += e;
        ++c;
      }
    }
    if (c == 0) continue;
    loss += -std::log(num / denom / static_cast<double>(c));
  }
  return loss;
}

}  // namespace scapt::oracle
