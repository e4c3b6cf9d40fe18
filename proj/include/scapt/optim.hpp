#pragma once

#include <cstddef>
#include <string>
#include <unordered_map>
#include <vector>

#include "scapt/params.hpp"

namespace scapt {

/// Adam with bias correction and a linear learning-rate warmup.
struct AdamState {
  std::size_t step = 0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  double base_lr = 1e-3;
  std::size_t warmup_steps = 100;

  struct Moments {
    std::vector<double> m;
    std::vector<double> v;
  };
  std::unordered_map<std::string, Moments> moments;

  /// base_lr * min(1, step / warmup_steps), or base_lr without warmup.
  double effective_lr() const;
};

/// One update of every trainable parameter in `params`, then zeroes grads.
/// Throws ContractError if a trainable parameter has no gradient slot.
void adam_step(ParameterStore& params, AdamState& state);

/// Rescales all gradients so their global L2 norm is at most `max_norm`.
/// Returns the norm before clipping.
double clip_grad_norm(ParameterStore& params, double max_norm);

}  // namespace scapt
