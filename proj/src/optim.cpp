#include "scapt/optim.hpp"

#include <algorithm>
#include <cmath>

#include "scapt/errors.hpp"

namespace scapt {

double AdamState::effective_lr() const {
  if (warmup_steps == 0) return base_lr;
  return base_lr * std::min(1.0, static_cast<double>(step) / static_cast<double>(warmup_steps));
}

void adam_step(ParameterStore& params, AdamState& state) {
  for (const auto& name : params.names())
    if (params.get(name).requires_grad() && !params.get(name).has_grad())
      throw ContractError("adam_step: parameter '" + name + "' has no gradient");

  const double lr = state.effective_lr();
  const double t = static_cast<double>(state.step + 1);
  const double c1 = 1.0 - std::pow(state.beta1, t);
  const double c2 = 1.0 - std::pow(state.beta2, t);
  for (const auto& name : params.names()) {
    Tensor& p = params.get(name);
    if (!p.requires_grad()) continue;
    auto& mom = state.moments[name];
    if (mom.m.size() != p.size()) {
      mom.m.assign(p.size(), 0.0);
      mom.v.assign(p.size(), 0.0);
    }
    auto& g = p.grad();
    auto& w = p.data();
    for (std::size_t i = 0; i < w.size(); ++i) {
      mom.m[i] = state.beta1 * mom.m[i] + (1.0 - state.beta1) * g[i];
      mom.v[i] = state.beta2 * mom.v[i] + (1.0 - state.beta2) * g[i] * g[i];
      const double mhat = mom.m[i] / c1;
      const double vhat = mom.v[i] / c2;
      w[i] -= lr * mhat / (std::sqrt(vhat) + state.epsilon);
    }
    std::fill(g.begin(), g.end(), 0.0);
  }
  ++state.step;
}

double clip_grad_norm(ParameterStore& params, double max_norm) {
  double sq = 0.0;
  for (const auto& name : params.names()) {
    const Tensor& p = params.get(name);
    if (!p.has_grad()) continue;
    for (double g : p.grad()) sq += g * g;
  }
  const double norm = std::sqrt(sq);
  if (max_norm > 0.0 && norm > max_norm) {
    const double s = max_norm / norm;
    for (const auto& name : params.names()) {
      Tensor& p = params.get(name);
      if (!p.has_grad()) continue;
      for (double& g : p.grad()) g *= s;
    }
  }
  return norm;
}

}  // namespace scapt
