#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "scapt/graph.hpp"
#include "scapt/params.hpp"
#include "scapt/transformer.hpp"

namespace scapt {

/// |a - n| / max(|a|, |n|, floor). The floor keeps gradients that are
/// zero up to finite-difference noise from dominating the report.
double relative_error(double analytic, double numeric, double floor = 1e-5);

struct GradCheckResult {
  std::string name;
  double max_rel_err = 0.0;
  std::size_t checked = 0;
  std::string worst_param;
  double loss = 0.0;
  bool pass = false;
};

using LossFn = std::function<Var(Graph&, ParameterStore&)>;

struct GradCheckOptions {
  double step = 1e-5;
  double threshold = 1e-4;
  /// Entries probed per parameter tensor; 0 probes every entry.
  std::size_t entries_per_param = 0;
  std::uint64_t seed = 7;
};

/// Central finite differences for every (or a sample of) parameter entries
/// against one reverse-mode pass. `loss` must be deterministic.
GradCheckResult check_gradients(const std::string& name, ParameterStore& params, const LossFn& loss,
                                const GradCheckOptions& opts = {});

/// Every differentiable op on random [-1, 1] inputs, then the encoder,
/// decoder, the three pre-training losses, the joint loss and the
/// fine-tuning loss on a 2-layer model of `cfg` dimensions.
std::vector<GradCheckResult> run_gradcheck_suite(const EncoderConfig& cfg, std::uint64_t seed,
                                                 const GradCheckOptions& opts = {});

}  // namespace scapt
