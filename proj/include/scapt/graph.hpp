#pragma once

#include <cstddef>
#include <functional>
#include <random>
#include <span>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "scapt/tensor.hpp"

namespace scapt {

using Rng = std::mt19937_64;

class Graph;

/// Handle to a value recorded on a Graph.
struct Var {
  Graph* graph = nullptr;
  std::size_t id = 0;

  const Tensor& value() const;
  const Shape& shape() const { return value().shape(); }
  std::size_t rows() const { return value().rows(); }
  std::size_t cols() const { return value().cols(); }
};

/// Define-by-run tape. Every forward pass builds a fresh Graph; `backward`
/// walks the nodes in exact reverse insertion order and may run once.
class Graph {
 public:
  using BackwardFn = std::function<void(Graph&, std::size_t self)>;

  Graph() = default;
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  /// Leaf bound to a live parameter. Gradients accumulate into `p.grad()`
  /// when `p.requires_grad()`. The parameter must outlive the graph.
  Var param(Tensor& p);
  Var constant(Tensor value);

  const Tensor& value(std::size_t id) const { return nodes_[id].value; }
  bool needs_grad(std::size_t id) const { return nodes_[id].needs_grad; }
  /// Gradient buffer of a node, allocated on first use.
  std::vector<double>& grad(std::size_t id);
  /// Read-only view of a node gradient (empty if never touched).
  std::span<const double> grad_view(std::size_t id) const { return nodes_[id].grad; }

  /// Appends a node. Throws NumericError if `value` is not finite.
  Var record(std::string_view kind, Tensor value,
             std::initializer_list<Var> inputs, BackwardFn fn);
  Var record(std::string_view kind, Tensor value, std::span<const Var> inputs,
             BackwardFn fn);

  void backward(Var loss);
  bool backward_done() const { return backward_done_; }

  std::size_t size() const { return nodes_.size(); }
  std::string_view kind(std::size_t id) const { return nodes_[id].kind; }

 private:
  struct Node {
    std::string_view kind;
    Tensor value;
    bool needs_grad = false;
    std::vector<double> grad;
    Tensor* param = nullptr;
    BackwardFn backward;
  };

  std::vector<Node> nodes_;
  std::unordered_map<const Tensor*, std::size_t> param_ids_;
  bool backward_done_ = false;
};

// ---------------------------------------------------------------------------
// Differentiable ops. All inputs must live on the same Graph. Rank-1 tensors
// act as a single row. Only `add_bias` broadcasts (a row vector over rows).

Var matmul(Var a, Var b);
Var transpose(Var a);
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var scale(Var a, double c);
Var add_bias(Var a, Var bias);
/// Adds a fixed tensor (e.g. an attention mask); no gradient flows into it.
Var add_constant(Var a, const Tensor& c);
Var relu(Var a);

/// Row-wise softmax over the last axis, computed with max subtraction.
Var softmax(Var x);
Var log_softmax(Var x);
Var layer_norm(Var x, Var gain, Var bias, double eps);
/// Mean over rows of -log softmax(logits)[target].
Var cross_entropy(Var logits, std::span<const std::size_t> targets);

/// Row gather; used for embedding lookup. Throws IndexError on bad ids.
Var gather_rows(Var table, std::span<const std::size_t> ids);
Var slice_rows(Var a, std::size_t start, std::size_t count);
Var slice_cols(Var a, std::size_t start, std::size_t count);
Var concat_rows(std::span<const Var> parts);
Var concat_cols(std::span<const Var> parts);
Var mean_rows(Var a);
/// Scales every row to unit L2 norm.
Var normalize_rows(Var a);
Var sum(Var a);
/// Per-row log-sum-exp over entries where `keep` is nonzero. A row with no
/// kept entries yields 0 and receives no gradient. Output shape [rows].
Var masked_row_logsumexp(Var a, std::span<const char> keep);
/// Inverted dropout; identity when `rate` is 0.
Var dropout(Var a, double rate, Rng& rng);

/// Uniform double in [0,1) from the top 53 bits of one draw.
inline double uniform01(Rng& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

}  // namespace scapt
