#include "scapt/graph.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "scapt/errors.hpp"

namespace scapt {

const Tensor& Var::value() const {
  if (graph == nullptr) throw ContractError("Var is not bound to a graph");
  return graph->value(id);
}

Var Graph::param(Tensor& p) {
  if (backward_done_) throw ContractError("graph already consumed by backward");
  if (auto it = param_ids_.find(&p); it != param_ids_.end()) return {this, it->second};
  Node n;
  n.kind = "param";
  n.value = p;
  n.value.clear_grad();
  n.needs_grad = p.requires_grad();
  n.param = &p;
  nodes_.push_back(std::move(n));
  param_ids_.emplace(&p, nodes_.size() - 1);
  return {this, nodes_.size() - 1};
}

Var Graph::constant(Tensor value) {
  if (backward_done_) throw ContractError("graph already consumed by backward");
  if (!value.all_finite()) throw NumericError("non-finite constant");
  Node n;
  n.kind = "const";
  n.value = std::move(value);
  nodes_.push_back(std::move(n));
  return {this, nodes_.size() - 1};
}

std::vector<double>& Graph::grad(std::size_t id) {
  auto& n = nodes_[id];
  if (n.grad.empty()) n.grad.assign(n.value.size(), 0.0);
  return n.grad;
}

Var Graph::record(std::string_view kind, Tensor value,
                  std::initializer_list<Var> inputs, BackwardFn fn) {
  return record(kind, std::move(value), std::span<const Var>(inputs.begin(), inputs.size()),
                std::move(fn));
}

Var Graph::record(std::string_view kind, Tensor value, std::span<const Var> inputs,
                  BackwardFn fn) {
  if (backward_done_) throw ContractError("graph already consumed by backward");
  if (!value.all_finite())
    throw NumericError(std::string("non-finite output from op '") + std::string(kind) + "'");
  bool needs = false;
  for (const auto& v : inputs) {
    if (v.graph != this) throw ContractError("op inputs live on different graphs");
    needs = needs || nodes_[v.id].needs_grad;
  }
  Node n;
  n.kind = kind;
  n.value = std::move(value);
  n.needs_grad = needs;
  if (needs) n.backward = std::move(fn);
  nodes_.push_back(std::move(n));
  return {this, nodes_.size() - 1};
}

void Graph::backward(Var loss) {
  if (loss.graph != this) throw ContractError("loss lives on a different graph");
  if (backward_done_)
    throw ContractError("backward already ran on this graph; run a new forward pass");
  if (nodes_[loss.id].value.size() != 1)
    throw ContractError("backward requires a scalar loss, got shape " +
                        shape_str(nodes_[loss.id].value.shape()));
  backward_done_ = true;
  if (!nodes_[loss.id].needs_grad) return;
  grad(loss.id)[0] = 1.0;
  for (std::size_t i = loss.id + 1; i-- > 0;) {
    auto& n = nodes_[i];
    if (!n.needs_grad || n.grad.empty()) continue;
    if (n.param != nullptr) {
      if (!n.param->has_grad()) n.param->zero_grad();
      auto& pg = n.param->grad();
      for (std::size_t k = 0; k < pg.size(); ++k) pg[k] += n.grad[k];
    } else if (n.backward) {
      n.backward(*this, i);
    }
  }
}

// ---------------------------------------------------------------------------

namespace {

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape())
    throw DimensionError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) +
                         " vs " + shape_str(b.shape()));
}

void require_matrix(const Tensor& a, const char* op) {
  if (a.rank() > 2)
    throw DimensionError(std::string(op) + ": expects rank <= 2, got " + shape_str(a.shape()));
}

}  // namespace

Var matmul(Var a, Var b) {
  const Tensor& A = a.value();
  const Tensor& B = b.value();
  require_matrix(A, "matmul");
  require_matrix(B, "matmul");
  const std::size_t m = A.rows(), k = A.cols(), n = B.cols();
  if (B.rows() != k)
    throw DimensionError("matmul: inner dimensions disagree " + shape_str(A.shape()) + " x " +
                         shape_str(B.shape()));
  Tensor C({m, n});
  for (std::size_t i = 0; i < m; ++i) {
    double* crow = &C.data()[i * n];
    for (std::size_t p = 0; p < k; ++p) {
      const double av = A[i * k + p];
      if (av == 0.0) continue;
      const double* brow = &B.data()[p * n];
      for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
  auto ai = a.id, bi = b.id;
  return a.graph->record("matmul", std::move(C), {a, b}, [ai, bi, m, k, n](Graph& g, std::size_t self) {
    const auto& dC = g.grad_view(self);
    const auto& A = g.value(ai).data();
    const auto& B = g.value(bi).data();
    if (g.needs_grad(ai)) {
      auto& dA = g.grad(ai);
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t p = 0; p < k; ++p) {
          double s = 0.0;
          for (std::size_t j = 0; j < n; ++j) s += dC[i * n + j] * B[p * n + j];
          dA[i * k + p] += s;
        }
    }
    if (g.needs_grad(bi)) {
      auto& dB = g.grad(bi);
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t p = 0; p < k; ++p) {
          const double av = A[i * k + p];
          if (av == 0.0) continue;
          for (std::size_t j = 0; j < n; ++j) dB[p * n + j] += av * dC[i * n + j];
        }
    }
  });
}

Var transpose(Var a) {
  const Tensor& A = a.value();
  require_matrix(A, "transpose");
  const std::size_t m = A.rows(), n = A.cols();
  Tensor T({n, m});
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) T[j * m + i] = A[i * n + j];
  auto ai = a.id;
  return a.graph->record("transpose", std::move(T), {a}, [ai, m, n](Graph& g, std::size_t self) {
    const auto& dT = g.grad_view(self);
    auto& dA = g.grad(ai);
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < n; ++j) dA[i * n + j] += dT[j * m + i];
  });
}

namespace {

template <typename Fwd, typename GradA, typename GradB>
Var binary_elementwise(const char* kind, Var a, Var b, Fwd fwd, GradA ga, GradB gb) {
  const Tensor& A = a.value();
  const Tensor& B = b.value();
  require_same_shape(A, B, kind);
  Tensor C(A.shape());
  for (std::size_t i = 0; i < C.size(); ++i) C[i] = fwd(A[i], B[i]);
  auto ai = a.id, bi = b.id;
  return a.graph->record(kind, std::move(C), {a, b}, [ai, bi, ga, gb](Graph& g, std::size_t self) {
    const auto& d = g.grad_view(self);
    const auto& A = g.value(ai).data();
    const auto& B = g.value(bi).data();
    if (g.needs_grad(ai)) {
      auto& dA = g.grad(ai);
      for (std::size_t i = 0; i < d.size(); ++i) dA[i] += ga(A[i], B[i]) * d[i];
    }
    if (g.needs_grad(bi)) {
      auto& dB = g.grad(bi);
      for (std::size_t i = 0; i < d.size(); ++i) dB[i] += gb(A[i], B[i]) * d[i];
    }
  });
}

}  // namespace

Var add(Var a, Var b) {
  return binary_elementwise(
      "add", a, b, [](double x, double y) { return x + y; },
      [](double, double) { return 1.0; }, [](double, double) { return 1.0; });
}

Var sub(Var a, Var b) {
  return binary_elementwise(
      "sub", a, b, [](double x, double y) { return x - y; },
      [](double, double) { return 1.0; }, [](double, double) { return -1.0; });
}

Var mul(Var a, Var b) {
  return binary_elementwise(
      "mul", a, b, [](double x, double y) { return x * y; },
      [](double, double y) { return y; }, [](double x, double) { return x; });
}

Var scale(Var a, double c) {
  Tensor out = a.value();
  for (auto& v : out.data()) v *= c;
  auto ai = a.id;
  return a.graph->record("scale", std::move(out), {a}, [ai, c](Graph& g, std::size_t self) {
    const auto& d = g.grad_view(self);
    auto& dA = g.grad(ai);
    for (std::size_t i = 0; i < d.size(); ++i) dA[i] += c * d[i];
  });
}

Var add_bias(Var a, Var bias) {
  const Tensor& A = a.value();
  const Tensor& b = bias.value();
  require_matrix(A, "add_bias");
  const std::size_t m = A.rows(), n = A.cols();
  if (b.size() != n || b.rows() != 1)
    throw DimensionError("add_bias: bias " + shape_str(b.shape()) + " does not fit rows of " +
                         shape_str(A.shape()));
  Tensor out = A;
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out[i * n + j] += b[j];
  auto ai = a.id, bi = bias.id;
  return a.graph->record("add_bias", std::move(out), {a, bias}, [ai, bi, m, n](Graph& g, std::size_t self) {
    const auto& d = g.grad_view(self);
    if (g.needs_grad(ai)) {
      auto& dA = g.grad(ai);
      for (std::size_t i = 0; i < d.size(); ++i) dA[i] += d[i];
    }
    if (g.needs_grad(bi)) {
      auto& dB = g.grad(bi);
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) dB[j] += d[i * n + j];
    }
  });
}

Var add_constant(Var a, const Tensor& c) {
  require_same_shape(a.value(), c, "add_constant");
  Tensor out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += c[i];
  auto ai = a.id;
  return a.graph->record("add_constant", std::move(out), {a}, [ai](Graph& g, std::size_t self) {
    const auto& d = g.grad_view(self);
    auto& dA = g.grad(ai);
    for (std::size_t i = 0; i < d.size(); ++i) dA[i] += d[i];
  });
}

Var relu(Var a) {
  Tensor out = a.value();
  for (auto& v : out.data()) v = v > 0.0 ? v : 0.0;
  auto ai = a.id;
  return a.graph->record("relu", std::move(out), {a}, [ai](Graph& g, std::size_t self) {
    const auto& d = g.grad_view(self);
    const auto& A = g.value(ai).data();
    auto& dA = g.grad(ai);
    for (std::size_t i = 0; i < d.size(); ++i)
      if (A[i] > 0.0) dA[i] += d[i];
  });
}

Var softmax(Var x) {
  const Tensor& X = x.value();
  require_matrix(X, "softmax");
  const std::size_t m = X.rows(), n = X.cols();
  Tensor Y(X.shape());
  for (std::size_t i = 0; i < m; ++i) {
    const double* row = &X.data()[i * n];
    double* out = &Y.data()[i * n];
    const double mx = *std::max_element(row, row + n);
    double s = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      out[j] = std::exp(row[j] - mx);
      s += out[j];
    }
    for (std::size_t j = 0; j < n; ++j) out[j] /= s;
  }
  auto xi = x.id;
  return x.graph->record("softmax", std::move(Y), {x}, [xi, m, n](Graph& g, std::size_t self) {
    const auto& dY = g.grad_view(self);
    const auto& Y = g.value(self).data();
    auto& dX = g.grad(xi);
    for (std::size_t i = 0; i < m; ++i) {
      double dot = 0.0;
      for (std::size_t j = 0; j < n; ++j) dot += dY[i * n + j] * Y[i * n + j];
      for (std::size_t j = 0; j < n; ++j) dX[i * n + j] += Y[i * n + j] * (dY[i * n + j] - dot);
    }
  });
}

Var log_softmax(Var x) {
  const Tensor& X = x.value();
  require_matrix(X, "log_softmax");
  const std::size_t m = X.rows(), n = X.cols();
  Tensor Y(X.shape());
  for (std::size_t i = 0; i < m; ++i) {
    const double* row = &X.data()[i * n];
    const double mx = *std::max_element(row, row + n);
    double s = 0.0;
    for (std::size_t j = 0; j < n; ++j) s += std::exp(row[j] - mx);
    const double lse = mx + std::log(s);
    for (std::size_t j = 0; j < n; ++j) Y[i * n + j] = row[j] - lse;
  }
  auto xi = x.id;
  return x.graph->record("log_softmax", std::move(Y), {x}, [xi, m, n](Graph& g, std::size_t self) {
    const auto& dY = g.grad_view(self);
    const auto& Y = g.value(self).data();
    auto& dX = g.grad(xi);
    for (std::size_t i = 0; i < m; ++i) {
      double s = 0.0;
      for (std::size_t j = 0; j < n; ++j) s += dY[i * n + j];
      for (std::size_t j = 0; j < n; ++j)
        dX[i * n + j] += dY[i * n + j] - std::exp(Y[i * n + j]) * s;
    }
  });
}

Var layer_norm(Var x, Var gain, Var bias, double eps) {
  if (!(eps > 0.0)) throw ContractError("layer_norm: eps must be positive");
  const Tensor& X = x.value();
  require_matrix(X, "layer_norm");
  const std::size_t m = X.rows(), n = X.cols();
  if (gain.value().size() != n || bias.value().size() != n)
    throw DimensionError("layer_norm: gain/bias must have " + std::to_string(n) + " entries");
  const auto& G = gain.value().data();
  const auto& Bv = bias.value().data();
  Tensor Y(X.shape());
  std::vector<double> xhat(m * n), inv_std(m);
  for (std::size_t i = 0; i < m; ++i) {
    const double* row = &X.data()[i * n];
    double mu = 0.0;
    for (std::size_t j = 0; j < n; ++j) mu += row[j];
    mu /= static_cast<double>(n);
    double var = 0.0;
    for (std::size_t j = 0; j < n; ++j) var += (row[j] - mu) * (row[j] - mu);
    var /= static_cast<double>(n);
    inv_std[i] = 1.0 / std::sqrt(var + eps);
    for (std::size_t j = 0; j < n; ++j) {
      xhat[i * n + j] = (row[j] - mu) * inv_std[i];
      Y[i * n + j] = xhat[i * n + j] * G[j] + Bv[j];
    }
  }
  auto xi = x.id, gi = gain.id, bi = bias.id;
  return x.graph->record(
      "layer_norm", std::move(Y), {x, gain, bias},
      [xi, gi, bi, m, n, xhat = std::move(xhat), inv_std = std::move(inv_std)](Graph& g,
                                                                               std::size_t self) {
        const auto& dY = g.grad_view(self);
        const auto& G = g.value(gi).data();
        if (g.needs_grad(gi)) {
          auto& dG = g.grad(gi);
          for (std::size_t i = 0; i < m; ++i)
            for (std::size_t j = 0; j < n; ++j) dG[j] += dY[i * n + j] * xhat[i * n + j];
        }
        if (g.needs_grad(bi)) {
          auto& dB = g.grad(bi);
          for (std::size_t i = 0; i < m; ++i)
            for (std::size_t j = 0; j < n; ++j) dB[j] += dY[i * n + j];
        }
        if (g.needs_grad(xi)) {
          auto& dX = g.grad(xi);
          const double inv_n = 1.0 / static_cast<double>(n);
          for (std::size_t i = 0; i < m; ++i) {
            double mean_d = 0.0, mean_dx = 0.0;
            for (std::size_t j = 0; j < n; ++j) {
              const double dh = dY[i * n + j] * G[j];
              mean_d += dh;
              mean_dx += dh * xhat[i * n + j];
            }
            mean_d *= inv_n;
            mean_dx *= inv_n;
            for (std::size_t j = 0; j < n; ++j) {
              const double dh = dY[i * n + j] * G[j];
              dX[i * n + j] += inv_std[i] * (dh - mean_d - xhat[i * n + j] * mean_dx);
            }
          }
        }
      });
}

Var cross_entropy(Var logits, std::span<const std::size_t> targets) {
  const Tensor& X = logits.value();
  require_matrix(X, "cross_entropy");
  const std::size_t m = X.rows(), n = X.cols();
  if (targets.size() != m)
    throw DimensionError("cross_entropy: " + std::to_string(targets.size()) +
                         " targets for " + std::to_string(m) + " rows");
  std::vector<double> probs(m * n);
  double loss = 0.0;
  for (std::size_t i = 0; i < m; ++i) {
    if (targets[i] >= n)
      throw IndexError("cross_entropy: target " + std::to_string(targets[i]) +
                       " out of range for " + std::to_string(n) + " classes");
    const double* row = &X.data()[i * n];
    const double mx = *std::max_element(row, row + n);
    double s = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      probs[i * n + j] = std::exp(row[j] - mx);
      s += probs[i * n + j];
    }
    for (std::size_t j = 0; j < n; ++j) probs[i * n + j] /= s;
    loss += mx + std::log(s) - row[targets[i]];
  }
  loss /= static_cast<double>(m);
  auto xi = logits.id;
  std::vector<std::size_t> tgt(targets.begin(), targets.end());
  return logits.graph->record(
      "cross_entropy", Tensor::scalar(loss), {logits},
      [xi, m, n, probs = std::move(probs), tgt = std::move(tgt)](Graph& g, std::size_t self) {
        const double d = g.grad_view(self)[0] / static_cast<double>(m);
        auto& dX = g.grad(xi);
        for (std::size_t i = 0; i < m; ++i) {
          for (std::size_t j = 0; j < n; ++j) dX[i * n + j] += d * probs[i * n + j];
          dX[i * n + tgt[i]] -= d;
        }
      });
}

Var gather_rows(Var table, std::span<const std::size_t> ids) {
  const Tensor& T = table.value();
  require_matrix(T, "gather_rows");
  const std::size_t v = T.rows(), n = T.cols();
  if (ids.empty()) throw ContractError("gather_rows: empty index list");
  Tensor out({ids.size(), n});
  for (std::size_t r = 0; r < ids.size(); ++r) {
    if (ids[r] >= v)
      throw IndexError("gather_rows: id " + std::to_string(ids[r]) + " >= " + std::to_string(v));
    std::copy_n(&T.data()[ids[r] * n], n, &out.data()[r * n]);
  }
  auto ti = table.id;
  std::vector<std::size_t> idx(ids.begin(), ids.end());
  return table.graph->record("gather_rows", std::move(out), {table},
                             [ti, n, idx = std::move(idx)](Graph& g, std::size_t self) {
                               const auto& d = g.grad_view(self);
                               auto& dT = g.grad(ti);
                               for (std::size_t r = 0; r < idx.size(); ++r)
                                 for (std::size_t j = 0; j < n; ++j)
                                   dT[idx[r] * n + j] += d[r * n + j];
                             });
}

Var slice_rows(Var a, std::size_t start, std::size_t count) {
  const Tensor& A = a.value();
  require_matrix(A, "slice_rows");
  const std::size_t n = A.cols();
  if (count == 0 || start + count > A.rows())
    throw IndexError("slice_rows: [" + std::to_string(start) + ", " +
                     std::to_string(start + count) + ") outside " + shape_str(A.shape()));
  Tensor out({count, n});
  std::copy_n(&A.data()[start * n], count * n, out.data().begin());
  auto ai = a.id;
  return a.graph->record("slice_rows", std::move(out), {a}, [ai, start, n](Graph& g, std::size_t self) {
    const auto& d = g.grad_view(self);
    auto& dA = g.grad(ai);
    for (std::size_t i = 0; i < d.size(); ++i) dA[start * n + i] += d[i];
  });
}

Var slice_cols(Var a, std::size_t start, std::size_t count) {
  const Tensor& A = a.value();
  require_matrix(A, "slice_cols");
  const std::size_t m = A.rows(), n = A.cols();
  if (count == 0 || start + count > n)
    throw IndexError("slice_cols: [" + std::to_string(start) + ", " +
                     std::to_string(start + count) + ") outside " + shape_str(A.shape()));
  Tensor out({m, count});
  for (std::size_t i = 0; i < m; ++i)
    std::copy_n(&A.data()[i * n + start], count, &out.data()[i * count]);
  auto ai = a.id;
  return a.graph->record("slice_cols", std::move(out), {a},
                         [ai, start, count, m, n](Graph& g, std::size_t self) {
                           const auto& d = g.grad_view(self);
                           auto& dA = g.grad(ai);
                           for (std::size_t i = 0; i < m; ++i)
                             for (std::size_t j = 0; j < count; ++j)
                               dA[i * n + start + j] += d[i * count + j];
                         });
}

Var concat_rows(std::span<const Var> parts) {
  if (parts.empty()) throw ContractError("concat_rows: no inputs");
  const std::size_t n = parts[0].cols();
  std::size_t m = 0;
  for (const auto& p : parts) {
    require_matrix(p.value(), "concat_rows");
    if (p.cols() != n) throw DimensionError("concat_rows: column counts differ");
    m += p.rows();
  }
  Tensor out({m, n});
  std::vector<std::size_t> ids, offsets;
  std::size_t off = 0;
  for (const auto& p : parts) {
    std::copy(p.value().data().begin(), p.value().data().end(), out.data().begin() + off * n);
    ids.push_back(p.id);
    offsets.push_back(off);
    off += p.rows();
  }
  return parts[0].graph->record("concat_rows", std::move(out), parts,
                                [ids = std::move(ids), offsets = std::move(offsets), n](
                                    Graph& g, std::size_t self) {
                                  const auto& d = g.grad_view(self);
                                  for (std::size_t k = 0; k < ids.size(); ++k) {
                                    if (!g.needs_grad(ids[k])) continue;
                                    auto& dp = g.grad(ids[k]);
                                    for (std::size_t i = 0; i < dp.size(); ++i)
                                      dp[i] += d[offsets[k] * n + i];
                                  }
                                });
}

Var concat_cols(std::span<const Var> parts) {
  if (parts.empty()) throw ContractError("concat_cols: no inputs");
  const std::size_t m = parts[0].rows();
  std::size_t n = 0;
  for (const auto& p : parts) {
    require_matrix(p.value(), "concat_cols");
    if (p.rows() != m) throw DimensionError("concat_cols: row counts differ");
    n += p.cols();
  }
  Tensor out({m, n});
  std::vector<std::size_t> ids, offsets, widths;
  std::size_t off = 0;
  for (const auto& p : parts) {
    const std::size_t w = p.cols();
    for (std::size_t i = 0; i < m; ++i)
      std::copy_n(&p.value().data()[i * w], w, &out.data()[i * n + off]);
    ids.push_back(p.id);
    offsets.push_back(off);
    widths.push_back(w);
    off += w;
  }
  return parts[0].graph->record(
      "concat_cols", std::move(out), parts,
      [ids = std::move(ids), offsets = std::move(offsets), widths = std::move(widths), m, n](
          Graph& g, std::size_t self) {
        const auto& d = g.grad_view(self);
        for (std::size_t k = 0; k < ids.size(); ++k) {
          if (!g.needs_grad(ids[k])) continue;
          auto& dp = g.grad(ids[k]);
          for (std::size_t i = 0; i < m; ++i)
            for (std::size_t j = 0; j < widths[k]; ++j)
              dp[i * widths[k] + j] += d[i * n + offsets[k] + j];
        }
      });
}

Var mean_rows(Var a) {
  const Tensor& A = a.value();
  require_matrix(A, "mean_rows");
  const std::size_t m = A.rows(), n = A.cols();
  Tensor out({1, n});
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out[j] += A[i * n + j];
  for (auto& v : out.data()) v /= static_cast<double>(m);
  auto ai = a.id;
  return a.graph->record("mean_rows", std::move(out), {a}, [ai, m, n](Graph& g, std::size_t self) {
    const auto& d = g.grad_view(self);
    auto& dA = g.grad(ai);
    const double inv = 1.0 / static_cast<double>(m);
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < n; ++j) dA[i * n + j] += d[j] * inv;
  });
}

Var normalize_rows(Var a) {
  const Tensor& A = a.value();
  require_matrix(A, "normalize_rows");
  const std::size_t m = A.rows(), n = A.cols();
  Tensor Y(A.shape());
  std::vector<double> norms(m);
  for (std::size_t i = 0; i < m; ++i) {
    double sq = 0.0;
    for (std::size_t j = 0; j < n; ++j) sq += A[i * n + j] * A[i * n + j];
    if (sq == 0.0) throw NumericError("normalize_rows: zero row");
    norms[i] = std::sqrt(sq);
    for (std::size_t j = 0; j < n; ++j) Y[i * n + j] = A[i * n + j] / norms[i];
  }
  auto ai = a.id;
  return a.graph->record("normalize_rows", std::move(Y), {a},
                         [ai, m, n, norms = std::move(norms)](Graph& g, std::size_t self) {
                           const auto& d = g.grad_view(self);
                           const auto& Y = g.value(self).data();
                           auto& dA = g.grad(ai);
                           for (std::size_t i = 0; i < m; ++i) {
                             double dot = 0.0;
                             for (std::size_t j = 0; j < n; ++j) dot += Y[i * n + j] * d[i * n + j];
                             for (std::size_t j = 0; j < n; ++j)
                               dA[i * n + j] += (d[i * n + j] - Y[i * n + j] * dot) / norms[i];
                           }
                         });
}

Var sum(Var a) {
  double s = 0.0;
  for (double v : a.value().data()) s += v;
  auto ai = a.id;
  return a.graph->record("sum", Tensor::scalar(s), {a}, [ai](Graph& g, std::size_t self) {
    const double d = g.grad_view(self)[0];
    auto& dA = g.grad(ai);
    for (auto& v : dA) v += d;
  });
}

Var masked_row_logsumexp(Var a, std::span<const char> keep) {
  const Tensor& A = a.value();
  require_matrix(A, "masked_row_logsumexp");
  const std::size_t m = A.rows(), n = A.cols();
  if (keep.size() != m * n) throw DimensionError("masked_row_logsumexp: mask size mismatch");
  Tensor out({m});
  std::vector<double> weights(m * n, 0.0);
  for (std::size_t i = 0; i < m; ++i) {
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < n; ++j)
      if (keep[i * n + j]) mx = std::max(mx, A[i * n + j]);
    if (!std::isfinite(mx)) continue;
    double s = 0.0;
    for (std::size_t j = 0; j < n; ++j)
      if (keep[i * n + j]) {
        weights[i * n + j] = std::exp(A[i * n + j] - mx);
        s += weights[i * n + j];
      }
    for (std::size_t j = 0; j < n; ++j) weights[i * n + j] /= s;
    out[i] = mx + std::log(s);
  }
  auto ai = a.id;
  return a.graph->record("masked_row_logsumexp", std::move(out), {a},
                         [ai, m, n, weights = std::move(weights)](Graph& g, std::size_t self) {
                           const auto& d = g.grad_view(self);
                           auto& dA = g.grad(ai);
                           for (std::size_t i = 0; i < m; ++i)
                             for (std::size_t j = 0; j < n; ++j)
                               dA[i * n + j] += d[i] * weights[i * n + j];
                         });
}

Var dropout(Var a, double rate, Rng& rng) {
  if (rate <= 0.0) return a;
  if (rate >= 1.0) throw ContractError("dropout rate must be < 1");
  const double keep_scale = 1.0 / (1.0 - rate);
  std::vector<double> mask(a.value().size());
  for (auto& m : mask) m = uniform01(rng) < rate ? 0.0 : keep_scale;
  Tensor out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= mask[i];
  auto ai = a.id;
  return a.graph->record("dropout", std::move(out), {a},
                         [ai, mask = std::move(mask)](Graph& g, std::size_t self) {
                           const auto& d = g.grad_view(self);
                           auto& dA = g.grad(ai);
                           for (std::size_t i = 0; i < d.size(); ++i) dA[i] += d[i] * mask[i];
                         });
}

}  // namespace scapt
