#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "scapt/errors.hpp"
#include "scapt/gradcheck.hpp"
#include "scapt/graph.hpp"
#include "scapt/optim.hpp"
#include "scapt/params.hpp"

using namespace scapt;

namespace {

Tensor mat(std::size_t r, std::size_t c, std::vector<double> v) { return Tensor::matrix(r, c, std::move(v)); }

Tensor random_tensor(Shape s, Rng& rng) {
  Tensor t(std::move(s));
  for (auto& v : t.data()) v = 2.0 * uniform01(rng) - 1.0;
  return t;
}

}  // namespace

TEST_CASE("tensor shape invariants") {
  Tensor t({2, 3}, 1.5);
  CHECK(t.size() == 6);
  CHECK(t.rows() == 2);
  CHECK(t.cols() == 3);
  CHECK_THROWS_AS(Tensor({2, 2}, std::vector<double>{1, 2, 3}), DimensionError);
  Tensor v({4});
  CHECK(v.rows() == 1);
  CHECK(v.cols() == 4);
  CHECK_FALSE(t.has_grad());
  t.zero_grad();
  REQUIRE(t.has_grad());
  CHECK(t.grad().size() == 6);
  CHECK(Tensor::scalar(2.5).item() == 2.5);
  CHECK_THROWS(Tensor({2}).item());
}

TEST_CASE("matmul forward and shape errors") {
  Graph g;
  Tensor a = mat(2, 2, {1, 2, 3, 4});
  Var c = matmul(g.constant(a), g.constant(Tensor::identity(2)));
  CHECK(c.value().data() == a.data());

  Rng rng(3);
  Tensor b = random_tensor({3, 4}, rng);
  Var ib = matmul(g.constant(Tensor::identity(3)), g.constant(b));
  CHECK(ib.value().data() == b.data());

  CHECK_THROWS_AS(matmul(g.constant(Tensor({2, 3})), g.constant(Tensor({2, 3}))), DimensionError);
  CHECK_THROWS_AS(add(g.constant(Tensor({2, 3})), g.constant(Tensor({3, 2}))), DimensionError);
}

TEST_CASE("softmax values, normalization and shift invariance") {
  Graph g;
  Var u = softmax(g.constant(Tensor({1, 4})));
  for (double p : u.value().data()) CHECK(p == doctest::Approx(0.25).epsilon(1e-15));

  Var s = softmax(g.constant(mat(1, 3, {1, 2, 3})));
  const double z = std::exp(1.0) + std::exp(2.0) + std::exp(3.0);
  for (int i = 0; i < 3; ++i) CHECK(std::abs(s.value()[i] - std::exp(i + 1.0) / z) < 1e-12);

  Rng rng(5);
  Tensor x = random_tensor({3, 6}, rng);
  Tensor shifted = x;
  for (std::size_t r = 0; r < 3; ++r)
    for (std::size_t c = 0; c < 6; ++c) shifted.at(r, c) += 7.0 * static_cast<double>(r + 1);
  Var a = softmax(g.constant(x));
  Var b = softmax(g.constant(shifted));
  for (std::size_t r = 0; r < 3; ++r) {
    double total = 0.0;
    for (std::size_t c = 0; c < 6; ++c) {
      total += a.value().at(r, c);
      CHECK(std::abs(a.value().at(r, c) - b.value().at(r, c)) < 1e-12);
    }
    CHECK(std::abs(total - 1.0) < 1e-12);
  }
}

TEST_CASE("layer norm") {
  Graph g;
  Var gain = g.constant(Tensor({4}, 1.0));
  Var bias = g.constant(Tensor({4}));
  Var flat = layer_norm(g.constant(mat(1, 4, {3, 3, 3, 3})), gain, bias, 1e-5);
  for (double v : flat.value().data()) CHECK(v == 0.0);

  Var y = layer_norm(g.constant(mat(2, 4, {1, 2, 3, 10, -4, 0.5, 2, 8})), gain, bias, 1e-5);
  for (std::size_t r = 0; r < 2; ++r) {
    double mean = 0.0;
    for (std::size_t c = 0; c < 4; ++c) mean += y.value().at(r, c);
    CHECK(std::abs(mean / 4.0) < 1e-10);
  }
}

TEST_CASE("cross entropy") {
  Graph g;
  const std::vector<std::size_t> t0{0};
  CHECK(cross_entropy(g.constant(Tensor({1, 3})), t0).value().item() ==
        doctest::Approx(std::log(3.0)).epsilon(1e-14));
  const std::vector<std::size_t> t2{2};
  CHECK(cross_entropy(g.constant(mat(1, 3, {0, 0, 20})), t2).value().item() < 1e-8);

  // hand value for a batch of two
  const std::vector<std::size_t> tt{1, 0};
  const double got = cross_entropy(g.constant(mat(2, 3, {1, 2, 0.5, -1, 0, 3})), tt).value().item();
  const double l1 = -(2.0 - std::log(std::exp(1.0) + std::exp(2.0) + std::exp(0.5)));
  const double l2 = -(-1.0 - std::log(std::exp(-1.0) + std::exp(0.0) + std::exp(3.0)));
  CHECK(std::abs(got - (l1 + l2) / 2.0) < 1e-10);

  const std::vector<std::size_t> bad{3};
  CHECK_THROWS_AS(cross_entropy(g.constant(Tensor({1, 3})), bad), IndexError);
}

TEST_CASE("gather rows and masked logsumexp edge cases") {
  Graph g;
  const std::vector<std::size_t> bad{0, 5};
  CHECK_THROWS_AS(gather_rows(g.constant(Tensor({5, 2})), bad), IndexError);

  const std::vector<char> keep{1, 1, 0, 0};
  Var r = masked_row_logsumexp(g.constant(mat(2, 2, {0, 0, 4, 4})), keep);
  CHECK(std::abs(r.value()[0] - std::log(2.0)) < 1e-14);
  CHECK(r.value()[1] == 0.0);
}

TEST_CASE("dropout at rate zero is the identity") {
  Graph g;
  Rng rng(1);
  Tensor x = random_tensor({3, 3}, rng);
  Var y = dropout(g.constant(x), 0.0, rng);
  CHECK(y.value().data() == x.data());
}

TEST_CASE("backward: linear, dead branch, fan-out, unreachable") {
  ParameterStore p;
  Tensor& w = p.add("w", mat(2, 2, {1, -2, 3, 0.5}));
  Tensor& unused = p.add("unused", Tensor({3}, 1.0));
  p.zero_grad();
  {
    Graph g;
    g.backward(sum(g.param(w)));
  }
  for (double d : w.grad()) CHECK(d == 1.0);
  for (double d : unused.grad()) CHECK(d == 0.0);

  p.zero_grad();
  {
    Graph g;
    g.backward(scale(sum(mul(g.param(w), g.param(w))), 0.0));
  }
  for (double d : w.grad()) CHECK(d == 0.0);

  // w used twice through the same leaf: d/dw sum(w + w) = 2
  p.zero_grad();
  {
    Graph g;
    g.backward(sum(add(g.param(w), g.param(w))));
  }
  for (double d : w.grad()) CHECK(d == 2.0);
}

TEST_CASE("backward contract errors") {
  ParameterStore p;
  Tensor& w = p.add("w", Tensor({2, 2}, 0.5));
  Graph g;
  Var y = matmul(g.param(w), g.param(w));
  CHECK_THROWS_AS(g.backward(y), ContractError);
  Var l = sum(y);
  g.backward(l);
  CHECK_THROWS_AS(g.backward(l), ContractError);
  CHECK_THROWS_AS(sum(y), ContractError);

  Graph other;
  CHECK_THROWS_AS(add(other.constant(Tensor({1})), g.constant(Tensor({1}))), ContractError);
}

TEST_CASE("non-finite values are rejected") {
  Graph g;
  CHECK_THROWS_AS(g.constant(Tensor({1}, std::nan(""))), NumericError);
  CHECK_THROWS_AS(scale(g.constant(Tensor({1}, 1e308)), 1e10), NumericError);
}

TEST_CASE("matmul gradient against finite differences") {
  Rng rng(11);
  ParameterStore p;
  p.add("a", random_tensor({4, 5}, rng));
  p.add("b", random_tensor({5, 3}, rng));
  const Tensor w = random_tensor({4, 3}, rng);
  auto r = check_gradients("matmul", p, [&](Graph& g, ParameterStore& ps) {
    return sum(mul(matmul(g.param(ps.get("a")), g.param(ps.get("b"))), g.constant(w)));
  });
  CHECK(r.checked == 35);
  CHECK(r.max_rel_err < 1e-6);
}

TEST_CASE("relative error floor") {
  CHECK(relative_error(1.0, 1.0) == 0.0);
  CHECK(relative_error(2.0, 1.0) == doctest::Approx(0.5));
  CHECK(relative_error(0.0, 1e-7) == doctest::Approx(1e-2));
}

TEST_CASE("adam: zero gradient fixed point and warmup boundary") {
  ParameterStore p;
  Tensor& w = p.add("w", mat(1, 3, {0.3, -1.0, 2.0}));
  const auto before = w.data();
  AdamState s;
  s.warmup_steps = 0;
  for (int i = 0; i < 5; ++i) {
    p.zero_grad();
    adam_step(p, s);
  }
  CHECK(w.data() == before);

  AdamState warm;
  warm.warmup_steps = 100;
  CHECK(warm.effective_lr() == 0.0);
  p.zero_grad();
  for (auto& gv : w.grad()) gv = 1.0;
  adam_step(p, warm);
  CHECK(w.data() == before);
  CHECK(warm.step == 1);
  CHECK(warm.effective_lr() == doctest::Approx(1e-5));
  warm.step = 250;
  CHECK(warm.effective_lr() == doctest::Approx(1e-3));
}

TEST_CASE("adam matches the hand recurrence for a scalar") {
  ParameterStore p;
  Tensor& w = p.add("w", Tensor::scalar(0.5));
  AdamState s;
  s.base_lr = 0.1;
  s.warmup_steps = 0;
  double m = 0.0, v = 0.0, x = 0.5;
  for (int t = 1; t <= 3; ++t) {
    p.zero_grad();
    w.grad()[0] = 1.0;
    adam_step(p, s);
    m = 0.9 * m + 0.1;
    v = 0.999 * v + 0.001;
    const double mhat = m / (1.0 - std::pow(0.9, t));
    const double vhat = v / (1.0 - std::pow(0.999, t));
    x -= 0.1 * mhat / (std::sqrt(vhat) + 1e-8);
    CHECK(std::abs(w.item() - x) < 1e-12);
    CHECK(w.grad()[0] == 0.0);
  }
}

TEST_CASE("adam rejects missing gradients") {
  ParameterStore p;
  p.add("w", Tensor::scalar(1.0));
  AdamState s;
  CHECK_THROWS_AS(adam_step(p, s), ContractError);
  p.add("frozen", Tensor::scalar(1.0), false);
  p.get("w").zero_grad();
  CHECK_NOTHROW(adam_step(p, s));
}

TEST_CASE("gradient clipping") {
  ParameterStore p;
  Tensor& w = p.add("w", Tensor({2}));
  w.zero_grad();
  w.grad() = {3.0, 4.0};
  CHECK(clip_grad_norm(p, 1.0) == doctest::Approx(5.0));
  CHECK(w.grad()[0] == doctest::Approx(0.6));
  CHECK(w.grad()[1] == doctest::Approx(0.8));
}

TEST_CASE("checkpoint round trip is exact and versioned") {
  Rng rng(2);
  ParameterStore p;
  p.add("b.second", random_tensor({3, 2}, rng));
  p.add("a.first", random_tensor({4}, rng));
  p.get("a.first")[0] = 0.1 + 0.2;  // not representable in short decimal
  const auto path = std::filesystem::temp_directory_path() / "scapt_ckpt_roundtrip.json";
  save_checkpoint(path, p, {{"note", "x"}});
  nlohmann::json meta;
  ParameterStore q = load_checkpoint(path, &meta);
  CHECK(q.same_values(p));
  CHECK(q.names() == p.names());
  CHECK(meta.at("note") == "x");

  nlohmann::json j = checkpoint_to_json(p, {});
  CHECK(j.at("format") == "scapt-ckpt-v1");
  j["format"] = "other-v9";
  CHECK_THROWS_AS(checkpoint_from_json(j), IncompatibleError);
  CHECK_THROWS(load_checkpoint(path.string() + ".missing"));
  std::filesystem::remove(path);
}
