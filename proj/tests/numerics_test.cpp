// Copyright 2026 The vggdrive-toy Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include <gtest/gtest.h>

#include <cmath>
#include <vector>

#include "vggdrive/numerics/adam.hpp"
#include "vggdrive/numerics/grad_check.hpp"
#include "vggdrive/numerics/nn.hpp"
#include "vggdrive/numerics/ops.hpp"

using namespace vggdrive;

namespace
{

// Triple-loop reference product, independent of the GEMM kernels.
std::vector<double> naive_matmul(
  const std::vector<double> & a, const std::vector<double> & b, std::size_t m, std::size_t k,
  std::size_t n)
{
  std::vector<double> c(m * n, 0.0);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      double s = 0.0;
      for (std::size_t p = 0; p < k; ++p) s += a[i * k + p] * b[p * n + j];
      c[i * n + j] = s;
    }
  return c;
}

// Straight-line multi-head attention over plain vectors for B == 1.
std::vector<double> reference_attention(
  const AttentionWeights & w, const std::vector<double> & q, const std::vector<double> & k,
  const std::vector<double> & v, std::size_t lq, std::size_t lk)
{
  const std::size_t d = w.width();
  const std::size_t h = w.heads;
  const std::size_t dh = d / h;
  auto project = [&](const Linear & lin, const std::vector<double> & x, std::size_t rows) {
    auto y = naive_matmul(x, lin.weight.value.values(), rows, d, d);
    for (std::size_t r = 0; r < rows; ++r)
      for (std::size_t j = 0; j < d; ++j) y[r * d + j] += lin.bias.value[j];
    return y;
  };
  const auto pq = project(w.query, q, lq);
  const auto pk = project(w.key, k, lk);
  const auto pv = project(w.value, v, lk);
  std::vector<double> mixed(lq * d, 0.0);
  for (std::size_t head = 0; head < h; ++head) {
    for (std::size_t i = 0; i < lq; ++i) {
      std::vector<double> s(lk);
      double mx = -1e300;
      for (std::size_t j = 0; j < lk; ++j) {
        double dot = 0.0;
        for (std::size_t c = 0; c < dh; ++c) dot += pq[i * d + head * dh + c] * pk[j * d + head * dh + c];
        s[j] = dot / std::sqrt(static_cast<double>(dh));
        mx = std::max(mx, s[j]);
      }
      double z = 0.0;
      for (auto & x : s) {
        x = std::exp(x - mx);
        z += x;
      }
      for (std::size_t j = 0; j < lk; ++j)
        for (std::size_t c = 0; c < dh; ++c)
          mixed[i * d + head * dh + c] += s[j] / z * pv[j * d + head * dh + c];
    }
  }
  return project(w.out, mixed, lq);
}

Tensor random_tensor(Shape s, Rng & rng, double scale = 1.0) { return rng.normal_tensor(std::move(s), scale); }

}  // namespace

// --------------------------------------------------------------------------- matmul

TEST(Matmul, IdentityTimesMatrix)
{
  auto c = matmul(Var::constant(Tensor::matrix({{1, 0}, {0, 1}})),
                  Var::constant(Tensor::matrix({{5, 6}, {7, 8}})));
  EXPECT_EQ(c.value(), Tensor::matrix({{5, 6}, {7, 8}}));
}

TEST(Matmul, RowTimesColumn)
{
  auto c = matmul(Var::constant(Tensor::matrix({{1, 2}})), Var::constant(Tensor::matrix({{3}, {4}})));
  EXPECT_EQ(c.value(), Tensor::matrix({{11}}));
}

TEST(Matmul, RandomMatchesTripleLoopExactly)
{
  Rng rng(7);
  Tensor a = random_tensor({3, 4}, rng);
  Tensor b = random_tensor({4, 2}, rng);
  auto c = matmul(Var::constant(a), Var::constant(b));
  EXPECT_EQ(c.value().values(), naive_matmul(a.values(), b.values(), 3, 4, 2));
}

TEST(Matmul, IntegerBatchedBroadcastMatchesOracle)
{
  Rng rng(3);
  Tensor a({2, 3, 3, 4});
  Tensor b({3, 4, 5});
  for (auto & v : a.data()) v = static_cast<double>(rng.uniform_int(0, 9)) - 4.0;
  for (auto & v : b.data()) v = static_cast<double>(rng.uniform_int(0, 9)) - 4.0;
  auto c = matmul(Var::constant(a), Var::constant(b));
  ASSERT_EQ(c.shape(), (Shape{2, 3, 3, 5}));
  for (std::size_t i = 0; i < 2; ++i)
    for (std::size_t j = 0; j < 3; ++j) {
      std::vector<double> sa(a.raw() + (i * 3 + j) * 12, a.raw() + (i * 3 + j + 1) * 12);
      std::vector<double> sb(b.raw() + j * 20, b.raw() + (j + 1) * 20);
      auto ref = naive_matmul(sa, sb, 3, 4, 5);
      for (std::size_t e = 0; e < 15; ++e) EXPECT_EQ(c.value()[(i * 3 + j) * 15 + e], ref[e]);
    }
}

TEST(Matmul, ShapeMismatchNamesBothShapes)
{
  try {
    matmul(Var::constant(Tensor({2, 3})), Var::constant(Tensor({2, 3})));
    FAIL() << "expected DimensionError";
  } catch (const DimensionError & e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("[2,3] and [2,3]"), std::string::npos) << msg;
  }
}

// --------------------------------------------------------------------------- softmax

TEST(Softmax, UniformOnZeros)
{
  auto y = softmax_lastdim(Var::constant(Tensor::vector({0, 0, 0})));
  for (std::size_t i = 0; i < 3; ++i) EXPECT_NEAR(y.value()[i], 1.0 / 3.0, 1e-15);
}

TEST(Softmax, LargeLogitDoesNotOverflow)
{
  auto y = softmax_lastdim(Var::constant(Tensor::vector({1000, 0})));
  EXPECT_NEAR(y.value()[0], 1.0, 1e-12);
  EXPECT_NEAR(y.value()[1], 0.0, 1e-12);
  EXPECT_TRUE(y.value().all_finite());
}

TEST(Softmax, MatchesDirectEvaluation)
{
  auto y = softmax_lastdim(Var::constant(Tensor::vector({1, 2, 3})));
  const double z = std::exp(1.0) + std::exp(2.0) + std::exp(3.0);
  EXPECT_NEAR(y.value()[0], std::exp(1.0) / z, 1e-15);
  EXPECT_NEAR(y.value()[1], std::exp(2.0) / z, 1e-15);
  EXPECT_NEAR(y.value()[2], std::exp(3.0) / z, 1e-15);
}

TEST(Softmax, RowsSumToOneUpToMagnitude1e4)
{
  Rng rng(11);
  for (int trial = 0; trial < 200; ++trial) {
    Tensor x({4, 7});
    for (auto & v : x.data()) v = rng.uniform(-1e4, 1e4);
    auto y = softmax_lastdim(Var::constant(x));
    for (std::size_t r = 0; r < 4; ++r) {
      double s = 0.0;
      for (std::size_t j = 0; j < 7; ++j) {
        EXPECT_GE(y.value()[r * 7 + j], 0.0);
        s += y.value()[r * 7 + j];
      }
      EXPECT_NEAR(s, 1.0, 1e-12);
    }
  }
}

TEST(Softmax, CausalRowsIgnoreFutureColumns)
{
  auto y = causal_softmax(Var::constant(Tensor::matrix({{0, 50, 50}, {0, 0, 50}, {0, 0, 0}})));
  EXPECT_DOUBLE_EQ(y.value().at({0, 0}), 1.0);
  EXPECT_DOUBLE_EQ(y.value().at({0, 1}), 0.0);
  EXPECT_NEAR(y.value().at({1, 0}), 0.5, 1e-15);
  EXPECT_DOUBLE_EQ(y.value().at({1, 2}), 0.0);
  EXPECT_NEAR(y.value().at({2, 2}), 1.0 / 3.0, 1e-15);
}

// --------------------------------------------------------------------------- layer norm

TEST(LayerNorm, ConstantSliceMapsToZero)
{
  auto y = layer_norm(Var::constant(Tensor::vector({5, 5, 5})), Var::constant(Tensor::ones({3})),
                      Var::constant(Tensor::zeros({3})));
  for (double v : y.value().data()) EXPECT_EQ(v, 0.0);
}

TEST(LayerNorm, TwoElementClosedForm)
{
  auto y = layer_norm(Var::constant(Tensor::vector({1, 3})), Var::constant(Tensor::ones({2})),
                      Var::constant(Tensor::zeros({2})));
  // mean 2, variance 1: (x - 2) / sqrt(1 + 1e-5)
  const double expect = 1.0 / std::sqrt(1.0 + 1e-5);
  EXPECT_NEAR(y.value()[0], -expect, 1e-15);
  EXPECT_NEAR(y.value()[1], expect, 1e-15);
  EXPECT_NEAR(y.value()[0], -1.0, 1e-4);
}

TEST(LayerNorm, ZeroGainGivesBias)
{
  Rng rng(5);
  auto y = layer_norm(Var::constant(random_tensor({3, 4}, rng)), Var::constant(Tensor::zeros({4})),
                      Var::constant(Tensor::vector({1, 2, 3, 4})));
  for (std::size_t r = 0; r < 3; ++r)
    for (std::size_t j = 0; j < 4; ++j) EXPECT_EQ(y.value().at({r, j}), static_cast<double>(j + 1));
}

TEST(LayerNorm, GainExtentMismatchThrows)
{
  EXPECT_THROW(layer_norm(Var::constant(Tensor({2, 4})), Var::constant(Tensor::ones({3})),
                          Var::constant(Tensor::zeros({3}))),
               DimensionError);
}

// --------------------------------------------------------------------------- attention

TEST(Attention, SingleKeyPassesValueThroughProjections)
{
  Rng rng(21);
  AttentionWeights w("mhca", 4, 2, rng);
  Tensor v({1, 1, 4});
  for (auto & x : v.data()) x = rng.normal();
  Tensor expected_rows = (w.out(w.value(Var::constant(v)))).value();
  for (int trial = 0; trial < 3; ++trial) {
    Var q = Var::constant(random_tensor({1, 3, 4}, rng, 5.0));
    Var k = Var::constant(random_tensor({1, 1, 4}, rng));
    auto out = multi_head_cross_attention(w, q, k, Var::constant(v));
    ASSERT_EQ(out.shape(), (Shape{1, 3, 4}));
    for (std::size_t i = 0; i < 3; ++i)
      for (std::size_t j = 0; j < 4; ++j)
        EXPECT_NEAR(out.value().at({0, i, j}), expected_rows[j], 1e-12);
  }
}

TEST(Attention, SaturatedOneHotKeysSelectMatchingValue)
{
  Rng rng(1);
  AttentionWeights w("mhca", 3, 1, rng);
  for (Linear * lin : {&w.query, &w.key, &w.value, &w.out}) {
    lin->zero();
    for (std::size_t i = 0; i < 3; ++i) lin->weight.value.at({i, i}) = 1.0;
  }
  const double big = 1e3;
  Tensor keys({1, 3, 3}, 0.0);
  for (std::size_t i = 0; i < 3; ++i) keys.at({0, i, i}) = big;
  Tensor values = Tensor({1, 3, 3}, std::vector<double>{1, 2, 3, 4, 5, 6, 7, 8, 9});
  Tensor q({1, 1, 3}, std::vector<double>{0.1, 0.9, 0.2});  // argmax key = 1
  auto out = multi_head_cross_attention(w, Var::constant(q), Var::constant(keys), Var::constant(values));
  EXPECT_NEAR(out.value()[0], 4.0, 1e-9);
  EXPECT_NEAR(out.value()[1], 5.0, 1e-9);
  EXPECT_NEAR(out.value()[2], 6.0, 1e-9);
}

TEST(Attention, MatchesStraightLineOracle)
{
  Rng rng(99);
  AttentionWeights w("mhca", 4, 2, rng);
  for (Linear * lin : {&w.query, &w.key, &w.value, &w.out}) {
    for (auto & b : lin->bias.value.data()) b = rng.normal();
  }
  Tensor q = random_tensor({1, 2, 4}, rng);
  Tensor k = random_tensor({1, 3, 4}, rng);
  Tensor v = random_tensor({1, 3, 4}, rng);
  auto out = multi_head_cross_attention(w, Var::constant(q), Var::constant(k), Var::constant(v));
  auto ref = reference_attention(w, q.values(), k.values(), v.values(), 2, 3);
  for (std::size_t i = 0; i < ref.size(); ++i) EXPECT_NEAR(out.value()[i], ref[i], 1e-12);
}

TEST(Attention, WidthNotDivisibleByHeadsIsConfigError)
{
  Rng rng(0);
  EXPECT_THROW(AttentionWeights("mhca", 12, 8, rng), ConfigError);
}

TEST(Attention, ArgmaxKeyInvariantUnderPositiveKeyScaling)
{
  Rng rng(8);
  AttentionWeights w("mhca", 4, 1, rng);
  Tensor q = random_tensor({1, 5, 4}, rng);
  Tensor k = random_tensor({1, 6, 4}, rng);
  auto base = attend(w, Var::constant(q), Var::constant(k), Var::constant(k)).weights.value();
  // Scaling the projected keys scales the scores; argmax per query row must survive.
  AttentionWeights scaled = w;
  for (auto & x : scaled.key.weight.value.data()) x *= 3.5;
  for (auto & x : scaled.key.bias.value.data()) x *= 3.5;
  auto sc = attend(scaled, Var::constant(q), Var::constant(k), Var::constant(k)).weights.value();
  bool changed = false;
  for (std::size_t i = 0; i < 5; ++i) {
    std::size_t a0 = 0, a1 = 0;
    for (std::size_t j = 0; j < 6; ++j) {
      if (base[i * 6 + j] > base[i * 6 + a0]) a0 = j;
      if (sc[i * 6 + j] > sc[i * 6 + a1]) a1 = j;
      changed = changed || std::abs(base[i * 6 + j] - sc[i * 6 + j]) > 1e-6;
    }
    EXPECT_EQ(a0, a1);
  }
  EXPECT_TRUE(changed);
}

// --------------------------------------------------------------------------- backward

TEST(Backward, SumGivesOnes)
{
  Parameter w("w", Tensor::vector({1, -2, 3}));
  backward(sum_all(Var::param(w)));
  for (double g : w.grad.data()) EXPECT_EQ(g, 1.0);
}

TEST(Backward, HalfSquaredNormGivesValue)
{
  Parameter w("w", Tensor::vector({1.5, -2, 3}));
  Var x = Var::param(w);
  backward(scale(sum_all(mul(x, x)), 0.5));
  EXPECT_EQ(w.grad, w.value);
}

TEST(Backward, RepeatedCallsAccumulate)
{
  Parameter w("w", Tensor::vector({1, 2}));
  Var x = Var::param(w);
  Var loss = sum_all(mul(x, x));
  backward(loss);
  backward(loss);
  EXPECT_EQ(w.grad[0], 4.0);
  EXPECT_EQ(w.grad[1], 8.0);
  w.zero_grad();
  backward(loss);
  EXPECT_EQ(w.grad[0], 2.0);
}

TEST(Backward, NonScalarLossIsContractError)
{
  Parameter w("w", Tensor::vector({1, 2}));
  EXPECT_THROW(backward(Var::param(w)), ContractError);
}

TEST(Backward, FrozenParameterReceivesNothing)
{
  Parameter w("w", Tensor::vector({1, 2}), false);
  Parameter u("u", Tensor::vector({3, 4}));
  backward(sum_all(mul(Var::param(w), Var::param(u))));
  EXPECT_EQ(w.grad, Tensor::zeros({2}));
  EXPECT_EQ(u.grad, w.value);
}

// --------------------------------------------------------------------------- grad_check

TEST(GradCheck, MatmulChain)
{
  Rng rng(2);
  Parameter a("a", random_tensor({3, 4}, rng));
  Parameter b("b", random_tensor({4, 5}, rng));
  Parameter c("c", random_tensor({5, 2}, rng));
  auto f = [&] { return sum_all(matmul(matmul(Var::param(a), Var::param(b)), Var::param(c))); };
  auto rep = grad_check(f, {&a, &b, &c});
  EXPECT_TRUE(rep.passed(1e-7)) << rep.max_relative_error << " at " << rep.worst;
}

TEST(GradCheck, SoftmaxCrossEntropyComposite)
{
  Rng rng(4);
  Parameter w("w", random_tensor({6, 4}, rng));
  Tensor x = random_tensor({3, 6}, rng);
  auto f = [&] { return cross_entropy(matmul(Var::constant(x), Var::param(w)), {0, 3, 1}); };
  auto rep = grad_check(f, {&w});
  EXPECT_TRUE(rep.passed(1e-5)) << rep.max_relative_error << " at " << rep.worst;
}

TEST(GradCheck, FrozenParameterReportsZero)
{
  Rng rng(6);
  Parameter w("w", random_tensor({3, 3}, rng), false);
  Tensor x = random_tensor({2, 3}, rng);
  auto f = [&] { return sum_all(matmul(Var::constant(x), Var::param(w))); };
  auto rep = grad_check(f, {&w});
  EXPECT_EQ(rep.max_relative_error, 0.0);
  EXPECT_FALSE(rep.non_finite);
}

TEST(GradCheck, EveryPrimitiveComposition)
{
  Rng rng(12);
  Parameter x("x", random_tensor({2, 3, 4}, rng));
  Parameter g("g", random_tensor({4}, rng));
  Parameter b("b", random_tensor({4}, rng));
  Parameter y("y", random_tensor({2, 3, 4}, rng));
  // Random readout weights keep the loss away from softmax's sum-to-one null directions.
  const Tensor readout = random_tensor({2, 8}, rng);
  auto f = [&] {
    Var xv = Var::param(x);
    Var h = layer_norm(xv, Var::param(g), Var::param(b));
    h = gelu(h);
    Var s = softmax_lastdim(mul(h, Var::param(y)));
    Var c = causal_softmax(matmul(h, transpose_last2(Var::param(y))));
    Var gathered = gather_rows(s, {2, 0});
    Var scattered = scatter_rows(Var::param(y), gathered, {1, 2}, ScatterMode::add);
    Var replaced = scatter_rows(scattered, scale(gathered, -0.5), {0, 1}, ScatterMode::replace);
    Var m = mean_axis(replaced, 1);
    Var cat = concat({m, slice(reshape(c, {2, 9}), 1, 2, 6)}, 1);
    Var pos = add_scalar(mul(cat, cat), 1.0);
    Var root = div(sqrt(pos), add_scalar(pos, 2.0));
    Var e = expand_leading(Var::param(g), {2});
    Var mixed = sub(add(permute(reshape(e, {2, 2, 2}), {1, 0, 2}), reshape(e, {2, 2, 2})),
                    reshape(mean_axis(Var::param(x), 1), {2, 2, 2}));
    return add(sum_all(sum_lastdim(mul(root, Var::constant(readout)))), mean_all(mul(mixed, mixed)));
  };
  auto rep = grad_check(f, {&x, &g, &b, &y});
  EXPECT_TRUE(rep.passed(1e-4)) << rep.max_relative_error << " at " << rep.worst;
}

TEST(Ops, ForwardOutputsFiniteOnFiniteInputs)
{
  Rng rng(31);
  for (int t = 0; t < 50; ++t) {
    Var x = Var::constant(random_tensor({2, 5, 8}, rng, 30.0));
    EXPECT_TRUE(gelu(x).value().all_finite());
    EXPECT_TRUE(softmax_lastdim(x).value().all_finite());
    EXPECT_TRUE(layer_norm(x, Var::constant(Tensor::ones({8})), Var::constant(Tensor::zeros({8})))
                  .value().all_finite());
    EXPECT_TRUE(cross_entropy(reshape(x, {10, 8}), std::vector<std::size_t>(10, 3)).value().all_finite());
  }
}

// --------------------------------------------------------------------------- adam

TEST(Adam, ZeroGradLeavesParamsUnchanged)
{
  Parameter w("w", Tensor::vector({1, 2, 3}));
  const Tensor before = w.value;
  AdamState st(1e-3);
  adam_step(st, {&w});
  EXPECT_EQ(w.value, before);
}

TEST(Adam, FrozenParamIgnoresGradient)
{
  Parameter w("w", Tensor::vector({1, 2}), false);
  w.grad.fill(5.0);
  const Tensor before = w.value;
  AdamState st(1e-2);
  adam_step(st, {&w});
  EXPECT_EQ(w.value, before);
  EXPECT_EQ(w.grad, Tensor::zeros({2}));
}

TEST(Adam, SingleStepMatchesHandRecurrence)
{
  const double lr = 1e-3;
  Parameter w("w", Tensor::vector({0.25}));
  w.grad[0] = 1.0;
  AdamState st(lr);
  adam_step(st, {&w});
  // m = 0.1, v = 0.001; m_hat = 1, v_hat = 1.
  const double m = 0.1, v = 0.001;
  const double expected = 0.25 - lr * (m / (1 - 0.9)) / (std::sqrt(v / (1 - 0.999)) + 1e-8);
  EXPECT_DOUBLE_EQ(w.value[0], expected);
  EXPECT_NEAR(0.25 - w.value[0], lr, 1e-10);
  EXPECT_EQ(w.grad[0], 0.0);
  EXPECT_EQ(st.step, 1u);
}

TEST(Adam, NonPositiveLearningRateRejected)
{
  EXPECT_THROW(AdamState(0.0), ConfigError);
  EXPECT_THROW(AdamState(-1.0), ConfigError);
}

TEST(Adam, NeverMutatesAnyFrozenSubset)
{
  // Every trainable/frozen assignment over four parameters.
  for (unsigned mask = 0; mask < 16; ++mask) {
    std::vector<Parameter> ps;
    for (unsigned i = 0; i < 4; ++i) {
      ps.emplace_back("p" + std::to_string(i), Tensor::vector({1.0 + i, -2.0}), ((mask >> i) & 1u) != 0);
    }
    ParameterList list;
    for (auto & p : ps) {
      p.grad.fill(0.5);
      list.push_back(&p);
    }
    AdamState st(1e-2);
    adam_step(st, list);
    for (unsigned i = 0; i < 4; ++i) {
      const bool trainable = ((mask >> i) & 1u) != 0;
      EXPECT_EQ(ps[i].value == Tensor::vector({1.0 + i, -2.0}), !trainable) << mask << " " << i;
    }
  }
}

TEST(ClipGradNorm, RescalesToMaxNorm)
{
  Parameter a("a", Tensor::vector({0, 0}));
  a.grad = Tensor::vector({3, 4});
  const double n = clip_grad_norm({&a}, 1.0);
  EXPECT_DOUBLE_EQ(n, 5.0);
  EXPECT_NEAR(a.grad[0], 0.6, 1e-15);
  EXPECT_NEAR(a.grad[1], 0.8, 1e-15);
}
