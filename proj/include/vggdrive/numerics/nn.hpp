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

#ifndef VGGDRIVE__NUMERICS__NN_HPP_
#define VGGDRIVE__NUMERICS__NN_HPP_

#include <cmath>
#include <cstddef>
#include <string>
#include <utility>
#include <vector>

#include "vggdrive/numerics/autograd.hpp"
#include "vggdrive/numerics/ops.hpp"
#include "vggdrive/numerics/random.hpp"

namespace vggdrive
{

/// y = x W + b with W stored [in, out].
struct Linear
{
  Linear() = default;
  Linear(const std::string & name, std::size_t in, std::size_t out, Rng & rng, double gain = 1.0)
  : weight(name + ".weight", rng.normal_tensor({in, out}, gain / std::sqrt(static_cast<double>(in)))),
    bias(name + ".bias", Tensor({out}, 0.0))
  {
  }

  Var operator()(const Var & x) const
  {
    return add(matmul(x, Var::param(weight)),
               Var::param(bias));
  }

  std::size_t in_features() const { return weight.value.dim(0); }
  std::size_t out_features() const { return weight.value.dim(1); }

  void zero()
  {
    weight.value.fill(0.0);
    bias.value.fill(0.0);
  }

  void collect(ParameterList & out)
  {
    out.push_back(&weight);
    out.push_back(&bias);
  }

  Parameter weight;
  Parameter bias;
};

/// Two-layer perceptron in -> hidden -> out with a GELU in between.
struct Mlp
{
  Mlp() = default;
  Mlp(const std::string & name, std::size_t in, std::size_t hidden, std::size_t out, Rng & rng)
  : fc1(name + ".fc1", in, hidden, rng), fc2(name + ".fc2", hidden, out, rng)
  {
  }

  Var operator()(const Var & x) const { return fc2(gelu(fc1(x))); }

  void collect(ParameterList & out)
  {
    fc1.collect(out);
    fc2.collect(out);
  }

  Linear fc1;
  Linear fc2;
};

struct LayerNormParams
{
  LayerNormParams() = default;
  LayerNormParams(const std::string & name, std::size_t width)
  : gain(name + ".gain", Tensor({width}, 1.0)), bias(name + ".bias", Tensor({width}, 0.0))
  {
  }

  Var operator()(const Var & x) const
  {
    return layer_norm(
      x, Var::param(gain), Var::param(bias));
  }

  void collect(ParameterList & out)
  {
    out.push_back(&gain);
    out.push_back(&bias);
  }

  Parameter gain;
  Parameter bias;
};

/// Query/key/value/output projections of a multi-head attention block.
struct AttentionWeights
{
  AttentionWeights() = default;
  AttentionWeights(const std::string & name, std::size_t width, std::size_t heads_, Rng & rng)
  : query(name + ".q", width, width, rng),
    key(name + ".k", width, width, rng),
    value(name + ".v", width, width, rng),
    out(name + ".o", width, width, rng),
    heads(heads_)
  {
    if (heads == 0 || width % heads != 0) {
      throw ConfigError(
        "attention width " + std::to_string(width) + " not divisible by " + std::to_string(heads) +
        " heads");
    }
  }

  std::size_t width() const { return query.in_features(); }

  void collect(ParameterList & list)
  {
    query.collect(list);
    key.collect(list);
    value.collect(list);
    out.collect(list);
  }

  Linear query;
  Linear key;
  Linear value;
  Linear out;
  std::size_t heads{1};
};

struct AttentionResult
{
  Var output;   // [B, Lq, D]
  Var weights;  // [B, heads, Lq, Lk]
};

namespace detail
{

// [B, L, D] -> [B, h, L, D/h]
inline Var split_heads(const Var & x, std::size_t heads)
{
  const std::size_t b = x.dim(0), l = x.dim(1), d = x.dim(2);
  return permute(reshape(x, {b, l, heads, d / heads}), {0, 2, 1, 3});
}

// [B, h, L, dh] -> [B, L, h*dh]
inline Var merge_heads(const Var & x)
{
  const std::size_t b = x.dim(0), h = x.dim(1), l = x.dim(2), dh = x.dim(3);
  return reshape(permute(x, {0, 2, 1, 3}), {b, l, h * dh});
}

}  // namespace detail

/**
 * @brief Scaled dot-product attention over `heads` heads, scale 1/sqrt(D/heads).
 *
 * q is [B, Lq, D]; k and v are [B, Lk, D]. Heads are concatenated and passed
 * through the output projection. With `causal`, Lq must equal Lk and query i
 * sees keys 0..i.
 */
inline AttentionResult attend(
  const AttentionWeights & w, const Var & q, const Var & k, const Var & v, bool causal = false)
{
  const std::size_t d = w.width();
  if (q.shape().size() != 3 || k.shape().size() != 3 || v.shape().size() != 3 ||
      q.dim(2) != d || k.dim(2) != d || v.dim(2) != d || k.dim(1) != v.dim(1) ||
      q.dim(0) != k.dim(0) || k.dim(0) != v.dim(0))
  {
    throw DimensionError(
      "attention: q " + shape_str(q.shape()) + ", k " + shape_str(k.shape()) + ", v " +
      shape_str(v.shape()) + " incompatible with width " + std::to_string(d));
  }
  if (d % w.heads != 0) {
    throw ConfigError("attention width not divisible by head count");
  }
  const double scale_factor = 1.0 / std::sqrt(static_cast<double>(d / w.heads));
  Var qh = detail::split_heads(w.query(q), w.heads);
  Var kh = detail::split_heads(w.key(k), w.heads);
  Var vh = detail::split_heads(w.value(v), w.heads);
  Var scores = scale(matmul(qh, transpose_last2(kh)), scale_factor);
  Var weights = causal ? causal_softmax(scores) : softmax_lastdim(scores);
  Var mixed = detail::merge_heads(matmul(weights, vh));
  return {w.out(mixed), weights};
}

/// Attention with externally fixed weights [B, heads, Lq, Lk]; only the value path is live.
inline Var attend_with_weights(const AttentionWeights & w, const Var & v, const Tensor & weights)
{
  Var vh = detail::split_heads(w.value(v), w.heads);
  if (weights.rank() != 4 || weights.dim(0) != vh.dim(0) || weights.dim(1) != w.heads ||
      weights.dim(3) != vh.dim(2))
  {
    throw DimensionError(
      "attend_with_weights: weights " + shape_str(weights.shape()) + " do not match values " +
      shape_str(v.shape()));
  }
  return w.out(detail::merge_heads(matmul(Var::constant(weights), vh)));
}

inline Var multi_head_cross_attention(
  const AttentionWeights & w, const Var & q, const Var & k, const Var & v)
{
  return attend(w, q, k, v, false).output;
}

}  // namespace vggdrive

#endif  // VGGDRIVE__NUMERICS__NN_HPP_
