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

#ifndef VGGDRIVE__MODEL__MODEL_HPP_
#define VGGDRIVE__MODEL__MODEL_HPP_

#include <algorithm>
#include <cstddef>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "vggdrive/errors.hpp"
#include "vggdrive/model/config.hpp"
#include "vggdrive/numerics/autograd.hpp"
#include "vggdrive/numerics/nn.hpp"
#include "vggdrive/numerics/ops.hpp"
#include "vggdrive/numerics/random.hpp"
#include "vggdrive/scenesynth.hpp"

namespace vggdrive::model
{

using scenesynth::TokenLayout;

/// Pre-norm block: causal self-attention then feed-forward, both residual.
struct DecoderLayer
{
  DecoderLayer() = default;
  DecoderLayer(const std::string & name, const ModelConfig & c, Rng & rng)
  : ln1(name + ".ln1", c.width),
    attn(name + ".attn", c.width, c.heads, rng),
    ln2(name + ".ln2", c.width),
    ffn(name + ".ffn", c.width, c.ffn, c.width, rng)
  {
  }

  Var operator()(const Var & x) const
  {
    const Var n1 = ln1(x);
    const Var h = add(x, attend(attn, n1, n1, n1, true).output);
    return add(h, ffn(ln2(h)));
  }

  void collect(ParameterList & out)
  {
    ln1.collect(out);
    attn.collect(out);
    ln2.collect(out);
    ffn.collect(out);
  }

  LayerNormParams ln1;
  AttentionWeights attn;
  LayerNormParams ln2;
  Mlp ffn;
};

struct DecoderStack
{
  DecoderStack() = default;
  DecoderStack(const ModelConfig & c, Rng & rng)
  : position("stack.position", rng.normal_tensor({c.max_length, c.width}, c.position_std))
  {
    for (std::size_t i = 0; i < c.layers; ++i) {
      layers.emplace_back("stack.layer" + std::to_string(i + 1), c, rng);
    }
    final_norm = LayerNormParams("stack.final_norm", c.width);
    head = Linear("stack.head", c.width, c.vocab, rng);
  }

  /// Adds learned positions to [B, L, D] inputs.
  Var embed(const Var & x) const
  {
    const std::size_t l = x.dim(1);
    if (l > position.value.dim(0)) {
      throw ConfigError("sequence length " + std::to_string(l) + " exceeds maximum " +
                        std::to_string(position.value.dim(0)));
    }
    return add(x, slice(Var::param(position), 0, 0, l));
  }

  /// Answer logits [B, V] read at `position_index`.
  Var logits(const Var & h, std::size_t position_index) const
  {
    const Var row = gather_rows(h, {position_index});
    const Var out = head(final_norm(row));
    return reshape(out, {h.dim(0), head.out_features()});
  }

  std::size_t size() const { return layers.size(); }

  void collect(ParameterList & out)
  {
    out.push_back(&position);
    for (auto & l : layers) l.collect(out);
    final_norm.collect(out);
    head.collect(out);
  }

  Parameter position;
  std::vector<DecoderLayer> layers;
  LayerNormParams final_norm;
  Linear head;
};

/// One CVGE block: down-projections, camera embedding, cross-attention, up-projection.
struct CvgeLayer
{
  CvgeLayer() = default;
  CvgeLayer(const std::string & name, const ModelConfig & c, const SchemeConfig & sc, Rng & rng)
  {
    const std::size_t ds = sc.reduced_width(c.width_3d);
    down_q = Mlp(name + ".down_q", c.width, std::max(c.width, ds), ds, rng);
    down_kv = Mlp(name + ".down_kv", c.width_3d, std::max(c.width_3d, ds), ds, rng);
    cam = Mlp(name + ".cam", 16, std::max<std::size_t>(16, ds), ds, rng);
    mhca = AttentionWeights(name + ".mhca", ds, sc.heads, rng);
    up = Mlp(name + ".up", ds, std::max(ds, c.width), c.width, rng);
    if (sc.zero_init_up) up.fc2.zero();
  }

  std::size_t reduced_width() const { return mhca.width(); }

  void collect(ParameterList & out)
  {
    down_q.collect(out);
    down_kv.collect(out);
    cam.collect(out);
    mhca.collect(out);
    up.collect(out);
  }

  Mlp down_q;
  Mlp down_kv;
  Mlp cam;
  AttentionWeights mhca;
  Mlp up;
};

/// Rows of X at image positions, in sequence order: [B, C*N2, D].
inline Var extract_visual(const Var & x, const TokenLayout & layout)
{
  if (x.shape().size() != 3 || x.dim(1) != layout.mask.size()) {
    throw ContractError("extract_visual: hidden states " + shape_str(x.shape()) +
                        " do not match a mask of length " + std::to_string(layout.mask.size()));
  }
  const auto pos = layout.image_positions();
  if (pos.size() != layout.views * layout.image_tokens) {
    throw ContractError("extract_visual: mask has " + std::to_string(pos.size()) +
                        " image positions, layout expects " +
                        std::to_string(layout.views * layout.image_tokens));
  }
  return gather_rows(x, pos);
}

/// Writes `v3d_out` back at image positions; residual adds, otherwise replaces.
inline Var inject(const Var & x, const TokenLayout & layout, const Var & v3d_out, bool use_residual)
{
  const auto pos = layout.image_positions();
  if (x.shape().size() != 3 || x.dim(1) != layout.mask.size() || v3d_out.shape().size() != 3 ||
      v3d_out.dim(0) != x.dim(0) || v3d_out.dim(1) != pos.size() || v3d_out.dim(2) != x.dim(2))
  {
    throw ContractError("inject: hidden " + shape_str(x.shape()) + " and update " +
                        shape_str(v3d_out.shape()) + " inconsistent with layout");
  }
  return scatter_rows(x, v3d_out, pos, use_residual ? ScatterMode::add : ScatterMode::replace);
}

struct CvgeOptions
{
  // Replaces the cross-attention softmax with these weights [B, heads, C*N2, C*N1].
  const Tensor * pinned_weights{nullptr};
};

/**
 * @brief CVGE forward: v2d [B, C*N2, D2], v3d [B, C, N1, D1], cams [B, C, 16] -> [B, C*N2, D2].
 *
 * Keys and values share one down-projection of the view-flattened 3D tokens.
 * The camera embedding lands on token c*N1 of each view.
 */
inline Var cvge_forward(
  const CvgeLayer & p, const Var & v2d, const Var & v3d, const Tensor * cams,
  const SchemeConfig & cfg, const CvgeOptions & opt = {})
{
  if (v3d.shape().size() != 4 || v2d.shape().size() != 3 || v2d.dim(0) != v3d.dim(0)) {
    throw ContractError("cvge: v2d " + shape_str(v2d.shape()) + " / v3d " +
                        shape_str(v3d.shape()) + " shapes inconsistent");
  }
  const std::size_t b = v3d.dim(0), c = v3d.dim(1), n1 = v3d.dim(2), d1 = v3d.dim(3);
  if (v2d.dim(1) % c != 0) {
    throw ContractError("cvge: image tokens not divisible by view count");
  }
  const std::size_t n2 = v2d.dim(1) / c;
  const std::size_t ds = p.reduced_width();
  const Var q = p.down_q(v2d);
  Var kv = p.down_kv(reshape(v3d, {b, c * n1, d1}));
  if (cfg.use_cam) {
    if (cams == nullptr) {
      throw ConfigError("cvge: camera embedding enabled but no camera transforms given");
    }
    if (cams->shape() != Shape{b, c, 16}) {
      throw ContractError("cvge: camera tokens " + shape_str(cams->shape()) + ", expected " +
                          shape_str({b, c, 16}));
    }
    std::vector<std::size_t> first;
    for (std::size_t v = 0; v < c; ++v) first.push_back(v * n1);
    kv = scatter_rows(kv, p.cam(Var::constant(*cams)), first, ScatterMode::add);
  }
  Var fused;
  if (cfg.use_mhca) {
    fused = opt.pinned_weights != nullptr ? attend_with_weights(p.mhca, kv, *opt.pinned_weights)
                                          : multi_head_cross_attention(p.mhca, q, kv, kv);
  } else {
    const Var view_mean = mean_axis(reshape(kv, {b, c, n1, ds}), 2);  // [B, C, Ds]
    std::vector<std::size_t> owner;
    for (std::size_t r = 0; r < c * n2; ++r) owner.push_back(r / n2);
    fused = add(q, gather_rows(view_mean, owner));
  }
  return p.up(fused);
}

/// [N, P] linear interpolation matrix sampling P points at N evenly spaced positions (ends aligned).
inline Tensor interpolation_matrix(std::size_t p, std::size_t n)
{
  if (p < 2) {
    throw ContractError("resample: need at least 2 patch tokens, got " + std::to_string(p));
  }
  Tensor m({n, p}, 0.0);
  for (std::size_t j = 0; j < n; ++j) {
    if (n == 1) {
      m[0] = 1.0;
      break;
    }
    const double t = static_cast<double>(j) * static_cast<double>(p - 1) / static_cast<double>(n - 1);
    auto lo = static_cast<std::size_t>(t);
    if (lo >= p - 1) lo = p - 2;
    const double w = t - static_cast<double>(lo);
    m[j * p + lo] += 1.0 - w;
    m[j * p + lo + 1] += w;
  }
  return m;
}

/// Patch tokens [B, C, P, D1] interpolated to [B, C*N2, D1]; camera and register tokens dropped.
inline Var resample_patches(const Var & v3d, std::size_t registers, std::size_t n2)
{
  const std::size_t b = v3d.dim(0), c = v3d.dim(1), n1 = v3d.dim(2), d1 = v3d.dim(3);
  if (n1 < 1 + registers + 2) {
    throw ContractError("resample: need at least 2 patch tokens");
  }
  const std::size_t p = n1 - 1 - registers;
  const Var patches = slice(v3d, 2, 1 + registers, n1);
  Var out = p == n2 ? patches : matmul(Var::constant(interpolation_matrix(p, n2)), patches);
  return reshape(out, {b, c * n2, d1});
}

inline Var resample_3d_to_n2(
  const Var & v3d, std::size_t registers, std::size_t n2, const Linear & projection)
{
  return projection(resample_patches(v3d, registers, n2));
}

/// Inputs of one forward pass.
struct Batch
{
  Var tokens;   // [B, L, D2]
  Var v3d;      // [B, C, N1, D1]
  Tensor cams;  // [B, C, 16]
  std::vector<std::size_t> targets;
};

struct ForwardResult
{
  Var logits;        // [B, V]
  Var final_visual;  // [B, C*N2, D2] hidden states after the last layer
};

/// Called with (before, after) around every write into the hidden sequence.
using InjectTrace = std::function<void(const Tensor &, const Tensor &)>;

class Model
{
public:
  Model(const ModelConfig & mc, const SchemeConfig & sc) : config_(mc), scheme_(sc)
  {
    config_.validate();
    layers_ = scheme_.resolved_layers(config_.layers);
    Rng rng(config_.init_seed);
    stack = DecoderStack(config_, rng);
    Rng aux(split_seed(config_.init_seed, 0xc7));
    std::size_t n_cvge = 0;
    if (scheme_.scheme == Scheme::vggdrive) {
      n_cvge = scheme_.share_cvge ? 1 : config_.layers;
    } else if (scheme_.scheme == Scheme::mhca_pre) {
      n_cvge = 1;
    }
    cvge.reserve(n_cvge);
    for (std::size_t i = 0; i < n_cvge; ++i) {
      cvge.emplace_back("cvge" + std::to_string(i + 1), config_, scheme_, aux);
    }
    if (scheme_.scheme == Scheme::vggt_only || scheme_.scheme == Scheme::add) {
      adapter = Linear("adapter.project3d", config_.width_3d, config_.width, aux);
      has_adapter_ = true;
    } else if (scheme_.scheme == Scheme::dist) {
      adapter = Linear("adapter.distill", config_.width, config_.width_3d, aux);
      has_adapter_ = true;
    }
  }

  const ModelConfig & config() const { return config_; }
  const SchemeConfig & scheme() const { return scheme_; }
  bool has_adapter() const { return has_adapter_; }

  /// CVGE used before decoder layer i (1-based), or nullptr.
  const CvgeLayer * cvge_for_layer(std::size_t i) const
  {
    if (scheme_.scheme != Scheme::vggdrive) return nullptr;
    if (std::find(layers_.begin(), layers_.end(), i) == layers_.end()) return nullptr;
    return &cvge[scheme_.share_cvge ? 0 : i - 1];
  }

  ParameterList stack_parameters()
  {
    ParameterList out;
    stack.collect(out);
    return out;
  }

  /// CVGE blocks and scheme adapters.
  ParameterList injected_parameters()
  {
    ParameterList out;
    for (auto & c : cvge) c.collect(out);
    if (has_adapter_) adapter.collect(out);
    return out;
  }

  ParameterList parameters()
  {
    ParameterList out = stack_parameters();
    const ParameterList inj = injected_parameters();
    out.insert(out.end(), inj.begin(), inj.end());
    return out;
  }

  /**
   * @brief Scheme dispatch.
   *
   * vggdrive runs extract -> CVGE -> inject on the hidden states entering
   * every selected layer; mhca_pre applies one CVGE to the raw image embeddings.
   */
  ForwardResult forward(
    const Batch & in, const TokenLayout & layout, const InjectTrace & trace = {}) const
  {
    check_inputs(in, layout);
    auto write = [&](const Var & before, const Var & after) {
      if (trace) trace(before.value(), after.value());
      return after;
    };
    Var h = in.tokens;
    const Tensor * cams = &in.cams;
    switch (scheme_.scheme) {
      case Scheme::vggt_only:
        h = write(h, scatter_rows(h, resample_3d_to_n2(in.v3d, config_.registers,
                                                       config_.image_tokens, adapter),
                                  layout.image_positions(), ScatterMode::replace));
        break;
      case Scheme::add:
        h = write(h, scatter_rows(h, resample_3d_to_n2(in.v3d, config_.registers,
                                                       config_.image_tokens, adapter),
                                  layout.image_positions(), ScatterMode::add));
        break;
      case Scheme::mhca_pre:
        h = write(h, inject(h, layout,
                            cvge_forward(cvge[0], extract_visual(h, layout), in.v3d, cams, scheme_),
                            scheme_.use_residual));
        break;
      default:
        break;
    }
    h = stack.embed(h);
    for (std::size_t i = 1; i <= stack.size(); ++i) {
      if (const CvgeLayer * c = cvge_for_layer(i)) {
        h = write(h, inject(h, layout,
                            cvge_forward(*c, extract_visual(h, layout), in.v3d, cams, scheme_),
                            scheme_.use_residual));
      }
      h = stack.layers[i - 1](h);
    }
    return {stack.logits(h, layout.answer_position), extract_visual(h, layout)};
  }

  DecoderStack stack;
  std::vector<CvgeLayer> cvge;
  Linear adapter;

private:
  void check_inputs(const Batch & in, const TokenLayout & layout) const
  {
    const auto & t = in.tokens.shape();
    if (t.size() != 3 || t[1] != layout.length || t[2] != config_.width) {
      throw ContractError("model: tokens " + shape_str(t) + " do not match layout length " +
                          std::to_string(layout.length) + " and width " +
                          std::to_string(config_.width));
    }
    if (layout.views != config_.views || layout.image_tokens != config_.image_tokens) {
      throw ContractError("model: layout views/tokens differ from model config");
    }
    const bool needs_3d = scheme_.scheme != Scheme::baseline;
    if (needs_3d) {
      const Shape want{t[0], config_.views, config_.tokens_3d(), config_.width_3d};
      if (!in.v3d.valid() || in.v3d.shape() != want) {
        throw ContractError("model: 3D features must be " + shape_str(want));
      }
    }
  }

  ModelConfig config_;
  SchemeConfig scheme_;
  std::vector<std::size_t> layers_;
  bool has_adapter_{false};
};

}  // namespace vggdrive::model

#endif  // VGGDRIVE__MODEL__MODEL_HPP_
