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

#ifndef VGGDRIVE__TRAINING_HPP_
#define VGGDRIVE__TRAINING_HPP_

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <numeric>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "vggdrive/errors.hpp"
#include "vggdrive/json_util.hpp"
#include "vggdrive/model/model.hpp"
#include "vggdrive/numerics/adam.hpp"
#include "vggdrive/numerics/autograd.hpp"
#include "vggdrive/numerics/ops.hpp"
#include "vggdrive/scenesynth.hpp"

namespace vggdrive::training
{

using model::Batch;
using model::Model;
using scenesynth::Dataset;

struct StageConfig
{
  std::size_t epochs{2};
  double lr{1e-3};
};

struct TrainConfig
{
  StageConfig stage1{2, 1e-3};
  StageConfig stage2{2, 5e-4};
  std::size_t batch_size{8};
  std::uint64_t seed{0};
  bool one_stage{false};
  double distill_weight{0.5};
  double clip_norm{1.0};

  void validate() const
  {
    if (batch_size == 0) throw ConfigError("train config: batch_size must be positive");
    if (!(stage1.lr > 0.0) || !(stage2.lr > 0.0)) {
      throw ConfigError("train config: learning rates must be positive");
    }
    if (!(clip_norm > 0.0)) throw ConfigError("train config: clip_norm must be positive");
    if (!(distill_weight >= 0.0)) throw ConfigError("train config: distill_weight must be >= 0");
  }
};

inline nlohmann::json to_json(const TrainConfig & t)
{
  return {{"stage1", {{"epochs", t.stage1.epochs}, {"lr", t.stage1.lr}}},
          {"stage2", {{"epochs", t.stage2.epochs}, {"lr", t.stage2.lr}}},
          {"batch_size", t.batch_size},
          {"seed", t.seed},
          {"one_stage", t.one_stage},
          {"distill_weight", t.distill_weight},
          {"clip_norm", t.clip_norm}};
}

inline TrainConfig train_config_from_json(const nlohmann::json & j)
{
  const std::string where = "train config";
  json_util::require_known_keys(
    j, {"stage1", "stage2", "batch_size", "seed", "one_stage", "distill_weight", "clip_norm"},
    where);
  TrainConfig t;
  for (auto [key, stage] : {std::pair{"stage1", &t.stage1}, std::pair{"stage2", &t.stage2}}) {
    if (!j.contains(key)) continue;
    const auto & s = j.at(key);
    json_util::require_known_keys(s, {"epochs", "lr"}, where + "." + key);
    json_util::read_optional(s, "epochs", stage->epochs, where);
    json_util::read_optional(s, "lr", stage->lr, where);
  }
  json_util::read_optional(j, "batch_size", t.batch_size, where);
  json_util::read_optional(j, "seed", t.seed, where);
  json_util::read_optional(j, "one_stage", t.one_stage, where);
  json_util::read_optional(j, "distill_weight", t.distill_weight, where);
  json_util::read_optional(j, "clip_norm", t.clip_norm, where);
  t.validate();
  return t;
}

/// Mean cross-entropy of [B, V] logits against target ids.
inline Var ce_loss(const Var & logits, const std::vector<std::size_t> & targets)
{
  return cross_entropy(logits, targets);
}

inline constexpr double kCosineEps = 1e-8;

/// Mean over rows of 1 - cos(a, b); a is [B, C, D] (live), b the same shape (constant).
inline Var cosine_alignment_loss(const Var & a, const Tensor & b)
{
  if (a.shape() != b.shape()) {
    throw DimensionError("cosine loss: " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  }
  const Var bv = Var::constant(b);
  const double eps2 = kCosineEps * kCosineEps;
  const Var dot = sum_lastdim(mul(a, bv));
  const Var na = sqrt(add_scalar(sum_lastdim(mul(a, a)), eps2));
  const Var nb = sqrt(add_scalar(sum_lastdim(mul(bv, bv)), eps2));
  return add_scalar(scale(mean_all(div(dot, mul(na, nb))), -1.0), 1.0);
}

/// Per-view mean of the provider's patch tokens: [B, C, D1].
inline Tensor pooled_patches(const Tensor & v3d, std::size_t registers)
{
  const std::size_t b = v3d.dim(0), c = v3d.dim(1), n1 = v3d.dim(2), d = v3d.dim(3);
  const std::size_t first = 1 + registers;
  if (n1 <= first) throw ContractError("pooled_patches: no patch tokens");
  Tensor out({b, c, d}, 0.0);
  const double inv = 1.0 / static_cast<double>(n1 - first);
  for (std::size_t i = 0; i < b * c; ++i) {
    for (std::size_t t = first; t < n1; ++t) {
      for (std::size_t k = 0; k < d; ++k) out[i * d + k] += v3d[(i * n1 + t) * d + k] * inv;
    }
  }
  return out;
}

/**
 * @brief Alignment loss of the distillation scheme.
 *
 * Final visual states [B, C*N2, D2] are mean-pooled per view and projected to
 * D1; the 3D side is the per-view mean of patch tokens and carries no gradient.
 */
inline Var distill_loss(
  const Var & final_visual, const Tensor & v3d, std::size_t registers, const Linear & projection)
{
  const std::size_t b = final_visual.dim(0), c = v3d.dim(1), d2 = final_visual.dim(2);
  if (final_visual.dim(1) % c != 0) {
    throw ContractError("distill: visual tokens not divisible by view count");
  }
  const std::size_t n2 = final_visual.dim(1) / c;
  const Var pooled = mean_axis(reshape(final_visual, {b, c, n2, d2}), 2);
  return cosine_alignment_loss(projection(pooled), pooled_patches(v3d, registers));
}

/// Rows `idx` of a dataset as constant graph inputs.
inline Batch make_batch(const Dataset & ds, const std::vector<std::size_t> & idx)
{
  auto rows = [&](const Tensor & src) {
    Shape s = src.shape();
    const std::size_t row = src.numel() / s[0];
    s[0] = idx.size();
    Tensor out(s);
    for (std::size_t i = 0; i < idx.size(); ++i) {
      std::copy(src.raw() + idx[i] * row, src.raw() + (idx[i] + 1) * row, out.raw() + i * row);
    }
    return out;
  };
  Batch b;
  b.tokens = Var::constant(rows(ds.tokens));
  b.v3d = Var::constant(rows(ds.v3d));
  b.cams = rows(ds.cams);
  for (auto i : idx) b.targets.push_back(ds.targets[i]);
  return b;
}

struct EvalResult
{
  double accuracy{0.0};
  double mean_ce{0.0};
  std::size_t count{0};
};

/// Argmax accuracy and mean CE of `logits_fn` over a split; ties go to the lower id.
inline EvalResult evaluate(
  const std::function<Tensor(const Batch &)> & logits_fn, const Dataset & ds,
  std::size_t batch_size = 64)
{
  if (ds.size() == 0) throw ConfigError("evaluate: split is empty");
  EvalResult r;
  double ce = 0.0;
  std::size_t correct = 0;
  for (std::size_t start = 0; start < ds.size(); start += batch_size) {
    std::vector<std::size_t> idx;
    for (std::size_t i = start; i < std::min(ds.size(), start + batch_size); ++i) idx.push_back(i);
    const Batch b = make_batch(ds, idx);
    const Tensor logits = logits_fn(b);
    const std::size_t v = logits.dim(1);
    for (std::size_t i = 0; i < idx.size(); ++i) {
      const double * row = logits.raw() + i * v;
      const std::size_t best = static_cast<std::size_t>(std::max_element(row, row + v) - row);
      if (best == b.targets[i]) ++correct;
      const double m = *std::max_element(row, row + v);
      double z = 0.0;
      for (std::size_t k = 0; k < v; ++k) z += std::exp(row[k] - m);
      ce += std::log(z) + m - row[b.targets[i]];
    }
  }
  r.count = ds.size();
  r.accuracy = static_cast<double>(correct) / static_cast<double>(ds.size());
  r.mean_ce = ce / static_cast<double>(ds.size());
  return r;
}

inline EvalResult evaluate(const Model & m, const Dataset & ds)
{
  NoGradGuard guard;
  return evaluate([&](const Batch & b) { return m.forward(b, ds.layout).logits.value(); }, ds);
}

struct HistoryRow
{
  std::size_t epoch{0};
  std::size_t stage{0};
  double loss{0.0};
  double holdout_acc{0.0};
};

struct TrainResult
{
  std::vector<HistoryRow> history;
};

/// Task loss plus the scheme's auxiliary term.
inline Var training_loss(const Model & m, const Batch & b, const Dataset & ds, double distill_weight)
{
  const auto out = m.forward(b, ds.layout);
  Var loss = ce_loss(out.logits, b.targets);
  if (m.scheme().scheme == model::Scheme::dist && distill_weight > 0.0) {
    loss = add(loss, scale(distill_loss(out.final_visual, b.v3d.value(), ds.registers, m.adapter),
                           distill_weight));
  }
  return loss;
}

/**
 * @brief Two-stage fine-tuning.
 *
 * Stage 1 trains the CVGE blocks and scheme adapters with the stack frozen,
 * stage 2 trains everything. `one_stage` runs one all-trainable phase of
 * stage1 + stage2 epochs at the stage-1 rate. Phases with nothing to train
 * are skipped. Held-out accuracy is logged after every epoch.
 */
inline TrainResult train(
  Model & m, const Dataset & train_set, const Dataset & holdout, const TrainConfig & cfg,
  const std::function<void(const HistoryRow &)> & on_epoch = {})
{
  cfg.validate();
  if (train_set.size() == 0) throw ConfigError("train: empty corpus");
  struct Phase
  {
    std::size_t stage;
    std::size_t epochs;
    double lr;
    bool stack_trainable;
  };
  std::vector<Phase> phases;
  if (cfg.one_stage) {
    phases.push_back({1, cfg.stage1.epochs + cfg.stage2.epochs, cfg.stage1.lr, true});
  } else {
    phases.push_back({1, cfg.stage1.epochs, cfg.stage1.lr, false});
    phases.push_back({2, cfg.stage2.epochs, cfg.stage2.lr, true});
  }
  ParameterList stack = m.stack_parameters();
  ParameterList injected = m.injected_parameters();
  ParameterList all = m.parameters();
  TrainResult result;
  std::size_t epoch = 0;
  for (const auto & ph : phases) {
    if (ph.epochs == 0) continue;
    if (!ph.stack_trainable && injected.empty()) continue;
    for (auto * p : stack) p->trainable = ph.stack_trainable;
    for (auto * p : injected) p->trainable = true;
    zero_grads(all);
    AdamState opt(ph.lr);
    for (std::size_t e = 0; e < ph.epochs; ++e) {
      ++epoch;
      std::vector<std::size_t> order(train_set.size());
      std::iota(order.begin(), order.end(), 0);
      Rng(split_seed(cfg.seed, epoch)).shuffle(order);
      double loss_sum = 0.0;
      for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
        const std::vector<std::size_t> idx(
          order.begin() + static_cast<std::ptrdiff_t>(start),
          order.begin() + static_cast<std::ptrdiff_t>(std::min(order.size(), start + cfg.batch_size)));
        const Batch b = make_batch(train_set, idx);
        const Var loss = training_loss(m, b, train_set, cfg.distill_weight);
        const double lv = loss.value().item();
        if (!std::isfinite(lv)) {
          throw NumericError("train: non-finite loss at epoch " + std::to_string(epoch));
        }
        loss_sum += lv * static_cast<double>(idx.size());
        backward(loss);
        clip_grad_norm(all, cfg.clip_norm);
        adam_step(opt, all);
      }
      HistoryRow row;
      row.epoch = epoch;
      row.stage = ph.stage;
      row.loss = loss_sum / static_cast<double>(order.size());
      row.holdout_acc = evaluate(m, holdout).accuracy;
      result.history.push_back(row);
      if (on_epoch) on_epoch(row);
    }
  }
  for (auto * p : all) p->trainable = true;
  return result;
}

}  // namespace vggdrive::training

#endif  // VGGDRIVE__TRAINING_HPP_
