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

#ifndef VGGDRIVE__NUMERICS__ADAM_HPP_
#define VGGDRIVE__NUMERICS__ADAM_HPP_

#include <cmath>
#include <cstdint>
#include <string>
#include <unordered_map>

#include "vggdrive/numerics/autograd.hpp"

namespace vggdrive
{

struct AdamMoments
{
  Tensor first;
  Tensor second;
};

/// Bias-corrected Adam. Moments are keyed by parameter name.
struct AdamState
{
  explicit AdamState(double lr_, double beta1_ = 0.9, double beta2_ = 0.999, double eps_ = 1e-8)
  : lr(lr_), beta1(beta1_), beta2(beta2_), eps(eps_)
  {
    if (!(lr > 0.0)) {
      throw ConfigError("adam learning rate must be positive, got " + std::to_string(lr));
    }
  }

  double lr;
  double beta1;
  double beta2;
  double eps;
  std::uint64_t step{0};
  std::unordered_map<std::string, AdamMoments> moments;
};

/// One update of every trainable parameter, then all gradients are zeroed.
inline void adam_step(AdamState & state, const ParameterList & params)
{
  if (!(state.lr > 0.0)) {
    throw ConfigError("adam learning rate must be positive");
  }
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double c1 = 1.0 - std::pow(state.beta1, t);
  const double c2 = 1.0 - std::pow(state.beta2, t);
  for (auto * p : params) {
    if (p->trainable) {
      auto [it, fresh] = state.moments.try_emplace(p->name);
      auto & m = it->second;
      if (fresh) {
        m.first = Tensor(p->value.shape(), 0.0);
        m.second = Tensor(p->value.shape(), 0.0);
      } else if (m.first.shape() != p->value.shape()) {
        throw DimensionError("adam moment shape mismatch for " + p->name);
      }
      auto v = p->value.data();
      const auto g = p->grad.data();
      auto m1 = m.first.data();
      auto m2 = m.second.data();
      for (std::size_t i = 0; i < v.size(); ++i) {
        m1[i] = state.beta1 * m1[i] + (1.0 - state.beta1) * g[i];
        m2[i] = state.beta2 * m2[i] + (1.0 - state.beta2) * g[i] * g[i];
        const double mhat = m1[i] / c1;
        const double vhat = m2[i] / c2;
        v[i] -= state.lr * mhat / (std::sqrt(vhat) + state.eps);
      }
    }
    p->zero_grad();
  }
}

/// Rescales trainable gradients so their global L2 norm is at most `max_norm`.
/// Returns the pre-clip norm.
inline double clip_grad_norm(const ParameterList & params, double max_norm)
{
  double sq = 0.0;
  for (const auto * p : params) {
    if (!p->trainable) continue;
    for (double g : p->grad.data()) sq += g * g;
  }
  const double norm = std::sqrt(sq);
  if (norm > max_norm && norm > 0.0) {
    const double f = max_norm / norm;
    for (auto * p : params) {
      if (!p->trainable) continue;
      for (auto & g : p->grad.data()) g *= f;
    }
  }
  return norm;
}

}  // namespace vggdrive

#endif  // VGGDRIVE__NUMERICS__ADAM_HPP_
