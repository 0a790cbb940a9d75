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

#ifndef VGGDRIVE__NUMERICS__GRAD_CHECK_HPP_
#define VGGDRIVE__NUMERICS__GRAD_CHECK_HPP_

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <string>
#include <vector>

#include "vggdrive/numerics/autograd.hpp"
#include "vggdrive/numerics/random.hpp"

namespace vggdrive
{

struct GradCheckOptions
{
  double eps{1e-5};
  // Coordinates checked per parameter; parameters at or below this size are checked exhaustively.
  std::size_t max_coords_per_param{32};
  std::uint64_t seed{0};
  // Lower bound on the error denominator; central differences carry ~1e-11 of roundoff.
  double denominator_floor{1e-6};
};

struct GradCheckReport
{
  double max_relative_error{0.0};
  std::size_t coordinates{0};
  bool non_finite{false};
  std::string worst;  // "<param>[<index>]" of the largest error

  bool passed(double tolerance) const { return !non_finite && max_relative_error < tolerance; }
};

/**
 * @brief Compares reverse-mode gradients with central differences.
 *
 * Error per coordinate is |analytic - numeric| / max(|analytic| + |numeric|, floor).
 * Frozen parameters are constants of `loss_fn`: both sides are taken as zero,
 * so they contribute exactly 0. Parameter gradients are zeroed before and after.
 */
inline GradCheckReport grad_check(
  const std::function<Var()> & loss_fn, const ParameterList & params,
  const GradCheckOptions & opts = {})
{
  GradCheckReport report;
  zero_grads(params);
  backward(loss_fn());

  Rng rng(opts.seed);
  for (auto * p : params) {
    const std::size_t n = p->value.numel();
    std::vector<std::size_t> coords;
    if (n <= opts.max_coords_per_param) {
      for (std::size_t i = 0; i < n; ++i) coords.push_back(i);
    } else {
      for (std::size_t i = 0; i < opts.max_coords_per_param; ++i) {
        coords.push_back(static_cast<std::size_t>(rng.uniform_int(0, n - 1)));
      }
    }
    for (auto i : coords) {
      ++report.coordinates;
      double analytic = p->grad[i];
      double numeric = 0.0;
      if (p->trainable) {
        const double orig = p->value[i];
        p->value[i] = orig + opts.eps;
        const double fp = loss_fn().value().item();
        p->value[i] = orig - opts.eps;
        const double fm = loss_fn().value().item();
        p->value[i] = orig;
        numeric = (fp - fm) / (2.0 * opts.eps);
      } else {
        analytic = 0.0;
      }
      if (!std::isfinite(analytic) || !std::isfinite(numeric)) {
        report.non_finite = true;
        report.max_relative_error = std::numeric_limits<double>::infinity();
        report.worst = p->name + "[" + std::to_string(i) + "]";
        continue;
      }
      const double err =
        std::abs(analytic - numeric) /
        std::max(std::abs(analytic) + std::abs(numeric), opts.denominator_floor);
      if (err > report.max_relative_error) {
        report.max_relative_error = err;
        report.worst = p->name + "[" + std::to_string(i) + "]";
      }
    }
  }
  zero_grads(params);
  return report;
}

}  // namespace vggdrive

#endif  // VGGDRIVE__NUMERICS__GRAD_CHECK_HPP_
