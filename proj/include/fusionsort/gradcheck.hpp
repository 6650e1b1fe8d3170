// Copyright 2026 The FusionSort Authors. All Rights Reserved.
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

#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <string>

#include "fusionsort/tape.hpp"

namespace fusionsort {

/// Builds a scalar loss on a fresh tape. Must be deterministic: it is called
/// once for the analytic pass and twice per perturbed coordinate.
using LossBuilder = std::function<Var(Tape&)>;

struct GradCheckResult {
  double max_rel_error = 0.0;
  std::string worst_parameter;
  std::size_t worst_index = 0;
  double analytic = 0.0;
  double numeric = 0.0;
  std::size_t coordinates = 0;
};

/// Relative error |a - n| / max(1e-8, |a| + |n|).
double relative_error(double analytic, double numeric);

/// Compares backpropagated gradients of `loss` with central differences
/// (f(p + eps) - f(p - eps)) / (2 eps) for every coordinate of `params`.
/// Parameter values are restored on return. Throws NumericalError naming the
/// parameter if any evaluation is non-finite and ConfigError for eps <= 0.
/// Batch-norm layers inside `loss` should run in eval mode.
GradCheckResult grad_check(const LossBuilder& loss, std::span<Parameter* const> params,
                           double eps = 1e-5);

}  // namespace fusionsort
