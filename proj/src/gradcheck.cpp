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

#include "fusionsort/gradcheck.hpp"

#include <algorithm>
#include <cmath>

#include "fusionsort/errors.hpp"

namespace fusionsort {

double relative_error(double analytic, double numeric) {
  return std::abs(analytic - numeric) / std::max(1e-8, std::abs(analytic) + std::abs(numeric));
}

namespace {

double evaluate(const LossBuilder& loss, const std::string& context) {
  Tape tape;
  const Var out = loss(tape);
  if (out.value().numel() != 1) {
    throw ShapeError("grad_check: loss must be a scalar, got " + shape_to_string(out.shape()));
  }
  const double v = out.value()[0];
  if (!std::isfinite(v)) {
    throw NumericalError("grad_check: non-finite loss while perturbing " + context);
  }
  return v;
}

}  // namespace

GradCheckResult grad_check(const LossBuilder& loss, std::span<Parameter* const> params, double eps) {
  if (!(eps > 0.0)) throw ConfigError("grad_check: eps must be positive");

  for (Parameter* p : params) p->zero_grad();
  {
    Tape tape;
    const Var out = loss(tape);
    if (!std::isfinite(out.value()[0])) {
      throw NumericalError("grad_check: non-finite loss at the unperturbed point");
    }
    tape.backward(out);
  }

  GradCheckResult result;
  for (Parameter* p : params) {
    for (std::size_t i = 0; i < p->value.numel(); ++i) {
      const double original = p->value[i];
      const std::string where = p->name + "[" + std::to_string(i) + "]";
      p->value[i] = original + eps;
      const double plus = evaluate(loss, where);
      p->value[i] = original - eps;
      const double minus = evaluate(loss, where);
      p->value[i] = original;

      const double numeric = (plus - minus) / (2.0 * eps);
      const double analytic = p->grad[i];
      const double err = relative_error(analytic, numeric);
      ++result.coordinates;
      if (result.worst_parameter.empty() || err > result.max_rel_error) {
        result.max_rel_error = err;
        result.worst_parameter = p->name;
        result.worst_index = i;
        result.analytic = analytic;
        result.numeric = numeric;
      }
    }
  }
  return result;
}

}  // namespace fusionsort
