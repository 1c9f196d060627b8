// Copyright 2026 The Diff3D Authors
// SPDX-License-Identifier: Apache-2.0

#include "diff3d/numerics/grad_check.hpp"

#include <algorithm>
#include <cmath>

namespace diff3d {
namespace {

double evaluate(const ScalarFn& f) {
  Tape tape;
  return f(tape).value().item();
}

}  // namespace

GradCheckResult grad_check(const ScalarFn& f, const std::vector<Parameter*>& params,
                           GradCheckOptions options) {
  for (Parameter* p : params) p->zero_grad();
  {
    Tape tape;
    Var loss = f(tape);
    tape.backward(loss);
  }
  std::vector<Tensor> analytic;
  analytic.reserve(params.size());
  for (Parameter* p : params) {
    analytic.push_back(p->grad);
    p->zero_grad();
  }

  GradCheckResult result;
  for (std::size_t k = 0; k < params.size(); ++k) {
    Parameter& p = *params[k];
    for (std::size_t i = 0; i < p.value.size(); ++i) {
      const double original = p.value[i];
      auto central = [&](double h) {
        p.value[i] = original + h;
        const double up = evaluate(f);
        p.value[i] = original - h;
        const double down = evaluate(f);
        p.value[i] = original;
        return (up - down) / (2.0 * h);
      };
      const double coarse = central(options.step);
      const double numeric =
          options.richardson ? (4.0 * central(options.step / 2.0) - coarse) / 3.0 : coarse;
      const double a = analytic[k][i];
      const double denom = std::max({std::abs(a), std::abs(numeric), options.floor});
      const double rel = std::abs(a - numeric) / denom;
      ++result.checked;
      if (rel > result.max_rel_error || result.checked == 1) {
        result.max_rel_error = std::max(result.max_rel_error, rel);
        result.worst_param = p.name;
        result.worst_index = i;
        result.worst_analytic = a;
        result.worst_numeric = numeric;
      }
    }
  }
  return result;
}

}  // namespace diff3d
