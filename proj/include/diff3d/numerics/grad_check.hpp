// Copyright 2026 The Diff3D Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <functional>
#include <string>
#include <vector>

#include "diff3d/numerics/tape.hpp"

namespace diff3d {

struct GradCheckOptions {
  double step = 1e-3;
  /// Combine central differences at h and h/2 as (4·D(h/2) − D(h))/3, which
  /// removes the O(h²) truncation term.
  bool richardson = true;
  /// Denominator floor of the relative error, so that pairs of
  /// (near-)zero derivatives compare by absolute difference.
  double floor = 1e-6;
};

struct GradCheckResult {
  double max_rel_error = 0.0;
  std::string worst_param;
  std::size_t worst_index = 0;
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
  std::size_t checked = 0;
};

/// Builds a scalar loss on the given tape from the current parameter values.
using ScalarFn = std::function<Var(Tape&)>;

/// Compares tape gradients of `f` against central differences for every
/// element of every parameter. Relative error is
/// |a − n| / max(|a|, |n|, floor). Parameter values are restored afterwards and
/// their grad accumulators are left zeroed.
GradCheckResult grad_check(const ScalarFn& f, const std::vector<Parameter*>& params,
                           GradCheckOptions options = {});

}  // namespace diff3d
