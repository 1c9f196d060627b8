// Copyright 2026 The Diff3D Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <vector>

#include "diff3d/numerics/tensor.hpp"

namespace diff3d::diffusion {

/// Linear-β noise schedule with cumulative products.
///
/// Steps are 1-based: beta(t) for t in [1, T]. alpha_bar(0) is defined as 1 so
/// that the last DDIM step lands on the clean sample.
class NoiseSchedule {
 public:
  static NoiseSchedule linear(std::size_t steps = 1000, double beta_start = 1e-4,
                              double beta_end = 0.02);
  /// Arbitrary β table (βs[0] is β_1); checked for 0 < β ≤ ... < 1, non-decreasing.
  static NoiseSchedule from_betas(std::vector<double> betas);

  std::size_t steps() const { return betas_.size(); }
  double beta(std::size_t t) const;
  double alpha(std::size_t t) const { return 1.0 - beta(t); }
  double alpha_bar(std::size_t t) const;

 private:
  explicit NoiseSchedule(std::vector<double> betas);

  std::vector<double> betas_;
  std::vector<double> alpha_bar_;  // index 0 .. T
};

/// √ᾱ_t·x0 + √(1−ᾱ_t)·eps; t = 0 returns x0.
Tensor q_sample(const Tensor& x0, std::size_t t, const Tensor& eps, const NoiseSchedule& sched);

/// Deterministic (η = 0) DDIM update from step t to an earlier step t_prev.
Tensor ddim_step_to(const Tensor& xt, std::size_t t, std::size_t t_prev, const Tensor& eps_hat,
                    const NoiseSchedule& sched);
/// ddim_step_to(xt, t, t − 1, ...).
Tensor ddim_step(const Tensor& xt, std::size_t t, const Tensor& eps_hat,
                 const NoiseSchedule& sched);

/// n evenly strided steps τ_1 < ... < τ_n = T (descending use starts at τ_n).
std::vector<std::size_t> strided_steps(std::size_t total, std::size_t n);

}  // namespace diff3d::diffusion
