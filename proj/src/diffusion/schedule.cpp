// Copyright 2026 The Diff3D Authors
// SPDX-License-Identifier: Apache-2.0

#include "diff3d/diffusion/schedule.hpp"

#include <cmath>
#include <string>

#include "diff3d/error.hpp"

namespace diff3d::diffusion {

NoiseSchedule NoiseSchedule::linear(std::size_t steps, double beta_start, double beta_end) {
  if (steps == 0) throw InvalidArgument("noise schedule needs at least one step");
  std::vector<double> betas(steps);
  for (std::size_t i = 0; i < steps; ++i) {
    const double frac = steps == 1 ? 0.0 : static_cast<double>(i) / static_cast<double>(steps - 1);
    betas[i] = beta_start + (beta_end - beta_start) * frac;
  }
  return NoiseSchedule(std::move(betas));
}

NoiseSchedule NoiseSchedule::from_betas(std::vector<double> betas) {
  return NoiseSchedule(std::move(betas));
}

NoiseSchedule::NoiseSchedule(std::vector<double> betas) : betas_(std::move(betas)) {
  if (betas_.empty()) throw InvalidArgument("noise schedule needs at least one step");
  for (std::size_t i = 0; i < betas_.size(); ++i) {
    if (!(betas_[i] > 0.0 && betas_[i] < 1.0)) {
      throw InvalidArgument("beta_" + std::to_string(i + 1) + " must lie in (0, 1)");
    }
    if (i > 0 && betas_[i] < betas_[i - 1]) {
      throw InvalidArgument("beta table must be non-decreasing");
    }
  }
  alpha_bar_.resize(betas_.size() + 1);
  alpha_bar_[0] = 1.0;
  for (std::size_t t = 1; t <= betas_.size(); ++t) {
    alpha_bar_[t] = alpha_bar_[t - 1] * (1.0 - betas_[t - 1]);
  }
}

double NoiseSchedule::beta(std::size_t t) const {
  if (t < 1 || t > betas_.size()) {
    throw InvalidArgument("step " + std::to_string(t) + " outside [1, " +
                          std::to_string(betas_.size()) + "]");
  }
  return betas_[t - 1];
}

double NoiseSchedule::alpha_bar(std::size_t t) const {
  if (t > betas_.size()) {
    throw InvalidArgument("step " + std::to_string(t) + " outside [0, " +
                          std::to_string(betas_.size()) + "]");
  }
  return alpha_bar_[t];
}

Tensor q_sample(const Tensor& x0, std::size_t t, const Tensor& eps, const NoiseSchedule& sched) {
  if (x0.shape() != eps.shape()) {
    throw ShapeError("q_sample: x0 " + shape_string(x0.shape()) + " vs eps " +
                     shape_string(eps.shape()));
  }
  const double ab = sched.alpha_bar(t);
  const double a = std::sqrt(ab), b = std::sqrt(1.0 - ab);
  Tensor out(x0.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a * x0[i] + b * eps[i];
  return out;
}

Tensor ddim_step_to(const Tensor& xt, std::size_t t, std::size_t t_prev, const Tensor& eps_hat,
                    const NoiseSchedule& sched) {
  if (t < 1 || t > sched.steps()) {
    throw InvalidArgument("ddim_step: step " + std::to_string(t) + " outside [1, " +
                          std::to_string(sched.steps()) + "]");
  }
  if (t_prev >= t) throw InvalidArgument("ddim_step: target step must precede the current one");
  if (xt.shape() != eps_hat.shape()) throw ShapeError("ddim_step: x_t and eps_hat differ in shape");
  const double ab = sched.alpha_bar(t), ab_prev = sched.alpha_bar(t_prev);
  const double sqrt_ab = std::sqrt(ab), sqrt_1mab = std::sqrt(1.0 - ab);
  const double sqrt_ab_prev = std::sqrt(ab_prev), sqrt_1mab_prev = std::sqrt(1.0 - ab_prev);
  Tensor out(xt.shape());
  for (std::size_t i = 0; i < out.size(); ++i) {
    const double x0_pred = (xt[i] - sqrt_1mab * eps_hat[i]) / sqrt_ab;
    out[i] = sqrt_ab_prev * x0_pred + sqrt_1mab_prev * eps_hat[i];
  }
  return out;
}

Tensor ddim_step(const Tensor& xt, std::size_t t, const Tensor& eps_hat,
                 const NoiseSchedule& sched) {
  if (t < 1) throw InvalidArgument("ddim_step: step 0 has no predecessor");
  return ddim_step_to(xt, t, t - 1, eps_hat, sched);
}

std::vector<std::size_t> strided_steps(std::size_t total, std::size_t n) {
  if (n == 0 || n > total) {
    throw InvalidArgument("sampling steps must lie in [1, " + std::to_string(total) + "]");
  }
  std::vector<std::size_t> taus(n);
  for (std::size_t j = 1; j <= n; ++j) taus[j - 1] = (j * total + n - 1) / n;
  return taus;
}

}  // namespace diff3d::diffusion
