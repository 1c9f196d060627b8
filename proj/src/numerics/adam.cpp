// Copyright 2026 The Diff3D Authors
// SPDX-License-Identifier: Apache-2.0

#include "diff3d/numerics/adam.hpp"

#include <cmath>
#include <string>

#include "diff3d/error.hpp"

namespace diff3d {

Adam::Adam(std::vector<Parameter*> params, AdamConfig config)
    : params_(std::move(params)), config_(config) {
  for (Parameter* p : params_) {
    m_.emplace_back(p->value.shape());
    v_.emplace_back(p->value.shape());
    if (p->grad.shape() != p->value.shape()) p->zero_grad();
  }
}

void Adam::step() {
  for (const Parameter* p : params_) {
    if (p->grad.shape() != p->value.shape()) {
      throw ShapeError("adam: gradient of '" + p->name + "' has shape " +
                       shape_string(p->grad.shape()));
    }
    for (std::size_t i = 0; i < p->grad.size(); ++i) {
      if (!std::isfinite(p->grad[i])) {
        throw NumericalError("adam: non-finite gradient in '" + p->name + "' at element " +
                             std::to_string(i) + " (step " + std::to_string(step_ + 1) + ")");
      }
    }
  }
  ++step_;
  const double t = static_cast<double>(step_);
  const double c1 = 1.0 - std::pow(config_.beta1, t);
  const double c2 = 1.0 - std::pow(config_.beta2, t);
  for (std::size_t k = 0; k < params_.size(); ++k) {
    Parameter& p = *params_[k];
    for (std::size_t i = 0; i < p.value.size(); ++i) {
      const double g = p.grad[i];
      m_[k][i] = config_.beta1 * m_[k][i] + (1.0 - config_.beta1) * g;
      v_[k][i] = config_.beta2 * v_[k][i] + (1.0 - config_.beta2) * g * g;
      const double m_hat = m_[k][i] / c1;
      const double v_hat = v_[k][i] / c2;
      p.value[i] -= config_.lr * m_hat / (std::sqrt(v_hat) + config_.eps);
    }
    round_to_f32(p.value);
  }
}

void Adam::zero_grad() {
  for (Parameter* p : params_) p->zero_grad();
}

}  // namespace diff3d
