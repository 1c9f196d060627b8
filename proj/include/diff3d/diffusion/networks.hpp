// Copyright 2026 The Diff3D Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "diff3d/numerics/parameter_set.hpp"
#include "diff3d/numerics/random.hpp"

namespace diff3d::diffusion {

/// Noise predictor ε̂ = D(x_t, t, z). Output has the shape of x_t; evaluation is
/// deterministic given its inputs and parameters.
class Denoiser {
 public:
  virtual ~Denoiser() = default;

  /// x_t is [batch × data_dim]; `steps` holds one timestep per row; `cond` is
  /// [batch × cond_dim] when cond_dim() > 0.
  virtual Var predict(Tape& tape, Var x_t, std::span<const std::size_t> steps,
                      std::optional<Var> cond) const = 0;
  virtual std::size_t data_dim() const = 0;
  virtual std::size_t cond_dim() const = 0;
  virtual std::vector<Parameter*> parameters() const = 0;
};

/// Semantic encoder z = E(x_0), [batch × data_dim] → [batch × repr_dim].
class Encoder {
 public:
  virtual ~Encoder() = default;

  virtual Var encode(Tape& tape, Var x0) const = 0;
  virtual std::size_t data_dim() const = 0;
  virtual std::size_t repr_dim() const = 0;
  virtual std::vector<Parameter*> parameters() const = 0;
};

/// Sinusoidal embedding [sin(t·ω_i), cos(t·ω_i)], ω_i = 10000^(−i/(dim/2)).
Tensor timestep_embedding(std::span<const std::size_t> steps, std::size_t dim);

struct MlpConfig {
  std::size_t data_dim = 16;
  std::size_t hidden = 64;
  std::size_t time_dim = 16;
  std::size_t cond_dim = 512;  // 0: unconditioned
};

/// Residual MLP: h1 = gelu([x_t; emb(t); z]·W1 + b1), h2 = h1 + gelu(h1·W2 + b2),
/// ε̂ = h2·W3 + b3.
class ResidualMlpDenoiser final : public Denoiser {
 public:
  ResidualMlpDenoiser(ParameterSet& registry, const std::string& prefix, MlpConfig config,
                      Rng& rng);

  Var predict(Tape& tape, Var x_t, std::span<const std::size_t> steps,
              std::optional<Var> cond) const override;
  std::size_t data_dim() const override { return config_.data_dim; }
  std::size_t cond_dim() const override { return config_.cond_dim; }
  std::vector<Parameter*> parameters() const override;

 private:
  MlpConfig config_;
  Parameter* w1_;
  Parameter* b1_;
  Parameter* w2_;
  Parameter* b2_;
  Parameter* w3_;
  Parameter* b3_;
};

/// The first half of the denoiser's stack followed by a projection to repr_dim:
/// h1 = gelu(x0·W1 + b1), h2 = h1 + gelu(h1·W2 + b2), z = h2·W3 + b3.
class MlpEncoder final : public Encoder {
 public:
  MlpEncoder(ParameterSet& registry, const std::string& prefix, std::size_t data_dim,
             std::size_t hidden, std::size_t repr_dim, Rng& rng);

  Var encode(Tape& tape, Var x0) const override;
  std::size_t data_dim() const override { return data_dim_; }
  std::size_t repr_dim() const override { return repr_dim_; }
  std::vector<Parameter*> parameters() const override;

 private:
  std::size_t data_dim_;
  std::size_t repr_dim_;
  Parameter* w1_;
  Parameter* b1_;
  Parameter* w2_;
  Parameter* b2_;
  Parameter* w3_;
  Parameter* b3_;
};

/// ε̂ = w·x_t + c elementwise with two scalar parameters; ignores t and z.
class LinearDenoiser final : public Denoiser {
 public:
  LinearDenoiser(ParameterSet& registry, const std::string& prefix, std::size_t data_dim = 1,
                 double weight = 0.0, double bias = 0.0);

  Var predict(Tape& tape, Var x_t, std::span<const std::size_t> steps,
              std::optional<Var> cond) const override;
  std::size_t data_dim() const override { return data_dim_; }
  std::size_t cond_dim() const override { return 0; }
  std::vector<Parameter*> parameters() const override { return {weight_, bias_}; }

  double weight() const { return weight_->value.item(); }
  double bias() const { return bias_->value.item(); }

 private:
  std::size_t data_dim_;
  Parameter* weight_;
  Parameter* bias_;
};

}  // namespace diff3d::diffusion
