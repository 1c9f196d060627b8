// Copyright 2026 The Diff3D Authors
// SPDX-License-Identifier: Apache-2.0

#include "diff3d/diffusion/networks.hpp"

#include <cmath>

#include "diff3d/error.hpp"
#include "diff3d/numerics/ops.hpp"

namespace diff3d::diffusion {
namespace {

Parameter& dense_weight(ParameterSet& reg, const std::string& name, std::size_t in,
                        std::size_t out, Rng& rng) {
  return reg.add(name, truncated_normal_tensor({in, out}, rng, 1.0 / std::sqrt(double(in))));
}

Var dense(Tape& tape, Var x, Parameter* w, Parameter* b) {
  return add_bias(matmul(x, tape.param(*w)), tape.param(*b));
}

void require_cols(Var x, std::size_t cols, const char* what) {
  if (x.value().rank() != 2 || x.value().shape()[1] != cols) {
    throw ShapeError(std::string(what) + ": expected " + std::to_string(cols) +
                     " columns, got " + shape_string(x.shape()));
  }
}

}  // namespace

Tensor timestep_embedding(std::span<const std::size_t> steps, std::size_t dim) {
  if (dim % 2 != 0) throw InvalidArgument("timestep embedding dimension must be even");
  const std::size_t half = dim / 2;
  Tensor emb({steps.size(), dim});
  for (std::size_t r = 0; r < steps.size(); ++r) {
    for (std::size_t i = 0; i < half; ++i) {
      const double freq = std::pow(10000.0, -static_cast<double>(i) / static_cast<double>(half));
      const double angle = static_cast<double>(steps[r]) * freq;
      emb.at(r, i) = std::sin(angle);
      emb.at(r, half + i) = std::cos(angle);
    }
  }
  return emb;
}

ResidualMlpDenoiser::ResidualMlpDenoiser(ParameterSet& reg, const std::string& prefix,
                                         MlpConfig config, Rng& rng)
    : config_(config) {
  const std::size_t in = config.data_dim + config.time_dim + config.cond_dim;
  w1_ = &dense_weight(reg, prefix + "w1", in, config.hidden, rng);
  b1_ = &reg.add(prefix + "b1", Tensor({config.hidden}));
  w2_ = &dense_weight(reg, prefix + "w2", config.hidden, config.hidden, rng);
  b2_ = &reg.add(prefix + "b2", Tensor({config.hidden}));
  w3_ = &dense_weight(reg, prefix + "w3", config.hidden, config.data_dim, rng);
  b3_ = &reg.add(prefix + "b3", Tensor({config.data_dim}));
}

Var ResidualMlpDenoiser::predict(Tape& tape, Var x_t, std::span<const std::size_t> steps,
                                 std::optional<Var> cond) const {
  require_cols(x_t, config_.data_dim, "denoiser input");
  if (steps.size() != x_t.value().rows()) throw ShapeError("denoiser: one timestep per row");
  std::vector<Var> parts{x_t};
  if (config_.time_dim > 0) {
    parts.push_back(tape.constant(timestep_embedding(steps, config_.time_dim)));
  }
  if (config_.cond_dim > 0) {
    if (!cond) throw InvalidArgument("conditional denoiser called without a representation");
    require_cols(*cond, config_.cond_dim, "denoiser condition");
    parts.push_back(*cond);
  }
  Var h1 = gelu(dense(tape, concat_cols(parts), w1_, b1_));
  Var h2 = add(h1, gelu(dense(tape, h1, w2_, b2_)));
  return dense(tape, h2, w3_, b3_);
}

std::vector<Parameter*> ResidualMlpDenoiser::parameters() const {
  return {w1_, b1_, w2_, b2_, w3_, b3_};
}

MlpEncoder::MlpEncoder(ParameterSet& reg, const std::string& prefix, std::size_t data_dim,
                       std::size_t hidden, std::size_t repr_dim, Rng& rng)
    : data_dim_(data_dim), repr_dim_(repr_dim) {
  w1_ = &dense_weight(reg, prefix + "w1", data_dim, hidden, rng);
  b1_ = &reg.add(prefix + "b1", Tensor({hidden}));
  w2_ = &dense_weight(reg, prefix + "w2", hidden, hidden, rng);
  b2_ = &reg.add(prefix + "b2", Tensor({hidden}));
  w3_ = &dense_weight(reg, prefix + "w3", hidden, repr_dim, rng);
  b3_ = &reg.add(prefix + "b3", Tensor({repr_dim}));
}

Var MlpEncoder::encode(Tape& tape, Var x0) const {
  require_cols(x0, data_dim_, "encoder input");
  Var h1 = gelu(dense(tape, x0, w1_, b1_));
  Var h2 = add(h1, gelu(dense(tape, h1, w2_, b2_)));
  return dense(tape, h2, w3_, b3_);
}

std::vector<Parameter*> MlpEncoder::parameters() const { return {w1_, b1_, w2_, b2_, w3_, b3_}; }

LinearDenoiser::LinearDenoiser(ParameterSet& reg, const std::string& prefix, std::size_t data_dim,
                               double weight, double bias)
    : data_dim_(data_dim) {
  weight_ = &reg.add(prefix + "weight", Tensor::scalar(weight));
  bias_ = &reg.add(prefix + "bias", Tensor::scalar(bias));
}

Var LinearDenoiser::predict(Tape& tape, Var x_t, std::span<const std::size_t>,
                            std::optional<Var>) const {
  require_cols(x_t, data_dim_, "linear denoiser input");
  const std::size_t n = x_t.value().size();
  // Broadcast the two scalars to x_t's shape through a ones-column product.
  Var ones = tape.constant(Tensor({n, 1}, 1.0));
  Var w = reshape(matmul(ones, reshape(tape.param(*weight_), {1, 1})), x_t.shape());
  Var c = reshape(matmul(ones, reshape(tape.param(*bias_), {1, 1})), x_t.shape());
  return add(mul(w, x_t), c);
}

}  // namespace diff3d::diffusion
