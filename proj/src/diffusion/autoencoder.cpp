// Copyright 2026 The Diff3D Authors
// SPDX-License-Identifier: Apache-2.0

#include "diff3d/diffusion/autoencoder.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "diff3d/error.hpp"
#include "diff3d/numerics/adam.hpp"
#include "diff3d/numerics/ops.hpp"

namespace diff3d::diffusion {
namespace {

Tensor rows_of(const Tensor& data, std::span<const std::size_t> idx) {
  const std::size_t d = data.shape()[1];
  Tensor out({idx.size(), d});
  for (std::size_t r = 0; r < idx.size(); ++r) {
    const auto src = data.row(idx[r]);
    std::copy(src.begin(), src.end(), out.row(r).begin());
  }
  return out;
}

Tensor noisy_batch(const Tensor& x0, std::span<const std::size_t> steps, const Tensor& eps,
                   const NoiseSchedule& sched) {
  const std::size_t d = x0.shape()[1];
  Tensor xt(x0.shape());
  for (std::size_t r = 0; r < x0.rows(); ++r) {
    const double ab = sched.alpha_bar(steps[r]);
    const double a = std::sqrt(ab), b = std::sqrt(1.0 - ab);
    for (std::size_t j = 0; j < d; ++j) xt.at(r, j) = a * x0.at(r, j) + b * eps.at(r, j);
  }
  return xt;
}

void require_batch(const Tensor& x0, std::span<const std::size_t> steps, const Tensor& eps,
                   const NoiseSchedule& sched) {
  if (x0.rank() != 2) throw ShapeError("ddim_loss: x0 must be [batch x dim]");
  if (x0.shape() != eps.shape()) throw ShapeError("ddim_loss: x0 and eps differ in shape");
  if (steps.size() != x0.rows()) throw ShapeError("ddim_loss: one step per row required");
  for (std::size_t t : steps) {
    if (t < 1 || t > sched.steps()) {
      throw InvalidArgument("ddim_loss: step " + std::to_string(t) + " outside [1, " +
                            std::to_string(sched.steps()) + "]");
    }
  }
}

}  // namespace

Var ddim_loss(Tape& tape, const Tensor& x0, std::span<const std::size_t> steps,
              const Tensor& eps, const Denoiser& denoiser, const Encoder* encoder,
              const NoiseSchedule& sched) {
  require_batch(x0, steps, eps, sched);
  std::optional<Var> z;
  if (encoder != nullptr) z = encoder->encode(tape, tape.constant(x0));
  Var xt = tape.constant(noisy_batch(x0, steps, eps, sched));
  Var eps_hat = denoiser.predict(tape, xt, steps, z);
  return mean(abs(sub(tape.constant(eps), eps_hat)));
}

NoisePredictor predictor_for(const Denoiser& denoiser) {
  return [&denoiser](const Tensor& x_t, std::size_t step, const Tensor* cond) {
    Tape tape;
    std::vector<std::size_t> steps(x_t.rows(), step);
    std::optional<Var> z;
    if (cond != nullptr) z = tape.constant(*cond);
    return denoiser.predict(tape, tape.constant(x_t), steps, z).value();
  };
}

Reconstruction reconstruct(const Tensor& x0, const NoisePredictor& predict, const Encoder* encoder,
                           const NoiseSchedule& sched, std::size_t n_steps,
                           std::uint64_t noise_seed) {
  if (x0.rank() != 2) throw ShapeError("reconstruct: x0 must be [batch x dim]");
  std::optional<Tensor> z;
  if (encoder != nullptr) {
    Tape tape;
    z = encoder->encode(tape, tape.constant(x0)).value();
  }
  const std::vector<std::size_t> taus = strided_steps(sched.steps(), n_steps);
  Rng rng(noise_seed);
  Tensor x = normal_tensor(x0.shape(), rng);
  for (std::size_t j = taus.size(); j-- > 0;) {
    const std::size_t t = taus[j];
    const std::size_t t_prev = j == 0 ? 0 : taus[j - 1];
    Tensor eps_hat = predict(x, t, z ? &*z : nullptr);
    x = ddim_step_to(x, t, t_prev, eps_hat, sched);
  }
  Reconstruction out;
  double err = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) err += std::abs(x[i] - x0[i]);
  out.l1_error = x.empty() ? 0.0 : err / static_cast<double>(x.size());
  out.x0_hat = std::move(x);
  return out;
}

Reconstruction reconstruct(const Tensor& x0, const Denoiser& denoiser, const Encoder* encoder,
                           const NoiseSchedule& sched, std::size_t n_steps,
                           std::uint64_t noise_seed) {
  return reconstruct(x0, predictor_for(denoiser), encoder, sched, n_steps, noise_seed);
}

Tensor encode_corpus(const Tensor& slices, const Encoder& encoder, std::size_t expected_dim,
                     std::size_t chunk) {
  if (encoder.repr_dim() != expected_dim) {
    throw DataError("encoder produces " + std::to_string(encoder.repr_dim()) +
                    "-dimensional representations, configuration expects " +
                    std::to_string(expected_dim));
  }
  const std::size_t n = slices.rows();
  Tensor out({n, expected_dim});
  if (n == 0) return out;
  if (slices.rank() != 2 || slices.shape()[1] != encoder.data_dim()) {
    throw DataError("slices of shape " + shape_string(slices.shape()) + " do not match encoder input " +
                    std::to_string(encoder.data_dim()));
  }
  std::vector<std::size_t> idx;
  for (std::size_t start = 0; start < n; start += chunk) {
    const std::size_t end = std::min(n, start + chunk);
    idx.resize(end - start);
    std::iota(idx.begin(), idx.end(), start);
    Tape tape;
    const Tensor z = encoder.encode(tape, tape.constant(rows_of(slices, idx))).value();
    if (z.rank() != 2 || z.shape()[1] != expected_dim) {
      throw DataError("encoder output " + shape_string(z.shape()) + " does not have " +
                      std::to_string(expected_dim) + " features");
    }
    std::copy(z.values().begin(), z.values().end(), out.row(start).begin());
  }
  round_to_f32(out);
  return out;
}

double probe_loss(const Tensor& data, const Denoiser& denoiser, const Encoder* encoder,
                  const NoiseSchedule& sched, std::uint64_t seed) {
  Rng rng = make_stream(seed, "diffusion.probe");
  std::uniform_int_distribution<std::size_t> step_dist(1, sched.steps());
  std::vector<std::size_t> steps(data.rows());
  for (auto& t : steps) t = step_dist(rng);
  Tensor eps = normal_tensor(data.shape(), rng);
  Tape tape;
  return ddim_loss(tape, data, steps, eps, denoiser, encoder, sched).value().item();
}

std::vector<double> train_autoencoder(const Tensor& data, const Denoiser& denoiser,
                                      const Encoder* encoder, const NoiseSchedule& sched,
                                      const AutoencoderTraining& options) {
  if (data.rank() != 2 || data.rows() == 0) throw InvalidArgument("autoencoder needs training rows");
  if (options.batch == 0) throw InvalidArgument("batch size must be positive");
  std::vector<Parameter*> params = denoiser.parameters();
  if (encoder != nullptr) {
    for (Parameter* p : encoder->parameters()) params.push_back(p);
  }
  Adam opt(params, {.lr = options.lr});
  Rng shuffle_rng = make_stream(options.seed, "diffusion.shuffle");
  Rng noise_rng = make_stream(options.seed, "diffusion.noise");
  std::uniform_int_distribution<std::size_t> step_dist(1, sched.steps());

  std::vector<std::size_t> order(data.rows());
  std::iota(order.begin(), order.end(), 0);
  std::vector<double> history;
  for (std::size_t epoch = 0; epoch < options.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), shuffle_rng);
    double total = 0.0;
    std::size_t batches = 0;
    for (std::size_t start = 0; start < order.size(); start += options.batch) {
      const std::size_t end = std::min(order.size(), start + options.batch);
      std::span<const std::size_t> idx(order.data() + start, end - start);
      Tensor x0 = rows_of(data, idx);
      std::vector<std::size_t> steps(idx.size());
      for (auto& t : steps) t = options.fixed_step ? options.fixed_step : step_dist(noise_rng);
      Tensor eps = normal_tensor(x0.shape(), noise_rng);

      opt.zero_grad();
      Tape tape;
      Var loss = ddim_loss(tape, x0, steps, eps, denoiser, encoder, sched);
      const double value = loss.value().item();
      if (!std::isfinite(value)) {
        throw NumericalError("autoencoder loss is not finite at epoch " + std::to_string(epoch) +
                             ", batch " + std::to_string(batches));
      }
      tape.backward(loss);
      opt.step();
      total += value;
      ++batches;
    }
    history.push_back(total / static_cast<double>(batches));
    if (options.on_epoch) options.on_epoch(epoch + 1, history.back());
  }
  return history;
}

}  // namespace diff3d::diffusion
