// Copyright 2026 The Diff3D Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "diff3d/diffusion/networks.hpp"
#include "diff3d/diffusion/schedule.hpp"

namespace diff3d::diffusion {

/// Mean absolute error between eps and D(q_sample(x0, t, eps), t, E(x0)).
///
/// x0 and eps are [batch × dim]; one step per row. `encoder` may be null for an
/// unconditioned denoiser. Gradients reach both the denoiser and the encoder
/// through the returned node.
Var ddim_loss(Tape& tape, const Tensor& x0, std::span<const std::size_t> steps,
              const Tensor& eps, const Denoiser& denoiser, const Encoder* encoder,
              const NoiseSchedule& sched);

/// ε̂ for one batch outside of any training tape.
using NoisePredictor =
    std::function<Tensor(const Tensor& x_t, std::size_t step, const Tensor* cond)>;

NoisePredictor predictor_for(const Denoiser& denoiser);

struct Reconstruction {
  Tensor x0_hat;
  double l1_error = 0.0;  // mean |x0_hat − x0|
};

/// Strided DDIM sampling from fixed Gaussian noise (seeded) conditioned on E(x0).
Reconstruction reconstruct(const Tensor& x0, const NoisePredictor& predict, const Encoder* encoder,
                           const NoiseSchedule& sched, std::size_t n_steps,
                           std::uint64_t noise_seed);
Reconstruction reconstruct(const Tensor& x0, const Denoiser& denoiser, const Encoder* encoder,
                           const NoiseSchedule& sched, std::size_t n_steps,
                           std::uint64_t noise_seed);

/// Representations for each row of `slices`, order-preserving, rounded to f32.
/// Throws DataError when the encoder does not produce `expected_dim` features.
Tensor encode_corpus(const Tensor& slices, const Encoder& encoder, std::size_t expected_dim,
                     std::size_t chunk = 256);

struct AutoencoderTraining {
  std::size_t epochs = 100;
  std::size_t batch = 64;
  double lr = 1e-4;
  std::uint64_t seed = 0;
  /// Train at this single step instead of t ~ U{1..T} (0 = uniform).
  std::size_t fixed_step = 0;
  /// Called after every epoch with the 1-based epoch and its mean loss.
  std::function<void(std::size_t, double)> on_epoch = nullptr;
};

/// Loss on a fixed (seeded) draw of steps and noise for every row of `data`.
double probe_loss(const Tensor& data, const Denoiser& denoiser, const Encoder* encoder,
                  const NoiseSchedule& sched, std::uint64_t seed);

/// Jointly trains denoiser and encoder on rows of `data`.
/// Returns the mean training loss per epoch.
std::vector<double> train_autoencoder(const Tensor& data, const Denoiser& denoiser,
                                      const Encoder* encoder, const NoiseSchedule& sched,
                                      const AutoencoderTraining& options);

}  // namespace diff3d::diffusion
