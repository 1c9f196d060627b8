// Copyright 2026 The Diff3D Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <random>
#include <string_view>

#include "diff3d/numerics/tensor.hpp"

namespace diff3d {

using Rng = std::mt19937_64;

std::uint64_t fnv1a64(std::string_view bytes);

/// Independent, reproducible seed for a named consumer ("kmeans", "init",
/// "dropout", ...) derived from one run seed.
std::uint64_t stream_seed(std::uint64_t seed, std::string_view name);
inline Rng make_stream(std::uint64_t seed, std::string_view name) {
  return Rng(stream_seed(seed, name));
}

Tensor normal_tensor(Shape shape, Rng& rng, double stddev = 1.0);
/// N(0, stddev²) truncated at ±2 stddev by resampling.
Tensor truncated_normal_tensor(Shape shape, Rng& rng, double stddev);
/// Inverted-dropout mask: entries are 0 with probability `rate`, else 1/(1−rate).
Tensor dropout_mask(Shape shape, double rate, Rng& rng);

}  // namespace diff3d
