// Copyright 2026 The Diff3D Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cmath>
#include <vector>

#include "diff3d/numerics/tensor.hpp"

namespace diff3d::testing {

/// Best spherical k-means objective over all 2^n two-cluster labelings. For a
/// fixed partition the optimal unit centroid is the normalized member sum, so
/// the objective of a labeling is Σ_k ‖Σ_{i∈k} x̂_i‖.
inline double brute_force_best_objective_k2(const Tensor& corpus) {
  const std::size_t n = corpus.rows(), d = corpus.shape()[1];
  std::vector<std::vector<double>> unit(n, std::vector<double>(d));
  for (std::size_t i = 0; i < n; ++i) {
    double s = 0.0;
    for (std::size_t j = 0; j < d; ++j) s += corpus.at(i, j) * corpus.at(i, j);
    for (std::size_t j = 0; j < d; ++j) unit[i][j] = corpus.at(i, j) / std::sqrt(s);
  }
  double best = -1.0;
  for (std::size_t mask = 0; mask < (std::size_t{1} << n); ++mask) {
    std::vector<double> a(d, 0.0), b(d, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
      auto& dst = (mask >> i) & 1 ? a : b;
      for (std::size_t j = 0; j < d; ++j) dst[j] += unit[i][j];
    }
    double na = 0.0, nb = 0.0;
    for (std::size_t j = 0; j < d; ++j) {
      na += a[j] * a[j];
      nb += b[j] * b[j];
    }
    best = std::max(best, std::sqrt(na) + std::sqrt(nb));
  }
  return best;
}

}  // namespace diff3d::testing
