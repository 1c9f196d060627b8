// Copyright 2026 The Diff3D Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "diff3d/numerics/tensor.hpp"

namespace diff3d::prototypes {

/// K unit-norm centroids learned by spherical k-means. Centroid values are held
/// at f32 precision so that a saved book assigns exactly like the fitted one.
struct PrototypeBook {
  Tensor centroids;  // [K x dim]
  std::size_t iterations = 0;
  double objective = 0.0;  // Σ_i max_k cos(x_i, μ_k) on the fitting corpus
  std::vector<double> objective_history;  // after every assignment pass
  std::size_t reseeds = 0;

  std::size_t k() const { return centroids.rows(); }
  std::size_t dim() const { return centroids.rank() == 2 ? centroids.shape()[1] : 0; }
};

struct FitOptions {
  std::size_t k = 64;
  std::size_t max_iters = 200;
  std::uint64_t seed = 0;
  /// Stop once an iteration improves the objective by less than this.
  double min_gain = 1e-7;
  /// Independent seedings; the run with the highest final objective is kept
  /// (earliest on ties).
  std::size_t restarts = 10;
};

using Assignment = std::vector<std::size_t>;

/// Spherical k-means with k-means++ seeding on cosine distance.
///
/// Rows of `corpus` are L2-normalized internally. Throws InvalidArgument when
/// the corpus has fewer rows than K or contains a zero/non-finite row.
/// Throws NumericalError if an iteration ever lowers the objective.
PrototypeBook fit(const Tensor& corpus, const FitOptions& options);

/// Continues Lloyd iterations from the centroids of `start`.
PrototypeBook refit(const Tensor& corpus, const PrototypeBook& start, const FitOptions& options);

/// argmax_k cos(x, μ_k), lowest index on ties. Invariant to positive scaling of x.
std::size_t assign(const PrototypeBook& book, std::span<const double> x);
Assignment assign_all(const PrototypeBook& book, const Tensor& corpus);

/// Σ_i cos(x_i, μ_{c_i}) for a given assignment.
double objective(const PrototypeBook& book, const Tensor& corpus, const Assignment& labels);

/// Rows scaled to unit L2 norm; throws InvalidArgument on zero or non-finite rows.
Tensor normalize_rows(const Tensor& corpus);

/// Per-cluster slice counts of one patient (ids must lie in [0, k)).
std::vector<std::size_t> cluster_counts(std::span<const std::size_t> ids, std::size_t k);
/// q_k = |{i : c_i = k}| / n. Throws InvalidArgument on an empty id list.
std::vector<double> quantify(std::span<const std::size_t> ids, std::size_t k);

/// PBK1 file: "PBK1", u32 version = 1, u32 K, u32 dim, K·dim f32 (all LE).
void save_book(const PrototypeBook& book, const std::filesystem::path& path);
PrototypeBook load_book(const std::filesystem::path& path);
std::string encode_book(const PrototypeBook& book);
PrototypeBook decode_book(std::string_view bytes, const std::string& context = "prototype book");

}  // namespace diff3d::prototypes
