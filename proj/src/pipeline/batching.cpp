// Copyright 2026 The Diff3D Authors
// SPDX-License-Identifier: Apache-2.0

#include "diff3d/pipeline/batching.hpp"

#include <algorithm>
#include <numeric>

#include "diff3d/error.hpp"

namespace diff3d::pipeline {

std::vector<clustervit::SequenceBatch> pad_and_batch(const std::vector<VolumeRecord>& records,
                                                     std::size_t n, std::size_t k,
                                                     std::size_t batch_size, Rng* rng) {
  if (n == 0 || batch_size == 0) throw InvalidArgument("padded length and batch size must be positive");
  if (records.empty()) return {};
  const std::size_t dim = records.front().slices.cols();
  for (const auto& r : records) {
    if (r.size() == 0) throw DataError("patient '" + r.id + "' has no slices");
    if (r.size() > n) {
      throw DataError("patient '" + r.id + "' has " + std::to_string(r.size()) +
                      " slices, more than the padded length N=" + std::to_string(n));
    }
    if (r.clusters.size() != r.size()) throw DataError("patient '" + r.id + "' has no cluster ids");
    for (std::size_t c : r.clusters) {
      if (c >= k) throw DataError("patient '" + r.id + "' has cluster id " + std::to_string(c));
    }
    if (r.slices.cols() != dim) throw DataError("patient '" + r.id + "' has a different dim");
  }

  std::vector<std::size_t> order(records.size());
  std::iota(order.begin(), order.end(), 0);
  if (rng) std::shuffle(order.begin(), order.end(), *rng);

  std::vector<clustervit::SequenceBatch> out;
  for (std::size_t start = 0; start < order.size(); start += batch_size) {
    const std::size_t b = std::min(batch_size, order.size() - start);
    clustervit::SequenceBatch batch;
    batch.batch = b;
    batch.length = n;
    batch.dim = dim;
    batch.features = Tensor({b, n, dim});
    batch.clusters.assign(b * n, k);
    batch.mask.assign(b * n, false);
    for (std::size_t i = 0; i < b; ++i) {
      const VolumeRecord& r = records[order[start + i]];
      std::copy(r.slices.values().begin(), r.slices.values().end(),
                batch.features.values().begin() + static_cast<long>(i * n * dim));
      for (std::size_t s = 0; s < r.size(); ++s) {
        batch.clusters[i * n + s] = r.clusters[s];
        batch.mask[i * n + s] = true;
      }
      batch.labels.push_back(r.label);
      batch.ids.push_back(r.id);
    }
    out.push_back(std::move(batch));
  }
  return out;
}

}  // namespace diff3d::pipeline
