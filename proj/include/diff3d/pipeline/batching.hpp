// Copyright 2026 The Diff3D Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <vector>

#include "diff3d/clustervit/model.hpp"
#include "diff3d/pipeline/dataset.hpp"

namespace diff3d::pipeline {

/// Zero-pads each record to length n with sentinel cluster id k, in record
/// order, or shuffled by `rng` when given. The last batch holds the remainder.
/// Throws DataError (naming the patient) if a record is longer than n, lacks
/// cluster ids, or has an id outside [0, k).
std::vector<clustervit::SequenceBatch> pad_and_batch(const std::vector<VolumeRecord>& records,
                                                     std::size_t n, std::size_t k,
                                                     std::size_t batch_size, Rng* rng = nullptr);

}  // namespace diff3d::pipeline
