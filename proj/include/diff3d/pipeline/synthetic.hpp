// Copyright 2026 The Diff3D Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "diff3d/pipeline/dataset.hpp"

namespace diff3d::pipeline {

/// Toy cohort. Each slice is a noisy copy of one of `k_true` unit prototypes.
/// A patient of class y draws round(π_y·n) slices from the lesion prototypes
/// and the rest from the others, with π_0 = 0.1 and π_1 = 0.1 + 0.4·class_signal.
struct SyntheticConfig {
  std::size_t patients = 200;
  std::size_t k_true = 8;
  std::size_t dim = 16;
  std::uint64_t seed = 0;
  double class_signal = 1.0;
  double noise = 0.3;  // norm of the additive noise relative to a unit prototype
  std::size_t lesion_prototypes = 2;
  std::size_t min_slices = 8;
  std::size_t max_slices = 64;
  double val_fraction = 0.1;
  double test_fraction = 0.4;

  void validate() const;
  double lesion_fraction(int label) const { return 0.1 + (label == 1 ? 0.4 * class_signal : 0.0); }
};

struct GroundTruth {
  Tensor prototypes;               // [k_true x dim]
  std::vector<std::size_t> lesion;  // ascending prototype ids
  std::map<std::string, std::vector<std::size_t>> slice_sources;  // patient → prototype per slice

  bool is_lesion(std::size_t prototype) const;
};

struct SyntheticDataset {
  Manifest all, train, val, test;  // splits are stratified by label
  GroundTruth truth;
};

/// Writes slices/<id>.slq, manifest.json, train.json, val.json, test.json and
/// ground_truth.json under `out_dir`. Seed-deterministic: identical bytes for
/// identical configs.
SyntheticDataset gen_synthetic(const SyntheticConfig& config, const std::filesystem::path& out_dir);

GroundTruth read_ground_truth(const std::filesystem::path& path);

}  // namespace diff3d::pipeline
