// Copyright 2026 The Diff3D Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <string>

#include <json.hpp>

#include "diff3d/clustervit/model.hpp"
#include "diff3d/pipeline/synthetic.hpp"
#include "diff3d/pipeline/training.hpp"

namespace diff3d::pipeline {

struct DiffusionSettings {
  std::size_t hidden = 64;
  std::size_t time_dim = 16;
  std::size_t steps = 1000;  // T
  double beta_start = 1e-4;
  double beta_end = 0.02;
  std::size_t epochs = 100;
  std::size_t batch = 64;
  double lr = 1e-4;
};

struct PrototypeSettings {
  std::size_t max_iters = 200;
  std::size_t restarts = 10;
};

/// Everything a chain of commands needs. One seed drives every stage through
/// named streams.
struct RunConfig {
  std::uint64_t seed = 0;
  SyntheticConfig data;        // data.dim is the raw slice dim; data.seed is ignored
  DiffusionSettings diffusion;
  clustervit::ViTConfig model;  // model.d_repr is the encoder output dim
  TrainConfig train;           // train.seed is ignored
  PrototypeSettings prototypes;
  std::size_t top_n = 5;       // representative slices per cluster
  std::string work_dir = "work";
  std::string dataset_dir;     // empty: <work_dir>/dataset

  /// Throws InvalidArgument on inconsistent values.
  void validate() const;
  std::string dataset_path() const;

  SyntheticConfig synthetic() const;
  TrainConfig training() const;
};

/// Nested JSON form. Paths are omitted unless `with_paths`.
nlohmann::json config_to_json(const RunConfig& cfg, bool with_paths = true);
/// Overlays `j` onto `base`. Unknown keys are rejected with InvalidArgument.
RunConfig config_from_json(const nlohmann::json& j, RunConfig base = {});

/// 16 hex digits of FNV-1a over the path-free canonical JSON.
std::string config_hash(const RunConfig& cfg);

nlohmann::json vit_to_json(const clustervit::ViTConfig& c);

}  // namespace diff3d::pipeline
