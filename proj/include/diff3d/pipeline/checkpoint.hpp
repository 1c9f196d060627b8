// Copyright 2026 The Diff3D Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <json.hpp>

#include "diff3d/numerics/parameter_set.hpp"

namespace diff3d::pipeline {

/// CKP1: "CKP1", u32 version = 1, length-prefixed config JSON, u32 n_params,
/// then per parameter a length-prefixed name, u32 rank, u32 extents and f32
/// data (all LE). The config snapshot carries "seed" and "epoch".
struct Checkpoint {
  nlohmann::json config = nlohmann::json::object();
  std::vector<std::pair<std::string, Tensor>> tensors;

  const Tensor* find(const std::string& name) const;
};

Checkpoint snapshot(const ParameterSet& params, nlohmann::json config);
/// Copies every registered parameter from the checkpoint. Throws DataError
/// for a missing or unexpected name and ShapeError for a shape mismatch.
void restore(const Checkpoint& ckpt, ParameterSet& params);

std::string encode_checkpoint(const Checkpoint& ckpt);
Checkpoint decode_checkpoint(std::string_view bytes, const std::string& context = "checkpoint");
void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace diff3d::pipeline
