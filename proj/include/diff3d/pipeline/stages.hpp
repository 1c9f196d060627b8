// Copyright 2026 The Diff3D Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <filesystem>
#include <memory>
#include <string>
#include <vector>

#include "diff3d/diffusion/autoencoder.hpp"
#include "diff3d/diffusion/networks.hpp"
#include "diff3d/diffusion/schedule.hpp"
#include "diff3d/pipeline/checkpoint.hpp"
#include "diff3d/pipeline/config.hpp"

// One function per command of the chain
//   gen-synthetic → diffusion-train → encode → cluster → train → eval → explain
// Each reads only files produced upstream, writes its outputs atomically under
// the work directory, and records them in provenance/<command>.json
// (provenance/<command>_<split>.json for eval and explain).

namespace diff3d::pipeline {

/// Encoder plus conditional denoiser for raw slices.
struct DiffusionModel {
  ParameterSet params;
  std::unique_ptr<diffusion::MlpEncoder> encoder;
  std::unique_ptr<diffusion::ResidualMlpDenoiser> denoiser;
  diffusion::NoiseSchedule schedule;

  explicit DiffusionModel(const RunConfig& cfg);
  nlohmann::json describe(const RunConfig& cfg) const;
};

/// File layout of a run.
struct RunPaths {
  std::filesystem::path dataset, work;

  explicit RunPaths(const RunConfig& cfg);
  std::filesystem::path diffusion_checkpoint() const { return work / "diffusion.ckpt"; }
  std::filesystem::path diffusion_log() const { return work / "diffusion_log.csv"; }
  std::filesystem::path embeddings() const { return work / "embeddings"; }
  std::filesystem::path book() const { return work / "prototypes.pbk"; }
  std::filesystem::path model_checkpoint() const { return work / "model.ckpt"; }
  std::filesystem::path epoch_log() const { return work / "epoch_log.csv"; }
  std::filesystem::path provenance(const std::string& command) const {
    return work / "provenance" / (command + ".json");
  }
  /// Split manifest ("train", "val", "test" or "manifest") of raw slices or embeddings.
  std::filesystem::path raw_split(const std::string& split) const { return dataset / (split + ".json"); }
  std::filesystem::path embedded_split(const std::string& split) const {
    return embeddings() / (split + ".json");
  }
};

struct StageReport {
  std::string command;
  std::vector<std::filesystem::path> outputs;
  nlohmann::json summary = nlohmann::json::object();
};

StageReport run_gen_synthetic(const RunConfig& cfg);
StageReport run_diffusion_train(const RunConfig& cfg);
StageReport run_encode(const RunConfig& cfg);
StageReport run_cluster(const RunConfig& cfg);
StageReport run_train(const RunConfig& cfg);
/// Writes metrics_<split>.json and scores_<split>.csv.
StageReport run_eval(const RunConfig& cfg, const std::string& split = "test");
/// Writes heatmap_<split>.csv, ranking_<split>.csv, decomposition_<split>.csv
/// and representatives_<split>.json. The ranking is skipped (summary["ranking"]
/// says why) when the model predicts only one class on the split.
StageReport run_explain(const RunConfig& cfg, const std::string& split = "test");

/// Records of an embedded split with cluster ids from the saved book.
std::vector<VolumeRecord> load_clustered_split(const RunConfig& cfg, const std::string& split);
/// Model built from `cfg` with weights from the saved checkpoint.
std::unique_ptr<Diff3DModel> load_model(const RunConfig& cfg);

}  // namespace diff3d::pipeline
