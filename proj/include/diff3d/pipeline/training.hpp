// Copyright 2026 The Diff3D Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "diff3d/clustervit/model.hpp"
#include "diff3d/fusion/fusion.hpp"
#include "diff3d/pipeline/dataset.hpp"
#include "diff3d/pipeline/metrics.hpp"

namespace diff3d::pipeline {

/// Clustering transformer, risk head and global cluster attention A. Weights
/// come from the "init" stream of `seed`.
class Diff3DModel {
 public:
  Diff3DModel(const clustervit::ViTConfig& config, std::uint64_t seed);
  Diff3DModel(const Diff3DModel&) = delete;
  Diff3DModel& operator=(const Diff3DModel&) = delete;

  struct PatientOutput {
    Var score;  // R
    fusion::PatientDecomposition decomposition;
  };

  std::vector<PatientOutput> forward(Tape& tape, const clustervit::SequenceBatch& batch,
                                     const clustervit::ForwardOptions& options) const;

  const clustervit::ViTConfig& config() const { return vit_->config(); }
  ParameterSet& parameters() { return params_; }
  const ParameterSet& parameters() const { return params_; }
  const clustervit::ClusterViT& vit() const { return *vit_; }
  const fusion::GlobalClusterAttention& cluster_attention() const { return *attention_; }

 private:
  ParameterSet params_;
  std::unique_ptr<clustervit::ClusterViT> vit_;
  std::unique_ptr<fusion::GlobalClusterAttention> attention_;
};

struct TrainConfig {
  std::size_t epochs = 100;
  std::size_t batch = 4;
  double lr = 1e-4;
  std::uint64_t seed = 0;
  /// Weight each class by n / (2·n_class) in the loss.
  bool class_weighting = false;
  double threshold = 0.5;
};

struct EpochLog {
  std::size_t epoch = 0;  // 1-based
  double train_loss = 0.0;
  std::optional<double> val_loss;
  std::optional<MetricsReport> val;
};

struct TrainResult {
  std::vector<EpochLog> log;
  std::size_t best_epoch = 0;
  std::optional<double> best_val_auc;
};

using EpochCallback = std::function<void(const EpochLog&)>;

/// Adam on mean binary cross-entropy of logistic(R) over each batch.
///
/// The parameters kept at the end are those of the epoch with the highest
/// validation AUC (earliest on ties); without a defined AUC the lowest
/// validation loss decides, and without validation records the last epoch.
/// Records need cluster ids. Throws NumericalError on a non-finite loss.
TrainResult train(Diff3DModel& model, const std::vector<VolumeRecord>& train_set,
                  const std::vector<VolumeRecord>& val_set, const TrainConfig& config,
                  const EpochCallback& on_epoch = {});

struct Evaluation {
  MetricsReport metrics;
  double loss = 0.0;  // mean unweighted cross-entropy
  std::vector<double> probabilities;
  std::vector<fusion::PatientDecomposition> patients;  // with ids and labels
};

/// Inference without dropout, in record order.
Evaluation evaluate(const Diff3DModel& model, const std::vector<VolumeRecord>& records,
                    double threshold = 0.5, std::size_t batch = 16);

/// epoch,train_loss,val_loss,val_auc,val_acc,val_sens,val_spec,val_f1; missing
/// values are empty fields.
std::string epoch_log_csv(const std::vector<EpochLog>& log);

}  // namespace diff3d::pipeline
