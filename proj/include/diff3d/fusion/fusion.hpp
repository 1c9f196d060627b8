// Copyright 2026 The Diff3D Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "diff3d/numerics/parameter_set.hpp"
#include "diff3d/prototypes/spherical_kmeans.hpp"

namespace diff3d::fusion {

/// Learnable per-cluster weights A, shared by all patients. Unconstrained;
/// starts at all ones.
class GlobalClusterAttention {
 public:
  GlobalClusterAttention(ParameterSet& registry, std::size_t k, const std::string& name = "fusion.A");

  Parameter& weights() const { return *a_; }
  std::size_t k() const { return a_->value.size(); }
  std::vector<Parameter*> parameters() const { return {a_}; }

 private:
  Parameter* a_;
};

/// Per-cluster breakdown of one patient score. Absent clusters have
/// mean_risk = ratio = heat = contribution = 0.
struct PatientDecomposition {
  std::string patient_id;
  int label = -1;  // -1 when unknown
  std::vector<double> mean_risk;     // r̄_k
  std::vector<double> ratio;         // q_k
  std::vector<double> heat;          // A_k·r̄_k
  std::vector<double> contribution;  // A_k·r̄_k·q_k
  double score = 0.0;                // R = Σ_k contribution_k, ascending k

  std::size_t k() const { return heat.size(); }
};

struct FusionResult {
  Var score;  // R, shape {1}
  PatientDecomposition decomposition;
};

/// R = Σ_k A_k·r̄_k·q_k over one sequence. `scores` is [N x 1]; padded rows
/// are ignored. Throws InvalidArgument without real slices.
FusionResult fuse(Var scores, std::span<const std::size_t> clusters,
                  const std::vector<bool>& mask, Var a);

/// Value-only fuse.
PatientDecomposition decompose(const Tensor& scores, std::span<const std::size_t> clusters,
                               const std::vector<bool>& mask, const Tensor& a);

/// logistic(R).
double predict(double score);
inline int predicted_class(double score, double threshold = 0.5) {
  return predict(score) >= threshold ? 1 : 0;
}

/// Binary cross-entropy of logistic(R) against `label`, scaled by `weight`.
Var fusion_loss(Var score, int label, double weight = 1.0);

struct ClusterRanking {
  std::vector<double> score;           // per cluster: mean heat | class 1 − mean heat | class 0
  std::vector<std::size_t> order;      // cluster ids, descending score, ties by id
  std::vector<std::size_t> rank_of;    // rank_of[k] = 1-based position of k in order
};

/// Throws InvalidArgument when either class has no members.
ClusterRanking rank_clusters(std::span<const PatientDecomposition> cohort,
                             std::span<const int> predicted);

struct Representative {
  std::size_t cluster_id = 0;
  std::string slice_id;
  double similarity = 0.0;
};

/// The `top_n` member slices of `cluster` most cosine-similar to its centroid,
/// descending (ties by corpus order). Members are slices assigned to `cluster`.
/// Throws InvalidArgument if the cluster has no members.
std::vector<Representative> representative_slices(const prototypes::PrototypeBook& book,
                                                  const Tensor& corpus,
                                                  std::span<const std::string> slice_ids,
                                                  std::size_t cluster, std::size_t top_n);

/// K rows × patients columns of heat values, columns by descending R (stable).
std::string heatmap_csv(std::span<const PatientDecomposition> cohort);
void export_heatmap(std::span<const PatientDecomposition> cohort, const std::filesystem::path& path);

struct HeatmapTable {
  std::vector<std::string> patients;
  std::vector<std::size_t> clusters;
  std::vector<std::vector<double>> heat;  // [cluster row][patient column]
};
HeatmapTable parse_heatmap_csv(const std::string& text);

std::string ranking_csv(const ClusterRanking& ranking);
void export_ranking(const ClusterRanking& ranking, const std::filesystem::path& path);

std::string representatives_json(std::span<const Representative> reps);
void export_representatives(std::span<const Representative> reps, const std::filesystem::path& path);

}  // namespace diff3d::fusion
