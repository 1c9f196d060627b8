// Copyright 2026 The Diff3D Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "diff3d/numerics/parameter_set.hpp"
#include "diff3d/numerics/random.hpp"

namespace diff3d::clustervit {

struct ViTConfig {
  std::size_t d_repr = 512;
  std::size_t model_dim = 512;  // M
  std::size_t layers = 6;
  std::size_t heads = 8;
  std::size_t clusters = 64;  // K
  std::size_t max_len = 64;   // N
  double dropout = 0.1;
  bool positional_encoding = false;

  std::size_t head_dim() const { return model_dim / heads; }
  /// Throws InvalidArgument on non-positive sizes, M % heads != 0 or dropout ∉ [0, 1).
  void validate() const;
};

/// Padded slice sequences. Padded positions carry `clusters` = K (sentinel).
struct SequenceBatch {
  std::size_t batch = 0;
  std::size_t length = 0;  // N
  std::size_t dim = 0;     // d_repr
  Tensor features;         // [B x N x d_repr]
  std::vector<std::size_t> clusters;  // B·N
  std::vector<bool> mask;             // B·N, true = real slice
  std::vector<int> labels;            // B
  std::vector<std::string> ids;       // B

  Tensor sequence(std::size_t b) const;  // [N x d_repr]
  std::span<const std::size_t> sequence_clusters(std::size_t b) const;
  std::vector<bool> sequence_mask(std::size_t b) const;
};

/// Multiply-accumulate counts of one clustering-attention layer.
struct AttentionCounters {
  std::size_t qkv_projection = 0;
  std::size_t attention_map = 0;    // prototype·Kᵀ, all heads
  std::size_t attention_value = 0;  // Ā·V, all heads
  std::size_t output_projection = 0;

  std::size_t total() const {
    return qkv_projection + attention_map + attention_value + output_projection;
  }
  bool operator==(const AttentionCounters&) const = default;
};

/// Analytic MAC count for one layer with `clusters_present` non-empty clusters.
/// The attention map costs clusters_present·N·d_h per head; clusters_present = N
/// gives standard attention.
AttentionCounters op_count(std::size_t n, std::size_t clusters_present, std::size_t model_dim,
                           std::size_t heads);

struct AttentionParams {
  Parameter* wq = nullptr;
  Parameter* wk = nullptr;
  Parameter* wv = nullptr;
  Parameter* wo = nullptr;
  Parameter* bo = nullptr;
};

struct LayerParams {
  Parameter* ln1_gain = nullptr;
  Parameter* ln1_shift = nullptr;
  AttentionParams attn;
  Parameter* ln2_gain = nullptr;
  Parameter* ln2_shift = nullptr;
  Parameter* ffn_w1 = nullptr;
  Parameter* ffn_b1 = nullptr;
  Parameter* ffn_w2 = nullptr;
  Parameter* ffn_b2 = nullptr;
};

/// x·W + b per slice, then padded rows zeroed.
Var project_in(Tape& tape, Var x, const std::vector<bool>& mask, Parameter& weight,
               Parameter& bias);

/// Clustering attention over one sequence s [N x M].
///
/// Per head, the queries of each present cluster are averaged into a
/// prototype; prototypes attend over all real keys (padded keys get −∞
/// bias); each cluster's output row is broadcast back to its member slices.
/// Clusters without members produce no rows. Heads are concatenated and
/// projected by W_O; padded rows of the result are zero.
Var clustering_attention(Tape& tape, Var s, std::span<const std::size_t> clusters,
                         const std::vector<bool>& mask, const AttentionParams& params,
                         std::size_t heads, std::size_t num_clusters,
                         AttentionCounters* counters = nullptr);

struct ForwardOptions {
  bool train = false;
  double dropout = 0.0;
  Rng* rng = nullptr;  // required when train && dropout > 0
  AttentionCounters* counters = nullptr;  // accumulates over all layers
};

struct SequenceOutput {
  Var features;  // s*  [N x M]
  Var scores;    // r   [N x 1], zero at padded rows
};

/// Per-batch-row outputs of the encoder.
struct SliceScores {
  std::vector<Var> features;
  std::vector<Var> scores;
};

/// Pre-norm clustering transformer encoder with a per-slice linear risk head.
class ClusterViT {
 public:
  ClusterViT(ParameterSet& registry, ViTConfig config, Rng& init, const std::string& prefix = "vit.");

  SequenceOutput forward_sequence(Tape& tape, const Tensor& x, std::span<const std::size_t> clusters,
                                  const std::vector<bool>& mask, const ForwardOptions& options) const;
  SliceScores encoder_forward(Tape& tape, const SequenceBatch& batch,
                              const ForwardOptions& options) const;

  const ViTConfig& config() const { return config_; }
  Parameter& projection_weight() const { return *proj_w_; }
  Parameter& projection_bias() const { return *proj_b_; }
  const LayerParams& layer(std::size_t l) const { return layers_.at(l); }
  Parameter& head_weight() const { return *head_w_; }
  Parameter& head_bias() const { return *head_b_; }
  std::vector<Parameter*> parameters() const;

 private:
  ViTConfig config_;
  Parameter* proj_w_;
  Parameter* proj_b_;
  std::vector<LayerParams> layers_;
  Parameter* head_w_;
  Parameter* head_b_;
};

/// Sinusoidal position table [n x dim].
Tensor positional_table(std::size_t n, std::size_t dim);

}  // namespace diff3d::clustervit
