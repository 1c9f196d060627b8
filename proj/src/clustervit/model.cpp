// Copyright 2026 The Diff3D Authors
// SPDX-License-Identifier: Apache-2.0

#include "diff3d/clustervit/model.hpp"

#include <cmath>
#include <limits>

#include "diff3d/error.hpp"
#include "diff3d/numerics/ops.hpp"

namespace diff3d::clustervit {

namespace {

constexpr double kInitStd = 0.02;

std::string num(std::size_t v) { return std::to_string(v); }

Parameter& weight(ParameterSet& reg, const std::string& name, std::size_t in, std::size_t out,
                  Rng& rng) {
  return reg.add(name, truncated_normal_tensor({in, out}, rng, kInitStd));
}

Var dense(Tape& tape, Var x, Parameter& w, Parameter* b) {
  Var y = matmul(x, tape.param(w));
  return b ? add_bias(y, tape.param(*b)) : y;
}

Var maybe_dropout(Var x, const ForwardOptions& options) {
  if (!options.train || options.dropout <= 0.0) return x;
  if (!options.rng) throw InvalidArgument("dropout in train mode needs an rng");
  return mul_const(x, dropout_mask(x.shape(), options.dropout, *options.rng));
}

void check_sequence(const Var& x, std::span<const std::size_t> clusters,
                    const std::vector<bool>& mask, std::size_t num_clusters) {
  const std::size_t n = x.value().rows();
  if (clusters.size() != n || mask.size() != n) {
    throw ShapeError("sequence of " + num(n) + " rows has " + num(clusters.size()) +
                     " cluster ids and " + num(mask.size()) + " mask entries");
  }
  bool any = false;
  for (std::size_t i = 0; i < n; ++i) {
    if (!mask[i]) continue;
    any = true;
    if (clusters[i] >= num_clusters) {
      throw InvalidArgument("slice " + num(i) + " has cluster id " + num(clusters[i]) +
                            " outside [0, " + num(num_clusters) + ")");
    }
  }
  if (!any) throw InvalidArgument("sequence has no real slices");
}

}  // namespace

void ViTConfig::validate() const {
  if (d_repr == 0 || model_dim == 0 || layers == 0 || heads == 0 || clusters == 0 ||
      max_len == 0) {
    throw InvalidArgument("transformer sizes must be positive");
  }
  if (model_dim % heads != 0) {
    throw InvalidArgument("model dim " + num(model_dim) + " is not divisible by " + num(heads) +
                          " heads");
  }
  if (!(dropout >= 0.0 && dropout < 1.0)) throw InvalidArgument("dropout must lie in [0, 1)");
}

Tensor SequenceBatch::sequence(std::size_t b) const {
  if (b >= batch) throw InvalidArgument("batch row out of range");
  const std::size_t stride = length * dim;
  std::vector<double> data(features.values().begin() + static_cast<long>(b * stride),
                           features.values().begin() + static_cast<long>((b + 1) * stride));
  return Tensor({length, dim}, std::move(data));
}

std::span<const std::size_t> SequenceBatch::sequence_clusters(std::size_t b) const {
  return std::span<const std::size_t>(clusters).subspan(b * length, length);
}

std::vector<bool> SequenceBatch::sequence_mask(std::size_t b) const {
  return std::vector<bool>(mask.begin() + static_cast<long>(b * length),
                           mask.begin() + static_cast<long>((b + 1) * length));
}

AttentionCounters op_count(std::size_t n, std::size_t clusters_present, std::size_t model_dim,
                           std::size_t heads) {
  if (heads == 0 || model_dim % heads != 0) throw InvalidArgument("bad head count");
  const std::size_t dh = model_dim / heads;
  AttentionCounters c;
  c.qkv_projection = 3 * n * model_dim * model_dim;
  c.attention_map = heads * clusters_present * n * dh;
  c.attention_value = heads * clusters_present * n * dh;
  c.output_projection = n * model_dim * model_dim;
  return c;
}

Tensor positional_table(std::size_t n, std::size_t dim) {
  Tensor pe({n, dim});
  for (std::size_t p = 0; p < n; ++p) {
    for (std::size_t i = 0; i < dim; ++i) {
      const double freq =
          std::pow(10000.0, -static_cast<double>(2 * (i / 2)) / static_cast<double>(dim));
      pe.at(p, i) = (i % 2 == 0) ? std::sin(p * freq) : std::cos(p * freq);
    }
  }
  return pe;
}

Var project_in(Tape& tape, Var x, const std::vector<bool>& mask, Parameter& w, Parameter& b) {
  return mask_rows(dense(tape, x, w, &b), mask);
}

Var clustering_attention(Tape& tape, Var s, std::span<const std::size_t> clusters,
                         const std::vector<bool>& mask, const AttentionParams& p,
                         std::size_t heads, std::size_t num_clusters,
                         AttentionCounters* counters) {
  check_sequence(s, clusters, mask, num_clusters);
  const std::size_t n = s.value().rows();
  const std::size_t m = s.value().cols();
  if (heads == 0 || m % heads != 0) throw InvalidArgument("bad head count");
  const std::size_t dh = m / heads;

  // Present clusters in ascending id order; pads map to kNoRow.
  std::vector<long> compact(num_clusters, kNoRow);
  for (std::size_t i = 0; i < n; ++i) {
    if (mask[i]) compact[clusters[i]] = 0;
  }
  std::size_t present = 0;
  for (auto& c : compact) {
    if (c != kNoRow) c = static_cast<long>(present++);
  }
  std::vector<long> segment(n, kNoRow);
  for (std::size_t i = 0; i < n; ++i) {
    if (mask[i]) segment[i] = compact[clusters[i]];
  }
  Tensor key_bias({present, n});
  for (std::size_t k = 0; k < present; ++k) {
    for (std::size_t j = 0; j < n; ++j) {
      if (!mask[j]) key_bias.at(k, j) = -std::numeric_limits<double>::infinity();
    }
  }

  Var q = matmul(s, tape.param(*p.wq));
  Var k = matmul(s, tape.param(*p.wk));
  Var v = matmul(s, tape.param(*p.wv));
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(dh));

  std::vector<Var> outs;
  outs.reserve(heads);
  std::size_t map_macs = 0, value_macs = 0;
  for (std::size_t h = 0; h < heads; ++h) {
    Var qh = slice_cols(q, h * dh, (h + 1) * dh);
    Var kh = slice_cols(k, h * dh, (h + 1) * dh);
    Var vh = slice_cols(v, h * dh, (h + 1) * dh);
    Var proto = segment_mean(qh, segment, present);
    Var scores = scale(matmul_nt(proto, kh), inv_sqrt);
    map_macs += proto.value().rows() * kh.value().rows() * proto.value().cols();
    Var attn = softmax_rows(scores, key_bias);
    Var ctx = matmul(attn, vh);
    value_macs += attn.value().rows() * attn.value().cols() * vh.value().cols();
    outs.push_back(gather_rows(ctx, segment));
  }
  Var out = dense(tape, concat_cols(outs), *p.wo, p.bo);
  if (counters) {
    const Shape& wq = p.wq->value.shape();
    counters->qkv_projection += 3 * n * wq[0] * wq[1];
    counters->attention_map += map_macs;
    counters->attention_value += value_macs;
    counters->output_projection += n * p.wo->value.shape()[0] * p.wo->value.shape()[1];
  }
  return mask_rows(out, mask);
}

ClusterViT::ClusterViT(ParameterSet& reg, ViTConfig config, Rng& init, const std::string& prefix)
    : config_(config) {
  config_.validate();
  const std::size_t m = config_.model_dim;
  proj_w_ = &weight(reg, prefix + "proj.weight", config_.d_repr, m, init);
  proj_b_ = &reg.add(prefix + "proj.bias", Tensor({m}));
  for (std::size_t l = 0; l < config_.layers; ++l) {
    const std::string base = prefix + "layers." + num(l) + ".";
    LayerParams lp;
    lp.ln1_gain = &reg.add(base + "ln1.gain", Tensor({m}, 1.0));
    lp.ln1_shift = &reg.add(base + "ln1.shift", Tensor({m}));
    lp.attn.wq = &weight(reg, base + "attn.wq", m, m, init);
    lp.attn.wk = &weight(reg, base + "attn.wk", m, m, init);
    lp.attn.wv = &weight(reg, base + "attn.wv", m, m, init);
    lp.attn.wo = &weight(reg, base + "attn.wo", m, m, init);
    lp.attn.bo = &reg.add(base + "attn.bo", Tensor({m}));
    lp.ln2_gain = &reg.add(base + "ln2.gain", Tensor({m}, 1.0));
    lp.ln2_shift = &reg.add(base + "ln2.shift", Tensor({m}));
    lp.ffn_w1 = &weight(reg, base + "ffn.w1", m, 4 * m, init);
    lp.ffn_b1 = &reg.add(base + "ffn.b1", Tensor({4 * m}));
    lp.ffn_w2 = &weight(reg, base + "ffn.w2", 4 * m, m, init);
    lp.ffn_b2 = &reg.add(base + "ffn.b2", Tensor({m}));
    layers_.push_back(lp);
  }
  head_w_ = &weight(reg, prefix + "head.weight", m, 1, init);
  head_b_ = &reg.add(prefix + "head.bias", Tensor({1}));
}

SequenceOutput ClusterViT::forward_sequence(Tape& tape, const Tensor& x,
                                            std::span<const std::size_t> clusters,
                                            const std::vector<bool>& mask,
                                            const ForwardOptions& options) const {
  if (x.shape().size() != 2 || x.cols() != config_.d_repr) {
    throw ShapeError("sequence features " + shape_string(x.shape()) + " do not have " +
                     num(config_.d_repr) + " columns");
  }
  if (x.rows() > config_.max_len) {
    throw InvalidArgument("sequence of " + num(x.rows()) + " slices exceeds N=" +
                          num(config_.max_len));
  }
  Var xv = tape.constant(x);
  check_sequence(xv, clusters, mask, config_.clusters);

  Var s = dense(tape, xv, *proj_w_, proj_b_);
  if (config_.positional_encoding) {
    s = add(s, tape.constant(positional_table(x.rows(), config_.model_dim)));
  }
  s = mask_rows(maybe_dropout(s, options), mask);

  for (const LayerParams& lp : layers_) {
    Var h = layernorm(s, tape.param(*lp.ln1_gain), tape.param(*lp.ln1_shift));
    Var a = clustering_attention(tape, h, clusters, mask, lp.attn, config_.heads,
                                 config_.clusters, options.counters);
    s = add(s, maybe_dropout(a, options));

    Var g = layernorm(s, tape.param(*lp.ln2_gain), tape.param(*lp.ln2_shift));
    Var f = gelu(dense(tape, g, *lp.ffn_w1, lp.ffn_b1));
    f = mask_rows(dense(tape, f, *lp.ffn_w2, lp.ffn_b2), mask);
    s = add(s, maybe_dropout(f, options));
  }
  Var r = mask_rows(dense(tape, s, *head_w_, head_b_), mask);
  return {s, r};
}

SliceScores ClusterViT::encoder_forward(Tape& tape, const SequenceBatch& batch,
                                        const ForwardOptions& options) const {
  if (batch.dim != config_.d_repr) {
    throw ShapeError("batch representation dim " + num(batch.dim) + " != " +
                     num(config_.d_repr));
  }
  SliceScores out;
  for (std::size_t b = 0; b < batch.batch; ++b) {
    SequenceOutput o = forward_sequence(tape, batch.sequence(b), batch.sequence_clusters(b),
                                        batch.sequence_mask(b), options);
    out.features.push_back(o.features);
    out.scores.push_back(o.scores);
  }
  return out;
}

std::vector<Parameter*> ClusterViT::parameters() const {
  std::vector<Parameter*> ps{proj_w_, proj_b_};
  for (const LayerParams& lp : layers_) {
    ps.insert(ps.end(), {lp.ln1_gain, lp.ln1_shift, lp.attn.wq, lp.attn.wk, lp.attn.wv,
                         lp.attn.wo, lp.attn.bo, lp.ln2_gain, lp.ln2_shift, lp.ffn_w1,
                         lp.ffn_b1, lp.ffn_w2, lp.ffn_b2});
  }
  ps.push_back(head_w_);
  ps.push_back(head_b_);
  return ps;
}

}  // namespace diff3d::clustervit
