// Copyright 2026 The Diff3D Authors
// SPDX-License-Identifier: Apache-2.0

// Straight-line references for clustering attention, written with plain loops
// over parameter values and no tape ops.

#pragma once

#include <cmath>
#include <map>
#include <span>
#include <vector>

#include "diff3d/clustervit/model.hpp"

namespace diff3d::testing {

using Matrix = std::vector<std::vector<double>>;

inline Matrix times(const Matrix& x, const Tensor& w) {
  Matrix y(x.size(), std::vector<double>(w.cols(), 0.0));
  for (std::size_t i = 0; i < x.size(); ++i)
    for (std::size_t j = 0; j < w.cols(); ++j)
      for (std::size_t k = 0; k < w.rows(); ++k) y[i][j] += x[i][k] * w.at(k, j);
  return y;
}

inline Matrix to_matrix(const Tensor& t) {
  Matrix m(t.rows(), std::vector<double>(t.cols()));
  for (std::size_t i = 0; i < t.rows(); ++i)
    for (std::size_t j = 0; j < t.cols(); ++j) m[i][j] = t.at(i, j);
  return m;
}

/// Attention of one query vector (per head slice) over the real keys.
inline std::vector<double> attend(const std::vector<double>& query, const Matrix& k,
                                  const Matrix& v, const std::vector<bool>& mask,
                                  std::size_t h, std::size_t dh) {
  std::vector<double> score(k.size(), 0.0);
  double top = -INFINITY;
  for (std::size_t j = 0; j < k.size(); ++j) {
    if (!mask[j]) continue;
    for (std::size_t d = 0; d < dh; ++d) score[j] += query[d] * k[j][h * dh + d];
    score[j] /= std::sqrt(static_cast<double>(dh));
    top = std::max(top, score[j]);
  }
  double z = 0.0;
  for (std::size_t j = 0; j < k.size(); ++j) {
    score[j] = mask[j] ? std::exp(score[j] - top) : 0.0;
    z += score[j];
  }
  std::vector<double> out(dh, 0.0);
  for (std::size_t j = 0; j < k.size(); ++j)
    for (std::size_t d = 0; d < dh; ++d) out[d] += score[j] / z * v[j][h * dh + d];
  return out;
}

inline Tensor output_projection(const Matrix& concat, const std::vector<bool>& mask,
                                const clustervit::AttentionParams& p) {
  Matrix y = times(concat, p.wo->value);
  const std::size_t m = p.wo->value.cols();
  Tensor out({concat.size(), m});
  for (std::size_t i = 0; i < concat.size(); ++i)
    if (mask[i])
      for (std::size_t j = 0; j < m; ++j) out.at(i, j) = y[i][j] + p.bo->value[j];
  return out;
}

/// Standard multi-head self-attention: every real slice is its own query.
inline Tensor reference_mha(const Tensor& s, const std::vector<bool>& mask,
                            const clustervit::AttentionParams& p, std::size_t heads) {
  const Matrix x = to_matrix(s);
  const Matrix q = times(x, p.wq->value), k = times(x, p.wk->value), v = times(x, p.wv->value);
  const std::size_t m = s.cols(), dh = m / heads;
  Matrix concat(x.size(), std::vector<double>(m, 0.0));
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (!mask[i]) continue;
    for (std::size_t h = 0; h < heads; ++h) {
      std::vector<double> qi(q[i].begin() + h * dh, q[i].begin() + (h + 1) * dh);
      auto o = attend(qi, k, v, mask, h, dh);
      for (std::size_t d = 0; d < dh; ++d) concat[i][h * dh + d] = o[d];
    }
  }
  return output_projection(concat, mask, p);
}

/// Materializes one prototype per non-empty cluster with explicit member loops.
inline Tensor reference_clustered(const Tensor& s, std::span<const std::size_t> clusters,
                                  const std::vector<bool>& mask,
                                  const clustervit::AttentionParams& p, std::size_t heads) {
  const Matrix x = to_matrix(s);
  const Matrix q = times(x, p.wq->value), k = times(x, p.wk->value), v = times(x, p.wv->value);
  const std::size_t m = s.cols(), dh = m / heads;
  std::map<std::size_t, std::vector<std::size_t>> members;
  for (std::size_t i = 0; i < x.size(); ++i)
    if (mask[i]) members[clusters[i]].push_back(i);
  Matrix concat(x.size(), std::vector<double>(m, 0.0));
  for (const auto& [c, idx] : members) {
    for (std::size_t h = 0; h < heads; ++h) {
      std::vector<double> proto(dh, 0.0);
      for (std::size_t i : idx)
        for (std::size_t d = 0; d < dh; ++d) proto[d] += q[i][h * dh + d];
      for (double& e : proto) e /= static_cast<double>(idx.size());
      auto o = attend(proto, k, v, mask, h, dh);
      for (std::size_t i : idx)
        for (std::size_t d = 0; d < dh; ++d) concat[i][h * dh + d] = o[d];
    }
  }
  return output_projection(concat, mask, p);
}

}  // namespace diff3d::testing
