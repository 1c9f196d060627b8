// Copyright 2026 The Diff3D Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <optional>
#include <vector>

#include "diff3d/numerics/tape.hpp"

// Differentiable primitives. Every op records its own backward rule on the
// tape of its inputs. Matrices are rank-2 [rows x cols]; vectors are rank-1.

namespace diff3d {

inline constexpr double kLayerNormEps = 1e-5;

/// Row index meaning "no source row" for gather_rows / segment_mean.
inline constexpr long kNoRow = -1;

// Plain (tape-free) kernels, shared with code that only needs values.
Tensor matmul_values(const Tensor& a, const Tensor& b);
Tensor matmul_nt_values(const Tensor& a, const Tensor& b);
Tensor matmul_tn_values(const Tensor& a, const Tensor& b);
/// Row softmax of x + bias; bias may hold -inf to force exact zeros.
Tensor softmax_rows_values(const Tensor& x, const Tensor* bias);

Var matmul(Var a, Var b);
/// a · bᵀ without materializing the transpose.
Var matmul_nt(Var a, Var b);

Var add(Var a, Var b);
Var sub(Var a, Var b);
/// Elementwise product of equal shapes.
Var mul(Var a, Var b);
Var scale(Var x, double factor);
/// x[n×d] + bias[d] broadcast over rows.
Var add_bias(Var x, Var bias);
/// Elementwise product with a constant of the same shape (masks, dropout).
Var mul_const(Var x, const Tensor& factor);
/// Zeroes rows whose mask entry is false.
Var mask_rows(Var x, const std::vector<bool>& keep);

Var softmax_rows(Var x, const std::optional<Tensor>& bias = std::nullopt);
Var layernorm(Var x, Var gain, Var shift, double eps = kLayerNormEps);
/// Exact (erf) GELU.
Var gelu(Var x);
Var abs(Var x);

Var reshape(Var x, Shape shape);
Var slice_cols(Var x, std::size_t begin, std::size_t end);
Var concat_cols(const std::vector<Var>& parts);
/// out[i] = x[index[i]], or a zero row where index[i] == kNoRow.
Var gather_rows(Var x, const std::vector<long>& index);
/// out[s] = mean of rows i with segment[i] == s; empty segments give a zero row.
Var segment_mean(Var x, const std::vector<long>& segment, std::size_t n_segments);

Var sum(Var x);
Var mean(Var x);

/// weight · (softplus(z) − y·z), the binary cross-entropy of logistic(z).
Var bce_with_logits(Var logit, double label, double weight = 1.0);

}  // namespace diff3d
