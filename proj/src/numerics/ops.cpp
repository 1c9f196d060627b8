// Copyright 2026 The Diff3D Authors
// SPDX-License-Identifier: Apache-2.0

#include "diff3d/numerics/ops.hpp"

#include <cmath>
#include <limits>
#include <numbers>
#include <string>

#include "diff3d/error.hpp"

namespace diff3d {
namespace {

void require_matrix(const Tensor& t, const char* op) {
  if (t.rank() != 2) {
    throw ShapeError(std::string(op) + ": expected a matrix, got " + shape_string(t.shape()));
  }
}

void require_same(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw ShapeError(std::string(op) + ": " + shape_string(a.shape()) + " vs " +
                     shape_string(b.shape()));
  }
}

void add_into(Tensor& acc, const Tensor& g) {
  for (std::size_t i = 0; i < acc.size(); ++i) acc[i] += g[i];
}

}  // namespace

// C[i][j] = sum_k A[i][k] B[k][j], each sum accumulated in ascending k.
Tensor matmul_values(const Tensor& a, const Tensor& b) {
  require_matrix(a, "matmul");
  require_matrix(b, "matmul");
  const std::size_t m = a.shape()[0], k = a.shape()[1], n = b.shape()[1];
  if (b.shape()[0] != k) {
    throw ShapeError("matmul: inner extents differ, " + shape_string(a.shape()) + " x " +
                     shape_string(b.shape()));
  }
  Tensor c({m, n});
  for (std::size_t i = 0; i < m; ++i) {
    double* ci = &c[i * n];
    for (std::size_t p = 0; p < k; ++p) {
      const double aip = a[i * k + p];
      const double* bp = &b[p * n];
      for (std::size_t j = 0; j < n; ++j) ci[j] += aip * bp[j];
    }
  }
  return c;
}

Tensor matmul_nt_values(const Tensor& a, const Tensor& b) {
  require_matrix(a, "matmul_nt");
  require_matrix(b, "matmul_nt");
  const std::size_t m = a.shape()[0], k = a.shape()[1], n = b.shape()[0];
  if (b.shape()[1] != k) {
    throw ShapeError("matmul_nt: inner extents differ, " + shape_string(a.shape()) + " x " +
                     shape_string(b.shape()) + "ᵀ");
  }
  Tensor c({m, n});
  for (std::size_t i = 0; i < m; ++i) {
    const double* ai = &a[i * k];
    for (std::size_t j = 0; j < n; ++j) {
      const double* bj = &b[j * k];
      double s = 0.0;
      for (std::size_t p = 0; p < k; ++p) s += ai[p] * bj[p];
      c[i * n + j] = s;
    }
  }
  return c;
}

Tensor matmul_tn_values(const Tensor& a, const Tensor& b) {
  require_matrix(a, "matmul_tn");
  require_matrix(b, "matmul_tn");
  const std::size_t k = a.shape()[0], m = a.shape()[1], n = b.shape()[1];
  if (b.shape()[0] != k) {
    throw ShapeError("matmul_tn: inner extents differ, " + shape_string(a.shape()) + "ᵀ x " +
                     shape_string(b.shape()));
  }
  Tensor c({m, n});
  for (std::size_t p = 0; p < k; ++p) {
    const double* ap = &a[p * m];
    const double* bp = &b[p * n];
    for (std::size_t i = 0; i < m; ++i) {
      const double api = ap[i];
      if (api == 0.0) continue;
      double* ci = &c[i * n];
      for (std::size_t j = 0; j < n; ++j) ci[j] += api * bp[j];
    }
  }
  return c;
}

Tensor softmax_rows_values(const Tensor& x, const Tensor* bias) {
  require_matrix(x, "softmax_rows");
  if (bias != nullptr) require_same(x, *bias, "softmax_rows bias");
  const std::size_t r = x.shape()[0], c = x.shape()[1];
  constexpr double kNegInf = -std::numeric_limits<double>::infinity();
  Tensor y({r, c});
  for (std::size_t i = 0; i < r; ++i) {
    double mx = kNegInf;
    bool nan = false;
    for (std::size_t j = 0; j < c; ++j) {
      const double v = x[i * c + j] + (bias ? (*bias)[i * c + j] : 0.0);
      y[i * c + j] = v;
      if (v > mx) mx = v;
      nan = nan || std::isnan(v);
    }
    if (nan) {
      // Propagate so that callers see a non-finite loss rather than a mask error.
      for (std::size_t j = 0; j < c; ++j) y[i * c + j] = std::numeric_limits<double>::quiet_NaN();
      continue;
    }
    if (mx == kNegInf) {
      throw InvalidArgument("softmax_rows: row " + std::to_string(i) + " is fully masked");
    }
    double z = 0.0;
    for (std::size_t j = 0; j < c; ++j) {
      double& v = y[i * c + j];
      v = (v == kNegInf) ? 0.0 : std::exp(v - mx);
      z += v;
    }
    for (std::size_t j = 0; j < c; ++j) y[i * c + j] /= z;
  }
  return y;
}

Var matmul(Var a, Var b) {
  return a.tape().record(
      "matmul", matmul_values(a.value(), b.value()), {a, b}, [a, b](Tape& t, Var self) {
        const Tensor& g = t.grad(self);
        if (Tensor* ga = t.grad_sink(a)) add_into(*ga, matmul_nt_values(g, b.value()));
        if (Tensor* gb = t.grad_sink(b)) add_into(*gb, matmul_tn_values(a.value(), g));
      });
}

Var matmul_nt(Var a, Var b) {
  return a.tape().record(
      "matmul_nt", matmul_nt_values(a.value(), b.value()), {a, b}, [a, b](Tape& t, Var self) {
        const Tensor& g = t.grad(self);
        if (Tensor* ga = t.grad_sink(a)) add_into(*ga, matmul_values(g, b.value()));
        if (Tensor* gb = t.grad_sink(b)) add_into(*gb, matmul_tn_values(g, a.value()));
      });
}

Var add(Var a, Var b) {
  require_same(a.value(), b.value(), "add");
  Tensor out = a.value();
  add_into(out, b.value());
  return a.tape().record("add", std::move(out), {a, b}, [a, b](Tape& t, Var self) {
    const Tensor& g = t.grad(self);
    if (Tensor* ga = t.grad_sink(a)) add_into(*ga, g);
    if (Tensor* gb = t.grad_sink(b)) add_into(*gb, g);
  });
}

Var sub(Var a, Var b) {
  require_same(a.value(), b.value(), "sub");
  Tensor out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] -= b.value()[i];
  return a.tape().record("sub", std::move(out), {a, b}, [a, b](Tape& t, Var self) {
    const Tensor& g = t.grad(self);
    if (Tensor* ga = t.grad_sink(a)) add_into(*ga, g);
    if (Tensor* gb = t.grad_sink(b)) {
      for (std::size_t i = 0; i < g.size(); ++i) (*gb)[i] -= g[i];
    }
  });
}

Var mul(Var a, Var b) {
  require_same(a.value(), b.value(), "mul");
  Tensor out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= b.value()[i];
  return a.tape().record("mul", std::move(out), {a, b}, [a, b](Tape& t, Var self) {
    const Tensor& g = t.grad(self);
    if (Tensor* ga = t.grad_sink(a)) {
      for (std::size_t i = 0; i < g.size(); ++i) (*ga)[i] += g[i] * b.value()[i];
    }
    if (Tensor* gb = t.grad_sink(b)) {
      for (std::size_t i = 0; i < g.size(); ++i) (*gb)[i] += g[i] * a.value()[i];
    }
  });
}

Var scale(Var x, double factor) {
  Tensor out = x.value();
  for (double& v : out.values()) v *= factor;
  return x.tape().record("scale", std::move(out), {x}, [x, factor](Tape& t, Var self) {
    const Tensor& g = t.grad(self);
    if (Tensor* gx = t.grad_sink(x)) {
      for (std::size_t i = 0; i < g.size(); ++i) (*gx)[i] += g[i] * factor;
    }
  });
}

Var add_bias(Var x, Var bias) {
  require_matrix(x.value(), "add_bias");
  const std::size_t n = x.value().shape()[0], d = x.value().shape()[1];
  if (bias.value().size() != d) {
    throw ShapeError("add_bias: bias " + shape_string(bias.shape()) + " for rows of width " +
                     std::to_string(d));
  }
  Tensor out = x.value();
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < d; ++j) out[i * d + j] += bias.value()[j];
  }
  return x.tape().record("add_bias", std::move(out), {x, bias}, [x, bias, n, d](Tape& t, Var self) {
    const Tensor& g = t.grad(self);
    if (Tensor* gx = t.grad_sink(x)) add_into(*gx, g);
    if (Tensor* gb = t.grad_sink(bias)) {
      for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < d; ++j) (*gb)[j] += g[i * d + j];
      }
    }
  });
}

Var mul_const(Var x, const Tensor& factor) {
  require_same(x.value(), factor, "mul_const");
  Tensor out = x.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= factor[i];
  return x.tape().record("mul_const", std::move(out), {x}, [x, factor](Tape& t, Var self) {
    const Tensor& g = t.grad(self);
    if (Tensor* gx = t.grad_sink(x)) {
      for (std::size_t i = 0; i < g.size(); ++i) (*gx)[i] += g[i] * factor[i];
    }
  });
}

Var mask_rows(Var x, const std::vector<bool>& keep) {
  require_matrix(x.value(), "mask_rows");
  const std::size_t n = x.value().shape()[0], d = x.value().shape()[1];
  if (keep.size() != n) {
    throw ShapeError("mask_rows: mask of length " + std::to_string(keep.size()) + " for " +
                     std::to_string(n) + " rows");
  }
  Tensor out = x.value();
  for (std::size_t i = 0; i < n; ++i) {
    if (!keep[i]) {
      for (std::size_t j = 0; j < d; ++j) out[i * d + j] = 0.0;
    }
  }
  return x.tape().record("mask_rows", std::move(out), {x}, [x, keep, d](Tape& t, Var self) {
    const Tensor& g = t.grad(self);
    if (Tensor* gx = t.grad_sink(x)) {
      for (std::size_t i = 0; i < keep.size(); ++i) {
        if (!keep[i]) continue;
        for (std::size_t j = 0; j < d; ++j) (*gx)[i * d + j] += g[i * d + j];
      }
    }
  });
}

Var softmax_rows(Var x, const std::optional<Tensor>& bias) {
  Tensor y = softmax_rows_values(x.value(), bias ? &*bias : nullptr);
  const std::size_t c = y.shape()[1];
  return x.tape().record("softmax_rows", std::move(y), {x}, [x, c](Tape& t, Var self) {
    const Tensor& g = t.grad(self);
    const Tensor& y = self.value();
    Tensor* gx = t.grad_sink(x);
    if (gx == nullptr) return;
    for (std::size_t i = 0; i < y.shape()[0]; ++i) {
      double dot = 0.0;
      for (std::size_t j = 0; j < c; ++j) dot += g[i * c + j] * y[i * c + j];
      for (std::size_t j = 0; j < c; ++j) (*gx)[i * c + j] += y[i * c + j] * (g[i * c + j] - dot);
    }
  });
}

Var layernorm(Var x, Var gain, Var shift, double eps) {
  require_matrix(x.value(), "layernorm");
  const std::size_t n = x.value().shape()[0], d = x.value().shape()[1];
  if (d < 2) throw ShapeError("layernorm: rows need at least 2 features");
  if (gain.value().size() != d || shift.value().size() != d) {
    throw ShapeError("layernorm: gain/shift must have " + std::to_string(d) + " entries");
  }
  Tensor xhat({n, d});
  std::vector<double> inv_std(n);
  Tensor out({n, d});
  for (std::size_t i = 0; i < n; ++i) {
    const double* xi = &x.value()[i * d];
    double mu = 0.0;
    for (std::size_t j = 0; j < d; ++j) mu += xi[j];
    mu /= static_cast<double>(d);
    double var = 0.0;
    for (std::size_t j = 0; j < d; ++j) var += (xi[j] - mu) * (xi[j] - mu);
    var /= static_cast<double>(d);
    inv_std[i] = 1.0 / std::sqrt(var + eps);
    for (std::size_t j = 0; j < d; ++j) {
      const double h = (xi[j] - mu) * inv_std[i];
      xhat[i * d + j] = h;
      out[i * d + j] = h * gain.value()[j] + shift.value()[j];
    }
  }
  return x.tape().record(
      "layernorm", std::move(out), {x, gain, shift},
      [x, gain, shift, n, d, xhat = std::move(xhat), inv_std = std::move(inv_std)](Tape& t,
                                                                                    Var self) {
        const Tensor& g = t.grad(self);
        if (Tensor* gg = t.grad_sink(gain)) {
          for (std::size_t i = 0; i < n; ++i) {
            for (std::size_t j = 0; j < d; ++j) (*gg)[j] += g[i * d + j] * xhat[i * d + j];
          }
        }
        if (Tensor* gs = t.grad_sink(shift)) {
          for (std::size_t i = 0; i < n; ++i) {
            for (std::size_t j = 0; j < d; ++j) (*gs)[j] += g[i * d + j];
          }
        }
        Tensor* gx = t.grad_sink(x);
        if (gx == nullptr) return;
        const double inv_d = 1.0 / static_cast<double>(d);
        for (std::size_t i = 0; i < n; ++i) {
          double mean_dh = 0.0, mean_dh_h = 0.0;
          for (std::size_t j = 0; j < d; ++j) {
            const double dh = g[i * d + j] * gain.value()[j];
            mean_dh += dh;
            mean_dh_h += dh * xhat[i * d + j];
          }
          mean_dh *= inv_d;
          mean_dh_h *= inv_d;
          for (std::size_t j = 0; j < d; ++j) {
            const double dh = g[i * d + j] * gain.value()[j];
            (*gx)[i * d + j] += inv_std[i] * (dh - mean_dh - xhat[i * d + j] * mean_dh_h);
          }
        }
      });
}

Var gelu(Var x) {
  Tensor out = x.value();
  for (double& v : out.values()) v = 0.5 * v * (1.0 + std::erf(v * std::numbers::sqrt2 / 2.0));
  return x.tape().record("gelu", std::move(out), {x}, [x](Tape& t, Var self) {
    const Tensor& g = t.grad(self);
    Tensor* gx = t.grad_sink(x);
    if (gx == nullptr) return;
    const double inv_sqrt_2pi = 1.0 / std::sqrt(2.0 * std::numbers::pi);
    for (std::size_t i = 0; i < g.size(); ++i) {
      const double v = x.value()[i];
      const double cdf = 0.5 * (1.0 + std::erf(v * std::numbers::sqrt2 / 2.0));
      const double pdf = inv_sqrt_2pi * std::exp(-0.5 * v * v);
      (*gx)[i] += g[i] * (cdf + v * pdf);
    }
  });
}

Var abs(Var x) {
  Tensor out = x.value();
  for (double& v : out.values()) v = std::abs(v);
  return x.tape().record("abs", std::move(out), {x}, [x](Tape& t, Var self) {
    const Tensor& g = t.grad(self);
    Tensor* gx = t.grad_sink(x);
    if (gx == nullptr) return;
    for (std::size_t i = 0; i < g.size(); ++i) {
      const double v = x.value()[i];
      (*gx)[i] += v > 0.0 ? g[i] : (v < 0.0 ? -g[i] : 0.0);
    }
  });
}

Var reshape(Var x, Shape shape) {
  return x.tape().record("reshape", x.value().reshaped(std::move(shape)), {x},
                         [x](Tape& t, Var self) {
                           const Tensor& g = t.grad(self);
                           if (Tensor* gx = t.grad_sink(x)) add_into(*gx, g);
                         });
}

Var slice_cols(Var x, std::size_t begin, std::size_t end) {
  require_matrix(x.value(), "slice_cols");
  const std::size_t n = x.value().shape()[0], d = x.value().shape()[1];
  if (begin > end || end > d) {
    throw ShapeError("slice_cols: [" + std::to_string(begin) + "," + std::to_string(end) +
                     ") outside " + std::to_string(d) + " columns");
  }
  const std::size_t w = end - begin;
  Tensor out({n, w});
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < w; ++j) out[i * w + j] = x.value()[i * d + begin + j];
  }
  return x.tape().record("slice_cols", std::move(out), {x}, [x, n, d, w, begin](Tape& t, Var self) {
    const Tensor& g = t.grad(self);
    Tensor* gx = t.grad_sink(x);
    if (gx == nullptr) return;
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < w; ++j) (*gx)[i * d + begin + j] += g[i * w + j];
    }
  });
}

Var concat_cols(const std::vector<Var>& parts) {
  if (parts.empty()) throw InvalidArgument("concat_cols: no inputs");
  const std::size_t n = parts.front().value().rows();
  std::size_t total = 0;
  std::vector<std::size_t> widths;
  for (const Var& p : parts) {
    require_matrix(p.value(), "concat_cols");
    if (p.value().rows() != n) throw ShapeError("concat_cols: row counts differ");
    widths.push_back(p.value().shape()[1]);
    total += widths.back();
  }
  Tensor out({n, total});
  std::size_t offset = 0;
  for (std::size_t k = 0; k < parts.size(); ++k) {
    const Tensor& v = parts[k].value();
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < widths[k]; ++j) out[i * total + offset + j] = v[i * widths[k] + j];
    }
    offset += widths[k];
  }
  return parts.front().tape().record(
      "concat_cols", std::move(out), parts, [parts, widths, n, total](Tape& t, Var self) {
        const Tensor& g = t.grad(self);
        std::size_t offset = 0;
        for (std::size_t k = 0; k < parts.size(); ++k) {
          if (Tensor* gp = t.grad_sink(parts[k])) {
            for (std::size_t i = 0; i < n; ++i) {
              for (std::size_t j = 0; j < widths[k]; ++j) {
                (*gp)[i * widths[k] + j] += g[i * total + offset + j];
              }
            }
          }
          offset += widths[k];
        }
      });
}

Var gather_rows(Var x, const std::vector<long>& index) {
  require_matrix(x.value(), "gather_rows");
  const std::size_t rows = x.value().shape()[0], d = x.value().shape()[1];
  Tensor out({index.size(), d});
  for (std::size_t i = 0; i < index.size(); ++i) {
    if (index[i] == kNoRow) continue;
    if (index[i] < 0 || static_cast<std::size_t>(index[i]) >= rows) {
      throw ShapeError("gather_rows: index " + std::to_string(index[i]) + " outside " +
                       std::to_string(rows) + " rows");
    }
    const auto src = x.value().row(static_cast<std::size_t>(index[i]));
    std::copy(src.begin(), src.end(), out.row(i).begin());
  }
  return x.tape().record("gather_rows", std::move(out), {x}, [x, index, d](Tape& t, Var self) {
    const Tensor& g = t.grad(self);
    Tensor* gx = t.grad_sink(x);
    if (gx == nullptr) return;
    for (std::size_t i = 0; i < index.size(); ++i) {
      if (index[i] == kNoRow) continue;
      const std::size_t r = static_cast<std::size_t>(index[i]);
      for (std::size_t j = 0; j < d; ++j) (*gx)[r * d + j] += g[i * d + j];
    }
  });
}

Var segment_mean(Var x, const std::vector<long>& segment, std::size_t n_segments) {
  require_matrix(x.value(), "segment_mean");
  const std::size_t n = x.value().shape()[0], d = x.value().shape()[1];
  if (segment.size() != n) {
    throw ShapeError("segment_mean: " + std::to_string(segment.size()) + " labels for " +
                     std::to_string(n) + " rows");
  }
  std::vector<std::size_t> count(n_segments, 0);
  for (long s : segment) {
    if (s == kNoRow) continue;
    if (s < 0 || static_cast<std::size_t>(s) >= n_segments) {
      throw ShapeError("segment_mean: segment " + std::to_string(s) + " outside [0," +
                       std::to_string(n_segments) + ")");
    }
    ++count[static_cast<std::size_t>(s)];
  }
  Tensor out({n_segments, d});
  for (std::size_t i = 0; i < n; ++i) {
    if (segment[i] == kNoRow) continue;
    const std::size_t s = static_cast<std::size_t>(segment[i]);
    for (std::size_t j = 0; j < d; ++j) out[s * d + j] += x.value()[i * d + j];
  }
  for (std::size_t s = 0; s < n_segments; ++s) {
    if (count[s] == 0) continue;
    const double inv = 1.0 / static_cast<double>(count[s]);
    for (std::size_t j = 0; j < d; ++j) out[s * d + j] *= inv;
  }
  return x.tape().record(
      "segment_mean", std::move(out), {x}, [x, segment, count, d](Tape& t, Var self) {
        const Tensor& g = t.grad(self);
        Tensor* gx = t.grad_sink(x);
        if (gx == nullptr) return;
        for (std::size_t i = 0; i < segment.size(); ++i) {
          if (segment[i] == kNoRow) continue;
          const std::size_t s = static_cast<std::size_t>(segment[i]);
          const double inv = 1.0 / static_cast<double>(count[s]);
          for (std::size_t j = 0; j < d; ++j) (*gx)[i * d + j] += g[s * d + j] * inv;
        }
      });
}

Var sum(Var x) {
  double s = 0.0;
  for (double v : x.value().values()) s += v;
  return x.tape().record("sum", Tensor::scalar(s), {x}, [x](Tape& t, Var self) {
    const double g = t.grad(self)[0];
    if (Tensor* gx = t.grad_sink(x)) {
      for (double& v : gx->values()) v += g;
    }
  });
}

Var mean(Var x) {
  if (x.value().empty()) throw ShapeError("mean of an empty tensor");
  return scale(sum(x), 1.0 / static_cast<double>(x.value().size()));
}

Var bce_with_logits(Var logit, double label, double weight) {
  const double z = logit.value().item();
  // softplus(z) = max(z,0) + log1p(exp(-|z|))
  const double softplus = std::max(z, 0.0) + std::log1p(std::exp(-std::abs(z)));
  const double loss = weight * (softplus - label * z);
  return logit.tape().record(
      "bce_with_logits", Tensor::scalar(loss), {logit}, [logit, z, label, weight](Tape& t, Var self) {
        const double g = t.grad(self)[0];
        if (Tensor* gz = t.grad_sink(logit)) {
          const double p = 1.0 / (1.0 + std::exp(-z));
          (*gz)[0] += g * weight * (p - label);
        }
      });
}

}  // namespace diff3d
