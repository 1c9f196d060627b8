// Copyright 2026 The Diff3D Authors
// SPDX-License-Identifier: Apache-2.0

#include "diff3d/prototypes/spherical_kmeans.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "diff3d/binary_io.hpp"
#include "diff3d/error.hpp"
#include "diff3d/numerics/random.hpp"

namespace diff3d::prototypes {
namespace {

double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

double norm(std::span<const double> a) { return std::sqrt(dot(a, a)); }

void normalize_into(std::span<double> v) {
  const double n = norm(v);
  for (double& x : v) x /= n;
}

struct Pass {
  Assignment labels;
  std::vector<double> similarity;
  double objective = 0.0;
};

// `unit` rows and centroids are both unit-norm, so cosine is a dot product.
Pass assign_pass(const Tensor& centroids, const Tensor& unit) {
  Pass p;
  p.labels.resize(unit.rows());
  p.similarity.resize(unit.rows());
  for (std::size_t i = 0; i < unit.rows(); ++i) {
    std::size_t best = 0;
    double best_sim = -std::numeric_limits<double>::infinity();
    for (std::size_t k = 0; k < centroids.rows(); ++k) {
      const double s = dot(unit.row(i), centroids.row(k));
      if (s > best_sim) {
        best_sim = s;
        best = k;
      }
    }
    p.labels[i] = best;
    p.similarity[i] = best_sim;
    p.objective += best_sim;
  }
  return p;
}

Tensor seed_centroids(const Tensor& unit, std::size_t k, Rng& rng) {
  const std::size_t n = unit.rows(), d = unit.shape()[1];
  Tensor centroids({k, d});
  std::uniform_int_distribution<std::size_t> pick(0, n - 1);
  auto copy_row = [&](std::size_t dst, std::size_t src) {
    std::copy(unit.row(src).begin(), unit.row(src).end(), centroids.row(dst).begin());
  };
  copy_row(0, pick(rng));
  // D(x) = min over chosen centroids of the cosine distance 1 − cos.
  std::vector<double> dist(n);
  for (std::size_t i = 0; i < n; ++i) dist[i] = std::max(0.0, 1.0 - dot(unit.row(i), centroids.row(0)));
  for (std::size_t c = 1; c < k; ++c) {
    double total = 0.0;
    for (double v : dist) total += v * v;
    std::size_t chosen = 0;
    if (total <= 0.0) {
      chosen = pick(rng);
    } else {
      std::uniform_real_distribution<double> u(0.0, total);
      double target = u(rng), acc = 0.0;
      chosen = n - 1;
      for (std::size_t i = 0; i < n; ++i) {
        acc += dist[i] * dist[i];
        if (acc > target && dist[i] > 0.0) {
          chosen = i;
          break;
        }
      }
    }
    copy_row(c, chosen);
    for (std::size_t i = 0; i < n; ++i) {
      dist[i] = std::min(dist[i], std::max(0.0, 1.0 - dot(unit.row(i), centroids.row(c))));
    }
  }
  return centroids;
}

// Centroid ← normalized member mean. Empty clusters (or clusters whose members
// cancel out) take the point least similar to its current centroid, drawn from
// clusters that keep at least one member.
std::size_t update_centroids(Tensor& centroids, const Tensor& unit, Pass& pass) {
  const std::size_t k = centroids.rows(), d = centroids.shape()[1], n = unit.rows();
  std::vector<std::size_t> count(k, 0);
  for (std::size_t c : pass.labels) ++count[c];

  std::size_t reseeds = 0;
  std::vector<bool> taken(n, false);
  for (std::size_t c = 0; c < k; ++c) {
    if (count[c] > 0) continue;
    std::size_t donor = n;
    double worst = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < n; ++i) {
      if (taken[i] || count[pass.labels[i]] < 2) continue;
      if (pass.similarity[i] < worst) {
        worst = pass.similarity[i];
        donor = i;
      }
    }
    if (donor == n) continue;  // every other cluster is a singleton
    --count[pass.labels[donor]];
    pass.labels[donor] = c;
    pass.similarity[donor] = 1.0;
    count[c] = 1;
    taken[donor] = true;
    ++reseeds;
  }

  Tensor sums({k, d});
  for (std::size_t i = 0; i < n; ++i) {
    auto dst = sums.row(pass.labels[i]);
    const auto src = unit.row(i);
    for (std::size_t j = 0; j < d; ++j) dst[j] += src[j];
  }
  for (std::size_t c = 0; c < k; ++c) {
    if (count[c] == 0 || norm(sums.row(c)) == 0.0) continue;  // keep the previous centroid
    auto dst = centroids.row(c);
    std::copy(sums.row(c).begin(), sums.row(c).end(), dst.begin());
    normalize_into(dst);
  }
  return reseeds;
}

PrototypeBook lloyd(const Tensor& unit, Tensor centroids, const FitOptions& options) {
  PrototypeBook book;
  Assignment previous;
  const double slack = 1e-12 * static_cast<double>(unit.rows());
  for (std::size_t it = 1; it <= options.max_iters; ++it) {
    Pass pass = assign_pass(centroids, unit);
    if (!book.objective_history.empty() && pass.objective < book.objective_history.back() - slack) {
      throw NumericalError("spherical k-means objective decreased at iteration " +
                           std::to_string(it));
    }
    const double gain = book.objective_history.empty()
                            ? std::numeric_limits<double>::infinity()
                            : pass.objective - book.objective_history.back();
    book.objective_history.push_back(pass.objective);
    book.iterations = it;
    const bool stable = pass.labels == previous;
    previous = pass.labels;
    if (stable || gain < options.min_gain) break;
    book.reseeds += update_centroids(centroids, unit, pass);
  }
  round_to_f32(centroids);
  book.centroids = std::move(centroids);
  book.objective = assign_pass(book.centroids, unit).objective;
  return book;
}

void check_fit_input(const Tensor& corpus, std::size_t k) {
  if (k == 0) throw InvalidArgument("spherical k-means needs K >= 1");
  if (corpus.rank() != 2) throw ShapeError("corpus must be [n x dim]");
  if (corpus.rows() < k) {
    throw InvalidArgument("corpus of " + std::to_string(corpus.rows()) +
                          " representations is smaller than K = " + std::to_string(k));
  }
}

}  // namespace

Tensor normalize_rows(const Tensor& corpus) {
  Tensor unit = corpus;
  for (std::size_t i = 0; i < unit.rows(); ++i) {
    auto r = unit.row(i);
    const double n = norm(r);
    if (!std::isfinite(n)) throw InvalidArgument("row " + std::to_string(i) + " is not finite");
    if (n == 0.0) throw InvalidArgument("row " + std::to_string(i) + " has zero norm");
    for (double& x : r) x /= n;
  }
  return unit;
}

PrototypeBook fit(const Tensor& corpus, const FitOptions& options) {
  check_fit_input(corpus, options.k);
  const Tensor unit = normalize_rows(corpus);
  Rng rng = make_stream(options.seed, "kmeans");
  PrototypeBook best;
  for (std::size_t r = 0; r < std::max<std::size_t>(1, options.restarts); ++r) {
    PrototypeBook run = lloyd(unit, seed_centroids(unit, options.k, rng), options);
    if (r == 0 || run.objective > best.objective) best = std::move(run);
  }
  return best;
}

PrototypeBook refit(const Tensor& corpus, const PrototypeBook& start, const FitOptions& options) {
  check_fit_input(corpus, start.k());
  if (start.dim() != corpus.shape()[1]) throw ShapeError("book and corpus dimensions differ");
  return lloyd(normalize_rows(corpus), normalize_rows(start.centroids), options);
}

std::size_t assign(const PrototypeBook& book, std::span<const double> x) {
  if (x.size() != book.dim()) {
    throw ShapeError("representation of dim " + std::to_string(x.size()) + " for a book of dim " +
                     std::to_string(book.dim()));
  }
  const double n = norm(x);
  if (n == 0.0 || !std::isfinite(n)) throw InvalidArgument("cannot assign a zero-norm vector");
  std::size_t best = 0;
  double best_sim = -std::numeric_limits<double>::infinity();
  for (std::size_t k = 0; k < book.k(); ++k) {
    const double s = dot(x, book.centroids.row(k)) / n;
    if (s > best_sim) {
      best_sim = s;
      best = k;
    }
  }
  return best;
}

Assignment assign_all(const PrototypeBook& book, const Tensor& corpus) {
  Assignment out(corpus.rows());
  for (std::size_t i = 0; i < corpus.rows(); ++i) out[i] = assign(book, corpus.row(i));
  return out;
}

double objective(const PrototypeBook& book, const Tensor& corpus, const Assignment& labels) {
  const Tensor unit = normalize_rows(corpus);
  double total = 0.0;
  for (std::size_t i = 0; i < unit.rows(); ++i) {
    const auto c = book.centroids.row(labels.at(i));
    total += dot(unit.row(i), c) / norm(c);
  }
  return total;
}

std::vector<std::size_t> cluster_counts(std::span<const std::size_t> ids, std::size_t k) {
  std::vector<std::size_t> counts(k, 0);
  for (std::size_t c : ids) {
    if (c >= k) throw InvalidArgument("cluster id " + std::to_string(c) + " outside [0, " +
                                      std::to_string(k) + ")");
    ++counts[c];
  }
  return counts;
}

std::vector<double> quantify(std::span<const std::size_t> ids, std::size_t k) {
  if (ids.empty()) throw InvalidArgument("quantify: patient has no real slices");
  const auto counts = cluster_counts(ids, k);
  std::vector<double> q(k);
  for (std::size_t c = 0; c < k; ++c) {
    q[c] = static_cast<double>(counts[c]) / static_cast<double>(ids.size());
  }
  return q;
}

std::string encode_book(const PrototypeBook& book) {
  io::ByteWriter w;
  w.bytes("PBK1");
  w.u32(1);
  w.u32(static_cast<std::uint32_t>(book.k()));
  w.u32(static_cast<std::uint32_t>(book.dim()));
  for (double v : book.centroids.values()) w.f32(static_cast<float>(v));
  return w.data();
}

PrototypeBook decode_book(std::string_view bytes, const std::string& context) {
  io::ByteReader r(bytes, context);
  if (r.bytes(4) != "PBK1") throw DataError(context + ": bad magic (expected PBK1)");
  if (const auto version = r.u32(); version != 1) {
    throw DataError(context + ": unsupported version " + std::to_string(version));
  }
  const std::size_t k = r.u32(), dim = r.u32();
  if (k == 0 || dim == 0) throw DataError(context + ": empty prototype book");
  PrototypeBook book;
  book.centroids = Tensor({k, dim});
  for (double& v : book.centroids.values()) v = r.f32();
  r.expect_end();
  return book;
}

void save_book(const PrototypeBook& book, const std::filesystem::path& path) {
  io::write_file_atomic(path, encode_book(book));
}

PrototypeBook load_book(const std::filesystem::path& path) {
  return decode_book(io::read_file(path), path.string());
}

}  // namespace diff3d::prototypes
