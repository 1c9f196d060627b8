// Copyright 2026 The Diff3D Authors
// SPDX-License-Identifier: Apache-2.0

#include "diff3d/fusion/fusion.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>

#include <json.hpp>

#include "diff3d/binary_io.hpp"
#include "diff3d/error.hpp"
#include "diff3d/numerics/ops.hpp"

namespace diff3d::fusion {

namespace {

std::string format_double(double v) {
  std::ostringstream os;
  os.imbue(std::locale::classic());
  os.precision(std::numeric_limits<double>::max_digits10);
  os << v;
  return os.str();
}

void check_csv_field(const std::string& s) {
  if (s.find_first_of(",\"\r\n") != std::string::npos) {
    throw InvalidArgument("identifier '" + s + "' cannot be written as a plain CSV field");
  }
}

std::vector<std::string> split_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  std::istringstream is(line);
  while (std::getline(is, cell, ',')) out.push_back(cell);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

double parse_number(const std::string& s, const char* what) {
  try {
    std::size_t used = 0;
    double v = std::stod(s, &used);
    if (used != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw DataError(std::string("heatmap CSV: bad ") + what + " '" + s + "'");
  }
}

}  // namespace

GlobalClusterAttention::GlobalClusterAttention(ParameterSet& reg, std::size_t k,
                                               const std::string& name) {
  if (k == 0) throw InvalidArgument("cluster attention needs K >= 1");
  a_ = &reg.add(name, Tensor({k}, 1.0));
}

FusionResult fuse(Var scores, std::span<const std::size_t> clusters,
                  const std::vector<bool>& mask, Var a) {
  const Tensor& r = scores.value();
  const std::size_t n = r.rows();
  const std::size_t k = a.value().size();
  if (r.cols() != 1) throw ShapeError("slice scores must be [N x 1]");
  if (clusters.size() != n || mask.size() != n) {
    throw ShapeError("fuse: " + std::to_string(n) + " scores but " +
                     std::to_string(clusters.size()) + " cluster ids and " +
                     std::to_string(mask.size()) + " mask entries");
  }
  std::vector<long> segment(n, kNoRow);
  std::vector<std::size_t> real_ids;
  for (std::size_t i = 0; i < n; ++i) {
    if (!mask[i]) continue;
    if (clusters[i] >= k) {
      throw InvalidArgument("slice " + std::to_string(i) + " has cluster id " +
                            std::to_string(clusters[i]) + " outside [0, " + std::to_string(k) + ")");
    }
    segment[i] = static_cast<long>(clusters[i]);
    real_ids.push_back(clusters[i]);
  }
  if (real_ids.empty()) throw InvalidArgument("fuse: sequence has no real slices");
  const std::vector<double> q = prototypes::quantify(real_ids, k);

  Var rbar = reshape(segment_mean(scores, segment, k), {k});
  Var heat = mul(a, rbar);
  Var contribution = mul_const(heat, Tensor({k}, q));
  Var total = sum(contribution);

  PatientDecomposition d;
  const auto vals = [](Var v) {
    return std::vector<double>(v.value().values().begin(), v.value().values().end());
  };
  d.mean_risk = vals(rbar);
  d.ratio = q;
  d.heat = vals(heat);
  d.contribution = vals(contribution);
  d.score = total.value()[0];
  return {total, std::move(d)};
}

PatientDecomposition decompose(const Tensor& scores, std::span<const std::size_t> clusters,
                               const std::vector<bool>& mask, const Tensor& a) {
  Tape tape;
  return fuse(tape.constant(scores), clusters, mask, tape.constant(a)).decomposition;
}

double predict(double score) {
  if (score >= 0) return 1.0 / (1.0 + std::exp(-score));
  const double e = std::exp(score);
  return e / (1.0 + e);
}

Var fusion_loss(Var score, int label, double weight) {
  if (label != 0 && label != 1) throw InvalidArgument("label must be 0 or 1");
  return bce_with_logits(score, static_cast<double>(label), weight);
}

ClusterRanking rank_clusters(std::span<const PatientDecomposition> cohort,
                             std::span<const int> predicted) {
  if (cohort.size() != predicted.size()) {
    throw InvalidArgument("rank_clusters: cohort and class counts differ");
  }
  if (cohort.empty()) throw InvalidArgument("rank_clusters: empty cohort");
  const std::size_t k = cohort.front().k();
  std::vector<double> sum1(k, 0.0), sum0(k, 0.0);
  std::size_t n1 = 0, n0 = 0;
  for (std::size_t p = 0; p < cohort.size(); ++p) {
    if (cohort[p].k() != k) throw InvalidArgument("rank_clusters: inconsistent K");
    if (predicted[p] != 0 && predicted[p] != 1) throw InvalidArgument("class must be 0 or 1");
    auto& acc = predicted[p] == 1 ? sum1 : sum0;
    (predicted[p] == 1 ? n1 : n0)++;
    for (std::size_t c = 0; c < k; ++c) acc[c] += cohort[p].heat[c];
  }
  if (n1 == 0 || n0 == 0) {
    throw InvalidArgument("rank_clusters: needs both predicted classes (got " +
                          std::to_string(n0) + " negative, " + std::to_string(n1) + " positive)");
  }
  ClusterRanking out;
  out.score.resize(k);
  for (std::size_t c = 0; c < k; ++c) {
    out.score[c] = sum1[c] / static_cast<double>(n1) - sum0[c] / static_cast<double>(n0);
  }
  out.order.resize(k);
  std::iota(out.order.begin(), out.order.end(), 0);
  std::stable_sort(out.order.begin(), out.order.end(),
                   [&](std::size_t x, std::size_t y) { return out.score[x] > out.score[y]; });
  out.rank_of.resize(k);
  for (std::size_t i = 0; i < k; ++i) out.rank_of[out.order[i]] = i + 1;
  return out;
}

std::vector<Representative> representative_slices(const prototypes::PrototypeBook& book,
                                                  const Tensor& corpus,
                                                  std::span<const std::string> slice_ids,
                                                  std::size_t cluster, std::size_t top_n) {
  if (cluster >= book.k()) throw InvalidArgument("cluster id out of range");
  if (slice_ids.size() != corpus.rows()) {
    throw ShapeError("representative_slices: corpus rows and slice ids differ");
  }
  const prototypes::Assignment labels = prototypes::assign_all(book, corpus);
  const auto mu = book.centroids.row(cluster);
  double mu_norm = 0.0;
  for (double v : mu) mu_norm += v * v;
  mu_norm = std::sqrt(mu_norm);

  std::vector<Representative> members;
  for (std::size_t i = 0; i < corpus.rows(); ++i) {
    if (labels[i] != cluster) continue;
    const auto x = corpus.row(i);
    double dot = 0.0, xx = 0.0;
    for (std::size_t j = 0; j < x.size(); ++j) {
      dot += x[j] * mu[j];
      xx += x[j] * x[j];
    }
    members.push_back({cluster, slice_ids[i], dot / (std::sqrt(xx) * mu_norm)});
  }
  if (members.empty()) {
    throw InvalidArgument("cluster " + std::to_string(cluster) + " has no member slices");
  }
  std::stable_sort(members.begin(), members.end(),
                   [](const Representative& a, const Representative& b) {
                     return a.similarity > b.similarity;
                   });
  members.resize(std::min(top_n, members.size()));
  return members;
}

std::string heatmap_csv(std::span<const PatientDecomposition> cohort) {
  if (cohort.empty()) throw InvalidArgument("heatmap needs at least one patient");
  const std::size_t k = cohort.front().k();
  std::vector<std::size_t> cols(cohort.size());
  std::iota(cols.begin(), cols.end(), 0);
  std::stable_sort(cols.begin(), cols.end(), [&](std::size_t x, std::size_t y) {
    return cohort[x].score > cohort[y].score;
  });
  std::string out = "cluster";
  for (std::size_t c : cols) {
    if (cohort[c].k() != k) throw InvalidArgument("heatmap: inconsistent K");
    check_csv_field(cohort[c].patient_id);
    out += "," + cohort[c].patient_id;
  }
  out += "\n";
  for (std::size_t row = 0; row < k; ++row) {
    out += std::to_string(row);
    for (std::size_t c : cols) out += "," + format_double(cohort[c].heat[row]);
    out += "\n";
  }
  return out;
}

void export_heatmap(std::span<const PatientDecomposition> cohort, const std::filesystem::path& path) {
  io::write_file_atomic(path, heatmap_csv(cohort));
}

HeatmapTable parse_heatmap_csv(const std::string& text) {
  std::istringstream is(text);
  std::string line;
  if (!std::getline(is, line)) throw DataError("heatmap CSV: empty");
  auto header = split_line(line);
  if (header.empty() || header[0] != "cluster") throw DataError("heatmap CSV: bad header");
  HeatmapTable t;
  t.patients.assign(header.begin() + 1, header.end());
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    auto cells = split_line(line);
    if (cells.size() != header.size()) throw DataError("heatmap CSV: ragged row '" + line + "'");
    t.clusters.push_back(static_cast<std::size_t>(parse_number(cells[0], "cluster index")));
    std::vector<double> row;
    for (std::size_t i = 1; i < cells.size(); ++i) row.push_back(parse_number(cells[i], "heat value"));
    t.heat.push_back(std::move(row));
  }
  return t;
}

std::string ranking_csv(const ClusterRanking& ranking) {
  std::string out = "cluster_id,score,rank\n";
  for (std::size_t i = 0; i < ranking.order.size(); ++i) {
    const std::size_t c = ranking.order[i];
    out += std::to_string(c) + "," + format_double(ranking.score[c]) + "," + std::to_string(i + 1) + "\n";
  }
  return out;
}

void export_ranking(const ClusterRanking& ranking, const std::filesystem::path& path) {
  io::write_file_atomic(path, ranking_csv(ranking));
}

std::string representatives_json(std::span<const Representative> reps) {
  nlohmann::json j = nlohmann::json::array();
  for (const auto& r : reps) {
    j.push_back({{"cluster_id", r.cluster_id}, {"slice_id", r.slice_id}, {"similarity", r.similarity}});
  }
  return j.dump(2) + "\n";
}

void export_representatives(std::span<const Representative> reps,
                            const std::filesystem::path& path) {
  io::write_file_atomic(path, representatives_json(reps));
}

}  // namespace diff3d::fusion
