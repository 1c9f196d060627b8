// Copyright 2026 The Diff3D Authors
// SPDX-License-Identifier: Apache-2.0

#include "diff3d/pipeline/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>

#include <json.hpp>

#include "diff3d/binary_io.hpp"
#include "diff3d/error.hpp"
#include "diff3d/numerics/random.hpp"

namespace diff3d::pipeline {

namespace {

std::vector<double> unit(std::vector<double> v) {
  double n = 0;
  for (double x : v) n += x * x;
  n = std::sqrt(n);
  for (double& x : v) x /= n;
  return v;
}

std::string patient_id(std::size_t i) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "p%04zu", i);
  return buf;
}

}  // namespace

void SyntheticConfig::validate() const {
  if (patients < 2) throw InvalidArgument("synthetic cohort needs at least 2 patients");
  if (k_true < 2) throw InvalidArgument("synthetic cohort needs k_true >= 2");
  if (dim < 2) throw InvalidArgument("synthetic slices need dim >= 2");
  if (lesion_prototypes == 0 || lesion_prototypes >= k_true) {
    throw InvalidArgument("lesion prototypes must be in [1, k_true)");
  }
  if (min_slices == 0 || min_slices > max_slices) {
    throw InvalidArgument("slice counts need 1 <= min_slices <= max_slices");
  }
  if (!(class_signal >= 0.0 && class_signal <= 1.0)) {
    throw InvalidArgument("class_signal must be in [0, 1]");
  }
  if (!(noise >= 0.0) || !std::isfinite(noise)) throw InvalidArgument("noise must be >= 0");
  if (!(val_fraction >= 0 && test_fraction >= 0 && val_fraction + test_fraction < 1)) {
    throw InvalidArgument("split fractions must be >= 0 and leave a training split");
  }
}

bool GroundTruth::is_lesion(std::size_t p) const {
  return std::binary_search(lesion.begin(), lesion.end(), p);
}

SyntheticDataset gen_synthetic(const SyntheticConfig& cfg, const std::filesystem::path& out_dir) {
  cfg.validate();
  SyntheticDataset ds;

  Rng proto_rng = make_stream(cfg.seed, "synthetic.prototypes");
  ds.truth.prototypes = Tensor({cfg.k_true, cfg.dim});
  for (std::size_t k = 0; k < cfg.k_true; ++k) {
    Tensor g = normal_tensor({cfg.dim}, proto_rng);
    auto u = unit({g.values().begin(), g.values().end()});
    for (std::size_t j = 0; j < cfg.dim; ++j) ds.truth.prototypes.at(k, j) = static_cast<float>(u[j]);
  }
  std::vector<std::size_t> ids(cfg.k_true);
  std::iota(ids.begin(), ids.end(), 0);
  std::shuffle(ids.begin(), ids.end(), proto_rng);
  ds.truth.lesion.assign(ids.begin(), ids.begin() + static_cast<long>(cfg.lesion_prototypes));
  std::sort(ds.truth.lesion.begin(), ds.truth.lesion.end());
  std::vector<std::size_t> normal;
  for (std::size_t k = 0; k < cfg.k_true; ++k) {
    if (!ds.truth.is_lesion(k)) normal.push_back(k);
  }

  std::vector<int> labels(cfg.patients);
  for (std::size_t i = 0; i < cfg.patients; ++i) labels[i] = i < cfg.patients / 2 ? 0 : 1;
  Rng label_rng = make_stream(cfg.seed, "synthetic.labels");
  std::shuffle(labels.begin(), labels.end(), label_rng);

  ds.all.base_dir = ds.train.base_dir = ds.val.base_dir = ds.test.base_dir = out_dir;
  const double noise_scale = cfg.noise / std::sqrt(static_cast<double>(cfg.dim));
  for (std::size_t p = 0; p < cfg.patients; ++p) {
    const std::string id = patient_id(p);
    Rng rng = make_stream(cfg.seed, "synthetic.patient." + id);
    const std::size_t n = std::uniform_int_distribution<std::size_t>(cfg.min_slices, cfg.max_slices)(rng);
    const auto n_lesion = static_cast<std::size_t>(std::lround(cfg.lesion_fraction(labels[p]) * n));
    std::vector<std::size_t> src(n);
    for (std::size_t i = 0; i < n; ++i) {
      const auto& pool = i < n_lesion ? ds.truth.lesion : normal;
      src[i] = pool[std::uniform_int_distribution<std::size_t>(0, pool.size() - 1)(rng)];
    }
    std::shuffle(src.begin(), src.end(), rng);
    Tensor slices({n, cfg.dim});
    for (std::size_t i = 0; i < n; ++i) {
      Tensor g = normal_tensor({cfg.dim}, rng);
      std::vector<double> v(cfg.dim);
      for (std::size_t j = 0; j < cfg.dim; ++j) {
        v[j] = ds.truth.prototypes.at(src[i], j) + noise_scale * g[j];
      }
      v = unit(std::move(v));
      for (std::size_t j = 0; j < cfg.dim; ++j) slices.at(i, j) = v[j];
    }
    const std::string rel = "slices/" + id + ".slq";
    write_slq(out_dir / rel, slices);
    ds.truth.slice_sources[id] = std::move(src);
    ds.all.entries.push_back({id, rel, labels[p]});
  }

  // Stratified split: per class, shuffled, test first then val, rest train.
  Rng split_rng = make_stream(cfg.seed, "synthetic.split");
  std::vector<int> split_of(cfg.patients, 0);  // 0 train, 1 val, 2 test
  for (int y : {0, 1}) {
    std::vector<std::size_t> members;
    for (std::size_t p = 0; p < cfg.patients; ++p) {
      if (labels[p] == y) members.push_back(p);
    }
    std::shuffle(members.begin(), members.end(), split_rng);
    const auto n_test = static_cast<std::size_t>(std::lround(cfg.test_fraction * members.size()));
    const auto n_val = static_cast<std::size_t>(std::lround(cfg.val_fraction * members.size()));
    for (std::size_t i = 0; i < members.size(); ++i) {
      split_of[members[i]] = i < n_test ? 2 : (i < n_test + n_val ? 1 : 0);
    }
  }
  for (std::size_t p = 0; p < cfg.patients; ++p) {
    Manifest* target[] = {&ds.train, &ds.val, &ds.test};
    target[split_of[p]]->entries.push_back(ds.all.entries[p]);
  }

  write_manifest(out_dir / "manifest.json", ds.all);
  write_manifest(out_dir / "train.json", ds.train);
  write_manifest(out_dir / "val.json", ds.val);
  write_manifest(out_dir / "test.json", ds.test);

  nlohmann::json gt;
  gt["prototypes"] = nlohmann::json::array();
  for (std::size_t k = 0; k < cfg.k_true; ++k) {
    auto row = ds.truth.prototypes.row(k);
    gt["prototypes"].push_back(std::vector<double>(row.begin(), row.end()));
  }
  gt["lesion_prototypes"] = ds.truth.lesion;
  gt["slice_prototypes"] = ds.truth.slice_sources;
  gt["class_signal"] = cfg.class_signal;
  io::write_file_atomic(out_dir / "ground_truth.json", gt.dump(1) + "\n");
  return ds;
}

GroundTruth read_ground_truth(const std::filesystem::path& path) {
  GroundTruth t;
  try {
    auto j = nlohmann::json::parse(io::read_file(path));
    const auto& protos = j.at("prototypes");
    const std::size_t k = protos.size(), dim = protos.at(0).size();
    t.prototypes = Tensor({k, dim});
    for (std::size_t r = 0; r < k; ++r)
      for (std::size_t c = 0; c < dim; ++c) t.prototypes.at(r, c) = protos.at(r).at(c).get<double>();
    t.lesion = j.at("lesion_prototypes").get<std::vector<std::size_t>>();
    t.slice_sources =
        j.at("slice_prototypes").get<std::map<std::string, std::vector<std::size_t>>>();
  } catch (const nlohmann::json::exception& e) {
    throw DataError(path.string() + ": " + e.what());
  }
  return t;
}

}  // namespace diff3d::pipeline
