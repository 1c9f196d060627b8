// Copyright 2026 The Diff3D Authors
// SPDX-License-Identifier: Apache-2.0

#include "diff3d/pipeline/config.hpp"

#include <cstdio>
#include <filesystem>

#include "diff3d/error.hpp"
#include "diff3d/numerics/random.hpp"

namespace diff3d::pipeline {

using nlohmann::json;

void RunConfig::validate() const {
  model.validate();
  synthetic().validate();
  if (data.max_slices > model.max_len) {
    throw InvalidArgument("data.max_slices (" + std::to_string(data.max_slices) +
                          ") exceeds the padded length N (" + std::to_string(model.max_len) + ")");
  }
  if (diffusion.hidden == 0 || diffusion.time_dim == 0 || diffusion.time_dim % 2 != 0 ||
      diffusion.steps == 0 || diffusion.epochs == 0 || diffusion.batch == 0) {
    throw InvalidArgument("diffusion sizes must be positive (time_dim even)");
  }
  if (!(diffusion.lr > 0) || !(train.lr > 0)) throw InvalidArgument("learning rates must be positive");
  if (train.epochs == 0 || train.batch == 0) throw InvalidArgument("epochs and batch must be positive");
  if (!(train.threshold > 0 && train.threshold < 1)) throw InvalidArgument("threshold must be in (0, 1)");
  if (prototypes.max_iters == 0 || prototypes.restarts == 0) {
    throw InvalidArgument("k-means iterations and restarts must be positive");
  }
  if (top_n == 0) throw InvalidArgument("top_n must be positive");
  if (work_dir.empty()) throw InvalidArgument("work_dir must not be empty");
}

std::string RunConfig::dataset_path() const {
  return dataset_dir.empty() ? (std::filesystem::path(work_dir) / "dataset").string() : dataset_dir;
}

SyntheticConfig RunConfig::synthetic() const {
  SyntheticConfig s = data;
  s.seed = seed;
  return s;
}

TrainConfig RunConfig::training() const {
  TrainConfig t = train;
  t.seed = seed;
  return t;
}

json vit_to_json(const clustervit::ViTConfig& c) {
  return {{"d_repr", c.d_repr},   {"M", c.model_dim}, {"layers", c.layers},
          {"heads", c.heads},     {"K", c.clusters},  {"N", c.max_len},
          {"dropout", c.dropout}, {"positional_encoding", c.positional_encoding}};
}

json config_to_json(const RunConfig& c, bool with_paths) {
  json j;
  j["seed"] = c.seed;
  j["data"] = {{"patients", c.data.patients},
               {"k_true", c.data.k_true},
               {"dim", c.data.dim},
               {"class_signal", c.data.class_signal},
               {"noise", c.data.noise},
               {"lesion_prototypes", c.data.lesion_prototypes},
               {"min_slices", c.data.min_slices},
               {"max_slices", c.data.max_slices},
               {"val_fraction", c.data.val_fraction},
               {"test_fraction", c.data.test_fraction}};
  j["diffusion"] = {{"hidden", c.diffusion.hidden},         {"time_dim", c.diffusion.time_dim},
                    {"T", c.diffusion.steps},               {"beta_start", c.diffusion.beta_start},
                    {"beta_end", c.diffusion.beta_end},     {"epochs", c.diffusion.epochs},
                    {"batch", c.diffusion.batch},           {"lr", c.diffusion.lr}};
  j["model"] = vit_to_json(c.model);
  j["train"] = {{"epochs", c.train.epochs},
                {"batch", c.train.batch},
                {"lr", c.train.lr},
                {"class_weighting", c.train.class_weighting},
                {"threshold", c.train.threshold}};
  j["prototypes"] = {{"max_iters", c.prototypes.max_iters}, {"restarts", c.prototypes.restarts}};
  j["explain"] = {{"top_n", c.top_n}};
  if (with_paths) j["paths"] = {{"work_dir", c.work_dir}, {"dataset_dir", c.dataset_dir}};
  return j;
}

namespace {

template <typename T>
void take(const json& obj, const char* key, T& out, const std::string& where) {
  if (!obj.contains(key)) return;
  try {
    out = obj.at(key).get<T>();
  } catch (const json::exception&) {
    throw InvalidArgument("config " + where + "." + key + " has the wrong type");
  }
}

void only_keys(const json& obj, std::initializer_list<const char*> keys, const std::string& where) {
  if (!obj.is_object()) throw InvalidArgument("config " + where + " must be an object");
  for (auto it = obj.begin(); it != obj.end(); ++it) {
    bool known = false;
    for (const char* k : keys) known = known || it.key() == k;
    if (!known) throw InvalidArgument("unknown config key " + where + "." + it.key());
  }
}

}  // namespace

RunConfig config_from_json(const json& j, RunConfig c) {
  only_keys(j, {"seed", "data", "diffusion", "model", "train", "prototypes", "explain", "paths"}, "");
  take(j, "seed", c.seed, "");
  if (j.contains("data")) {
    const json& d = j["data"];
    only_keys(d, {"patients", "k_true", "dim", "class_signal", "noise", "lesion_prototypes",
                  "min_slices", "max_slices", "val_fraction", "test_fraction"}, "data");
    take(d, "patients", c.data.patients, "data");
    take(d, "k_true", c.data.k_true, "data");
    take(d, "dim", c.data.dim, "data");
    take(d, "class_signal", c.data.class_signal, "data");
    take(d, "noise", c.data.noise, "data");
    take(d, "lesion_prototypes", c.data.lesion_prototypes, "data");
    take(d, "min_slices", c.data.min_slices, "data");
    take(d, "max_slices", c.data.max_slices, "data");
    take(d, "val_fraction", c.data.val_fraction, "data");
    take(d, "test_fraction", c.data.test_fraction, "data");
  }
  if (j.contains("diffusion")) {
    const json& d = j["diffusion"];
    only_keys(d, {"hidden", "time_dim", "T", "beta_start", "beta_end", "epochs", "batch", "lr"},
              "diffusion");
    take(d, "hidden", c.diffusion.hidden, "diffusion");
    take(d, "time_dim", c.diffusion.time_dim, "diffusion");
    take(d, "T", c.diffusion.steps, "diffusion");
    take(d, "beta_start", c.diffusion.beta_start, "diffusion");
    take(d, "beta_end", c.diffusion.beta_end, "diffusion");
    take(d, "epochs", c.diffusion.epochs, "diffusion");
    take(d, "batch", c.diffusion.batch, "diffusion");
    take(d, "lr", c.diffusion.lr, "diffusion");
  }
  if (j.contains("model")) {
    const json& m = j["model"];
    only_keys(m, {"d_repr", "M", "layers", "heads", "K", "N", "dropout", "positional_encoding"},
              "model");
    take(m, "d_repr", c.model.d_repr, "model");
    take(m, "M", c.model.model_dim, "model");
    take(m, "layers", c.model.layers, "model");
    take(m, "heads", c.model.heads, "model");
    take(m, "K", c.model.clusters, "model");
    take(m, "N", c.model.max_len, "model");
    take(m, "dropout", c.model.dropout, "model");
    take(m, "positional_encoding", c.model.positional_encoding, "model");
  }
  if (j.contains("train")) {
    const json& t = j["train"];
    only_keys(t, {"epochs", "batch", "lr", "class_weighting", "threshold"}, "train");
    take(t, "epochs", c.train.epochs, "train");
    take(t, "batch", c.train.batch, "train");
    take(t, "lr", c.train.lr, "train");
    take(t, "class_weighting", c.train.class_weighting, "train");
    take(t, "threshold", c.train.threshold, "train");
  }
  if (j.contains("prototypes")) {
    const json& p = j["prototypes"];
    only_keys(p, {"max_iters", "restarts"}, "prototypes");
    take(p, "max_iters", c.prototypes.max_iters, "prototypes");
    take(p, "restarts", c.prototypes.restarts, "prototypes");
  }
  if (j.contains("explain")) {
    only_keys(j["explain"], {"top_n"}, "explain");
    take(j["explain"], "top_n", c.top_n, "explain");
  }
  if (j.contains("paths")) {
    only_keys(j["paths"], {"work_dir", "dataset_dir"}, "paths");
    take(j["paths"], "work_dir", c.work_dir, "paths");
    take(j["paths"], "dataset_dir", c.dataset_dir, "paths");
  }
  return c;
}

std::string config_hash(const RunConfig& cfg) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx",
                static_cast<unsigned long long>(fnv1a64(config_to_json(cfg, false).dump())));
  return buf;
}

}  // namespace diff3d::pipeline
