// Copyright 2026 The Diff3D Authors
// SPDX-License-Identifier: Apache-2.0

#include "diff3d/pipeline/stages.hpp"

#include <limits>
#include <numeric>
#include <optional>
#include <sstream>

#include "diff3d/binary_io.hpp"
#include "diff3d/error.hpp"
#include "diff3d/fusion/fusion.hpp"

namespace diff3d::pipeline {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

const char* const kSplits[] = {"manifest", "train", "val", "test"};

std::string fmt(double v) {
  std::ostringstream os;
  os.imbue(std::locale::classic());
  os.precision(std::numeric_limits<double>::max_digits10);
  os << v;
  return os.str();
}

/// Names a file as "<root>:<relative path>" so provenance never embeds the
/// absolute location of a run.
std::string label_path(const RunPaths& paths, const fs::path& p) {
  const auto rel = [&](const fs::path& root) { return p.lexically_relative(root); };
  fs::path r = rel(paths.work);
  if (!r.empty() && *r.begin() != "..") return "work:" + r.generic_string();
  r = rel(paths.dataset);
  if (!r.empty() && *r.begin() != "..") return "dataset:" + r.generic_string();
  return p.filename().generic_string();
}

void write_json(const fs::path& path, const json& j) { io::write_file_atomic(path, j.dump(2) + "\n"); }

void finish(const RunConfig& cfg, const RunPaths& paths, StageReport& report,
            const std::vector<fs::path>& inputs, const std::string& tag = "") {
  json prov;
  prov["command"] = report.command;
  prov["config_hash"] = config_hash(cfg);
  prov["inputs"] = json::array();
  for (const auto& p : inputs) prov["inputs"].push_back(label_path(paths, p));
  prov["outputs"] = json::array();
  for (const auto& p : report.outputs) prov["outputs"].push_back(label_path(paths, p));
  prov["summary"] = report.summary;
  const fs::path out = paths.provenance(tag.empty() ? report.command : report.command + "_" + tag);
  write_json(out, prov);
  report.outputs.push_back(out);
}

void require_file(const fs::path& p, const std::string& producer) {
  if (!fs::exists(p)) {
    throw DataError("missing '" + p.string() + "'; run '" + producer + "' first");
  }
}

prototypes::PrototypeBook load_checked_book(const RunConfig& cfg, const RunPaths& paths) {
  require_file(paths.book(), "cluster");
  auto book = prototypes::load_book(paths.book());
  if (book.k() != cfg.model.clusters) {
    throw DataError("prototype book has K=" + std::to_string(book.k()) + " but the config has K=" +
                    std::to_string(cfg.model.clusters));
  }
  if (book.dim() != cfg.model.d_repr) {
    throw DataError("prototype book has dim " + std::to_string(book.dim()) +
                    " but the config has d_repr=" + std::to_string(cfg.model.d_repr));
  }
  return book;
}

fs::path split_output(const RunPaths& paths, const std::string& stem, const std::string& split,
                      const char* ext) {
  return paths.work / (stem + "_" + split + ext);
}

void check_split(const std::string& split) {
  for (const char* s : kSplits) {
    if (split == s) return;
  }
  throw InvalidArgument("unknown split '" + split + "' (use manifest, train, val or test)");
}

}  // namespace

DiffusionModel::DiffusionModel(const RunConfig& cfg)
    : schedule(diffusion::NoiseSchedule::linear(cfg.diffusion.steps, cfg.diffusion.beta_start,
                                                cfg.diffusion.beta_end)) {
  Rng init = make_stream(cfg.seed, "diffusion.init");
  encoder = std::make_unique<diffusion::MlpEncoder>(params, "encoder.", cfg.data.dim,
                                                    cfg.diffusion.hidden, cfg.model.d_repr, init);
  diffusion::MlpConfig mc{cfg.data.dim, cfg.diffusion.hidden, cfg.diffusion.time_dim,
                          cfg.model.d_repr};
  denoiser = std::make_unique<diffusion::ResidualMlpDenoiser>(params, "denoiser.", mc, init);
}

json DiffusionModel::describe(const RunConfig& cfg) const {
  return {{"kind", "diffusion-autoencoder"},
          {"data_dim", cfg.data.dim},
          {"repr_dim", cfg.model.d_repr},
          {"hidden", cfg.diffusion.hidden},
          {"time_dim", cfg.diffusion.time_dim},
          {"T", cfg.diffusion.steps},
          {"beta_start", cfg.diffusion.beta_start},
          {"beta_end", cfg.diffusion.beta_end},
          {"seed", cfg.seed},
          {"epoch", cfg.diffusion.epochs},
          {"config_hash", config_hash(cfg)}};
}

RunPaths::RunPaths(const RunConfig& cfg) : dataset(cfg.dataset_path()), work(cfg.work_dir) {}

StageReport run_gen_synthetic(const RunConfig& cfg) {
  cfg.validate();
  RunPaths paths(cfg);
  SyntheticDataset ds = gen_synthetic(cfg.synthetic(), paths.dataset);
  StageReport r{"gen-synthetic", {}, {}};
  for (const auto& e : ds.all.entries) r.outputs.push_back(ds.all.resolve(e));
  for (const char* s : kSplits) r.outputs.push_back(paths.raw_split(s));
  r.outputs.push_back(paths.dataset / "ground_truth.json");
  r.summary = {{"patients", ds.all.entries.size()},
               {"train", ds.train.entries.size()},
               {"val", ds.val.entries.size()},
               {"test", ds.test.entries.size()},
               {"lesion_prototypes", ds.truth.lesion}};
  finish(cfg, paths, r, {});
  return r;
}

StageReport run_diffusion_train(const RunConfig& cfg) {
  cfg.validate();
  RunPaths paths(cfg);
  require_file(paths.raw_split("train"), "gen-synthetic");
  const auto records = load_records(read_manifest(paths.raw_split("train")), cfg.data.dim);
  const Tensor corpus = stack_slices(records);

  DiffusionModel dm(cfg);
  // Probe loss on one fixed draw of steps and noise, comparable across epochs.
  const std::uint64_t probe_seed = stream_seed(cfg.seed, "diffusion.probe");
  auto probe = [&] {
    return diffusion::probe_loss(corpus, *dm.denoiser, dm.encoder.get(), dm.schedule, probe_seed);
  };
  const double initial = probe();
  std::string log = "epoch,train_loss,probe_loss\n0,," + fmt(initial) + "\n";
  double final_probe = initial;
  diffusion::AutoencoderTraining opts{cfg.diffusion.epochs, cfg.diffusion.batch, cfg.diffusion.lr,
                                      stream_seed(cfg.seed, "diffusion.train"), 0, {}};
  opts.on_epoch = [&](std::size_t epoch, double loss) {
    final_probe = probe();
    log += std::to_string(epoch) + "," + fmt(loss) + "," + fmt(final_probe) + "\n";
  };
  const auto history = diffusion::train_autoencoder(corpus, *dm.denoiser, dm.encoder.get(),
                                                    dm.schedule, opts);
  save_checkpoint(snapshot(dm.params, dm.describe(cfg)), paths.diffusion_checkpoint());
  io::write_file_atomic(paths.diffusion_log(), log);

  StageReport r{"diffusion-train", {paths.diffusion_checkpoint(), paths.diffusion_log()}, {}};
  r.summary = {{"slices", corpus.rows()},
               {"initial_loss", initial},
               {"final_epoch_loss", history.back()},
               {"final_probe_loss", final_probe}};
  finish(cfg, paths, r, {paths.raw_split("train")});
  return r;
}

StageReport run_encode(const RunConfig& cfg) {
  cfg.validate();
  RunPaths paths(cfg);
  require_file(paths.diffusion_checkpoint(), "diffusion-train");
  require_file(paths.raw_split("manifest"), "gen-synthetic");
  DiffusionModel dm(cfg);
  restore(load_checkpoint(paths.diffusion_checkpoint()), dm.params);

  StageReport r{"encode", {}, {}};
  const Manifest all = read_manifest(paths.raw_split("manifest"));
  for (const auto& e : all.entries) {
    Tensor raw = read_slq(all.resolve(e));
    if (raw.cols() != cfg.data.dim) {
      throw DataError("patient '" + e.id + "' has slice dim " + std::to_string(raw.cols()) +
                      " but the encoder expects " + std::to_string(cfg.data.dim));
    }
    const fs::path out = paths.embeddings() / "slices" / (e.id + ".slq");
    write_slq(out, diffusion::encode_corpus(raw, *dm.encoder, cfg.model.d_repr));
    r.outputs.push_back(out);
  }
  for (const char* s : kSplits) {
    Manifest m = read_manifest(paths.raw_split(s));
    for (auto& e : m.entries) e.path = "slices/" + e.id + ".slq";
    write_manifest(paths.embedded_split(s), m);
    r.outputs.push_back(paths.embedded_split(s));
  }
  r.summary = {{"patients", all.entries.size()}, {"d_repr", cfg.model.d_repr}};
  finish(cfg, paths, r, {paths.diffusion_checkpoint(), paths.raw_split("manifest")});
  return r;
}

StageReport run_cluster(const RunConfig& cfg) {
  cfg.validate();
  RunPaths paths(cfg);
  require_file(paths.embedded_split("train"), "encode");
  const auto records = load_records(read_manifest(paths.embedded_split("train")), cfg.model.d_repr);
  const Tensor corpus = stack_slices(records);
  prototypes::FitOptions opts;
  opts.k = cfg.model.clusters;
  opts.max_iters = cfg.prototypes.max_iters;
  opts.restarts = cfg.prototypes.restarts;
  opts.seed = cfg.seed;
  const auto book = prototypes::fit(corpus, opts);
  prototypes::save_book(book, paths.book());

  const auto labels = prototypes::assign_all(book, corpus);
  StageReport r{"cluster", {paths.book()}, {}};
  r.summary = {{"slices", corpus.rows()},
               {"K", book.k()},
               {"objective", book.objective},
               {"iterations", book.iterations},
               {"reseeds", book.reseeds},
               {"cluster_sizes", prototypes::cluster_counts(labels, book.k())}};
  finish(cfg, paths, r, {paths.embedded_split("train")});
  return r;
}

std::vector<VolumeRecord> load_clustered_split(const RunConfig& cfg, const std::string& split) {
  check_split(split);
  RunPaths paths(cfg);
  require_file(paths.embedded_split(split), "encode");
  auto book = load_checked_book(cfg, paths);
  auto records = load_records(read_manifest(paths.embedded_split(split)), cfg.model.d_repr);
  assign_clusters(records, book);
  return records;
}

std::unique_ptr<Diff3DModel> load_model(const RunConfig& cfg) {
  RunPaths paths(cfg);
  require_file(paths.model_checkpoint(), "train");
  Checkpoint ckpt = load_checkpoint(paths.model_checkpoint());
  if (ckpt.config.value("kind", "") != "diff3d-model") {
    throw DataError("'" + paths.model_checkpoint().string() + "' is not a model checkpoint");
  }
  auto model = std::make_unique<Diff3DModel>(cfg.model, cfg.seed);
  restore(ckpt, model->parameters());
  return model;
}

StageReport run_train(const RunConfig& cfg) {
  cfg.validate();
  RunPaths paths(cfg);
  const auto train_set = load_clustered_split(cfg, "train");
  std::vector<VolumeRecord> val_set;
  if (fs::exists(paths.embedded_split("val"))) val_set = load_clustered_split(cfg, "val");

  Diff3DModel model(cfg.model, cfg.seed);
  TrainResult res = train(model, train_set, val_set, cfg.training());

  json meta = {{"kind", "diff3d-model"},
               {"model", vit_to_json(cfg.model)},
               {"seed", cfg.seed},
               {"epoch", res.best_epoch},
               {"config_hash", config_hash(cfg)}};
  save_checkpoint(snapshot(model.parameters(), meta), paths.model_checkpoint());
  io::write_file_atomic(paths.epoch_log(), epoch_log_csv(res.log));

  StageReport r{"train", {paths.model_checkpoint(), paths.epoch_log()}, {}};
  r.summary = {{"best_epoch", res.best_epoch},
               {"best_val_auc", res.best_val_auc ? json(*res.best_val_auc) : json(nullptr)},
               {"final_train_loss", res.log.back().train_loss},
               {"parameters", model.parameters().element_count()}};
  finish(cfg, paths, r,
         {paths.embedded_split("train"), paths.embedded_split("val"), paths.book()});
  return r;
}

StageReport run_eval(const RunConfig& cfg, const std::string& split) {
  cfg.validate();
  RunPaths paths(cfg);
  const auto records = load_clustered_split(cfg, split);
  const auto model = load_model(cfg);
  Evaluation ev = evaluate(*model, records, cfg.train.threshold);

  json metrics = metrics_json(ev.metrics);
  metrics["loss"] = ev.loss;
  metrics["split"] = split;
  metrics["config_hash"] = config_hash(cfg);
  const fs::path metrics_path = split_output(paths, "metrics", split, ".json");
  write_json(metrics_path, metrics);

  std::string scores = "patient_id,label,score,probability\n";
  for (std::size_t i = 0; i < ev.patients.size(); ++i) {
    const auto& p = ev.patients[i];
    scores += p.patient_id + "," + std::to_string(p.label) + "," + fmt(p.score) + "," +
              fmt(ev.probabilities[i]) + "\n";
  }
  const fs::path scores_path = split_output(paths, "scores", split, ".csv");
  io::write_file_atomic(scores_path, scores);

  StageReport r{"eval", {metrics_path, scores_path}, metrics};
  finish(cfg, paths, r, {paths.embedded_split(split), paths.book(), paths.model_checkpoint()}, split);
  return r;
}

StageReport run_explain(const RunConfig& cfg, const std::string& split) {
  cfg.validate();
  RunPaths paths(cfg);
  const auto records = load_clustered_split(cfg, split);
  const auto book = load_checked_book(cfg, paths);
  const auto model = load_model(cfg);
  Evaluation ev = evaluate(*model, records, cfg.train.threshold);

  std::vector<int> predicted;
  std::size_t positives = 0;
  for (double p : ev.probabilities) {
    predicted.push_back(p >= cfg.train.threshold ? 1 : 0);
    positives += static_cast<std::size_t>(predicted.back());
  }
  // The ranking compares predicted classes; with only one class predicted it
  // is undefined and is left out rather than guessed.
  std::optional<fusion::ClusterRanking> ranking;
  if (positives > 0 && positives < predicted.size()) {
    ranking = fusion::rank_clusters(ev.patients, predicted);
  }

  std::string decomposition = "patient_id,cluster_id,mean_risk,ratio,heat,contribution\n";
  for (const auto& p : ev.patients) {
    for (std::size_t k = 0; k < p.k(); ++k) {
      decomposition += p.patient_id + "," + std::to_string(k) + "," + fmt(p.mean_risk[k]) + "," +
                       fmt(p.ratio[k]) + "," + fmt(p.heat[k]) + "," + fmt(p.contribution[k]) + "\n";
    }
  }

  const Tensor corpus = stack_slices(records);
  std::vector<std::string> slice_ids;
  for (const auto& rec : records) {
    for (std::size_t i = 0; i < rec.size(); ++i) slice_ids.push_back(rec.id + ":" + std::to_string(i));
  }
  const auto counts = prototypes::cluster_counts(prototypes::assign_all(book, corpus), book.k());
  std::vector<fusion::Representative> reps;
  std::vector<std::size_t> order(book.k());
  std::iota(order.begin(), order.end(), 0);
  if (ranking) order = ranking->order;
  for (std::size_t k : order) {
    if (counts[k] == 0) continue;
    for (auto& rep : fusion::representative_slices(book, corpus, slice_ids, k, cfg.top_n)) {
      reps.push_back(std::move(rep));
    }
  }

  const fs::path heat = split_output(paths, "heatmap", split, ".csv");
  const fs::path rank = split_output(paths, "ranking", split, ".csv");
  const fs::path decomp = split_output(paths, "decomposition", split, ".csv");
  const fs::path rep = split_output(paths, "representatives", split, ".json");
  fusion::export_heatmap(ev.patients, heat);
  io::write_file_atomic(decomp, decomposition);
  fusion::export_representatives(reps, rep);

  StageReport r{"explain", {heat, decomp, rep}, {}};
  r.summary = {{"split", split}, {"patients", ev.patients.size()}};
  if (ranking) {
    fusion::export_ranking(*ranking, rank);
    r.outputs.insert(r.outputs.begin() + 1, rank);
    r.summary["top_clusters"] = std::vector<std::size_t>(
        order.begin(), order.begin() + static_cast<long>(std::min<std::size_t>(3, order.size())));
  } else {
    std::error_code ec;
    fs::remove(rank, ec);  // never leave a ranking from an earlier run behind
    r.summary["ranking"] = "undefined: the model predicts a single class on this split";
  }
  finish(cfg, paths, r, {paths.embedded_split(split), paths.book(), paths.model_checkpoint()}, split);
  return r;
}

}  // namespace diff3d::pipeline
