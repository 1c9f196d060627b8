// Copyright 2026 The Diff3D Authors
// SPDX-License-Identifier: Apache-2.0

#include "diff3d/pipeline/training.hpp"

#include <cmath>
#include <limits>
#include <sstream>

#include "diff3d/error.hpp"
#include "diff3d/numerics/adam.hpp"
#include "diff3d/numerics/ops.hpp"
#include "diff3d/pipeline/batching.hpp"

namespace diff3d::pipeline {

using clustervit::ForwardOptions;
using clustervit::SequenceBatch;

Diff3DModel::Diff3DModel(const clustervit::ViTConfig& config, std::uint64_t seed) {
  Rng init = make_stream(seed, "init");
  vit_ = std::make_unique<clustervit::ClusterViT>(params_, config, init);
  attention_ = std::make_unique<fusion::GlobalClusterAttention>(params_, config.clusters);
}

std::vector<Diff3DModel::PatientOutput> Diff3DModel::forward(Tape& tape, const SequenceBatch& batch,
                                                             const ForwardOptions& options) const {
  clustervit::SliceScores s = vit_->encoder_forward(tape, batch, options);
  Var a = tape.param(attention_->weights());
  std::vector<PatientOutput> out;
  for (std::size_t b = 0; b < batch.batch; ++b) {
    fusion::FusionResult f =
        fusion::fuse(s.scores[b], batch.sequence_clusters(b), batch.sequence_mask(b), a);
    f.decomposition.patient_id = batch.ids.at(b);
    f.decomposition.label = batch.labels.at(b);
    out.push_back({f.score, std::move(f.decomposition)});
  }
  return out;
}

namespace {

std::vector<Tensor> copy_values(const ParameterSet& ps) {
  std::vector<Tensor> v;
  for (const Parameter* p : ps.all()) v.push_back(p->value);
  return v;
}

void load_values(ParameterSet& ps, const std::vector<Tensor>& values) {
  auto all = ps.all();
  for (std::size_t i = 0; i < all.size(); ++i) all[i]->value = values[i];
}

std::string fmt(double v) {
  std::ostringstream os;
  os.imbue(std::locale::classic());
  os.precision(std::numeric_limits<double>::max_digits10);
  os << v;
  return os.str();
}

}  // namespace

TrainResult train(Diff3DModel& model, const std::vector<VolumeRecord>& train_set,
                  const std::vector<VolumeRecord>& val_set, const TrainConfig& cfg,
                  const EpochCallback& on_epoch) {
  if (train_set.empty()) throw InvalidArgument("empty training set");
  if (cfg.epochs == 0 || cfg.batch == 0) throw InvalidArgument("epochs and batch must be positive");
  const auto& vc = model.config();

  double class_weight[2] = {1.0, 1.0};
  if (cfg.class_weighting) {
    std::size_t count[2] = {0, 0};
    for (const auto& r : train_set) count[r.label]++;
    for (int y : {0, 1}) {
      if (count[y] > 0) {
        class_weight[y] = static_cast<double>(train_set.size()) / (2.0 * static_cast<double>(count[y]));
      }
    }
  }

  Adam adam(model.parameters().all(), AdamConfig{.lr = cfg.lr});
  Rng shuffle = make_stream(cfg.seed, "train.shuffle");
  Rng dropout = make_stream(cfg.seed, "dropout");
  const ForwardOptions train_mode{.train = true, .dropout = vc.dropout, .rng = &dropout};

  TrainResult result;
  std::vector<Tensor> best;
  double best_auc = -1.0, best_loss = std::numeric_limits<double>::infinity();
  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    auto batches = pad_and_batch(train_set, vc.max_len, vc.clusters, cfg.batch, &shuffle);
    double total = 0.0;
    for (std::size_t bi = 0; bi < batches.size(); ++bi) {
      const SequenceBatch& batch = batches[bi];
      adam.zero_grad();
      Tape tape;
      auto outs = model.forward(tape, batch, train_mode);
      Var loss;
      for (std::size_t b = 0; b < outs.size(); ++b) {
        const int y = batch.labels[b];
        Var term = fusion::fusion_loss(outs[b].score, y, class_weight[y]);
        loss = b == 0 ? term : add(loss, term);
      }
      loss = scale(loss, 1.0 / static_cast<double>(outs.size()));
      const double value = loss.value()[0];
      if (!std::isfinite(value)) {
        throw NumericalError("non-finite training loss at epoch " + std::to_string(epoch) +
                             ", batch " + std::to_string(bi + 1));
      }
      tape.backward(loss);
      try {
        adam.step();
      } catch (const NumericalError& e) {
        throw NumericalError(std::string(e.what()) + " (epoch " + std::to_string(epoch) +
                             ", batch " + std::to_string(bi + 1) + ")");
      }
      total += value * static_cast<double>(batch.batch);
    }

    EpochLog log;
    log.epoch = epoch;
    log.train_loss = total / static_cast<double>(train_set.size());
    bool improved = false;
    if (!val_set.empty()) {
      Evaluation ev = evaluate(model, val_set, cfg.threshold);
      log.val_loss = ev.loss;
      log.val = ev.metrics;
      if (ev.metrics.auc) {
        improved = *ev.metrics.auc > best_auc;
        if (improved) best_auc = *ev.metrics.auc;
      } else if (best_auc < 0.0) {
        improved = ev.loss < best_loss;
      }
      if (improved) best_loss = ev.loss;
    } else {
      improved = true;
    }
    if (improved) {
      best = copy_values(model.parameters());
      result.best_epoch = epoch;
      result.best_val_auc = log.val ? log.val->auc : std::nullopt;
    }
    result.log.push_back(log);
    if (on_epoch) on_epoch(log);
  }
  load_values(model.parameters(), best);
  return result;
}

Evaluation evaluate(const Diff3DModel& model, const std::vector<VolumeRecord>& records,
                    double threshold, std::size_t batch_size) {
  if (records.empty()) throw InvalidArgument("nothing to evaluate");
  const auto& vc = model.config();
  Evaluation ev;
  std::vector<int> labels;
  double loss = 0.0;
  for (const SequenceBatch& batch : pad_and_batch(records, vc.max_len, vc.clusters, batch_size)) {
    Tape tape;
    for (auto& out : model.forward(tape, batch, ForwardOptions{})) {
      const int y = out.decomposition.label;
      loss += fusion::fusion_loss(out.score, y).value()[0];
      ev.probabilities.push_back(fusion::predict(out.decomposition.score));
      labels.push_back(y);
      ev.patients.push_back(std::move(out.decomposition));
    }
  }
  ev.loss = loss / static_cast<double>(records.size());
  ev.metrics = compute_metrics(ev.probabilities, labels, threshold);
  return ev;
}

std::string epoch_log_csv(const std::vector<EpochLog>& log) {
  std::string out = "epoch,train_loss,val_loss,val_auc,val_acc,val_sens,val_spec,val_f1\n";
  for (const auto& e : log) {
    out += std::to_string(e.epoch) + "," + fmt(e.train_loss) + ",";
    out += e.val_loss ? fmt(*e.val_loss) : "";
    if (e.val) {
      out += "," + (e.val->auc ? fmt(*e.val->auc) : std::string()) + "," + fmt(e.val->accuracy) +
             "," + fmt(e.val->sensitivity) + "," + fmt(e.val->specificity) + "," + fmt(e.val->f1);
    } else {
      out += ",,,,,";
    }
    out += "\n";
  }
  return out;
}

}  // namespace diff3d::pipeline
