// Copyright 2026 The Diff3D Authors
// SPDX-License-Identifier: Apache-2.0

// Acceptance suite. Prints one PASS/FAIL line per criterion and exits non-zero
// if any criterion fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <functional>
#include <iostream>
#include <map>
#include <set>
#include <sstream>

#include <json.hpp>

#include "attention_reference.hpp"
#include "diff3d/cli.hpp"
#include "diff3d/clustervit/model.hpp"
#include "diff3d/diffusion/autoencoder.hpp"
#include "diff3d/fusion/fusion.hpp"
#include "diff3d/numerics/grad_check.hpp"
#include "diff3d/pipeline/batching.hpp"
#include "diff3d/pipeline/stages.hpp"
#include "diff3d/prototypes/spherical_kmeans.hpp"
#include "diffusion_fixtures.hpp"
#include "kmeans_oracle.hpp"
#include "pipeline_fixtures.hpp"
#include "test_util.hpp"

using namespace diff3d;
using diff3d::testing::random_tensor;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string num(double v) {
  std::ostringstream os;
  os << v;
  return os.str();
}

clustervit::AttentionParams attention_params(ParameterSet& reg, std::size_t m, Rng& rng) {
  clustervit::AttentionParams p;
  p.wq = &reg.add("wq", random_tensor({m, m}, rng, 0.5));
  p.wk = &reg.add("wk", random_tensor({m, m}, rng, 0.5));
  p.wv = &reg.add("wv", random_tensor({m, m}, rng, 0.5));
  p.wo = &reg.add("wo", random_tensor({m, m}, rng, 0.5));
  p.bo = &reg.add("bo", random_tensor({m}, rng, 0.5));
  return p;
}

Outcome attention_equivalence() {
  double worst = 0.0;
  std::size_t configs = 0;
  const std::size_t dims[][2] = {{8, 1}, {8, 2}, {8, 4}, {12, 3}, {16, 4}};
  for (std::uint64_t seed = 0; seed < 25; ++seed) {
    Rng rng(1000 + seed);
    const auto [m, h] = dims[seed % 5];
    const std::size_t n = 2 + rng() % 15;
    ParameterSet reg;
    auto p = attention_params(reg, m, rng);
    Tensor s = random_tensor({n, m}, rng);
    std::vector<bool> mask(n, true);
    const std::size_t pads = rng() % (n / 2 + 1);
    for (std::size_t i = n - pads; i < n; ++i) mask[i] = false;
    // Distinct ids in shuffled order; padded rows carry the sentinel K = n.
    std::vector<std::size_t> c(n);
    for (std::size_t i = 0; i < n; ++i) c[i] = i;
    std::shuffle(c.begin(), c.end(), rng);
    for (std::size_t i = 0; i < n; ++i)
      if (!mask[i]) c[i] = n;
    Tape tape;
    Tensor got = clustervit::clustering_attention(tape, tape.constant(s), c, mask, p, h, n).value();
    Tensor want = diff3d::testing::reference_mha(s, mask, p, h);
    worst = std::max(worst, max_abs_diff(got, want));
    ++configs;
  }
  return {worst < 1e-6, std::to_string(configs) + " configs, max abs diff " + num(worst)};
}

Outcome gradient_suite() {
  double worst = 0.0;
  std::string where;
  bool complete = true;
  auto note = [&](const GradCheckResult& r, const std::string& what, std::size_t expected) {
    if (r.max_rel_error > worst) {
      worst = r.max_rel_error;
      where = what + ":" + r.worst_param;
    }
    complete = complete && r.checked == expected;
  };

  // Transformer layers, risk head and A through the fused patient loss.
  for (std::uint64_t seed = 0; seed < 2; ++seed) {
    clustervit::ViTConfig cfg;
    cfg.d_repr = 4;
    cfg.model_dim = 8;
    cfg.layers = 1;
    cfg.heads = 2;
    cfg.clusters = 3;
    cfg.max_len = 5;
    pipeline::Diff3DModel model(cfg, seed);
    Rng rng(50 + seed);
    for (Parameter* p : model.parameters().all()) {
      Tensor noise = normal_tensor(p->value.shape(), rng, 0.4);
      for (std::size_t i = 0; i < noise.size(); ++i) p->value[i] += noise[i];
    }
    clustervit::SequenceBatch batch;
    batch.batch = 2;
    batch.length = 5;
    batch.dim = 4;
    batch.features = random_tensor({2, 5, 4}, rng);
    batch.clusters = {0, 1, 0, 2, 3, 2, 2, 1, 3, 3};
    batch.mask = {true, true, true, true, false, true, true, true, false, false};
    batch.labels = {1, 0};
    batch.ids = {"a", "b"};
    auto res = grad_check(
        [&](Tape& t) {
          auto out = model.forward(t, batch, {});
          return add(fusion::fusion_loss(out[0].score, 1), fusion::fusion_loss(out[1].score, 0));
        },
        model.parameters().all());
    note(res, "transformer", model.parameters().element_count());
  }

  // Toy encoder and denoiser on one tape.
  {
    const auto sched = diffusion::NoiseSchedule::linear(100);
    ParameterSet reg;
    Rng init(7);
    diffusion::MlpEncoder enc(reg, "enc.", 3, 6, 4, init);
    diffusion::ResidualMlpDenoiser den(
        reg, "den.", {.data_dim = 3, .hidden = 6, .time_dim = 4, .cond_dim = 4}, init);
    Rng rng(8);
    const Tensor x = normal_tensor({4, 3}, rng), e = normal_tensor({4, 3}, rng);
    const std::vector<std::size_t> steps{10, 40, 70, 100};
    auto res = grad_check(
        [&](Tape& t) { return diffusion::ddim_loss(t, x, steps, e, den, &enc, sched); }, reg.all());
    note(res, "diffusion", reg.element_count());
  }
  return {worst < 1e-4 && complete,
          "max rel error " + num(worst) + " at " + where + (complete ? "" : ", some parameters unchecked")};
}

Outcome complexity() {
  Rng rng(3);
  ParameterSet reg;
  auto p = attention_params(reg, 16, rng);
  auto run = [&](std::size_t n, std::size_t k) {
    Tensor s = random_tensor({n, 16}, rng);
    std::vector<std::size_t> c(n);
    for (std::size_t i = 0; i < n; ++i) c[i] = i % k;
    clustervit::AttentionCounters counters;
    Tape tape;
    clustervit::clustering_attention(tape, tape.constant(s), c, std::vector<bool>(n, true), p, 4, k,
                                     &counters);
    return counters.attention_map;
  };
  const double ratio = static_cast<double>(run(128, 8)) / static_cast<double>(run(64, 8));
  bool quadratic = true;
  for (std::size_t n : {16, 64}) quadratic = quadratic && run(n, n) == n * n * 16;
  return {std::abs(ratio - 2.0) <= 0.1 && quadratic,
          "K=8 ratio 128/64 = " + num(ratio) + (quadratic ? ", K=N count is N^2*M" : ", K=N count wrong")};
}

struct Chain {
  pipeline::RunConfig cfg;
  fs::path root;
  std::string failure;  // empty when every command exited 0
};

Chain run_chain(const std::string& name, double class_signal) {
  const nlohmann::json desk = nlohmann::json::parse(io::read_file(fs::path(DIFF3D_SOURCE_DIR) / "configs/desk.json"));
  Chain chain{pipeline::config_from_json(desk), diff3d::testing::fresh_dir("acceptance/" + name), {}};
  chain.cfg.data.class_signal = class_signal;
  chain.cfg.work_dir = (chain.root / "work").string();
  chain.cfg.dataset_dir = (chain.root / "dataset").string();
  const fs::path config = chain.root / "config.json";
  io::write_file_atomic(config, pipeline::config_to_json(chain.cfg, true).dump(2));
  for (const char* cmd : {"gen-synthetic", "diffusion-train", "encode", "cluster", "train", "eval",
                          "explain"}) {
    const std::string c = config.string();
    const char* argv[] = {"diff3d", cmd, "--config", c.c_str()};
    std::ostringstream out, err;
    const int code = cli::run_cli(4, argv, out, err);
    if (code != 0) {
      chain.failure = std::string(cmd) + " exited " + std::to_string(code) + ": " + err.str();
      break;
    }
  }
  return chain;
}

std::vector<std::vector<std::string>> csv_rows(const std::string& text) {
  std::vector<std::vector<std::string>> rows;
  std::istringstream is(text);
  std::string line;
  std::getline(is, line);  // header
  while (std::getline(is, line)) {
    std::vector<std::string> cells;
    std::istringstream ls(line);
    std::string cell;
    while (std::getline(ls, cell, ',')) cells.push_back(cell);
    rows.push_back(cells);
  }
  return rows;
}

double test_auc(const Chain& c) {
  auto m = nlohmann::json::parse(io::read_file(fs::path(c.cfg.work_dir) / "metrics_test.json"));
  if (!m.contains("auc") || m["auc"].is_null()) throw std::runtime_error("test AUC undefined");
  return m["auc"].get<double>();
}

Outcome fusion_exactness(const std::vector<const Chain*>& chains) {
  // Hand example: r̄ = [1, -1, 0.5], q = [0.5, 0.25, 0.25], A = [1, 2, 4].
  const Tensor scores({4, 1}, std::vector<double>{1, 1, -1, 0.5});
  const std::vector<std::size_t> ids{0, 0, 1, 2};
  const auto hand = fusion::decompose(scores, ids, std::vector<bool>(4, true),
                                      Tensor({3}, std::vector<double>{1, 2, 4}));
  const bool hand_ok = std::abs(hand.score - 0.5) <= 1e-12;

  double worst = 0.0;
  std::size_t patients = 0;
  for (const Chain* c : chains) {
    if (!c->failure.empty()) return {false, "chain failed: " + c->failure};
    auto model = pipeline::load_model(c->cfg);
    const Tensor& a = model->cluster_attention().weights().value;
    const std::size_t k = a.size();
    std::map<std::string, double> reported;
    for (const auto& row : csv_rows(io::read_file(fs::path(c->cfg.work_dir) / "scores_test.csv")))
      reported[row[0]] = std::stod(row[2]);
    for (const char* split : {"train", "val", "test"}) {
      const auto records = pipeline::load_clustered_split(c->cfg, split);
      const auto ev = pipeline::evaluate(*model, records);
      for (std::size_t i = 0; i < records.size(); ++i) {
        const auto& rec = records[i];
        Tape tape;
        const std::size_t n = rec.clusters.size();
        Tensor r = model->vit()
                       .forward_sequence(tape, rec.slices, rec.clusters, std::vector<bool>(n, true), {})
                       .scores.value();
        std::vector<double> total(k, 0.0), count(k, 0.0);
        for (std::size_t s = 0; s < n; ++s) {
          total[rec.clusters[s]] += r[s];
          count[rec.clusters[s]] += 1.0;
        }
        double expect = 0.0;
        for (std::size_t j = 0; j < k; ++j)
          if (count[j] > 0) expect += a[j] * (total[j] / count[j]) * (count[j] / static_cast<double>(n));
        worst = std::max(worst, std::abs(expect - ev.patients[i].score));
        if (std::string(split) == "test") worst = std::max(worst, std::abs(expect - reported.at(rec.id)));
        ++patients;
      }
    }
  }
  return {hand_ok && worst <= 1e-9, "hand example R = " + num(hand.score) + "; " + std::to_string(patients) +
                                        " patients, max |sum - R| " + num(worst)};
}

Outcome kmeans() {
  std::size_t optimal = 0, monotone = 0;
  const std::size_t instances = 50;
  for (std::uint64_t seed = 0; seed < instances; ++seed) {
    Rng rng(500 + seed);
    const std::size_t n = 3 + rng() % 6, d = 2 + rng() % 3;
    const Tensor corpus = normal_tensor({n, d}, rng);
    const auto book = prototypes::fit(corpus, {.k = 2, .seed = seed});
    const double got = prototypes::objective(book, corpus, prototypes::assign_all(book, corpus));
    const double best = diff3d::testing::brute_force_best_objective_k2(corpus);
    if (got >= best - 1e-9 * std::max(1.0, best)) ++optimal;
    bool up = true;
    for (std::size_t i = 1; i < book.objective_history.size(); ++i)
      up = up && book.objective_history[i] >= book.objective_history[i - 1] - 1e-12;
    if (up) ++monotone;
  }
  return {optimal * 10 >= instances * 9 && monotone == instances,
          std::to_string(optimal) + "/50 optimal, " + std::to_string(monotone) + "/50 monotone"};
}

Outcome ddim() {
  Rng rng(9);
  std::uniform_real_distribution<double> u(1e-4, 0.05);
  double recon = 0.0;
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<double> betas(30 + trial);
    for (double& b : betas) b = u(rng);
    std::sort(betas.begin(), betas.end());
    const auto sched = diffusion::NoiseSchedule::from_betas(betas);
    const Tensor x0 = normal_tensor({3, 5}, rng), eps = normal_tensor({3, 5}, rng);
    Tensor x = diffusion::q_sample(x0, sched.steps(), eps, sched);
    for (std::size_t t = sched.steps(); t >= 1; --t) x = diffusion::ddim_step(x, t, eps, sched);
    recon = std::max(recon, max_abs_diff(x, x0));
  }
  const auto sched = diffusion::NoiseSchedule::linear();
  double worst = 0.0;
  for (std::size_t t : {10, 100, 250, 500, 900}) {
    const auto fit = diff3d::testing::fit_linear_denoiser(sched, t, 17 + t);
    worst = std::max(worst, std::abs(fit.weight - fit.expected));
  }
  return {recon <= 1e-5 && worst < 0.05,
          "reconstruction error " + num(recon) + ", max |w - sqrt(1-abar)| " + num(worst)};
}

Outcome end_to_end(const Chain& on, const Chain& off) {
  if (!on.failure.empty()) return {false, "signal-on chain failed: " + on.failure};
  if (!off.failure.empty()) return {false, "null chain failed: " + off.failure};
  const double a = test_auc(on), b = test_auc(off);
  return {a >= 0.9 && b >= 0.4 && b <= 0.6,
          "test AUC " + num(a) + " with signal, " + num(b) + " without"};
}

Outcome explainability(const Chain& on) {
  if (!on.failure.empty()) return {false, "chain failed: " + on.failure};
  const fs::path ranking = fs::path(on.cfg.work_dir) / "ranking_test.csv";
  if (!fs::exists(ranking)) return {false, "no ranking: the model predicts a single class"};
  const auto truth = pipeline::read_ground_truth(fs::path(on.cfg.dataset_dir) / "ground_truth.json");
  const std::set<std::size_t> lesion(truth.lesion.begin(), truth.lesion.end());

  // A cluster is a lesion cluster when most of its member slices come from a
  // lesion prototype.
  const std::size_t k = on.cfg.model.clusters;
  std::vector<std::map<std::size_t, std::size_t>> sources(k);
  for (const auto& rec : pipeline::load_clustered_split(on.cfg, "manifest")) {
    const auto& src = truth.slice_sources.at(rec.id);
    for (std::size_t s = 0; s < rec.clusters.size(); ++s) ++sources[rec.clusters[s]][src[s]];
  }
  auto is_lesion = [&](std::size_t c) {
    std::size_t best = 0, arg = 0;
    for (auto [proto, count] : sources[c])
      if (count > best) best = count, arg = proto;
    return best > 0 && lesion.count(arg) > 0;
  };
  std::vector<std::size_t> top;
  for (const auto& row : csv_rows(io::read_file(ranking)))
    if (std::stoul(row[2]) <= 3) top.push_back(std::stoul(row[0]));
  std::sort(top.begin(), top.end());
  std::string list;
  bool hit = false;
  for (std::size_t c : top) {
    list += (list.empty() ? "" : " ") + std::to_string(c) + (is_lesion(c) ? "*" : "");
    hit = hit || is_lesion(c);
  }
  return {hit, "top 3 clusters [" + list + "] (* = lesion)"};
}

Outcome metrics_oracle() {
  double worst = 0.0;
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    Rng rng(900 + seed);
    const std::size_t n = 2 + rng() % 99;
    std::vector<double> s(n);
    std::vector<int> y(n);
    for (std::size_t i = 0; i < n; ++i) {
      s[i] = static_cast<double>(rng() % 25) / 25.0;
      y[i] = static_cast<int>(rng() % 2);
    }
    y[0] = 0;
    y[1] = 1;
    double wins = 0.0, pairs = 0.0;
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j)
        if (y[i] == 1 && y[j] == 0) {
          pairs += 1.0;
          wins += s[i] > s[j] ? 1.0 : (s[i] == s[j] ? 0.5 : 0.0);
        }
    worst = std::max(worst, std::abs(*pipeline::compute_metrics(s, y).auc - wins / pairs));
  }
  return {worst <= 1e-12, "50 sets, max abs diff " + num(worst)};
}

Outcome determinism(const Chain& a, const Chain& b) {
  if (!a.failure.empty() || !b.failure.empty()) return {false, "chain failed"};
  std::size_t files = 0;
  for (const char* sub : {"work", "dataset"}) {
    const auto x = diff3d::testing::tree_bytes(a.root / sub);
    const auto y = diff3d::testing::tree_bytes(b.root / sub);
    if (x.size() != y.size()) return {false, std::string(sub) + ": different file sets"};
    for (const auto& [path, bytes] : x) {
      auto it = y.find(path);
      if (it == y.end() || it->second != bytes) return {false, std::string(sub) + "/" + path + " differs"};
      ++files;
    }
  }
  return {true, std::to_string(files) + " files byte-identical"};
}

}  // namespace

int main() {
  std::size_t failed = 0;
  auto report = [&](int id, const std::string& name, const std::function<Outcome()>& fn) {
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = fn();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (!o.pass) ++failed;
    std::cout << (o.pass ? "PASS " : "FAIL ") << id << " " << name << ": " << o.detail << " ["
              << num(std::round(secs * 10) / 10) << " s]" << std::endl;
  };

  report(1, "attention equivalence", attention_equivalence);
  report(2, "gradient suite", gradient_suite);
  report(3, "attention complexity", complexity);

  const auto chains_start = std::chrono::steady_clock::now();
  const Chain on = run_chain("signal", 1.0);
  const Chain again = run_chain("signal_again", 1.0);
  const Chain off = run_chain("null", 0.0);
  std::cout << "(three CLI chains in "
            << num(std::round(std::chrono::duration<double>(std::chrono::steady_clock::now() - chains_start).count()))
            << " s)" << std::endl;

  report(4, "fusion exactness", [&] { return fusion_exactness({&on, &off}); });
  report(5, "spherical k-means", kmeans);
  report(6, "DDIM", ddim);
  report(7, "end-to-end synthetic", [&] { return end_to_end(on, off); });
  report(8, "explainability fidelity", [&] { return explainability(on); });
  report(9, "AUC oracle", metrics_oracle);
  report(10, "determinism", [&] { return determinism(on, again); });

  std::cout << (failed == 0 ? "all criteria passed" : std::to_string(failed) + " criteria failed") << std::endl;
  return failed == 0 ? 0 : 1;
}
