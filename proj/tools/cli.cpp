// Copyright 2026 The Diff3D Authors
// SPDX-License-Identifier: Apache-2.0

#include "diff3d/cli.hpp"

#include <cstdlib>
#include <functional>
#include <optional>
#include <ostream>

#include <CLI11.hpp>
#include <json.hpp>

#include "diff3d/binary_io.hpp"
#include "diff3d/error.hpp"
#include "diff3d/pipeline/stages.hpp"

namespace diff3d::cli {

namespace {

using pipeline::RunConfig;
using pipeline::StageReport;

template <typename T>
void set_if(const std::optional<T>& flag, T& target) {
  if (flag) target = *flag;
}

/// Flags that every command accepts; anything left unset keeps the config value.
struct CommonFlags {
  std::string config_file;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> work_dir, dataset_dir;
  std::optional<std::size_t> d_repr, model_dim, layers, heads, clusters, max_len;
  std::optional<double> dropout;

  void attach(CLI::App& cmd) {
    cmd.add_option("-c,--config", config_file, "JSON run config (flags override it)")
        ->check(CLI::ExistingFile);
    cmd.add_option("--seed", seed, "Run seed; every stage derives named streams from it");
    cmd.add_option("--work-dir", work_dir, "Directory for all stage outputs [env DIFF3D_WORK_DIR]");
    cmd.add_option("--dataset-dir", dataset_dir,
                   "Synthetic dataset directory (default <work-dir>/dataset) [env DIFF3D_DATASET_DIR]");
    cmd.add_option("--d-repr", d_repr, "Slice representation dim (encoder output)");
    cmd.add_option("--model-dim", model_dim, "Transformer width M");
    cmd.add_option("--layers", layers, "Transformer layers");
    cmd.add_option("--heads", heads, "Attention heads");
    cmd.add_option("-k,--clusters", clusters, "Number of prototypes K");
    cmd.add_option("--max-len", max_len, "Padded sequence length N");
    cmd.add_option("--dropout", dropout, "Dropout rate");
  }

  RunConfig resolve() const {
    RunConfig cfg;
    if (!config_file.empty()) {
      nlohmann::json j;
      try {
        j = nlohmann::json::parse(io::read_file(config_file));
      } catch (const nlohmann::json::exception& e) {
        throw InvalidArgument("config '" + config_file + "': " + e.what());
      }
      cfg = pipeline::config_from_json(j);
    }
    if (const char* env = std::getenv("DIFF3D_WORK_DIR"); env && *env) cfg.work_dir = env;
    if (const char* env = std::getenv("DIFF3D_DATASET_DIR"); env && *env) cfg.dataset_dir = env;
    set_if(seed, cfg.seed);
    set_if(work_dir, cfg.work_dir);
    set_if(dataset_dir, cfg.dataset_dir);
    set_if(d_repr, cfg.model.d_repr);
    set_if(model_dim, cfg.model.model_dim);
    set_if(layers, cfg.model.layers);
    set_if(heads, cfg.model.heads);
    set_if(clusters, cfg.model.clusters);
    set_if(max_len, cfg.model.max_len);
    set_if(dropout, cfg.model.dropout);
    return cfg;
  }
};

struct Command {
  CLI::App* app;
  CommonFlags common;
  std::function<void(RunConfig&)> overrides = [](RunConfig&) {};
  std::function<StageReport(const RunConfig&)> run;
};

void report(std::ostream& out, std::ostream& err, const StageReport& r) {
  if (r.summary.contains("ranking")) {
    err << "warning: cluster ranking " << r.summary["ranking"].get<std::string>() << "\n";
  }
  out << r.command << ": wrote " << r.outputs.size() << " files\n" << r.summary.dump() << "\n";
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Slice-sequence CT classification on cluster prototypes, at desk scale.", "diff3d"};
  app.require_subcommand(1);
  app.set_help_all_flag("--help-all", "Help for every command");

  std::vector<std::unique_ptr<Command>> commands;
  auto add = [&](const char* name, const char* about) -> Command& {
    auto c = std::make_unique<Command>();
    c->app = app.add_subcommand(name, about);
    c->common.attach(*c->app);
    commands.push_back(std::move(c));
    return *commands.back();
  };

  {
    Command& c = add("gen-synthetic", "Write a synthetic cohort of raw slice sequences");
    auto patients = std::make_shared<std::optional<std::size_t>>();
    auto k_true = std::make_shared<std::optional<std::size_t>>();
    auto dim = std::make_shared<std::optional<std::size_t>>();
    auto signal = std::make_shared<std::optional<double>>();
    auto noise = std::make_shared<std::optional<double>>();
    auto lesion = std::make_shared<std::optional<std::size_t>>();
    auto min_slices = std::make_shared<std::optional<std::size_t>>();
    auto max_slices = std::make_shared<std::optional<std::size_t>>();
    c.app->add_option("--patients", *patients, "Number of patients");
    c.app->add_option("--k-true", *k_true, "Ground-truth prototypes");
    c.app->add_option("--dim", *dim, "Raw slice dim");
    c.app->add_option("--class-signal", *signal, "Lesion over-representation in class 1, in [0, 1]");
    c.app->add_option("--noise", *noise, "Noise norm relative to a unit prototype");
    c.app->add_option("--lesion-prototypes", *lesion, "How many prototypes are lesions");
    c.app->add_option("--min-slices", *min_slices, "Fewest slices per patient");
    c.app->add_option("--max-slices", *max_slices, "Most slices per patient (at most N)");
    c.overrides = [=](RunConfig& cfg) {
      set_if(*patients, cfg.data.patients);
      set_if(*k_true, cfg.data.k_true);
      set_if(*dim, cfg.data.dim);
      set_if(*signal, cfg.data.class_signal);
      set_if(*noise, cfg.data.noise);
      set_if(*lesion, cfg.data.lesion_prototypes);
      set_if(*min_slices, cfg.data.min_slices);
      set_if(*max_slices, cfg.data.max_slices);
    };
    c.run = pipeline::run_gen_synthetic;
  }
  {
    Command& c = add("diffusion-train", "Train the diffusion autoencoder on training-split slices");
    auto epochs = std::make_shared<std::optional<std::size_t>>();
    auto batch = std::make_shared<std::optional<std::size_t>>();
    auto lr = std::make_shared<std::optional<double>>();
    auto hidden = std::make_shared<std::optional<std::size_t>>();
    c.app->add_option("--epochs", *epochs, "Diffusion epochs");
    c.app->add_option("--batch", *batch, "Diffusion batch size");
    c.app->add_option("--lr", *lr, "Diffusion learning rate");
    c.app->add_option("--hidden", *hidden, "Hidden width of encoder and denoiser");
    c.overrides = [=](RunConfig& cfg) {
      set_if(*epochs, cfg.diffusion.epochs);
      set_if(*batch, cfg.diffusion.batch);
      set_if(*lr, cfg.diffusion.lr);
      set_if(*hidden, cfg.diffusion.hidden);
    };
    c.run = pipeline::run_diffusion_train;
  }
  {
    Command& c = add("encode", "Write one representation file per patient with the trained encoder");
    c.run = pipeline::run_encode;
  }
  {
    Command& c = add("cluster", "Fit the prototype book on training-split representations");
    auto restarts = std::make_shared<std::optional<std::size_t>>();
    auto iters = std::make_shared<std::optional<std::size_t>>();
    c.app->add_option("--restarts", *restarts, "k-means restarts");
    c.app->add_option("--max-iters", *iters, "k-means iteration cap");
    c.overrides = [=](RunConfig& cfg) {
      set_if(*restarts, cfg.prototypes.restarts);
      set_if(*iters, cfg.prototypes.max_iters);
    };
    c.run = pipeline::run_cluster;
  }
  auto train_flags = [](Command& c) {
    auto epochs = std::make_shared<std::optional<std::size_t>>();
    auto batch = std::make_shared<std::optional<std::size_t>>();
    auto lr = std::make_shared<std::optional<double>>();
    auto weighting = std::make_shared<bool>(false);
    c.app->add_option("--epochs", *epochs, "Training epochs");
    c.app->add_option("--batch", *batch, "Patients per batch");
    c.app->add_option("--lr", *lr, "Adam learning rate");
    c.app->add_flag("--class-weighting", *weighting, "Weight the loss by inverse class frequency");
    return [=](RunConfig& cfg) {
      set_if(*epochs, cfg.train.epochs);
      set_if(*batch, cfg.train.batch);
      set_if(*lr, cfg.train.lr);
      if (*weighting) cfg.train.class_weighting = true;
    };
  };
  {
    Command& c = add("train", "Train the transformer, risk head and cluster attention");
    c.overrides = train_flags(c);
    c.run = pipeline::run_train;
  }
  for (const char* name : {"eval", "explain"}) {
    const bool is_eval = std::string(name) == "eval";
    Command& c = add(name, is_eval ? "Metrics of the trained model on one split"
                                   : "Heatmap, cluster ranking and representative slices");
    auto split = std::make_shared<std::string>("test");
    auto threshold = std::make_shared<std::optional<double>>();
    c.app->add_option("--split", *split, "manifest, train, val or test")->capture_default_str();
    c.app->add_option("--threshold", *threshold, "Decision threshold on logistic(R)");
    auto top_n = std::make_shared<std::optional<std::size_t>>();
    if (!is_eval) c.app->add_option("--top-n", *top_n, "Representative slices per cluster");
    c.overrides = [=](RunConfig& cfg) {
      set_if(*threshold, cfg.train.threshold);
      set_if(*top_n, cfg.top_n);
    };
    if (is_eval) {
      c.run = [split](const RunConfig& cfg) { return pipeline::run_eval(cfg, *split); };
    } else {
      c.run = [split](const RunConfig& cfg) { return pipeline::run_explain(cfg, *split); };
    }
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kOk : kUsage;
  }

  for (const auto& c : commands) {
    if (!c->app->parsed()) continue;
    try {
      RunConfig cfg = c->common.resolve();
      c->overrides(cfg);
      cfg.validate();
      report(out, err, c->run(cfg));
      return kOk;
    } catch (const InvalidArgument& e) {
      err << "error: " << e.what() << "\nRun '" << app.get_name() << " " << c->app->get_name()
          << " --help' for usage.\n";
      return kUsage;
    } catch (const DataError& e) {
      err << "data error: " << e.what() << "\n";
      return kDataError;
    } catch (const NumericalError& e) {
      err << "numerical error: " << e.what() << "\n";
      return kNumericalError;
    } catch (const std::exception& e) {
      err << "error: " << e.what() << "\n";
      return kFailure;
    }
  }
  return kUsage;
}

}  // namespace diff3d::cli
