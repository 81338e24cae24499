// g2k: train, evaluate, visualize and gradient-check trajectory models.
// Exit codes: 0 ok, 1 other failure, 2 usage, 3 divergence, 4 config
// mismatch, 5 gradient check failure.

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "g2k/g2k.h"

namespace {

struct ConfigDeleter {
  void operator()(g2k_config* c) const { g2k_config_destroy(c); }
};
struct DatasetDeleter {
  void operator()(g2k_dataset* d) const { g2k_dataset_destroy(d); }
};
struct ModelDeleter {
  void operator()(g2k_model* m) const { g2k_model_destroy(m); }
};
using ConfigPtr = std::unique_ptr<g2k_config, ConfigDeleter>;
using DatasetPtr = std::unique_ptr<g2k_dataset, DatasetDeleter>;
using ModelPtr = std::unique_ptr<g2k_model, ModelDeleter>;

struct Failure {
  int code;
};

int exit_code(g2k_status s) {
  switch (s) {
    case G2K_OK:
    case G2K_ERR_USAGE:
    case G2K_ERR_DIVERGENCE:
    case G2K_ERR_CONFIG_MISMATCH:
    case G2K_ERR_GRADCHECK:
      return static_cast<int>(s);
    default:
      return 1;
  }
}

void check(g2k_status s, const std::string& context) {
  if (s == G2K_OK) return;
  std::cerr << "g2k: " << context << ": " << g2k_last_error() << '\n';
  throw Failure{exit_code(s)};
}

void print_line(const char* line, void*) { std::cout << line << '\n'; }

// Options shared by every subcommand that builds a run configuration.
struct RunOptions {
  std::string config_file;
  std::string variant;
  std::string scenario;
  std::string data;
  std::optional<long long> seed;
  std::optional<int> epochs;
  std::optional<int> batch_size;
  std::optional<int> grid_size;
  std::optional<double> lambda;
  std::optional<int> hidden;
  std::optional<double> lr;
  std::optional<int> obs_len;
  std::optional<int> pred_len;
  std::optional<int> neighborhood;
  std::string scene_image;
  std::vector<std::string> overrides;  // key=value

  void attach(CLI::App* app, bool with_data) {
    app->add_option("--config", config_file, "key=value config file")
        ->check(CLI::ExistingFile);
    app->add_option("--variant", variant, "g_lstm, mc, mcr_n, mcr_mp or mcr_mpc");
    if (with_data) {
      app->add_option("--scenario", scenario, "synthetic scenario file")
          ->check(CLI::ExistingFile);
      app->add_option("--data", data, "tab-separated frame ped x y [pan] file")
          ->check(CLI::ExistingFile);
    }
    app->add_option("--seed", seed, "random seed (G2K_SEED overrides the config file)");
    app->add_option("--epochs", epochs);
    app->add_option("--batch-size", batch_size, "scene batches per optimizer step");
    app->add_option("--grid-size", grid_size, "cells per side of the scene grid");
    app->add_option("--lambda", lambda, "static feature shrinkage");
    app->add_option("--hidden", hidden, "grid LSTM hidden size");
    app->add_option("--lr", lr, "learning rate");
    app->add_option("--obs-len", obs_len);
    app->add_option("--pred-len", pred_len);
    app->add_option("--neighborhood-size", neighborhood, "pedestrians per scene batch");
    app->add_option("--scene-image", scene_image, "PGM scene image")
        ->check(CLI::ExistingFile);
    app->add_option("--set", overrides, "extra key=value setting (repeatable)");
  }

  ConfigPtr build() const {
    g2k_config* raw = nullptr;
    check(g2k_config_create(&raw), "config");
    ConfigPtr cfg(raw);
    if (!config_file.empty()) check(g2k_config_load_file(raw, config_file.c_str()), "config file");
    if (const char* env = std::getenv("G2K_SEED")) {
      check(g2k_config_set(raw, "seed", env), "G2K_SEED");
    }
    auto set = [&](const char* key, const std::string& value) {
      check(g2k_config_set(raw, key, value.c_str()), std::string("--") + key);
    };
    if (!variant.empty()) set("variant", variant);
    if (seed) set("seed", std::to_string(*seed));
    if (epochs) set("epochs", std::to_string(*epochs));
    if (batch_size) set("batch_size", std::to_string(*batch_size));
    if (grid_size) set("grid_size", std::to_string(*grid_size));
    if (lambda) set("lambda", CLI::detail::to_string(*lambda));
    if (hidden) set("hidden", std::to_string(*hidden));
    if (lr) set("lr", CLI::detail::to_string(*lr));
    if (obs_len) set("obs_len", std::to_string(*obs_len));
    if (pred_len) set("pred_len", std::to_string(*pred_len));
    if (neighborhood) set("neighborhood_size", std::to_string(*neighborhood));
    if (!scene_image.empty()) set("scene_image", scene_image);
    for (const auto& kv : overrides) {
      const auto eq = kv.find('=');
      if (eq == std::string::npos) {
        std::cerr << "g2k: --set expects key=value, got '" << kv << "'\n";
        throw Failure{2};
      }
      set(kv.substr(0, eq).c_str(), kv.substr(eq + 1));
    }
    return cfg;
  }

  DatasetPtr dataset(const g2k_config* cfg) const {
    if (scenario.empty() == data.empty()) {
      std::cerr << "g2k: give exactly one of --scenario or --data\n";
      throw Failure{2};
    }
    g2k_dataset* raw = nullptr;
    if (!scenario.empty()) {
      check(g2k_dataset_synthesize(cfg, scenario.c_str(), &raw), "scenario");
    } else {
      check(g2k_dataset_load(cfg, data.c_str(), &raw), "dataset");
    }
    return DatasetPtr(raw);
  }
};

std::string hash_of(const g2k_config* cfg) {
  char hash[17];
  check(g2k_config_hash(cfg, hash), "config");
  return hash;
}

// Windows are cut with the checkpoint's shapes; only the neighborhood size
// and scene image may come from the command line.
ConfigPtr model_data_config(const g2k_model* model, const RunOptions& opts) {
  g2k_config* raw = nullptr;
  check(g2k_model_copy_config(model, &raw), "checkpoint config");
  ConfigPtr cfg(raw);
  if (opts.neighborhood) {
    check(g2k_config_set(raw, "neighborhood_size", std::to_string(*opts.neighborhood).c_str()),
          "--neighborhood-size");
  }
  if (!opts.scene_image.empty()) {
    check(g2k_config_set(raw, "scene_image", opts.scene_image.c_str()), "--scene-image");
  }
  return cfg;
}

int run_train(const RunOptions& opts, const std::string& out_dir, const CLI::App& sub) {
  auto cfg = opts.build();
  const char* variant = g2k_config_get(cfg.get(), "variant");
  if (!variant || !*variant) {
    std::cerr << "g2k train: --variant is required\n" << sub.help();
    return 2;
  }
  auto ds = opts.dataset(cfg.get());
  g2k_model* raw = nullptr;
  check(g2k_model_create(cfg.get(), &raw), "model");
  ModelPtr model(raw);
  std::cout << "config " << hash_of(cfg.get()) << '\n';
  check(g2k_model_train(model.get(), ds.get(), out_dir.c_str(), print_line, nullptr),
        "train");
  const auto ckpt = (std::filesystem::path(out_dir) / "ckpt").string();
  check(g2k_model_save(model.get(), ckpt.c_str()), "save");
  std::cout << "wrote " << ckpt << '\n';
  return 0;
}

int run_eval(const RunOptions& opts, const std::string& ckpt, bool baseline, bool ablate,
             const std::string& csv) {
  auto cfg = opts.build();
  if (ablate) {
    auto ds = opts.dataset(cfg.get());
    check(g2k_ablate(cfg.get(), ds.get(), csv.empty() ? nullptr : csv.c_str(), print_line,
                     nullptr),
          "ablate");
    return 0;
  }
  if (!baseline && ckpt.empty()) {
    std::cerr << "g2k eval: --ckpt is required unless --baseline is given\n";
    return 2;
  }
  std::vector<g2k_report> reports;
  if (baseline) {
    auto ds = opts.dataset(cfg.get());
    g2k_report r;
    check(g2k_baseline_evaluate(ds.get(), cfg.get(), &r), "baseline");
    reports.push_back(r);
  }
  if (!ckpt.empty()) {
    g2k_model* raw = nullptr;
    check(g2k_model_load(ckpt.c_str(), cfg.get(), &raw), "checkpoint");
    ModelPtr model(raw);
    auto ds = opts.dataset(model_data_config(model.get(), opts).get());
    g2k_report r;
    check(g2k_model_evaluate(model.get(), ds.get(), &r), "evaluate");
    reports.push_back(r);
  }
  check(g2k_reports_print(reports.data(), reports.size(), print_line, nullptr), "report");
  if (!csv.empty()) {
    check(g2k_reports_write_csv(reports.data(), reports.size(), csv.c_str()), "csv");
  }
  for (const auto& r : reports) {
    if (!r.invariants_ok) {
      std::cerr << "g2k eval: metric invariants violated for " << r.variant << '\n';
      return 1;
    }
  }
  return 0;
}

int run_viz(const RunOptions& opts, const std::string& ckpt, long long batch, int step,
            const std::string& out_dir) {
  auto cfg = opts.build();
  g2k_model* raw = nullptr;
  check(g2k_model_load(ckpt.c_str(), cfg.get(), &raw), "checkpoint");
  ModelPtr model(raw);
  auto ds = opts.dataset(model_data_config(model.get(), opts).get());
  if (batch < 0) {
    std::cerr << "g2k viz: --batch must be >= 0\n";
    return 2;
  }
  check(g2k_model_export_viz(model.get(), ds.get(), static_cast<size_t>(batch), step,
                             out_dir.c_str()),
        "viz");
  std::cout << "wrote " << out_dir << '\n';
  return 0;
}

int run_gradcheck(const std::string& variant, long long seed, double tol) {
  const auto s = g2k_gradcheck(variant.c_str(), static_cast<uint64_t>(seed), tol, print_line,
                               nullptr);
  if (s != G2K_OK) {
    std::cerr << "g2k gradcheck: " << g2k_last_error() << '\n';
    return exit_code(s);
  }
  std::cout << "gradcheck " << variant << " passed\n";
  return 0;
}

int run_synth(const RunOptions& opts, const std::string& out) {
  auto cfg = opts.build();
  auto ds = opts.dataset(cfg.get());
  check(g2k_dataset_write_tsv(ds.get(), out.c_str()), "write");
  size_t batches = 0;
  check(g2k_dataset_batch_count(ds.get(), &batches), "dataset");
  std::cout << "wrote " << out << " (" << batches << " scene batches)\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Graph-based pedestrian trajectory prediction"};
  app.require_subcommand(1);

  RunOptions train_opts, eval_opts, viz_opts, synth_opts;
  std::string train_out, eval_ckpt, eval_csv, viz_ckpt, viz_out, synth_out, gc_variant;
  bool eval_baseline = false, eval_ablate = false;
  long long viz_batch = 0, gc_seed = 0;
  int viz_step = -1;
  double gc_tol = 1e-4;

  auto* train = app.add_subcommand("train", "train a model and write ckpt + log");
  train_opts.attach(train, true);
  train->add_option("--out", train_out, "output directory")->required();

  auto* eval = app.add_subcommand("eval", "ADE/FDE report for a checkpoint or baseline");
  eval_opts.attach(eval, true);
  eval->add_option("--ckpt", eval_ckpt, "checkpoint file");
  eval->add_flag("--baseline", eval_baseline, "also score the constant-velocity baseline");
  eval->add_flag("--ablate", eval_ablate, "run the neighborhood/attention/static-grid sweep");
  eval->add_option("--csv", eval_csv, "write the report as CSV");

  auto* viz = app.add_subcommand("viz", "export adjacency, attention and grid heatmap");
  viz_opts.attach(viz, true);
  viz->add_option("--ckpt", viz_ckpt, "checkpoint file")->required();
  viz->add_option("--batch", viz_batch, "scene batch index");
  viz->add_option("--step", viz_step, "observed step (default: last)");
  viz->add_option("--out", viz_out, "output directory")->required();

  auto* gc = app.add_subcommand("gradcheck", "finite-difference check on a desk-size model");
  gc->add_option("--variant", gc_variant, "variant to check")->required();
  gc->add_option("--seed", gc_seed);
  gc->add_option("--tol", gc_tol, "relative error tolerance");

  auto* synth = app.add_subcommand("synth", "write synthetic scenario tracks as TSV");
  synth_opts.attach(synth, true);
  synth->add_option("--out", synth_out, "output TSV")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (*train) return run_train(train_opts, train_out, *train);
    if (*eval) return run_eval(eval_opts, eval_ckpt, eval_baseline, eval_ablate, eval_csv);
    if (*viz) return run_viz(viz_opts, viz_ckpt, viz_batch, viz_step, viz_out);
    if (*gc) return run_gradcheck(gc_variant, gc_seed, gc_tol);
    if (*synth) return run_synth(synth_opts, synth_out);
  } catch (const Failure& f) {
    return f.code;
  }
  return 2;
}
