#include "g2k/g2k.h"

#include <cstring>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <memory>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "g2k/checkpoint.hpp"
#include "g2k/config.hpp"
#include "g2k/data.hpp"
#include "g2k/error.hpp"
#include "g2k/eval.hpp"
#include "g2k/image.hpp"
#include "g2k/sri.hpp"
#include "g2k/training.hpp"

using namespace g2k;

struct g2k_config {
  config::RunConfig cfg;
};

struct g2k_dataset {
  std::string name;
  std::vector<data::TrackPoint> points;
  std::vector<data::SceneBatch> batches;
};

struct g2k_model {
  config::RunConfig cfg;
  sri::G2KModel model;
  int epoch = 0;
  std::vector<double> history;
};

namespace {

thread_local std::string last_error;

g2k_status status_of(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::kConfig:
    case ErrorKind::kResize:
    case ErrorKind::kInput:
      return G2K_ERR_USAGE;
    case ErrorKind::kDivergence:
      return G2K_ERR_DIVERGENCE;
    case ErrorKind::kConfigMismatch:
      return G2K_ERR_CONFIG_MISMATCH;
    case ErrorKind::kIo:
      return G2K_ERR_IO;
    case ErrorKind::kParse:
      return G2K_ERR_PARSE;
    case ErrorKind::kIntegrity:
      return G2K_ERR_INTEGRITY;
    case ErrorKind::kNumeric:
      return G2K_ERR_NUMERIC;
    case ErrorKind::kShape:
    case ErrorKind::kContract:
      return G2K_ERR_INTERNAL;
  }
  return G2K_ERR_INTERNAL;
}

template <class F>
g2k_status guarded(F&& body) {
  try {
    last_error.clear();
    return body();
  } catch (const Error& e) {
    last_error = e.what();
    return status_of(e.kind());
  } catch (const std::exception& e) {
    last_error = e.what();
    return G2K_ERR_INTERNAL;
  } catch (...) {
    last_error = "unknown error";
    return G2K_ERR_INTERNAL;
  }
}

void require(const void* p, const char* what) {
  if (!p) fail(ErrorKind::kConfig, std::string(what) + " is NULL");
}

void copy_hash(const std::string& hash, char out[17]) {
  std::memset(out, 0, 17);
  std::memcpy(out, hash.data(), std::min<std::size_t>(hash.size(), 16));
}

template <std::size_t N>
void copy_text(const std::string& text, char (&out)[N]) {
  std::memset(out, 0, N);
  std::memcpy(out, text.data(), std::min(text.size(), N - 1));
}

data::WindowOptions window_options(const config::RunConfig& cfg, const std::string& name) {
  data::WindowOptions opts;
  const int obs = cfg.get_int("obs_len");
  const int pred = cfg.get_int("pred_len");
  const int cap = cfg.get_int("neighborhood_size");
  const int shift = cfg.get_int("window_shift");
  if (obs < 2 || pred < 1 || cap < 1 || shift < 1) {
    fail(ErrorKind::kConfig, "obs_len >= 2, pred_len, neighborhood_size and window_shift >= 1 required");
  }
  opts.obs_len = static_cast<std::size_t>(obs);
  opts.pred_len = static_cast<std::size_t>(pred);
  opts.capacity = static_cast<std::size_t>(cap);
  opts.shift = static_cast<std::size_t>(shift);
  opts.dataset = name;
  return opts;
}

g2k_dataset* build_dataset(const config::RunConfig& cfg, std::string name,
                           std::vector<data::TrackPoint> points) {
  auto ds = std::make_unique<g2k_dataset>();
  ds->name = std::move(name);
  ds->points = std::move(points);
  ds->batches = data::make_windows(ds->points, window_options(cfg, ds->name));
  const auto& scene = cfg.get("scene_image");
  if (!scene.empty()) {
    const auto img = image::read_pgm(scene);
    for (auto& b : ds->batches) b.scene_image = img;
  }
  return ds.release();
}

// Keys that only steer training or windowing; they may differ between a
// checkpoint and the evaluation flags.
const std::set<std::string>& run_only_keys() {
  static const std::set<std::string> keys = {
      "batch_size", "epochs", "lr", "optimizer", "seed", "clip_norm",
      "neighborhood_size", "window_shift", "scene_image"};
  return keys;
}

void check_compatible(const config::RunConfig& stored, const config::RunConfig& expected) {
  std::string diffs;
  for (const auto& [key, value] : expected.values()) {
    if (run_only_keys().count(key) || expected.is_default(key)) continue;
    if (stored.get(key) != value) {
      diffs += " " + key + " (checkpoint " + stored.get(key) + ", requested " + value + ")";
    }
  }
  if (!diffs.empty()) {
    fail(ErrorKind::kConfigMismatch, "checkpoint config differs:" + diffs);
  }
}

g2k_report to_c(const eval::EvalReport& r) {
  g2k_report out{};
  copy_text(r.dataset, out.dataset);
  copy_text(r.variant, out.variant);
  out.ade = r.ade;
  out.fde = r.fde;
  out.max_step_error = r.max_step_error;
  out.pedestrians = r.pedestrians;
  out.runtime_s = r.runtime_s;
  copy_hash(r.config_hash, out.config_hash);
  out.invariants_ok = r.invariants_hold() ? 1 : 0;
  return out;
}

std::vector<eval::EvalReport> from_c(const g2k_report* reports, size_t count) {
  std::vector<eval::EvalReport> out;
  for (size_t i = 0; i < count; ++i) {
    eval::EvalReport r;
    r.dataset = reports[i].dataset;
    r.variant = reports[i].variant;
    r.ade = reports[i].ade;
    r.fde = reports[i].fde;
    r.max_step_error = reports[i].max_step_error;
    r.pedestrians = reports[i].pedestrians;
    r.runtime_s = reports[i].runtime_s;
    r.config_hash = reports[i].config_hash;
    out.push_back(std::move(r));
  }
  return out;
}

void emit_lines(const std::string& text, g2k_line_sink sink, void* user) {
  if (!sink) return;
  std::istringstream in(text);
  for (std::string line; std::getline(in, line);) sink(line.c_str(), user);
}

std::string format_double(double v) {
  std::ostringstream out;
  out.precision(17);
  out << v;
  return out.str();
}

}  // namespace

extern "C" {

const char* g2k_last_error(void) { return last_error.c_str(); }

const char* g2k_version(void) { return "1.0.0"; }

g2k_status g2k_config_create(g2k_config** out) {
  return guarded([&] {
    require(out, "out");
    *out = new g2k_config();
    return G2K_OK;
  });
}

void g2k_config_destroy(g2k_config* cfg) { delete cfg; }

g2k_status g2k_config_set(g2k_config* cfg, const char* key, const char* value) {
  return guarded([&] {
    require(cfg, "config");
    require(key, "key");
    require(value, "value");
    cfg->cfg.set(key, value);
    return G2K_OK;
  });
}

g2k_status g2k_config_load_file(g2k_config* cfg, const char* path) {
  return guarded([&] {
    require(cfg, "config");
    require(path, "path");
    cfg->cfg.merge_file(path);
    return G2K_OK;
  });
}

const char* g2k_config_get(const g2k_config* cfg, const char* key) {
  if (!cfg || !key) return nullptr;
  const auto& values = cfg->cfg.values();
  const auto it = values.find(key);
  return it == values.end() ? nullptr : it->second.c_str();
}

g2k_status g2k_config_hash(const g2k_config* cfg, char out[17]) {
  return guarded([&] {
    require(cfg, "config");
    require(out, "out");
    copy_hash(cfg->cfg.hash(), out);
    return G2K_OK;
  });
}

g2k_status g2k_dataset_load(const g2k_config* cfg, const char* tsv_path,
                            g2k_dataset** out) {
  return guarded([&] {
    require(cfg, "config");
    require(tsv_path, "path");
    require(out, "out");
    auto points = data::load_dataset(tsv_path);
    *out = build_dataset(cfg->cfg, std::filesystem::path(tsv_path).stem().string(),
                         std::move(points));
    return G2K_OK;
  });
}

g2k_status g2k_dataset_synthesize(const g2k_config* cfg, const char* scenario_path,
                                  g2k_dataset** out) {
  return guarded([&] {
    require(cfg, "config");
    require(scenario_path, "path");
    require(out, "out");
    const auto sc = data::SyntheticScenario::load(scenario_path);
    *out = build_dataset(cfg->cfg, "synthetic:" + data::to_string(sc.kind),
                         data::synthesize_tracks(sc));
    return G2K_OK;
  });
}

g2k_status g2k_dataset_synthesize_text(const g2k_config* cfg, const char* scenario_text,
                                       g2k_dataset** out) {
  return guarded([&] {
    require(cfg, "config");
    require(scenario_text, "scenario");
    require(out, "out");
    const auto sc = data::SyntheticScenario::parse(scenario_text);
    *out = build_dataset(cfg->cfg, "synthetic:" + data::to_string(sc.kind),
                         data::synthesize_tracks(sc));
    return G2K_OK;
  });
}

void g2k_dataset_destroy(g2k_dataset* ds) { delete ds; }

g2k_status g2k_dataset_write_tsv(const g2k_dataset* ds, const char* path) {
  return guarded([&] {
    require(ds, "dataset");
    require(path, "path");
    data::save_dataset(path, ds->points);
    return G2K_OK;
  });
}

g2k_status g2k_dataset_batch_count(const g2k_dataset* ds, size_t* out) {
  return guarded([&] {
    require(ds, "dataset");
    require(out, "out");
    *out = ds->batches.size();
    return G2K_OK;
  });
}

g2k_status g2k_dataset_name(const g2k_dataset* ds, const char** out) {
  return guarded([&] {
    require(ds, "dataset");
    require(out, "out");
    *out = ds->name.c_str();
    return G2K_OK;
  });
}

g2k_status g2k_model_create(const g2k_config* cfg, g2k_model** out) {
  return guarded([&] {
    require(cfg, "config");
    require(out, "out");
    *out = new g2k_model{cfg->cfg, sri::G2KModel(sri::ModelConfig::from(cfg->cfg)), 0, {}};
    return G2K_OK;
  });
}

void g2k_model_destroy(g2k_model* model) { delete model; }

g2k_status g2k_model_train(g2k_model* model, const g2k_dataset* ds, const char* out_dir,
                           g2k_line_sink sink, void* user) {
  return guarded([&] {
    require(model, "model");
    require(ds, "dataset");
    std::ofstream log;
    std::filesystem::path dir;
    if (out_dir) {
      dir = out_dir;
      std::filesystem::create_directories(dir);
      log.open(dir / "log");
      if (!log) fail(ErrorKind::kIo, "cannot write '" + (dir / "log").string() + "'");
      log << "# config_hash " << model->cfg.hash() << '\n'
          << "# dataset " << ds->name << '\n'
          << "epoch\tbatch\tloss\twall_ms\n";
    }
    std::vector<training::LogRecord> recent;
    const auto cfg = training::TrainConfig::from(model->cfg);
    const int epoch_offset = model->epoch;
    auto on_record = [&](const training::LogRecord& r) {
      if (log.is_open()) {
        log << (r.epoch + epoch_offset) << '\t' << r.batch << '\t' << format_double(r.loss)
            << '\t' << r.wall_ms << '\n';
      }
      recent.push_back(r);
      if (recent.size() > 32) recent.erase(recent.begin());
    };
    training::TrainResult result;
    try {
      result = training::train(model->model, ds->batches, cfg, on_record);
    } catch (const Error& e) {
      if (e.kind() == ErrorKind::kDivergence && out_dir) {
        std::ofstream dump(dir / "divergence");
        dump << "# config_hash " << model->cfg.hash() << '\n' << e.what() << '\n';
        dump << model->cfg.serialize();
        dump << "recent records (epoch batch loss):\n";
        for (const auto& r : recent) {
          dump << (r.epoch + epoch_offset) << ' ' << r.batch << ' ' << format_double(r.loss)
               << '\n';
        }
      }
      throw;
    }
    for (std::size_t e = 0; e < result.epoch_losses.size(); ++e) {
      model->history.push_back(result.epoch_losses[e]);
      if (sink) {
        const std::string line = "epoch " + std::to_string(model->epoch + e + 1) +
                                 " loss " + format_double(result.epoch_losses[e]);
        sink(line.c_str(), user);
      }
    }
    model->epoch += result.epochs_run;
    return G2K_OK;
  });
}

g2k_status g2k_model_save(const g2k_model* model, const char* path) {
  return guarded([&] {
    require(model, "model");
    require(path, "path");
    checkpoint::save(path, checkpoint::capture(model->model, model->cfg, model->epoch,
                                               model->history));
    return G2K_OK;
  });
}

g2k_status g2k_model_load(const char* path, const g2k_config* expected, g2k_model** out) {
  return guarded([&] {
    require(path, "path");
    require(out, "out");
    auto ckpt = checkpoint::load(path);
    if (expected) check_compatible(ckpt.config, expected->cfg);
    auto m = std::make_unique<g2k_model>(
        g2k_model{ckpt.config, sri::G2KModel(sri::ModelConfig::from(ckpt.config)),
                  ckpt.epoch, ckpt.loss_history});
    checkpoint::restore(m->model, ckpt);
    *out = m.release();
    return G2K_OK;
  });
}

g2k_status g2k_model_config_hash(const g2k_model* model, char out[17]) {
  return guarded([&] {
    require(model, "model");
    require(out, "out");
    copy_hash(model->cfg.hash(), out);
    return G2K_OK;
  });
}

g2k_status g2k_model_copy_config(const g2k_model* model, g2k_config** out) {
  return guarded([&] {
    require(model, "model");
    require(out, "out");
    *out = new g2k_config{model->cfg};
    return G2K_OK;
  });
}

g2k_status g2k_model_evaluate(const g2k_model* model, const g2k_dataset* ds,
                              g2k_report* out) {
  return guarded([&] {
    require(model, "model");
    require(ds, "dataset");
    require(out, "out");
    *out = to_c(eval::evaluate_model(model->model, ds->batches, ds->name, model->cfg.hash()));
    return G2K_OK;
  });
}

g2k_status g2k_baseline_evaluate(const g2k_dataset* ds, const g2k_config* cfg,
                                 g2k_report* out) {
  return guarded([&] {
    require(ds, "dataset");
    require(cfg, "config");
    require(out, "out");
    *out = to_c(eval::evaluate_baseline(ds->batches, ds->name, cfg->cfg.hash()));
    return G2K_OK;
  });
}

g2k_status g2k_reports_write_csv(const g2k_report* reports, size_t count, const char* path) {
  return guarded([&] {
    require(path, "path");
    if (count) require(reports, "reports");
    std::ofstream out(path);
    if (!out) fail(ErrorKind::kIo, std::string("cannot write '") + path + "'");
    eval::write_reports_csv(out, from_c(reports, count));
    return G2K_OK;
  });
}

g2k_status g2k_reports_print(const g2k_report* reports, size_t count, g2k_line_sink sink,
                             void* user) {
  return guarded([&] {
    if (count) require(reports, "reports");
    emit_lines(eval::format_table(from_c(reports, count)), sink, user);
    return G2K_OK;
  });
}

g2k_status g2k_model_export_viz(const g2k_model* model, const g2k_dataset* ds,
                                size_t batch_index, int step, const char* out_dir) {
  return guarded([&] {
    require(model, "model");
    require(ds, "dataset");
    require(out_dir, "out_dir");
    if (batch_index >= ds->batches.size()) {
      fail(ErrorKind::kConfig, "batch " + std::to_string(batch_index) + " out of range (" +
                                   std::to_string(ds->batches.size()) + " batches)");
    }
    const auto out = model->model.run(ds->batches[batch_index]);
    const auto& diags = out.diagnostics;
    if (diags.empty()) fail(ErrorKind::kContract, "model produced no step diagnostics");
    std::size_t t = diags.size() - 1;
    if (step >= 0) {
      if (static_cast<std::size_t>(step) >= diags.size()) {
        fail(ErrorKind::kConfig, "step " + std::to_string(step) + " out of range (" +
                                     std::to_string(diags.size()) + " observed steps)");
      }
      t = static_cast<std::size_t>(step);
    }
    const auto& d = diags[t];
    const int g = model->model.config().grid_size;
    ad::Matrix grid(g, g);
    for (int c = 0; c < g * g; ++c) grid(c / g, c % g) = d.cell_attention(0, c);

    std::filesystem::path dir(out_dir);
    std::filesystem::create_directories(dir);
    const std::string tag = "config_hash " + model->cfg.hash() + " batch " +
                            std::to_string(batch_index) + " step " + std::to_string(t);
    image::write_csv((dir / "adjacency.csv").string(), d.adjacency, tag);
    image::write_csv((dir / "ped_attention.csv").string(), d.ped_attention, tag);
    image::write_csv((dir / "cell_attention.csv").string(), d.cell_attention, tag);
    image::write_csv((dir / "grid.csv").string(), grid, tag);
    image::write_pgm((dir / "grid.pgm").string(), grid, tag);
    return G2K_OK;
  });
}

g2k_status g2k_gradcheck(const char* variant, uint64_t seed, double tolerance,
                         g2k_line_sink sink, void* user) {
  return guarded([&] {
    require(variant, "variant");
    auto cfg = training::desk_config(variant);
    cfg.set("seed", std::to_string(seed));
    sri::G2KModel model(sri::ModelConfig::from(cfg));
    const auto batch = training::desk_batch(seed);
    const auto report = training::check_model_gradients(model, batch);
    for (const auto& e : report.entries) {
      char line[256];
      std::snprintf(line, sizeof(line),
                    "%-24s max_rel %.3e  at (%ld,%ld) analytic %.6e numeric %.6e  %s",
                    e.name.c_str(), e.max_rel_error, static_cast<long>(e.worst_row),
                    static_cast<long>(e.worst_col), e.analytic, e.numeric,
                    e.max_rel_error < tolerance ? "ok" : "FAIL");
      if (sink) sink(line, user);
    }
    if (!report.passed(tolerance)) {
      std::string names;
      for (const auto& n : report.failures(tolerance)) names += " " + n;
      last_error = "gradient check failed for" + names;
      return G2K_ERR_GRADCHECK;
    }
    return G2K_OK;
  });
}

g2k_status g2k_ablate(const g2k_config* base, const g2k_dataset* ds, const char* csv_path,
                      g2k_line_sink sink, void* user) {
  return guarded([&] {
    require(base, "config");
    require(ds, "dataset");
    const auto rows =
        eval::ablate(ds->points, base->cfg, eval::default_ablation_grid(), ds->name);
    if (csv_path) {
      std::ofstream out(csv_path);
      if (!out) fail(ErrorKind::kIo, std::string("cannot write '") + csv_path + "'");
      out << "# config_hash " << base->cfg.hash() << '\n';
      eval::write_ablation_csv(out, rows);
    }
    emit_lines(eval::format_ablation_table(rows), sink, user);
    return G2K_OK;
  });
}

}  // extern "C"
