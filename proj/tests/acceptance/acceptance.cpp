// One PASS/FAIL line per acceptance criterion; exit status 1 if any fails.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <functional>
#include <numeric>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "g2k/checkpoint.hpp"
#include "g2k/data.hpp"
#include "g2k/eval.hpp"
#include "g2k/g2k.h"
#include "g2k/gridlstm.hpp"
#include "g2k/sri.hpp"
#include "g2k/training.hpp"

namespace fs = std::filesystem;
using namespace g2k;
using ad::Matrix;
using ad::Var;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

struct Outcome {
  bool pass = true;
  std::string detail;

  void require(bool ok, const std::string& what) {
    if (!ok) {
      pass = false;
      detail += (detail.empty() ? "" : "; ") + what;
    }
  }
  void note(const std::string& what) { detail += (detail.empty() ? "" : "; ") + what; }
};

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), f, v);
  return buf;
}

std::vector<data::SceneBatch> scenario_batches(const std::string& file, std::size_t obs = 8,
                                               std::size_t pred = 12) {
  const auto sc = data::SyntheticScenario::load(std::string(G2K_TEST_DATA) + "/" + file);
  data::WindowOptions opts;
  opts.obs_len = obs;
  opts.pred_len = pred;
  opts.dataset = file;
  return data::synthesize(sc, opts);
}

config::RunConfig overfit_config(const std::string& variant) {
  config::RunConfig cfg;
  cfg.set("variant", variant);
  cfg.set("epochs", "200");
  cfg.set("lr", "0.01");
  return cfg;
}

eval::EvalReport train_and_score(const config::RunConfig& cfg,
                                 const std::vector<data::SceneBatch>& batches) {
  sri::G2KModel model(sri::ModelConfig::from(cfg));
  training::train(model, batches, training::TrainConfig::from(cfg));
  return eval::evaluate_model(model, batches, batches.front().meta.dataset, cfg.hash());
}

// ---- AC1

Outcome gradient_integrity() {
  Outcome o;
  const auto t0 = Clock::now();
  for (auto v : sri::all_variants()) {
    const auto name = sri::to_string(v);
    sri::G2KModel model(sri::ModelConfig::from(training::desk_config(name)));
    const auto report = training::check_model_gradients(model, training::desk_batch(0), 1e-5);
    double worst = 0.0;
    for (const auto& e : report.entries) worst = std::max(worst, e.max_rel_error);
    o.require(report.passed(1e-4), name + " max rel " + fmt("%.2e", worst));
    if (report.passed(1e-4)) o.note(name + " " + fmt("%.1e", worst));
  }
  const double s = seconds_since(t0);
  o.require(s < 120.0, "took " + fmt("%.1f", s) + " s");
  o.note(fmt("%.1f s", s));
  return o;
}

// ---- AC2

double sigm(double v) { return 1.0 / (1.0 + std::exp(-v)); }

Outcome gridlstm_reduction() {
  Outcome o;
  const auto t0 = Clock::now();
  const int hidden = 6, in = 4, n = 2;
  gridlstm::GridLSTMConfig cfg{hidden, 1, 1, 1};
  ad::ParameterStore store;
  std::mt19937_64 rng(2024);
  gridlstm::GridLSTM cell(store, "g", cfg, in, rng, 0.5);
  std::normal_distribution<double> noise(0.0, 0.3);
  Matrix& bias = store.get("g.u0.b").value.mutable_data();
  for (Eigen::Index j = 0; j < bias.size(); ++j) bias.data()[j] = noise(rng);
  const Matrix wx = store.get("g.u0.W_x").value.data();
  const Matrix wh = store.get("g.u0.W_h").value.data();
  const Matrix b = store.get("g.u0.b").value.data();

  auto state = gridlstm::init_state(cfg, n);
  std::vector<std::vector<double>> h(n, std::vector<double>(hidden, 0.0)), c = h;
  std::uniform_real_distribution<double> unit(-1.0, 1.0);
  double worst = 0.0;
  for (int step = 0; step < 100; ++step) {
    Matrix x(n, in);
    for (Eigen::Index i = 0; i < x.size(); ++i) x.data()[i] = unit(rng);
    auto [out, next] = cell.step(Var::constant(x), state);
    state = next;
    for (int i = 0; i < n; ++i) {
      std::vector<double> z(4 * hidden);
      for (int j = 0; j < 4 * hidden; ++j) {
        double s = b(0, j);
        for (int k = 0; k < in; ++k) s += x(i, k) * wx(k, j);
        for (int k = 0; k < hidden; ++k) s += h[i][k] * wh(k, j);
        z[j] = s;
      }
      for (int k = 0; k < hidden; ++k) {
        c[i][k] = sigm(z[hidden + k]) * c[i][k] + sigm(z[k]) * std::tanh(z[3 * hidden + k]);
        h[i][k] = sigm(z[2 * hidden + k]) * std::tanh(c[i][k]);
        worst = std::max(worst, std::abs(out.data()(i, k) - h[i][k]));
        worst = std::max(worst, std::abs(state.c.data()(i, k) - c[i][k]));
      }
    }
  }
  const double s = seconds_since(t0);
  o.require(worst < 1e-12, "max deviation " + fmt("%.2e", worst));
  o.require(s < 5.0, "took " + fmt("%.2f", s) + " s");
  o.note("max deviation " + fmt("%.1e", worst));
  return o;
}

// ---- AC3

Matrix row_major(int r, int c, std::initializer_list<double> v) {
  Matrix m(r, c);
  std::copy(v.begin(), v.end(), m.data());
  return m;
}

Outcome metric_oracle() {
  Outcome o;
  struct Case {
    const char* name;
    Matrix pred, truth;
    double ade, fde;
  };
  const Matrix base = row_major(2, 6, {0, 0, 1, 0, 2, 0, 5, 5, 5, 6, 5, 7});
  const Matrix zero4 = Matrix::Zero(1, 4), zero8 = Matrix::Zero(1, 8);
  const std::vector<Case> cases = {
      {"exact", base, base, 0.0, 0.0},
      {"unit offset", base + row_major(2, 6, {1, 0, 1, 0, 1, 0, 0, -1, 0, -1, 0, -1}), base, 1.0,
       1.0},
      {"T=1", row_major(1, 2, {3, 4}), Matrix::Zero(1, 2), 5.0, 5.0},
      {"growing", row_major(1, 4, {3, 4, 6, 8}), zero4, 7.5, 10.0},
      {"two peds", row_major(2, 4, {0, 0, 2, 0, 1, 0, 0, 1}), Matrix::Zero(2, 4), 1.0, 1.5},
      {"negative", row_major(1, 2, {-1, -1}), row_major(1, 2, {2, 3}), 5.0, 5.0},
      {"last only", row_major(1, 8, {0, 0, 0, 0, 0, 0, 4, 0}), zero8, 1.0, 4.0},
      {"first only", row_major(1, 8, {0, 8, 0, 0, 0, 0, 0, 0}), zero8, 2.0, 0.0},
      {"three peds T=1", row_major(3, 2, {0, 1, 0, 2, 0, 3}), Matrix::Zero(3, 2), 2.0, 2.0},
      {"5-12-13", row_major(1, 4, {5, 12, 0, 0}), zero4, 6.5, 0.0},
  };
  for (const auto& c : cases) {
    const double a = eval::ade(c.pred, c.truth);
    const double f = eval::fde(c.pred, c.truth);
    o.require(std::abs(a - c.ade) < 1e-12 && std::abs(f - c.fde) < 1e-12,
              std::string(c.name) + " gave " + fmt("%.15g", a) + "/" + fmt("%.15g", f));
    if (c.pred.cols() == 2) o.require(a == f, std::string(c.name) + " ADE != FDE");
  }
  o.note(std::to_string(cases.size()) + " cases");
  return o;
}

// ---- AC4

Outcome overfit_regression() {
  Outcome o;
  {
    const auto t0 = Clock::now();
    const auto r = train_and_score(overfit_config("g_lstm"), scenario_batches("cv5.cfg"));
    const double s = seconds_since(t0);
    o.require(r.ade < 0.05, "g_lstm cv5 ADE " + fmt("%.4f", r.ade));
    o.require(s < 300.0, "g_lstm took " + fmt("%.0f", s) + " s");
    o.note("g_lstm cv5 ADE " + fmt("%.4f", r.ade) + " in " + fmt("%.1f s", s));
  }
  {
    const auto t0 = Clock::now();
    const auto r =
        train_and_score(overfit_config("mcr_mp"), scenario_batches("crossing_pair.cfg"));
    const double s = seconds_since(t0);
    o.require(r.ade < 0.10, "mcr_mp crossing ADE " + fmt("%.4f", r.ade));
    o.require(s < 300.0, "mcr_mp took " + fmt("%.0f", s) + " s");
    o.note("mcr_mp crossing_pair ADE " + fmt("%.4f", r.ade) + " in " + fmt("%.1f s", s));
  }
  return o;
}

// ---- AC5

Outcome baseline_sanity() {
  Outcome o;
  const auto cv = eval::evaluate_baseline(scenario_batches("cv5.cfg"), "cv5", "");
  o.require(cv.ade < 1e-12, "baseline cv5 ADE " + fmt("%.3e", cv.ade));
  const auto walk = scenario_batches("group_walk.cfg");
  const auto base = eval::evaluate_baseline(walk, "group_walk", "");
  o.note("baseline group_walk ADE " + fmt("%.4f", base.ade));
  for (auto v : sri::all_variants()) {
    const auto name = sri::to_string(v);
    const auto r = train_and_score(overfit_config(name), walk);
    o.require(r.ade < base.ade, name + " ADE " + fmt("%.4f", r.ade) + " does not beat baseline");
    o.note(name + " " + fmt("%.4f", r.ade));
  }
  return o;
}

// ---- AC6

data::SceneBatch permute(const data::SceneBatch& b, const std::vector<std::size_t>& p) {
  auto out = b;
  for (std::size_t i = 0; i < p.size(); ++i) out.windows[i] = b.windows[p[i]];
  return out;
}

Outcome structural_invariants() {
  Outcome o;
  const auto batch = training::desk_batch(4);
  const std::size_t n = batch.size();
  std::mt19937_64 rng(6);
  double worst_row = 0.0, worst_perm = 0.0, worst_conj = 0.0, worst_tele = 0.0;
  for (auto v : sri::all_variants()) {
    const sri::G2KModel model(sri::ModelConfig::from(training::desk_config(sri::to_string(v))));
    const auto out = model.run(batch);
    for (const auto& d : out.diagnostics) {
      worst_row = std::max(worst_row, (d.adjacency.rowwise().sum().array() - 1.0).abs().maxCoeff());
      worst_row =
          std::max(worst_row, (d.ped_attention.rowwise().sum().array() - 1.0).abs().maxCoeff());
    }
    // telescoping: prediction k = last observed + offsets 0..k, summed in order
    const Matrix& off = out.offsets.data();
    const Matrix& pred = out.predictions.data();
    for (std::size_t i = 0; i < n; ++i) {
      double x = batch.windows[i].obs.back().x, y = batch.windows[i].obs.back().y;
      for (Eigen::Index k = 0; k < off.cols() / 2; ++k) {
        const auto r = static_cast<Eigen::Index>(i);
        x += off(r, 2 * k);
        y += off(r, 2 * k + 1);
        worst_tele = std::max({worst_tele, std::abs(pred(r, 2 * k) - x),
                               std::abs(pred(r, 2 * k + 1) - y)});
      }
    }
    std::vector<std::size_t> perm(n);
    std::iota(perm.begin(), perm.end(), 0);
    for (int trial = 0; trial < 4; ++trial) {
      std::shuffle(perm.begin(), perm.end(), rng);
      Matrix P = Matrix::Zero(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
      for (std::size_t i = 0; i < n; ++i)
        P(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(perm[i])) = 1.0;
      const auto pout = model.run(permute(batch, perm));
      worst_perm = std::max(
          worst_perm,
          (pout.predictions.data() - P * out.predictions.data()).cwiseAbs().maxCoeff());
      for (std::size_t t = 0; t < out.diagnostics.size(); ++t) {
        const Matrix expect = P * out.diagnostics[t].adjacency * P.transpose();
        worst_conj = std::max(
            worst_conj, (pout.diagnostics[t].adjacency - expect).cwiseAbs().maxCoeff());
      }
    }
  }
  o.require(worst_row < 1e-9, "row sum deviation " + fmt("%.2e", worst_row));
  o.require(worst_perm < 1e-9, "prediction equivariance " + fmt("%.2e", worst_perm));
  o.require(worst_conj < 1e-9, "PAP^T deviation " + fmt("%.2e", worst_conj));
  o.require(worst_tele == 0.0, "telescoping deviation " + fmt("%.2e", worst_tele));
  o.note("rows " + fmt("%.1e", worst_row) + ", perm " + fmt("%.1e", worst_perm) + ", PAP^T " +
         fmt("%.1e", worst_conj) + ", telescoping exact");
  return o;
}

// ---- AC7

std::pair<std::string, std::string> seeded_run(std::uint64_t seed) {
  auto cfg = training::desk_config("mcr_mpc");
  cfg.set("seed", std::to_string(seed));
  cfg.set("epochs", "5");
  cfg.set("lr", "0.01");
  const auto batches = scenario_batches("group_walk.cfg", 3, 2);
  sri::G2KModel model(sri::ModelConfig::from(cfg));
  const auto tr = training::train(model, batches, training::TrainConfig::from(cfg));
  std::ostringstream ckpt, report;
  checkpoint::write(ckpt, checkpoint::capture(model, cfg, tr.epochs_run, tr.epoch_losses));
  eval::write_reports_csv(report, {eval::evaluate_model(model, batches, "group_walk", cfg.hash()),
                                   eval::evaluate_baseline(batches, "group_walk", cfg.hash())});
  return {ckpt.str(), report.str()};
}

Outcome determinism() {
  Outcome o;
  const auto a = seeded_run(11);
  const auto b = seeded_run(11);
  const auto c = seeded_run(12);
  o.require(a.first == b.first, "checkpoints differ for the same seed");
  o.require(a.second == b.second, "eval reports differ for the same seed");
  o.require(a.first != c.first, "a different seed gave the same checkpoint");
  o.note(std::to_string(a.first.size()) + " checkpoint bytes identical");
  return o;
}

// ---- AC8

Outcome ablation_harness() {
  Outcome o;
  const auto sc =
      data::SyntheticScenario::load(std::string(G2K_TEST_DATA) + "/group_walk.cfg");
  config::RunConfig base;
  base.set("epochs", "40");
  base.set("lr", "0.01");
  const auto rows =
      eval::ablate(data::synthesize_tracks(sc), base, eval::default_ablation_grid(), "group_walk");
  o.require(rows.size() == 8, std::to_string(rows.size()) + " rows");
  std::ostringstream csv;
  eval::write_ablation_csv(csv, rows);
  std::size_t lines = 0, with_direction = 0;
  std::string line;
  std::istringstream in(csv.str());
  std::getline(in, line);
  while (std::getline(in, line)) {
    ++lines;
    if (line.find(",better,") != std::string::npos || line.find(",worse,") != std::string::npos ||
        line.find(",equal,") != std::string::npos)
      ++with_direction;
  }
  for (const auto& r : rows) o.require(r.error.empty(), r.cell.label() + ": " + r.error);
  o.require(lines == 8 && with_direction == 8, "direction missing");
  std::printf("%s", eval::format_ablation_table(rows).c_str());
  std::ofstream(fs::temp_directory_path() / "g2k_ablation.csv") << csv.str();
  if (o.pass) {
    int better = 0;
    for (std::size_t i = 1; i < rows.size(); ++i) better += rows[i].ade_change < 0;
    o.note(std::to_string(better) + "/7 cells beat the reference");
  }
  return o;
}

// ---- AC9

Outcome round_trips() {
  Outcome o;
  data::SyntheticScenario sc;
  sc.kind = data::SyntheticScenario::Kind::kGroupWalk;
  sc.noise = 0.07;
  sc.seed = 13;
  const auto pts = data::synthesize_tracks(sc);
  std::ostringstream t1, t2;
  data::write_dataset(t1, pts);
  std::istringstream back(t1.str());
  const auto parsed = data::parse_dataset(back);
  data::write_dataset(t2, parsed);
  o.require(parsed == pts && t1.str() == t2.str(), "tsv round trip differs");

  const auto cfg = training::desk_config("mcr_mpc");
  sri::G2KModel model(sri::ModelConfig::from(cfg));
  std::ostringstream c1, c2;
  checkpoint::write(c1, checkpoint::capture(model, cfg, 0, {0.1, 0.2}));
  std::istringstream cin(c1.str());
  const auto loaded = checkpoint::read(cin);
  checkpoint::write(c2, loaded);
  bool bits = c1.str() == c2.str();
  for (const auto& p : loaded.params) {
    const Matrix& orig = model.params().get(p.name).value.data();
    bits = bits && orig.size() == p.values.size() &&
           std::memcmp(orig.data(), p.values.data(), sizeof(double) * orig.size()) == 0;
  }
  o.require(bits, "checkpoint round trip differs");

  // viz through the C API on a 3-pedestrian scene
  g2k_config* c = nullptr;
  g2k_config_create(&c);
  for (const auto& [k, v] : cfg.values()) g2k_config_set(c, k.c_str(), v.c_str());
  g2k_dataset* ds = nullptr;
  g2k_model* m = nullptr;
  const auto dir = fs::temp_directory_path() / "g2k_acceptance_viz";
  fs::remove_all(dir);
  bool ok = g2k_dataset_synthesize_text(c, "kind=group_walk\nn_peds=3\nlength=5\nseed=1\n", &ds) ==
                G2K_OK &&
            g2k_model_create(c, &m) == G2K_OK &&
            g2k_model_export_viz(m, ds, 0, -1, dir.string().c_str()) == G2K_OK;
  o.require(ok, std::string("viz export failed: ") + g2k_last_error());
  if (ok) {
    std::ifstream adj(dir / "adjacency.csv");
    int rows = 0;
    double worst = 0.0;
    bool square = true;
    std::string l;
    while (std::getline(adj, l)) {
      if (l.empty() || l[0] == '#') continue;
      std::istringstream ss(l);
      std::string cell;
      double s = 0.0;
      int cols = 0;
      while (std::getline(ss, cell, ',')) {
        s += std::stod(cell);
        ++cols;
      }
      square = square && cols == 3;
      worst = std::max(worst, std::abs(s - 1.0));
      ++rows;
    }
    o.require(rows == 3 && square, "adjacency is not 3x3");
    o.require(worst < 1e-9, "adjacency row sum off by " + fmt("%.2e", worst));
    std::ifstream pgm(dir / "grid.pgm");
    std::string magic, tok;
    pgm >> magic;
    while (pgm >> tok && tok[0] == '#') std::getline(pgm, tok);
    int h = 0;
    pgm >> h;
    o.require(magic == "P2" && std::stoi(tok) == 2 && h == 2, "grid.pgm is not 2x2");
  }
  g2k_model_destroy(m);
  g2k_dataset_destroy(ds);
  g2k_config_destroy(c);
  o.note("tsv, checkpoint and viz exports checked");
  return o;
}

}  // namespace

int main() {
  const std::vector<std::pair<const char*, std::function<Outcome()>>> criteria = {
      {"AC1 gradient integrity", gradient_integrity},
      {"AC2 grid-LSTM reduction oracle", gridlstm_reduction},
      {"AC3 metric oracle", metric_oracle},
      {"AC4 overfit regression", overfit_regression},
      {"AC5 baseline sanity", baseline_sanity},
      {"AC6 structural invariants", structural_invariants},
      {"AC7 determinism", determinism},
      {"AC8 ablation harness", ablation_harness},
      {"AC9 round-trips", round_trips},
  };
  int failed = 0;
  for (const auto& [name, check] : criteria) {
    Outcome o;
    try {
      o = check();
    } catch (const std::exception& e) {
      o.pass = false;
      o.detail = std::string("threw: ") + e.what();
    }
    failed += !o.pass;
    std::printf("%s %s: %s\n", o.pass ? "PASS" : "FAIL", name, o.detail.c_str());
    std::fflush(stdout);
  }
  return failed == 0 ? 0 : 1;
}
