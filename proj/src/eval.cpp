#include "g2k/eval.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <ostream>
#include <sstream>

#include "g2k/error.hpp"
#include "g2k/training.hpp"

namespace g2k::eval {
namespace {

void check_shapes(const Matrix& pred, const Matrix& truth) {
  if (pred.rows() != truth.rows() || pred.cols() != truth.cols() ||
      pred.cols() < 2 || pred.cols() % 2 != 0) {
    fail(ErrorKind::kShape, "metric: prediction " + std::to_string(pred.rows()) +
                                "x" + std::to_string(pred.cols()) +
                                " vs ground truth " + std::to_string(truth.rows()) +
                                "x" + std::to_string(truth.cols()));
  }
}

double point_error(const Matrix& pred, const Matrix& truth, Eigen::Index i,
                   Eigen::Index step) {
  return std::hypot(pred(i, 2 * step) - truth(i, 2 * step),
                    pred(i, 2 * step + 1) - truth(i, 2 * step + 1));
}

struct ErrorTotals {
  double step_sum = 0.0;
  double final_sum = 0.0;
  double worst = 0.0;
  std::size_t peds = 0;
  std::size_t points = 0;

  void add(const Matrix& pred, const Matrix& truth) {
    check_shapes(pred, truth);
    const Eigen::Index steps = pred.cols() / 2;
    for (Eigen::Index i = 0; i < pred.rows(); ++i) {
      for (Eigen::Index s = 0; s < steps; ++s) {
        const double e = point_error(pred, truth, i, s);
        step_sum += e;
        worst = std::max(worst, e);
      }
      final_sum += point_error(pred, truth, i, steps - 1);
    }
    peds += static_cast<std::size_t>(pred.rows());
    points += static_cast<std::size_t>(pred.rows() * steps);
  }
};

EvalReport finish(const ErrorTotals& t, const std::string& dataset,
                  const std::string& variant, const std::string& hash,
                  std::chrono::steady_clock::time_point started) {
  EvalReport r;
  r.dataset = dataset;
  r.variant = variant;
  r.ade = t.points ? t.step_sum / static_cast<double>(t.points) : 0.0;
  r.fde = t.peds ? t.final_sum / static_cast<double>(t.peds) : 0.0;
  r.max_step_error = t.worst;
  r.pedestrians = t.peds;
  r.runtime_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
  r.config_hash = hash;
  return r;
}

std::string fixed(double v, int digits = 4) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.*f", digits, v);
  return buf;
}

}  // namespace

double ade(const Matrix& pred, const Matrix& truth) {
  ErrorTotals t;
  t.add(pred, truth);
  if (t.points == 0) fail(ErrorKind::kShape, "ade: no points");
  return t.step_sum / static_cast<double>(t.points);
}

double fde(const Matrix& pred, const Matrix& truth) {
  ErrorTotals t;
  t.add(pred, truth);
  if (t.peds == 0) fail(ErrorKind::kShape, "fde: no pedestrians");
  return t.final_sum / static_cast<double>(t.peds);
}

double max_step_error(const Matrix& pred, const Matrix& truth) {
  ErrorTotals t;
  t.add(pred, truth);
  return t.worst;
}

Matrix constant_velocity(const data::TrajectoryWindow& window, std::size_t pred_len) {
  if (window.obs.size() < 2) {
    fail(ErrorKind::kContract, "constant velocity needs at least 2 observed points");
  }
  const auto& last = window.obs.back();
  const auto& prev = window.obs[window.obs.size() - 2];
  const double vx = last.x - prev.x;
  const double vy = last.y - prev.y;
  Matrix out(1, static_cast<Eigen::Index>(2 * pred_len));
  for (std::size_t k = 0; k < pred_len; ++k) {
    const double steps = static_cast<double>(k + 1);
    out(0, static_cast<Eigen::Index>(2 * k)) = last.x + steps * vx;
    out(0, static_cast<Eigen::Index>(2 * k + 1)) = last.y + steps * vy;
  }
  return out;
}

bool EvalReport::invariants_hold() const {
  const double slack = 1e-12;
  return std::isfinite(ade) && std::isfinite(fde) && ade >= 0.0 && fde >= 0.0 &&
         ade <= max_step_error + slack && fde <= max_step_error + slack;
}

EvalReport evaluate_model(const sri::G2KModel& model,
                          const std::vector<data::SceneBatch>& batches,
                          const std::string& dataset, const std::string& config_hash) {
  const auto started = std::chrono::steady_clock::now();
  ErrorTotals totals;
  for (const auto& b : batches) {
    const auto out = model.run(b);
    totals.add(out.predictions.data(), sri::BatchTensors::from(b).target);
  }
  return finish(totals, dataset, sri::to_string(model.config().variant), config_hash,
                started);
}

EvalReport evaluate_baseline(const std::vector<data::SceneBatch>& batches,
                             const std::string& dataset,
                             const std::string& config_hash) {
  const auto started = std::chrono::steady_clock::now();
  ErrorTotals totals;
  for (const auto& b : batches) {
    const auto target = sri::BatchTensors::from(b).target;
    Matrix pred(target.rows(), target.cols());
    for (std::size_t i = 0; i < b.size(); ++i) {
      pred.row(static_cast<Eigen::Index>(i)) = constant_velocity(b.windows[i], b.pred_len());
    }
    totals.add(pred, target);
  }
  return finish(totals, dataset, "const_velocity", config_hash, started);
}

void write_reports_csv(std::ostream& out, const std::vector<EvalReport>& reports) {
  // Wall-clock runtime stays out of the file so reruns compare byte for byte.
  out << "dataset,variant,ade_m,fde_m,max_step_error_m,pedestrians,config_hash\n";
  for (const auto& r : reports) {
    out << r.dataset << ',' << r.variant << ',' << fixed(r.ade, 6) << ','
        << fixed(r.fde, 6) << ',' << fixed(r.max_step_error, 6) << ','
        << r.pedestrians << ',' << r.config_hash << '\n';
  }
}

std::string format_table(const std::vector<EvalReport>& reports) {
  std::ostringstream out;
  char line[256];
  std::snprintf(line, sizeof(line), "%-28s %-16s %10s %10s %8s %9s  %s\n", "dataset",
                "variant", "ADE (m)", "FDE (m)", "peds", "time (s)", "config");
  out << line;
  for (const auto& r : reports) {
    std::snprintf(line, sizeof(line), "%-28s %-16s %10.4f %10.4f %8zu %9.3f  %s\n",
                  r.dataset.c_str(), r.variant.c_str(), r.ade, r.fde, r.pedestrians,
                  r.runtime_s, r.config_hash.c_str());
    out << line;
  }
  return out.str();
}

std::string AblationCell::label() const {
  return "nbhd=" + std::to_string(neighborhood_size) +
         " attn=" + (attention ? "on" : "off") +
         " static=" + (static_grid ? "on" : "off");
}

std::vector<AblationCell> default_ablation_grid() {
  std::vector<AblationCell> cells;
  for (std::size_t nb : {std::size_t{32}, std::size_t{64}}) {
    for (bool attn : {true, false}) {
      for (bool stat : {true, false}) cells.push_back({nb, attn, stat});
    }
  }
  return cells;
}

std::vector<AblationRow> ablate(const std::vector<data::TrackPoint>& points,
                                const config::RunConfig& base,
                                const std::vector<AblationCell>& cells,
                                const std::string& dataset) {
  std::vector<AblationRow> rows;
  for (const auto& cell : cells) {
    AblationRow row;
    row.cell = cell;
    try {
      config::RunConfig cfg = base;
      if (cfg.get("variant").empty()) cfg.set("variant", "mcr_mp");
      cfg.set("neighborhood_size", std::to_string(cell.neighborhood_size));
      cfg.set("attention", cell.attention ? "true" : "false");
      cfg.set("static_grid", cell.static_grid ? "true" : "false");
      const auto model_cfg = sri::ModelConfig::from(cfg);
      data::WindowOptions opts;
      opts.obs_len = model_cfg.obs_len;
      opts.pred_len = model_cfg.pred_len;
      opts.capacity = cell.neighborhood_size;
      opts.shift = static_cast<std::size_t>(cfg.get_int("window_shift"));
      opts.dataset = dataset;
      const auto batches = data::make_windows(points, opts);
      sri::G2KModel model(model_cfg);
      training::train(model, batches, training::TrainConfig::from(cfg));
      row.report = evaluate_model(model, batches, dataset, cfg.hash());
    } catch (const std::exception& e) {
      row.error = e.what();
    }
    rows.push_back(std::move(row));
  }
  if (!rows.empty() && rows.front().error.empty()) {
    const auto& ref = rows.front().report;
    for (auto& r : rows) {
      if (!r.error.empty()) continue;
      r.ade_change = ref.ade > 0.0 ? (r.report.ade - ref.ade) / ref.ade : 0.0;
      r.fde_change = ref.fde > 0.0 ? (r.report.fde - ref.fde) / ref.fde : 0.0;
    }
  }
  return rows;
}

void write_ablation_csv(std::ostream& out, const std::vector<AblationRow>& rows) {
  out << "neighborhood_size,attention,static_grid,ade_m,fde_m,ade_change,fde_change,"
         "direction,config_hash,error\n";
  for (const auto& r : rows) {
    const char* direction = !r.error.empty()   ? "failed"
                            : r.ade_change > 0 ? "worse"
                            : r.ade_change < 0 ? "better"
                                               : "equal";
    out << r.cell.neighborhood_size << ',' << (r.cell.attention ? "on" : "off") << ','
        << (r.cell.static_grid ? "on" : "off") << ',' << fixed(r.report.ade, 6) << ','
        << fixed(r.report.fde, 6) << ',' << fixed(r.ade_change, 6) << ','
        << fixed(r.fde_change, 6) << ',' << direction << ',' << r.report.config_hash
        << ',' << '"' << r.error << '"' << '\n';
  }
}

std::string format_ablation_table(const std::vector<AblationRow>& rows) {
  std::ostringstream out;
  char line[256];
  std::snprintf(line, sizeof(line), "%-34s %10s %10s %10s %10s\n", "cell", "ADE (m)",
                "FDE (m)", "dADE", "dFDE");
  out << line;
  for (const auto& r : rows) {
    if (!r.error.empty()) {
      out << r.cell.label() << "  FAILED: " << r.error << '\n';
      continue;
    }
    std::snprintf(line, sizeof(line), "%-34s %10.4f %10.4f %+9.1f%% %+9.1f%%\n",
                  r.cell.label().c_str(), r.report.ade, r.report.fde,
                  100.0 * r.ade_change, 100.0 * r.fde_change);
    out << line;
  }
  return out.str();
}

}  // namespace g2k::eval
