#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "g2k/autodiff.hpp"
#include "g2k/config.hpp"
#include "g2k/data.hpp"
#include "g2k/sri.hpp"

namespace g2k::eval {

using ad::Matrix;

// Trajectories are n x 2T matrices laid out [x0, y0, x1, y1, ...].
double ade(const Matrix& pred, const Matrix& truth);
double fde(const Matrix& pred, const Matrix& truth);
// Largest single point distance; ADE and FDE never exceed it.
double max_step_error(const Matrix& pred, const Matrix& truth);

// Extrapolates the last observed velocity; 1 x 2*pred_len.
Matrix constant_velocity(const data::TrajectoryWindow& window, std::size_t pred_len);

struct EvalReport {
  std::string dataset;
  std::string variant;
  double ade = 0.0;
  double fde = 0.0;
  double max_step_error = 0.0;
  std::size_t pedestrians = 0;
  double runtime_s = 0.0;
  std::string config_hash;

  // ADE/FDE finite, nonnegative and bounded by the largest step error.
  bool invariants_hold() const;
};

EvalReport evaluate_model(const sri::G2KModel& model,
                          const std::vector<data::SceneBatch>& batches,
                          const std::string& dataset, const std::string& config_hash);
EvalReport evaluate_baseline(const std::vector<data::SceneBatch>& batches,
                             const std::string& dataset,
                             const std::string& config_hash);

void write_reports_csv(std::ostream& out, const std::vector<EvalReport>& reports);
std::string format_table(const std::vector<EvalReport>& reports);

struct AblationCell {
  std::size_t neighborhood_size = 32;
  bool attention = true;
  bool static_grid = true;

  std::string label() const;
};

struct AblationRow {
  AblationCell cell;
  EvalReport report;
  double ade_change = 0.0;  // relative to the reference cell
  double fde_change = 0.0;
  std::string error;        // non-empty when the cell failed
};

// {32, 64} x attention {on, off} x static grid {on, off}; the first cell is
// the reference.
std::vector<AblationCell> default_ablation_grid();

// Retrains `base` (variant forced to mcr_mp unless set) for every cell on
// windows cut from `points` with the cell's neighborhood capacity, evaluates
// on the same windows, and reports changes relative to the first cell.
// A failing cell is recorded and the run continues.
std::vector<AblationRow> ablate(const std::vector<data::TrackPoint>& points,
                                const config::RunConfig& base,
                                const std::vector<AblationCell>& cells,
                                const std::string& dataset);

void write_ablation_csv(std::ostream& out, const std::vector<AblationRow>& rows);
std::string format_ablation_table(const std::vector<AblationRow>& rows);

}  // namespace g2k::eval
