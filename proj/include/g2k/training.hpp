#pragma once

#include <chrono>
#include <functional>
#include <string>
#include <vector>

#include "g2k/autodiff.hpp"
#include "g2k/config.hpp"
#include "g2k/data.hpp"
#include "g2k/sri.hpp"

namespace g2k::training {

using ad::Matrix;
using ad::Var;

enum class Optimizer { kAdam, kSgd };

struct TrainConfig {
  std::size_t batch_size = 16;  // scene batches per optimizer step
  int epochs = 10;
  double learning_rate = 1e-3;
  Optimizer optimizer = Optimizer::kAdam;
  std::uint64_t seed = 0;
  double clip_norm = 0.0;  // <= 0 disables clipping
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;

  static TrainConfig from(const config::RunConfig& run);
};

// Squared Euclidean error summed over pedestrians and steps, divided by
// n * steps. Both operands are n x 2*steps.
Var trajectory_loss(const Var& predicted, const Var& target);
Var batch_loss(const sri::G2KModel& model, const data::SceneBatch& batch);

struct AdamState {
  std::vector<Matrix> first;
  std::vector<Matrix> second;
  long step = 0;
};

// Bias-corrected first/second moment update on every trainable parameter.
void adaptive_step(std::vector<ad::Parameter>& params, AdamState& state,
                   const TrainConfig& cfg);
void sgd_step(std::vector<ad::Parameter>& params, double learning_rate);

// Rescales gradients so their global L2 norm is at most max_norm. Returns the
// norm before clipping.
double clip_gradients(std::vector<ad::Parameter>& params, double max_norm);

struct LogRecord {
  int epoch = 0;
  std::size_t batch = 0;
  double loss = 0.0;
  double wall_ms = 0.0;
};

using LogSink = std::function<void(const LogRecord&)>;

struct TrainResult {
  std::vector<double> epoch_losses;
  int epochs_run = 0;
};

// Deterministic given cfg.seed: the scene-batch order of each epoch comes
// from a generator seeded once per run. Throws kDivergence on a non-finite
// loss.
TrainResult train(sri::G2KModel& model,
                  const std::vector<data::SceneBatch>& batches,
                  const TrainConfig& cfg, const LogSink& log = {});

// Deterministic shuffled split; the second part holds round(fraction * n)
// batches.
std::pair<std::vector<data::SceneBatch>, std::vector<data::SceneBatch>>
split_batches(const std::vector<data::SceneBatch>& batches, double fraction,
              std::uint64_t seed);

// Desk-scale instance for finite-difference checks: 3 pedestrians, obs 3,
// pred 2, hidden 8, grid 2.
config::RunConfig desk_config(const std::string& variant);
data::SceneBatch desk_batch(std::uint64_t seed);

// Central differences on every trainable parameter of the model against the
// batch loss.
ad::GradCheckReport check_model_gradients(sri::G2KModel& model,
                                          const data::SceneBatch& batch,
                                          double eps = 1e-5);

}  // namespace g2k::training
