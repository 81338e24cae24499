#pragma once

// Social relational inference kernel and the full trajectory predictor.
//
// Per observed step the kernel embeds positions (and vislets), runs the
// shared social grid LSTM over all pedestrians, and, for the relational
// variants, scores pedestrians against grid cells, attends, squashes the
// hidden states, builds a row-stochastic adjacency and mixes hidden states
// through it before the next step. The last social features are decoded
// into pred_len offsets which are accumulated onto the last observed point.

#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "g2k/autodiff.hpp"
#include "g2k/config.hpp"
#include "g2k/data.hpp"
#include "g2k/gnn.hpp"
#include "g2k/gridlstm.hpp"

namespace g2k::sri {

using ad::Matrix;
using ad::Var;

enum class Variant { kGLstm, kMC, kMCRn, kMCRmp, kMCRmpc };

Variant parse_variant(const std::string& name);  // "g_lstm", "mc", ...
std::string to_string(Variant v);
const std::vector<Variant>& all_variants();

struct ModelConfig {
  Variant variant = Variant::kMCRmp;
  std::size_t obs_len = 8;
  std::size_t pred_len = 12;
  gridlstm::GridLSTMConfig cell;
  int embed_x = 16;
  int embed_v = 16;
  int conv_channels = 16;
  int grid_size = 4;
  double lambda = 0.0005;
  double tau = -1.0;     // adjacency edge threshold; < 0 means 1/N
  double mp_tau = -1.0;  // message-passing threshold; < 0 means 1/hidden
  bool self_loops = true;
  bool mask_trainable = true;
  bool attention = true;
  bool static_grid = true;
  bool offset_decoding = true;
  bool phi_tanh = false;
  double init_std = 0.01;
  std::uint64_t seed = 0;

  int cells() const { return grid_size * grid_size; }
  bool uses_vislets() const { return variant != Variant::kGLstm; }
  bool relational() const {
    return variant == Variant::kMCRn || variant == Variant::kMCRmp ||
           variant == Variant::kMCRmpc;
  }
  bool uses_static_grid() const {
    return static_grid &&
           (variant == Variant::kMCRmp || variant == Variant::kMCRmpc);
  }
  bool uses_conv() const {
    return uses_static_grid() && variant == Variant::kMCRmpc;
  }

  // Requires a non-empty "variant".
  static ModelConfig from(const config::RunConfig& run);
  void validate() const;
};

// phi(X) = W_ii (W_i X) in row form: X W_i W_ii. Optional tanh on the output.
Var embed_positions(const Var& positions, const Var& w_i, const Var& w_ii,
                    bool apply_tanh = false);
// Rows must be unit vectors (+-1e-6) or exactly zero.
Var embed_vislets(const Var& vislets, const Var& w_iv);

struct FusionWeights {
  Var w_v;  // (d + d_v) x k
  Var b_v;  // 1 x k
  Var w_r;  // width(F) x k
  Var w_c;  // (context width) x 1, conv variant only
};

// F' = C * ((W_v [f_S, V] + b_v) * (W_r F)) with products elementwise over
// n x k; the scene gate C enters as a per-cell column scale (C W_c)^T when
// `context` is given.
Var fuse_features(Variant variant, const Var& social_features,
                  const Var& vislet_embedding, const Var& relation_features,
                  const FusionWeights& w, const std::optional<Var>& context);

// Row-stochastic attention. The nested exp of the textbook form is collapsed
// into a single max-shifted softmax.
Var attention(const Var& fused);
Var node_softmax(const Var& hidden);

// softmax_rows(H * (1 + occupancy f_O'')) with entries below tau zeroed.
Var message_pass(const Var& hidden, const Var& static_attended,
                 const Matrix& occupancy, double tau);

struct Adjacency {
  Var weights;  // n x n, rows sum to 1
  std::vector<std::vector<std::pair<std::size_t, std::size_t>>> edges;
};

// A = row_softmax(H W_A H^T); edges[i] = {(i, j) : A_ij >= tau}.
Adjacency adjacency(const Var& hidden, const Var& w_a, bool self_loops,
                    double tau);
Var update_states(const Var& adjacency_weights, const Var& hidden);

struct StepDiagnostics {
  Matrix adjacency;        // n x n
  std::vector<std::vector<std::pair<std::size_t, std::size_t>>> edges;
  Matrix ped_attention;    // n x k
  Matrix cell_attention;   // 1 x k
  Matrix static_features;  // k x d, f_O'' (zeros when unused)
};

struct KernelOutput {
  Var predictions;  // n x 2*pred_len, [x0, y0, x1, y1, ...]
  Var offsets;      // n x 2*pred_len
  std::vector<StepDiagnostics> diagnostics;
};

// Per-batch constant inputs derived from the windows.
struct BatchTensors {
  std::vector<Matrix> displacement;  // obs_len of n x 2
  std::vector<Matrix> vislets;       // obs_len of n x 2
  std::vector<std::vector<data::Vec2>> positions;
  Matrix last_observed;  // n x 2
  Matrix target;         // n x 2*pred_len

  static BatchTensors from(const data::SceneBatch& batch);
};

class G2KModel {
 public:
  explicit G2KModel(const ModelConfig& cfg);
  // Parameters are shared graph leaves; copies would alias them.
  G2KModel(const G2KModel&) = delete;
  G2KModel& operator=(const G2KModel&) = delete;
  G2KModel(G2KModel&&) = default;
  G2KModel& operator=(G2KModel&&) = default;

  const ModelConfig& config() const { return cfg_; }
  ad::ParameterStore& params() { return store_; }
  const ad::ParameterStore& params() const { return store_; }

  KernelOutput run(const data::SceneBatch& batch) const;

 private:
  Var param(const std::string& name) const { return store_.get(name).value; }

  ModelConfig cfg_;
  ad::ParameterStore store_;
  gridlstm::GridLSTM social_;
  gridlstm::GridLSTM static_;
};

}  // namespace g2k::sri
