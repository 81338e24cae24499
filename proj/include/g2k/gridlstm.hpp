#pragma once

// Grid LSTM cell shared by the social and the static-scene encoders.
//
// The feature axis is cut into `num_blocks` contiguous slices. Block b runs
// LSTM gates over time on its slice and also receives the freshly computed
// hidden vector of block b-1 (the depth link), so one step sweeps a
// time x depth grid. All blocks reuse the same weights. Inside a block the
// gate transform is applied `cell_units` times, unit u > 0 consuming the
// hidden output of unit u-1 and continuing its cell state.

#include <string>
#include <utility>
#include <vector>

#include "g2k/autodiff.hpp"

namespace g2k::gridlstm {

struct GridLSTMConfig {
  int hidden_size = 128;
  int num_blocks = 4;
  int block_skip = 4;
  int cell_units = 2;

  void validate() const;
  // Throws kConfig when `input_len` cannot be cut into equal blocks.
  void validate_input(int input_len) const;
  int block_hidden() const { return hidden_size / num_blocks; }
  int block_width(int input_len) const {
    return block_skip * (input_len / (num_blocks * block_skip));
  }
};

// Row i holds entity i; both matrices are n x hidden_size.
struct GridState {
  ad::Var h;
  ad::Var c;

  Eigen::Index size() const { return h.rows(); }
};

GridState init_state(const GridLSTMConfig& cfg, Eigen::Index n_entities);

struct UnitWeights {
  ad::Var w_input;  // in x 4hb
  ad::Var w_time;   // hb x 4hb
  ad::Var w_depth;  // hb x 4hb
  ad::Var bias;     // 1 x 4hb, gate order [i | f | o | g]
};

class GridLSTM {
 public:
  GridLSTM() = default;
  // Registers parameters "<prefix>.u<k>.{W_x,W_h,W_d,b}".
  GridLSTM(ad::ParameterStore& store, const std::string& prefix,
           const GridLSTMConfig& cfg, int input_len, std::mt19937_64& rng,
           double init_std);

  const GridLSTMConfig& config() const { return cfg_; }
  int input_len() const { return input_len_; }

  // input: n x input_len. Returns (output n x hidden_size, new state);
  // the output is the concatenated block hidden vectors.
  std::pair<ad::Var, GridState> step(const ad::Var& input,
                                     const GridState& state) const;

  std::pair<std::vector<ad::Var>, GridState> encode_sequence(
      const std::vector<ad::Var>& inputs, const GridState& state) const;

 private:
  GridLSTMConfig cfg_;
  int input_len_ = 0;
  std::vector<UnitWeights> units_;
};

}  // namespace g2k::gridlstm
