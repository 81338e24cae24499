#include "g2k/gridlstm.hpp"

#include "g2k/error.hpp"

namespace g2k::gridlstm {

using ad::Var;

void GridLSTMConfig::validate() const {
  if (hidden_size < 1 || num_blocks < 1 || block_skip < 1 || cell_units < 1) {
    fail(ErrorKind::kConfig, "grid LSTM fields must all be >= 1");
  }
  if (hidden_size % num_blocks != 0) {
    fail(ErrorKind::kConfig, "hidden_size " + std::to_string(hidden_size) +
                                 " is not divisible by num_blocks " +
                                 std::to_string(num_blocks));
  }
}

void GridLSTMConfig::validate_input(int input_len) const {
  validate();
  if (input_len < 1 || input_len % (num_blocks * block_skip) != 0) {
    fail(ErrorKind::kConfig,
         "grid LSTM input width " + std::to_string(input_len) +
             " must be a positive multiple of num_blocks*block_skip = " +
             std::to_string(num_blocks * block_skip));
  }
}

GridState init_state(const GridLSTMConfig& cfg, Eigen::Index n_entities) {
  cfg.validate();
  return {Var::constant(ad::Matrix::Zero(n_entities, cfg.hidden_size)),
          Var::constant(ad::Matrix::Zero(n_entities, cfg.hidden_size))};
}

GridLSTM::GridLSTM(ad::ParameterStore& store, const std::string& prefix,
                   const GridLSTMConfig& cfg, int input_len,
                   std::mt19937_64& rng, double init_std)
    : cfg_(cfg), input_len_(input_len) {
  cfg_.validate_input(input_len);
  const int hb = cfg_.block_hidden();
  const int wb = cfg_.block_width(input_len);
  const auto normal = ad::InitSpec::normal(0.0, init_std);
  for (int u = 0; u < cfg_.cell_units; ++u) {
    const std::string p = prefix + ".u" + std::to_string(u);
    UnitWeights w;
    w.w_input = store.add(p + ".W_x", u == 0 ? wb : hb, 4 * hb, normal, rng);
    w.w_time = store.add(p + ".W_h", hb, 4 * hb, normal, rng);
    w.w_depth = store.add(p + ".W_d", hb, 4 * hb, normal, rng);
    w.bias = store.add(p + ".b", 1, 4 * hb, ad::InitSpec::lstm_bias(1.0), rng);
    units_.push_back(w);
  }
}

std::pair<Var, GridState> GridLSTM::step(const Var& input,
                                         const GridState& state) const {
  if (input.cols() != input_len_) {
    fail(ErrorKind::kShape, "grid LSTM input width " +
                                std::to_string(input.cols()) + ", expected " +
                                std::to_string(input_len_));
  }
  if (state.h.rows() != input.rows() || state.c.rows() != input.rows() ||
      state.h.cols() != cfg_.hidden_size || state.c.cols() != cfg_.hidden_size) {
    fail(ErrorKind::kShape, "grid LSTM state does not match input rows");
  }
  const int hb = cfg_.block_hidden();
  const int wb = cfg_.block_width(input_len_);

  std::vector<Var> hs;
  std::vector<Var> cs;
  Var depth;
  for (int b = 0; b < cfg_.num_blocks; ++b) {
    const Var x = slice_cols(input, b * wb, wb);
    const Var h_prev = slice_cols(state.h, b * hb, hb);
    Var c = slice_cols(state.c, b * hb, hb);
    Var h;
    for (int u = 0; u < cfg_.cell_units; ++u) {
      const auto& w = units_[u];
      Var z = add(matmul(u == 0 ? x : h, w.w_input), matmul(h_prev, w.w_time));
      if (depth.valid()) z = add(z, matmul(depth, w.w_depth));
      z = bias_add(z, w.bias);
      const Var in_gate = sigmoid(slice_cols(z, 0, hb));
      const Var forget = sigmoid(slice_cols(z, hb, hb));
      const Var out_gate = sigmoid(slice_cols(z, 2 * hb, hb));
      const Var cand = tanh(slice_cols(z, 3 * hb, hb));
      c = add(mul(forget, c), mul(in_gate, cand));
      h = mul(out_gate, tanh(c));
    }
    depth = h;
    hs.push_back(h);
    cs.push_back(c);
  }
  Var out = concat_cols(hs);
  return {out, GridState{out, concat_cols(cs)}};
}

std::pair<std::vector<Var>, GridState> GridLSTM::encode_sequence(
    const std::vector<Var>& inputs, const GridState& state) const {
  if (inputs.empty()) fail(ErrorKind::kContract, "encode_sequence: T must be >= 1");
  std::vector<Var> features;
  GridState s = state;
  for (const auto& x : inputs) {
    auto [f, next] = step(x, s);
    features.push_back(f);
    s = next;
  }
  return {features, s};
}

}  // namespace g2k::gridlstm
