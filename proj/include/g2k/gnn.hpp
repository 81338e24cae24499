#pragma once

// Gated neighborhood network: the static scene grid. The scene is cut into
// k = grid_size^2 cells (row-major, row index along y). One 3x3 convolution
// encodes the downsampled scene image, a static grid LSTM fuses it with the
// per-cell vislets, and the result is shrunk by lambda, scored against the
// social features and attention-weighted per cell.

#include <utility>
#include <vector>

#include "g2k/autodiff.hpp"
#include "g2k/data.hpp"
#include "g2k/gridlstm.hpp"

namespace g2k::gnn {

using ad::Matrix;
using ad::Var;

// Axis-aligned cell layout over the batch's observed extent.
struct SceneGrid {
  double x0 = 0.0;
  double y0 = 0.0;
  double x1 = 1.0;
  double y1 = 1.0;
  int size = 4;

  static SceneGrid fit(const data::SceneBatch& batch, int size,
                       double margin = 0.5);
  int cells() const { return size * size; }
  int cell_of(double x, double y) const;
};

// n x k one-hot cell membership.
Matrix occupancy(const std::vector<data::Vec2>& positions, const SceneGrid& grid);
// k x n mean-pooling operator built from an occupancy matrix; empty cells
// give zero rows.
Matrix pooling_matrix(const Matrix& occupancy);

// k x 9 patches of a size x size map with zero padding; column
// ky * 3 + kx holds the neighbour at offset (ky - 1, kx - 1).
Matrix im2col3x3(const Matrix& grid_image);

struct ConvParams {
  Var kernel;  // 9 x channels
  Var bias;    // 1 x channels
};

// Scene context C (k x (channels + d)): the convolved cell map scaled per cell
// by `mask` (k x 1), followed by `social_mean` (1 x d) repeated on every cell.
Var conv_encode(const Matrix& grid_image, const Var& social_mean,
                const Var& mask, const ConvParams& conv);

// k x d_v mean of the occupants' vislet embeddings.
Var pool_vislets(const Matrix& pooling, const Var& vislet_embedding);

// Steps the static grid LSTM over [context | pooled vislets], one row per
// cell. Returns (f_O, new state).
std::pair<Var, gridlstm::GridState> encode_visuospatial(
    const gridlstm::GridLSTM& cell, const Var& context, const Var& pooled_vislets,
    const gridlstm::GridState& state);

Var regularize(const Var& static_features, double lambda);

// n x k scores f_S . f_O'^T.
Var fuse_mask(const Var& social_features, const Var& static_features);

// Row c of (f_O' * h_O) scaled by cell_attention(0, c); cell_attention is
// 1 x k.
Var attend_cells(const Var& static_features, const Var& static_hidden,
                 const Var& cell_attention);

}  // namespace g2k::gnn
