#include "g2k/gnn.hpp"

#include <algorithm>
#include <cmath>

#include "g2k/error.hpp"

namespace g2k::gnn {

SceneGrid SceneGrid::fit(const data::SceneBatch& batch, int size,
                         double margin) {
  if (size < 1) fail(ErrorKind::kConfig, "grid_size must be >= 1");
  SceneGrid g;
  g.size = size;
  bool any = false;
  for (const auto& w : batch.windows) {
    for (const auto& p : w.obs) {
      if (!any) {
        g.x0 = g.x1 = p.x;
        g.y0 = g.y1 = p.y;
        any = true;
      }
      g.x0 = std::min(g.x0, p.x);
      g.x1 = std::max(g.x1, p.x);
      g.y0 = std::min(g.y0, p.y);
      g.y1 = std::max(g.y1, p.y);
    }
  }
  g.x0 -= margin;
  g.y0 -= margin;
  g.x1 += margin;
  g.y1 += margin;
  return g;
}

int SceneGrid::cell_of(double x, double y) const {
  auto band = [this](double v, double lo, double hi) {
    const double span = hi - lo;
    int b = span > 0.0 ? static_cast<int>(std::floor((v - lo) / span * size)) : 0;
    return std::clamp(b, 0, size - 1);
  };
  return band(y, y0, y1) * size + band(x, x0, x1);
}

Matrix occupancy(const std::vector<data::Vec2>& positions,
                 const SceneGrid& grid) {
  Matrix occ = Matrix::Zero(static_cast<Eigen::Index>(positions.size()),
                            grid.cells());
  for (std::size_t i = 0; i < positions.size(); ++i) {
    occ(static_cast<Eigen::Index>(i), grid.cell_of(positions[i].x, positions[i].y)) = 1.0;
  }
  return occ;
}

Matrix pooling_matrix(const Matrix& occupancy) {
  Matrix pool = occupancy.transpose();
  for (Eigen::Index c = 0; c < pool.rows(); ++c) {
    const double count = pool.row(c).sum();
    if (count > 0.0) pool.row(c) /= count;
  }
  return pool;
}

Matrix im2col3x3(const Matrix& img) {
  const Eigen::Index rows = img.rows();
  const Eigen::Index cols = img.cols();
  Matrix patches = Matrix::Zero(rows * cols, 9);
  for (Eigen::Index r = 0; r < rows; ++r) {
    for (Eigen::Index c = 0; c < cols; ++c) {
      for (int ky = 0; ky < 3; ++ky) {
        for (int kx = 0; kx < 3; ++kx) {
          const Eigen::Index rr = r + ky - 1;
          const Eigen::Index cc = c + kx - 1;
          if (rr < 0 || cc < 0 || rr >= rows || cc >= cols) continue;
          patches(r * cols + c, ky * 3 + kx) = img(rr, cc);
        }
      }
    }
  }
  return patches;
}

Var conv_encode(const Matrix& grid_image, const Var& social_mean,
                const Var& mask, const ConvParams& conv) {
  if (grid_image.size() == 0) fail(ErrorKind::kShape, "conv_encode: empty image");
  const Eigen::Index k = grid_image.size();
  if (mask.rows() != k || mask.cols() != 1) {
    fail(ErrorKind::kShape, "conv_encode: mask must be " + std::to_string(k) + "x1");
  }
  const Var patches = Var::constant(im2col3x3(grid_image));
  const Var conv_out = bias_add(matmul(patches, conv.kernel), conv.bias);
  const Var gated = scale_rows(conv_out, mask);
  return ad::concat_cols({gated, broadcast_rows(social_mean, k)});
}

Var pool_vislets(const Matrix& pooling, const Var& vislet_embedding) {
  return matmul(Var::constant(pooling), vislet_embedding);
}

std::pair<Var, gridlstm::GridState> encode_visuospatial(
    const gridlstm::GridLSTM& cell, const Var& context,
    const Var& pooled_vislets, const gridlstm::GridState& state) {
  return cell.step(ad::concat_cols({context, pooled_vislets}), state);
}

Var regularize(const Var& static_features, double lambda) {
  return scale(static_features, lambda);
}

Var fuse_mask(const Var& social_features, const Var& static_features) {
  if (social_features.cols() != static_features.cols()) {
    fail(ErrorKind::kShape, "fuse_mask: feature widths differ (" +
                                std::to_string(social_features.cols()) + " vs " +
                                std::to_string(static_features.cols()) + ")");
  }
  return matmul(social_features, transpose(static_features));
}

Var attend_cells(const Var& static_features, const Var& static_hidden,
                 const Var& cell_attention) {
  return scale_rows(mul(static_features, static_hidden),
                    transpose(cell_attention));
}

}  // namespace g2k::gnn
