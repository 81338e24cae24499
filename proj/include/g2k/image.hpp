#pragma once

// Grayscale PGM and CSV helpers for scene images and heatmap export.

#include <string>

#include "g2k/autodiff.hpp"

namespace g2k::image {

using ad::Matrix;

// Reads P2 or P5; intensities are scaled to [0, 1] by maxval.
Matrix read_pgm(const std::string& path);

// Writes P2 with values min-max scaled to 0..255 (a constant matrix maps to
// all zeros).
void write_pgm(const std::string& path, const Matrix& values,
               const std::string& comment = "");

// A non-empty comment becomes a leading "# ..." line; read_csv skips those.
void write_csv(const std::string& path, const Matrix& values,
               const std::string& comment = "");
Matrix read_csv(const std::string& path);

// Area-mean downsampling to grid x grid cells.
Matrix downsample(const Matrix& img, int grid);

}  // namespace g2k::image
