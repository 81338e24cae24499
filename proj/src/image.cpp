#include "g2k/image.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cctype>
#include <fstream>
#include <sstream>
#include <vector>

#include "g2k/error.hpp"

namespace g2k::image {
namespace {

// Next whitespace-delimited header token, skipping '#' comments.
std::string header_token(std::istream& in) {
  std::string tok;
  char ch;
  while (in.get(ch)) {
    if (ch == '#') {
      std::string rest;
      std::getline(in, rest);
      if (!tok.empty()) break;
      continue;
    }
    if (std::isspace(static_cast<unsigned char>(ch))) {
      if (!tok.empty()) break;
      continue;
    }
    tok.push_back(ch);
  }
  return tok;
}

int header_int(std::istream& in, const std::string& path) {
  const std::string tok = header_token(in);
  int v = 0;
  auto res = std::from_chars(tok.data(), tok.data() + tok.size(), v);
  if (res.ec != std::errc() || v <= 0) {
    fail(ErrorKind::kParse, "bad PGM header in '" + path + "'");
  }
  return v;
}

}  // namespace

Matrix read_pgm(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::kIo, "cannot open image '" + path + "'");
  const std::string magic = header_token(in);
  if (magic != "P2" && magic != "P5") {
    fail(ErrorKind::kParse, "'" + path + "' is not a P2/P5 PGM");
  }
  const int width = header_int(in, path);
  const int height = header_int(in, path);
  const int maxval = header_int(in, path);
  Matrix img(height, width);
  if (magic == "P2") {
    for (int r = 0; r < height; ++r) {
      for (int c = 0; c < width; ++c) {
        int v = 0;
        if (!(in >> v)) fail(ErrorKind::kParse, "truncated PGM '" + path + "'");
        img(r, c) = static_cast<double>(v) / maxval;
      }
    }
  } else {
    const int bytes = maxval < 256 ? 1 : 2;
    std::vector<unsigned char> buf(static_cast<std::size_t>(width) * height * bytes);
    in.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
    if (in.gcount() != static_cast<std::streamsize>(buf.size())) {
      fail(ErrorKind::kParse, "truncated PGM '" + path + "'");
    }
    for (int i = 0; i < width * height; ++i) {
      const int v = bytes == 1 ? buf[i] : (buf[2 * i] << 8) | buf[2 * i + 1];
      img.data()[i] = static_cast<double>(v) / maxval;
    }
  }
  return img;
}

void write_pgm(const std::string& path, const Matrix& values,
               const std::string& comment) {
  std::ofstream out(path);
  if (!out) fail(ErrorKind::kIo, "cannot write image '" + path + "'");
  const double lo = values.size() ? values.minCoeff() : 0.0;
  const double hi = values.size() ? values.maxCoeff() : 0.0;
  const double range = hi - lo;
  out << "P2\n";
  if (!comment.empty()) out << "# " << comment << '\n';
  out << values.cols() << ' ' << values.rows() << "\n255\n";
  for (Eigen::Index r = 0; r < values.rows(); ++r) {
    for (Eigen::Index c = 0; c < values.cols(); ++c) {
      const int v = range > 0.0
                        ? static_cast<int>(std::lround(255.0 * (values(r, c) - lo) / range))
                        : 0;
      out << v << (c + 1 == values.cols() ? '\n' : ' ');
    }
  }
}

void write_csv(const std::string& path, const Matrix& values,
               const std::string& comment) {
  std::ofstream out(path);
  if (!out) fail(ErrorKind::kIo, "cannot write '" + path + "'");
  if (!comment.empty()) out << "# " << comment << '\n';
  char buf[64];
  for (Eigen::Index r = 0; r < values.rows(); ++r) {
    for (Eigen::Index c = 0; c < values.cols(); ++c) {
      auto res = std::to_chars(buf, buf + sizeof(buf), values(r, c));
      out.write(buf, res.ptr - buf);
      out << (c + 1 == values.cols() ? '\n' : ',');
    }
  }
}

Matrix read_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::kIo, "cannot open '" + path + "'");
  std::vector<std::vector<double>> rows;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    std::vector<double> row;
    std::stringstream ss(line);
    for (std::string cell; std::getline(ss, cell, ',');) {
      double v = 0.0;
      auto res = std::from_chars(cell.data(), cell.data() + cell.size(), v);
      if (res.ec != std::errc()) fail(ErrorKind::kParse, "bad CSV cell in '" + path + "'");
      row.push_back(v);
    }
    if (!rows.empty() && row.size() != rows.front().size()) {
      fail(ErrorKind::kParse, "ragged CSV '" + path + "'");
    }
    rows.push_back(std::move(row));
  }
  Matrix m(rows.size(), rows.empty() ? 0 : rows.front().size());
  for (std::size_t r = 0; r < rows.size(); ++r)
    for (std::size_t c = 0; c < rows[r].size(); ++c) m(r, c) = rows[r][c];
  return m;
}

Matrix downsample(const Matrix& img, int grid) {
  if (grid < 1) fail(ErrorKind::kConfig, "grid size must be >= 1");
  if (img.rows() < grid || img.cols() < grid) {
    fail(ErrorKind::kResize,
         "scene image " + std::to_string(img.cols()) + "x" +
             std::to_string(img.rows()) + " is smaller than the " +
             std::to_string(grid) + "x" + std::to_string(grid) +
             " grid; supply an image at least grid_size pixels per side or "
             "lower grid_size");
  }
  Matrix out = Matrix::Zero(grid, grid);
  for (int gr = 0; gr < grid; ++gr) {
    const Eigen::Index r0 = gr * img.rows() / grid;
    const Eigen::Index r1 = (gr + 1) * img.rows() / grid;
    for (int gc = 0; gc < grid; ++gc) {
      const Eigen::Index c0 = gc * img.cols() / grid;
      const Eigen::Index c1 = (gc + 1) * img.cols() / grid;
      out(gr, gc) = img.block(r0, c0, r1 - r0, c1 - c0).mean();
    }
  }
  return out;
}

}  // namespace g2k::image
