#include <fstream>

#include "doctest.h"
#include "g2k/image.hpp"
#include "helpers.hpp"

using namespace g2k;
using namespace g2k::image;
using testing::kind_of;

TEST_CASE("P2 images are written min-max scaled and read back") {
  const auto dir = testing::scratch_dir("image_p2");
  Matrix m(2, 3);
  m << 0.0, 0.5, 1.0, 2.0, 1.5, 1.0;
  const auto path = (dir / "m.pgm").string();
  write_pgm(path, m, "config_hash abc");
  std::ifstream in(path);
  std::string magic, comment;
  std::getline(in, magic);
  std::getline(in, comment);
  CHECK(magic == "P2");
  CHECK(comment == "# config_hash abc");
  const Matrix back = read_pgm(path);
  REQUIRE(back.rows() == 2);
  REQUIRE(back.cols() == 3);
  CHECK(back(0, 0) == 0.0);
  CHECK(back(1, 0) == 1.0);
  CHECK(back(0, 2) == doctest::Approx(128.0 / 255.0));

  write_pgm(path, Matrix::Constant(2, 2, 7.0));
  CHECK(read_pgm(path).isZero());
}

TEST_CASE("P5 images are read with their maxval") {
  const auto dir = testing::scratch_dir("image_p5");
  const auto path = (dir / "b.pgm").string();
  {
    std::ofstream out(path, std::ios::binary);
    out << "P5\n# scene\n2 2\n100\n";
    const unsigned char px[4] = {0, 25, 50, 100};
    out.write(reinterpret_cast<const char*>(px), 4);
  }
  const Matrix img = read_pgm(path);
  CHECK(img(0, 1) == 0.25);
  CHECK(img(1, 1) == 1.0);
  {
    std::ofstream out(path, std::ios::binary);
    out << "P6\n1 1\n255\nabc";
  }
  CHECK(kind_of([&] { read_pgm(path); }) == ErrorKind::kParse);
  CHECK(kind_of([&] { read_pgm((dir / "missing.pgm").string()); }) == ErrorKind::kIo);
}

TEST_CASE("CSV round-trips exactly and skips comment lines") {
  const auto dir = testing::scratch_dir("image_csv");
  std::mt19937_64 rng(3);
  const Matrix m = testing::random_matrix(3, 4, rng);
  const auto path = (dir / "m.csv").string();
  write_csv(path, m, "config_hash 0123");
  CHECK(testing::bit_equal(read_csv(path), m));
}

TEST_CASE("downsampling averages blocks") {
  Matrix img(4, 4);
  img << 1, 1, 2, 2,
         1, 1, 2, 2,
         3, 3, 4, 4,
         3, 3, 4, 4;
  const Matrix g = downsample(img, 2);
  CHECK(g(0, 0) == 1.0);
  CHECK(g(0, 1) == 2.0);
  CHECK(g(1, 0) == 3.0);
  CHECK(g(1, 1) == 4.0);
  CHECK(downsample(img, 1)(0, 0) == 2.5);
  CHECK(kind_of([&] { downsample(img, 5); }) == ErrorKind::kResize);
}
