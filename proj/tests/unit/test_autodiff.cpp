#include <cmath>
#include <random>

#include "doctest.h"
#include "g2k/autodiff.hpp"
#include "helpers.hpp"

using namespace g2k;
using namespace g2k::ad;
using testing::kind_of;
using testing::random_matrix;

namespace {

Matrix naive_matmul(const Matrix& a, const Matrix& b) {
  Matrix out = Matrix::Zero(a.rows(), b.cols());
  for (Eigen::Index i = 0; i < a.rows(); ++i)
    for (Eigen::Index j = 0; j < b.cols(); ++j) {
      double s = 0.0;
      for (Eigen::Index k = 0; k < a.cols(); ++k) s += a(i, k) * b(k, j);
      out(i, j) = s;
    }
  return out;
}

// exp(x_ij) / sum_k exp(x_ik) without the max shift
Matrix naive_softmax(const Matrix& x) {
  Matrix out(x.rows(), x.cols());
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    double z = 0.0;
    for (Eigen::Index j = 0; j < x.cols(); ++j) z += std::exp(x(i, j));
    for (Eigen::Index j = 0; j < x.cols(); ++j) out(i, j) = std::exp(x(i, j)) / z;
  }
  return out;
}

GradCheckReport check(const std::function<Var(const Var&, const Var&)>& f, Matrix a,
                      Matrix b) {
  Parameter pa{"a", Var::leaf(std::move(a)), InitSpec::zeros(), true};
  Parameter pb{"b", Var::leaf(std::move(b)), InitSpec::zeros(), true};
  return grad_check([&] { return f(pa.value, pb.value); }, {&pa, &pb});
}

}  // namespace

TEST_CASE("matmul matches a triple loop") {
  std::mt19937_64 rng(1);
  for (int trial = 0; trial < 5; ++trial) {
    const Matrix a = random_matrix(3 + trial, 4, rng);
    const Matrix b = random_matrix(4, 2 + trial, rng);
    const Matrix got = matmul(Var::constant(a), Var::constant(b)).data();
    CHECK((got - naive_matmul(a, b)).cwiseAbs().maxCoeff() < 1e-12);
  }
  CHECK(kind_of([] { matmul(Var::constant(Matrix::Zero(2, 3)), Var::constant(Matrix::Zero(2, 3))); }) ==
        ErrorKind::kShape);
}

TEST_CASE("softmax rows match the direct formula and sum to one") {
  std::mt19937_64 rng(2);
  const Matrix x = random_matrix(4, 6, rng, 3.0);
  const Matrix got = softmax_rows(Var::constant(x)).data();
  CHECK((got - naive_softmax(x)).cwiseAbs().maxCoeff() < 1e-12);
  for (Eigen::Index i = 0; i < got.rows(); ++i) CHECK(std::abs(got.row(i).sum() - 1.0) < 1e-12);

  // large logits do not overflow
  Matrix big(1, 3);
  big << 1000.0, 1001.0, 999.0;
  const Matrix s = softmax_rows(Var::constant(big)).data();
  CHECK(std::isfinite(s.sum()));
  CHECK(std::abs(s(0, 1) - naive_softmax(big.array() - 1000.0)(0, 1)) < 1e-12);

  Matrix bad = Matrix::Zero(1, 2);
  bad(0, 0) = std::nan("");
  CHECK(kind_of([&] { softmax_rows(Var::constant(bad)); }) == ErrorKind::kNumeric);
}

TEST_CASE("masked softmax zeroes disallowed entries") {
  std::mt19937_64 rng(3);
  const Matrix x = random_matrix(3, 3, rng);
  Matrix allowed = Matrix::Ones(3, 3);
  allowed.diagonal().setZero();
  const Matrix got = masked_softmax_rows(Var::constant(x), allowed).data();
  for (Eigen::Index i = 0; i < 3; ++i) {
    CHECK(got(i, i) == 0.0);
    CHECK(std::abs(got.row(i).sum() - 1.0) < 1e-12);
    double z = 0.0;
    for (Eigen::Index j = 0; j < 3; ++j)
      if (j != i) z += std::exp(x(i, j));
    for (Eigen::Index j = 0; j < 3; ++j)
      if (j != i) CHECK(std::abs(got(i, j) - std::exp(x(i, j)) / z) < 1e-12);
  }
}

TEST_CASE("cumulative offsets telescope onto the origin") {
  std::mt19937_64 rng(4);
  const Matrix off = random_matrix(3, 8, rng);
  const Matrix origin = random_matrix(3, 2, rng);
  const Matrix got = cumulative_offsets(Var::constant(off), Var::constant(origin)).data();
  for (Eigen::Index i = 0; i < 3; ++i) {
    double x = origin(i, 0), y = origin(i, 1);
    for (Eigen::Index k = 0; k < 4; ++k) {
      x += off(i, 2 * k);
      y += off(i, 2 * k + 1);
      CHECK(got(i, 2 * k) == x);
      CHECK(got(i, 2 * k + 1) == y);
    }
  }
}

TEST_CASE("threshold keeps entries at or above tau") {
  Matrix x(1, 4);
  x << 0.1, 0.25, 0.3, 0.2;
  const Matrix got = threshold(Var::constant(x), 0.25).data();
  CHECK(got(0, 0) == 0.0);
  CHECK(got(0, 1) == 0.25);
  CHECK(got(0, 2) == 0.3);
  CHECK(got(0, 3) == 0.0);
}

TEST_CASE("every op passes a finite-difference check") {
  std::mt19937_64 rng(5);
  const Matrix a = random_matrix(3, 4, rng, 0.7);
  const Matrix b = random_matrix(3, 4, rng, 0.7);
  const Matrix sq = random_matrix(4, 4, rng, 0.7);
  auto reduce = [](const Var& v) { return sum(square(v)); };
  const double tol = 1e-6;

  CHECK(check([&](const Var& x, const Var& y) { return reduce(matmul(x, y)); }, a, sq).passed(tol));
  CHECK(check([&](const Var& x, const Var& y) { return reduce(add(x, y)); }, a, b).passed(tol));
  CHECK(check([&](const Var& x, const Var& y) { return reduce(sub(x, y)); }, a, b).passed(tol));
  CHECK(check([&](const Var& x, const Var& y) { return reduce(mul(x, y)); }, a, b).passed(tol));
  CHECK(check([&](const Var& x, const Var& y) { return reduce(mul(sigmoid(x), tanh(y))); }, a, b)
            .passed(tol));
  CHECK(check([&](const Var& x, const Var& y) { return reduce(add(exp(x), scale(y, -2.5))); }, a, b)
            .passed(tol));
  CHECK(check([&](const Var& x, const Var& y) {
          return reduce(bias_add(x, slice_cols(mean_rows(y), 0, 4)));
        }, a, b).passed(tol));
  CHECK(check([&](const Var& x, const Var& y) {
          return reduce(scale_rows(x, slice_cols(y, 1, 1)));
        }, a, b).passed(tol));
  CHECK(check([&](const Var& x, const Var& y) {
          return reduce(scale_cols(x, transpose(slice_cols(transpose(y), 1, 1))));
        }, a, b).passed(tol));
  CHECK(check([&](const Var& x, const Var& y) {
          return reduce(concat_cols({x, broadcast_rows(mean_rows(y), 3)}));
        }, a, b).passed(tol));
  CHECK(check([&](const Var& x, const Var& y) {
          return reduce(mul(softmax_rows(x), y));
        }, a, b).passed(tol));
  Matrix allowed = Matrix::Ones(3, 4);
  allowed(0, 1) = allowed(2, 3) = 0.0;
  CHECK(check([&](const Var& x, const Var& y) {
          return reduce(mul(masked_softmax_rows(x, allowed), y));
        }, a, b).passed(tol));
  CHECK(check([&](const Var& x, const Var& y) {
          return reduce(cumulative_offsets(x, slice_cols(y, 0, 2)));
        }, a, b).passed(tol));
  CHECK(check([&](const Var& x, const Var& y) {
          return reduce(mul(threshold(softmax_rows(x), 0.1), y));
        }, a, b).passed(tol));
}

TEST_CASE("leaf gradients accumulate until zeroed") {
  Var w = Var::leaf(Matrix::Constant(1, 1, 3.0));
  backward(sum(square(w)));
  CHECK(w.grad()(0, 0) == doctest::Approx(6.0));
  backward(sum(square(w)));
  CHECK(w.grad()(0, 0) == doctest::Approx(12.0));
  w.zero_grad();
  CHECK(w.grad()(0, 0) == 0.0);
}

TEST_CASE("a shared subexpression receives both gradient paths") {
  Var w = Var::leaf(Matrix::Constant(1, 1, 2.0));
  const Var u = mul(w, w);
  backward(sum(add(u, u)));  // d/dw 2 w^2 = 4 w
  CHECK(w.grad()(0, 0) == doctest::Approx(8.0));
}

TEST_CASE("backward needs a scalar and mutation needs a leaf") {
  Var w = Var::leaf(Matrix::Ones(2, 2));
  CHECK(kind_of([&] { backward(w); }) == ErrorKind::kContract);
  Var y = scale(w, 2.0);
  CHECK(kind_of([&] { y.mutable_data(); }) == ErrorKind::kContract);
  CHECK_FALSE(Var::constant(Matrix::Ones(1, 1)).requires_grad());
}

TEST_CASE("init specs round-trip through text") {
  for (const auto& spec : {InitSpec::zeros(), InitSpec::constant(0.5), InitSpec::normal(1.0, 0.01),
                           InitSpec::lstm_bias(1.0)}) {
    const auto back = InitSpec::parse(spec.to_string());
    CHECK(back.to_string() == spec.to_string());
    CHECK(back.kind == spec.kind);
  }
  CHECK(InitSpec::parse("normal(0,0.1)").stddev == 0.1);
  CHECK(kind_of([] { InitSpec::parse("uniform(0,1)"); }) == ErrorKind::kParse);

  std::mt19937_64 rng(0);
  const Matrix b = InitSpec::lstm_bias(1.0).sample(1, 8, rng);
  CHECK(b(0, 0) == 0.0);
  CHECK(b(0, 2) == 1.0);
  CHECK(b(0, 3) == 1.0);
  CHECK(b(0, 4) == 0.0);
}

TEST_CASE("parameter store rejects duplicates and counts elements") {
  ParameterStore store;
  std::mt19937_64 rng(0);
  store.add("w", 2, 3, InitSpec::normal(0.0, 1.0), rng);
  store.add("b", 1, 3, InitSpec::zeros(), rng, false);
  CHECK(store.size() == 2);
  CHECK(store.element_count() == 9);
  CHECK(store.contains("w"));
  CHECK_FALSE(store.get("b").trainable);
  CHECK(kind_of([&] { store.add("w", 1, 1, InitSpec::zeros(), rng); }) == ErrorKind::kContract);
  store.fill(0.0);
  CHECK(store.get("w").value.data().isZero());
}

TEST_CASE("grad check flags a wrong backward rule") {
  Parameter p{"p", Var::leaf(Matrix::Constant(1, 2, 0.4)), InitSpec::zeros(), true};
  auto broken = [&] {
    // forward p^2, backward claims p
    return sum(make_op(p.value.data().array().square().matrix(), {p.value}, [](Node& n) {
      n.parents[0]->grad += n.grad.cwiseProduct(n.parents[0]->data);
    }));
  };
  const auto report = grad_check(broken, {&p});
  CHECK_FALSE(report.passed(1e-4));
  CHECK(report.failures(1e-4) == std::vector<std::string>{"p"});
}
