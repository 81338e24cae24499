#pragma once

// Define-by-run reverse-mode differentiation over dense row-major matrices.
//
// A `Var` is a handle to a graph node. Each op allocates a fresh node whose
// backward rule accumulates into its parents' gradients, so graphs are rebuilt
// every forward pass and discarded afterwards. Leaves (parameters and inputs)
// accumulate gradients across backward() calls until zero_grad().

#include <Eigen/Dense>

#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <random>
#include <string>
#include <vector>

namespace g2k::ad {

using Matrix =
    Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

struct Node {
  Matrix data;
  Matrix grad;
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backward_rule;
  bool requires_grad = false;
};

class Var {
 public:
  Var() = default;

  // Non-differentiable input.
  static Var constant(Matrix m);
  // Leaf that collects gradients (parameters).
  static Var leaf(Matrix m);

  bool valid() const { return node_ != nullptr; }
  const Matrix& data() const { return node_->data; }
  const Matrix& grad() const { return node_->grad; }
  Eigen::Index rows() const { return node_->data.rows(); }
  Eigen::Index cols() const { return node_->data.cols(); }
  bool requires_grad() const { return node_->requires_grad; }
  bool is_leaf() const { return node_->parents.empty(); }

  // Scalar access for 1x1 results.
  double item() const;

  // Leaf-only mutation, used by optimizers, checkpoint loading and
  // finite-difference probes. Throws on non-leaf nodes.
  Matrix& mutable_data();
  Matrix& mutable_grad();
  void zero_grad();

  const std::shared_ptr<Node>& node() const { return node_; }

 private:
  explicit Var(std::shared_ptr<Node> n) : node_(std::move(n)) {}
  friend Var make_op(Matrix, std::vector<Var>, std::function<void(Node&)>);

  std::shared_ptr<Node> node_;
};

// Builds an op node. `rule` receives the node after its grad is complete and
// must accumulate into the parents that require gradients.
Var make_op(Matrix data, std::vector<Var> parents,
            std::function<void(Node&)> rule);

enum class Elementwise { kAdd, kSub, kMul, kSigmoid, kTanh, kExp, kScale };

Var matmul(const Var& a, const Var& b);
// Unary kinds ignore `b`; kScale uses `factor`.
Var elementwise(Elementwise kind, const Var& a, const Var& b = Var(),
                double factor = 1.0);

Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var scale(const Var& a, double factor);
Var sigmoid(const Var& a);
Var tanh(const Var& a);
Var exp(const Var& a);
Var square(const Var& a);

// a (n x m) + row (1 x m) added to every row.
Var bias_add(const Var& a, const Var& row);
// a (n x m) with row i multiplied by col(i, 0); col is n x 1.
Var scale_rows(const Var& a, const Var& col);
// a (n x m) with column j multiplied by row(0, j); row is 1 x m.
Var scale_cols(const Var& a, const Var& row);
// Repeats a 1 x m row n times.
Var broadcast_rows(const Var& row, Eigen::Index n);

Var transpose(const Var& a);
Var concat_cols(const std::vector<Var>& parts);
Var slice_cols(const Var& a, Eigen::Index start, Eigen::Index width);
Var sum(const Var& a);
// Column means, 1 x m. An empty input yields zeros.
Var mean_rows(const Var& a);

// Row-wise softmax with max subtraction. Throws kNumeric on NaN input.
Var softmax_rows(const Var& x);
// Row-wise softmax restricted to entries where `allowed` is nonzero; the rest
// are exactly zero. Every row must allow at least one entry.
Var masked_softmax_rows(const Var& x, const Matrix& allowed);
// Entries strictly below `tau` become zero; kept entries pass gradient.
Var threshold(const Var& x, double tau);

// Cumulative offset decoding: `offsets` is n x 2k laid out as
// [dx0, dy0, dx1, dy1, ...]; output step j equals output step j-1 plus offset
// j, with step -1 taken from `origin` (n x 2).
Var cumulative_offsets(const Var& offsets, const Var& origin);

// Reverse pass from a 1x1 loss. Intermediate gradients are reset; leaf
// gradients accumulate.
void backward(const Var& loss);

struct InitSpec {
  enum class Kind { kZeros, kConstant, kNormal, kLstmBias };
  Kind kind = Kind::kZeros;
  double mean = 0.0;    // kConstant value, kNormal mean
  double stddev = 0.0;  // kNormal
  double forget = 1.0;  // kLstmBias: value of the forget-gate quarter

  static InitSpec zeros() { return {}; }
  static InitSpec constant(double v) { return {Kind::kConstant, v, 0.0, 0.0}; }
  static InitSpec normal(double mean, double stddev) {
    return {Kind::kNormal, mean, stddev, 0.0};
  }
  static InitSpec lstm_bias(double forget) {
    return {Kind::kLstmBias, 0.0, 0.0, forget};
  }

  std::string to_string() const;
  static InitSpec parse(const std::string& text);
  Matrix sample(Eigen::Index rows, Eigen::Index cols,
                std::mt19937_64& rng) const;
};

struct Parameter {
  std::string name;
  Var value;
  InitSpec init;
  bool trainable = true;
};

// Ordered, name-unique collection of model parameters.
class ParameterStore {
 public:
  Var add(const std::string& name, Eigen::Index rows, Eigen::Index cols,
          const InitSpec& init, std::mt19937_64& rng, bool trainable = true);

  bool contains(const std::string& name) const;
  Parameter& get(const std::string& name);
  const Parameter& get(const std::string& name) const;

  std::vector<Parameter>& all() { return params_; }
  const std::vector<Parameter>& all() const { return params_; }
  std::size_t size() const { return params_.size(); }
  std::size_t element_count() const;

  void zero_grad();
  // Overwrites every parameter with the same initializer (tests use zeros).
  void fill(double value);

 private:
  std::vector<Parameter> params_;
  std::map<std::string, std::size_t> index_;
};

struct GradCheckEntry {
  std::string name;
  double max_rel_error = 0.0;
  Eigen::Index worst_row = 0;
  Eigen::Index worst_col = 0;
  double analytic = 0.0;
  double numeric = 0.0;
};

struct GradCheckReport {
  std::vector<GradCheckEntry> entries;
  double max_rel_error() const;
  bool passed(double tolerance) const { return max_rel_error() < tolerance; }
  std::vector<std::string> failures(double tolerance) const;
};

// Compares backward() against central differences for every entry of every
// listed parameter. `loss_fn` must rebuild its graph deterministically.
// Relative error is |a - n| / max(|a|, |n|, floor). Central differences of an
// O(1) loss at eps = 1e-5 move in steps of about 1e-11, so gradients much
// below the floor cannot be resolved relatively.
GradCheckReport grad_check(const std::function<Var()>& loss_fn,
                           std::vector<Parameter*> params, double eps = 1e-5,
                           double floor = 1e-6);

}  // namespace g2k::ad
