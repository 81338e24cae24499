#include "g2k/autodiff.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <sstream>
#include <unordered_set>

#include "g2k/error.hpp"

namespace g2k::ad {
namespace {

std::string shape_of(const Matrix& m) {
  return std::to_string(m.rows()) + "x" + std::to_string(m.cols());
}

void require_same_shape(const char* op, const Var& a, const Var& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    fail(ErrorKind::kShape, std::string(op) + ": shape mismatch " +
                                shape_of(a.data()) + " vs " +
                                shape_of(b.data()));
  }
}

std::string format_double(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

double parse_double(const std::string& s) {
  double v = 0.0;
  auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size()) {
    fail(ErrorKind::kParse, "bad number '" + s + "'");
  }
  return v;
}

}  // namespace

Var Var::constant(Matrix m) {
  auto n = std::make_shared<Node>();
  n->grad = Matrix::Zero(m.rows(), m.cols());
  n->data = std::move(m);
  return Var(std::move(n));
}

Var Var::leaf(Matrix m) {
  Var v = constant(std::move(m));
  v.node_->requires_grad = true;
  return v;
}

double Var::item() const {
  if (rows() != 1 || cols() != 1) {
    fail(ErrorKind::kContract, "item() on non-scalar " + shape_of(data()));
  }
  return node_->data(0, 0);
}

Matrix& Var::mutable_data() {
  if (!is_leaf()) fail(ErrorKind::kContract, "mutable_data on non-leaf");
  return node_->data;
}

Matrix& Var::mutable_grad() {
  if (!is_leaf()) fail(ErrorKind::kContract, "mutable_grad on non-leaf");
  return node_->grad;
}

void Var::zero_grad() { node_->grad.setZero(); }

Var make_op(Matrix data, std::vector<Var> parents,
            std::function<void(Node&)> rule) {
  auto n = std::make_shared<Node>();
  n->grad = Matrix::Zero(data.rows(), data.cols());
  n->data = std::move(data);
  const bool needs = std::any_of(parents.begin(), parents.end(),
                                 [](const Var& p) { return p.requires_grad(); });
  if (needs) {
    n->requires_grad = true;
    n->parents.reserve(parents.size());
    for (auto& p : parents) n->parents.push_back(p.node());
    n->backward_rule = std::move(rule);
  }
  return Var(std::move(n));
}

Var matmul(const Var& a, const Var& b) {
  if (a.cols() != b.rows()) {
    fail(ErrorKind::kShape, "matmul: inner dimension mismatch " +
                                shape_of(a.data()) + " * " +
                                shape_of(b.data()));
  }
  Matrix out = a.data() * b.data();
  return make_op(std::move(out), {a, b}, [](Node& n) {
    auto& pa = *n.parents[0];
    auto& pb = *n.parents[1];
    if (pa.requires_grad) pa.grad.noalias() += n.grad * pb.data.transpose();
    if (pb.requires_grad) pb.grad.noalias() += pa.data.transpose() * n.grad;
  });
}

Var elementwise(Elementwise kind, const Var& a, const Var& b, double factor) {
  switch (kind) {
    case Elementwise::kAdd: {
      require_same_shape("add", a, b);
      return make_op(a.data() + b.data(), {a, b}, [](Node& n) {
        for (auto& p : n.parents)
          if (p->requires_grad) p->grad += n.grad;
      });
    }
    case Elementwise::kSub: {
      require_same_shape("sub", a, b);
      return make_op(a.data() - b.data(), {a, b}, [](Node& n) {
        if (n.parents[0]->requires_grad) n.parents[0]->grad += n.grad;
        if (n.parents[1]->requires_grad) n.parents[1]->grad -= n.grad;
      });
    }
    case Elementwise::kMul: {
      require_same_shape("mul", a, b);
      Matrix out = a.data().cwiseProduct(b.data());
      return make_op(std::move(out), {a, b}, [](Node& n) {
        auto& pa = *n.parents[0];
        auto& pb = *n.parents[1];
        if (pa.requires_grad) pa.grad += n.grad.cwiseProduct(pb.data);
        if (pb.requires_grad) pb.grad += n.grad.cwiseProduct(pa.data);
      });
    }
    case Elementwise::kSigmoid: {
      Matrix out = a.data().unaryExpr(
          [](double x) { return 1.0 / (1.0 + std::exp(-x)); });
      return make_op(out, {a}, [](Node& n) {
        auto& p = *n.parents[0];
        p.grad += n.grad.cwiseProduct(
            n.data.cwiseProduct((1.0 - n.data.array()).matrix()));
      });
    }
    case Elementwise::kTanh: {
      Matrix out = a.data().array().tanh().matrix();
      return make_op(out, {a}, [](Node& n) {
        auto& p = *n.parents[0];
        p.grad += n.grad.cwiseProduct(
            (1.0 - n.data.array().square()).matrix());
      });
    }
    case Elementwise::kExp: {
      Matrix out = a.data().array().exp().matrix();
      return make_op(out, {a}, [](Node& n) {
        n.parents[0]->grad += n.grad.cwiseProduct(n.data);
      });
    }
    case Elementwise::kScale: {
      return make_op(a.data() * factor, {a}, [factor](Node& n) {
        n.parents[0]->grad += n.grad * factor;
      });
    }
  }
  fail(ErrorKind::kContract, "unknown elementwise kind");
}

Var add(const Var& a, const Var& b) {
  return elementwise(Elementwise::kAdd, a, b);
}
Var sub(const Var& a, const Var& b) {
  return elementwise(Elementwise::kSub, a, b);
}
Var mul(const Var& a, const Var& b) {
  return elementwise(Elementwise::kMul, a, b);
}
Var scale(const Var& a, double factor) {
  return elementwise(Elementwise::kScale, a, Var(), factor);
}
Var sigmoid(const Var& a) { return elementwise(Elementwise::kSigmoid, a); }
Var tanh(const Var& a) { return elementwise(Elementwise::kTanh, a); }
Var exp(const Var& a) { return elementwise(Elementwise::kExp, a); }
Var square(const Var& a) { return mul(a, a); }

Var bias_add(const Var& a, const Var& row) {
  if (row.rows() != 1 || row.cols() != a.cols()) {
    fail(ErrorKind::kShape, "bias_add: bias " + shape_of(row.data()) +
                                " does not match " + shape_of(a.data()));
  }
  Matrix out = a.data().rowwise() + row.data().row(0);
  return make_op(std::move(out), {a, row}, [](Node& n) {
    if (n.parents[0]->requires_grad) n.parents[0]->grad += n.grad;
    if (n.parents[1]->requires_grad)
      n.parents[1]->grad += n.grad.colwise().sum();
  });
}

Var scale_rows(const Var& a, const Var& col) {
  if (col.cols() != 1 || col.rows() != a.rows()) {
    fail(ErrorKind::kShape, "scale_rows: factors " + shape_of(col.data()) +
                                " do not match " + shape_of(a.data()));
  }
  Matrix out = col.data().col(0).asDiagonal() * a.data();
  return make_op(std::move(out), {a, col}, [](Node& n) {
    auto& pa = *n.parents[0];
    auto& pc = *n.parents[1];
    if (pa.requires_grad) pa.grad += pc.data.col(0).asDiagonal() * n.grad;
    if (pc.requires_grad)
      pc.grad += n.grad.cwiseProduct(pa.data).rowwise().sum();
  });
}

Var scale_cols(const Var& a, const Var& row) {
  if (row.rows() != 1 || row.cols() != a.cols()) {
    fail(ErrorKind::kShape, "scale_cols: factors " + shape_of(row.data()) +
                                " do not match " + shape_of(a.data()));
  }
  Matrix out = a.data() * row.data().row(0).asDiagonal();
  return make_op(std::move(out), {a, row}, [](Node& n) {
    auto& pa = *n.parents[0];
    auto& pr = *n.parents[1];
    if (pa.requires_grad) pa.grad += n.grad * pr.data.row(0).asDiagonal();
    if (pr.requires_grad)
      pr.grad += n.grad.cwiseProduct(pa.data).colwise().sum();
  });
}

Var broadcast_rows(const Var& row, Eigen::Index n) {
  if (row.rows() != 1) {
    fail(ErrorKind::kShape, "broadcast_rows: expected a row, got " +
                                shape_of(row.data()));
  }
  Matrix out = row.data().replicate(n, 1);
  return make_op(std::move(out), {row}, [](Node& node) {
    node.parents[0]->grad += node.grad.colwise().sum();
  });
}

Var transpose(const Var& a) {
  Matrix out = a.data().transpose();
  return make_op(std::move(out), {a}, [](Node& n) {
    n.parents[0]->grad += n.grad.transpose();
  });
}

Var concat_cols(const std::vector<Var>& parts) {
  if (parts.empty()) fail(ErrorKind::kShape, "concat_cols: no inputs");
  const Eigen::Index rows = parts.front().rows();
  Eigen::Index cols = 0;
  for (const auto& p : parts) {
    if (p.rows() != rows) {
      fail(ErrorKind::kShape, "concat_cols: row mismatch " +
                                  shape_of(parts.front().data()) + " vs " +
                                  shape_of(p.data()));
    }
    cols += p.cols();
  }
  Matrix out(rows, cols);
  Eigen::Index at = 0;
  for (const auto& p : parts) {
    out.middleCols(at, p.cols()) = p.data();
    at += p.cols();
  }
  return make_op(std::move(out), parts, [](Node& n) {
    Eigen::Index at = 0;
    for (auto& p : n.parents) {
      if (p->requires_grad) p->grad += n.grad.middleCols(at, p->data.cols());
      at += p->data.cols();
    }
  });
}

Var slice_cols(const Var& a, Eigen::Index start, Eigen::Index width) {
  if (start < 0 || width < 0 || start + width > a.cols()) {
    fail(ErrorKind::kShape, "slice_cols: [" + std::to_string(start) + ", " +
                                std::to_string(start + width) +
                                ") outside " + shape_of(a.data()));
  }
  Matrix out = a.data().middleCols(start, width);
  return make_op(std::move(out), {a}, [start, width](Node& n) {
    n.parents[0]->grad.middleCols(start, width) += n.grad;
  });
}

Var sum(const Var& a) {
  Matrix out(1, 1);
  out(0, 0) = a.data().sum();
  return make_op(std::move(out), {a}, [](Node& n) {
    n.parents[0]->grad.array() += n.grad(0, 0);
  });
}

Var mean_rows(const Var& a) {
  const Eigen::Index n = a.rows();
  Matrix out = Matrix::Zero(1, a.cols());
  if (n > 0) out = a.data().colwise().sum() / static_cast<double>(n);
  return make_op(std::move(out), {a}, [n](Node& node) {
    if (n == 0) return;
    node.parents[0]->grad.rowwise() +=
        node.grad.row(0) / static_cast<double>(n);
  });
}

namespace {

Matrix softmax_forward(const Matrix& x, const Matrix* allowed) {
  Matrix out = Matrix::Zero(x.rows(), x.cols());
  for (Eigen::Index r = 0; r < x.rows(); ++r) {
    double mx = -std::numeric_limits<double>::infinity();
    for (Eigen::Index c = 0; c < x.cols(); ++c) {
      if (std::isnan(x(r, c))) {
        fail(ErrorKind::kNumeric, "softmax: NaN input at row " +
                                      std::to_string(r));
      }
      if (allowed && (*allowed)(r, c) == 0.0) continue;
      mx = std::max(mx, x(r, c));
    }
    if (!std::isfinite(mx)) {
      if (x.cols() == 0) continue;
      fail(ErrorKind::kNumeric, "softmax: row " + std::to_string(r) +
                                    " has no finite admissible entry");
    }
    double total = 0.0;
    for (Eigen::Index c = 0; c < x.cols(); ++c) {
      if (allowed && (*allowed)(r, c) == 0.0) continue;
      out(r, c) = std::exp(x(r, c) - mx);
      total += out(r, c);
    }
    out.row(r) /= total;
  }
  return out;
}

void softmax_backward(Node& n) {
  auto& p = *n.parents[0];
  // dx = y * (g - <g, y>) per row
  Eigen::VectorXd dots = n.grad.cwiseProduct(n.data).rowwise().sum();
  Matrix centered = n.grad.colwise() - dots;
  p.grad += n.data.cwiseProduct(centered);
}

}  // namespace

Var softmax_rows(const Var& x) {
  return make_op(softmax_forward(x.data(), nullptr), {x}, softmax_backward);
}

Var masked_softmax_rows(const Var& x, const Matrix& allowed) {
  if (allowed.rows() != x.rows() || allowed.cols() != x.cols()) {
    fail(ErrorKind::kShape, "masked_softmax_rows: mask " + shape_of(allowed) +
                                " vs " + shape_of(x.data()));
  }
  return make_op(softmax_forward(x.data(), &allowed), {x}, softmax_backward);
}

Var threshold(const Var& x, double tau) {
  Matrix keep = (x.data().array() >= tau).cast<double>().matrix();
  Matrix out = x.data().cwiseProduct(keep);
  return make_op(std::move(out), {x}, [keep](Node& n) {
    n.parents[0]->grad += n.grad.cwiseProduct(keep);
  });
}

Var cumulative_offsets(const Var& offsets, const Var& origin) {
  if (offsets.cols() % 2 != 0 || origin.cols() != 2 ||
      origin.rows() != offsets.rows()) {
    fail(ErrorKind::kShape, "cumulative_offsets: offsets " +
                                shape_of(offsets.data()) + ", origin " +
                                shape_of(origin.data()));
  }
  const Eigen::Index steps = offsets.cols() / 2;
  Matrix out(offsets.rows(), offsets.cols());
  for (Eigen::Index r = 0; r < out.rows(); ++r) {
    double x = origin.data()(r, 0);
    double y = origin.data()(r, 1);
    for (Eigen::Index k = 0; k < steps; ++k) {
      x = x + offsets.data()(r, 2 * k);
      y = y + offsets.data()(r, 2 * k + 1);
      out(r, 2 * k) = x;
      out(r, 2 * k + 1) = y;
    }
  }
  return make_op(std::move(out), {offsets, origin}, [steps](Node& n) {
    auto& po = *n.parents[0];
    auto& pg = *n.parents[1];
    for (Eigen::Index r = 0; r < n.grad.rows(); ++r) {
      double gx = 0.0;
      double gy = 0.0;
      for (Eigen::Index k = steps - 1; k >= 0; --k) {
        gx += n.grad(r, 2 * k);
        gy += n.grad(r, 2 * k + 1);
        if (po.requires_grad) {
          po.grad(r, 2 * k) += gx;
          po.grad(r, 2 * k + 1) += gy;
        }
      }
      if (pg.requires_grad) {
        pg.grad(r, 0) += gx;
        pg.grad(r, 1) += gy;
      }
    }
  });
}

void backward(const Var& loss) {
  if (!loss.valid() || loss.rows() != 1 || loss.cols() != 1) {
    fail(ErrorKind::kContract, "backward: loss must be 1x1");
  }
  if (!loss.requires_grad()) return;

  // Iterative post-order DFS gives a topological order (parents first).
  std::vector<Node*> order;
  std::unordered_set<Node*> seen;
  std::vector<std::pair<Node*, std::size_t>> stack;
  stack.emplace_back(loss.node().get(), 0);
  seen.insert(loss.node().get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      Node* p = node->parents[next++].get();
      if (p->requires_grad && seen.insert(p).second) stack.emplace_back(p, 0);
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  for (Node* n : order) {
    if (!n->parents.empty()) n->grad.setZero();
  }
  loss.node()->grad(0, 0) += 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* n = *it;
    if (n->backward_rule) n->backward_rule(*n);
  }
}

std::string InitSpec::to_string() const {
  switch (kind) {
    case Kind::kZeros:
      return "zeros";
    case Kind::kConstant:
      return "constant(" + format_double(mean) + ")";
    case Kind::kNormal:
      return "normal(" + format_double(mean) + "," + format_double(stddev) +
             ")";
    case Kind::kLstmBias:
      return "lstm_bias(" + format_double(forget) + ")";
  }
  return "zeros";
}

InitSpec InitSpec::parse(const std::string& text) {
  if (text == "zeros") return zeros();
  const auto open = text.find('(');
  if (open == std::string::npos || text.back() != ')') {
    fail(ErrorKind::kParse, "bad init spec '" + text + "'");
  }
  const std::string head = text.substr(0, open);
  const std::string args = text.substr(open + 1, text.size() - open - 2);
  if (head == "constant") return constant(parse_double(args));
  if (head == "lstm_bias") return lstm_bias(parse_double(args));
  if (head == "normal") {
    const auto comma = args.find(',');
    if (comma == std::string::npos) {
      fail(ErrorKind::kParse, "bad init spec '" + text + "'");
    }
    return normal(parse_double(args.substr(0, comma)),
                  parse_double(args.substr(comma + 1)));
  }
  fail(ErrorKind::kParse, "bad init spec '" + text + "'");
}

Matrix InitSpec::sample(Eigen::Index rows, Eigen::Index cols,
                        std::mt19937_64& rng) const {
  Matrix m = Matrix::Zero(rows, cols);
  switch (kind) {
    case Kind::kZeros:
      break;
    case Kind::kConstant:
      m.setConstant(mean);
      break;
    case Kind::kNormal: {
      std::normal_distribution<double> dist(mean, stddev);
      for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = dist(rng);
      break;
    }
    case Kind::kLstmBias: {
      // gate layout [i | f | o | g]
      const Eigen::Index q = cols / 4;
      m.middleCols(q, q).setConstant(forget);
      break;
    }
  }
  return m;
}

Var ParameterStore::add(const std::string& name, Eigen::Index rows,
                        Eigen::Index cols, const InitSpec& init,
                        std::mt19937_64& rng, bool trainable) {
  if (index_.count(name)) {
    fail(ErrorKind::kContract, "duplicate parameter name '" + name + "'");
  }
  Parameter p{name, Var::leaf(init.sample(rows, cols, rng)), init, trainable};
  index_[name] = params_.size();
  params_.push_back(std::move(p));
  return params_.back().value;
}

bool ParameterStore::contains(const std::string& name) const {
  return index_.count(name) > 0;
}

Parameter& ParameterStore::get(const std::string& name) {
  auto it = index_.find(name);
  if (it == index_.end()) {
    fail(ErrorKind::kContract, "unknown parameter '" + name + "'");
  }
  return params_[it->second];
}

const Parameter& ParameterStore::get(const std::string& name) const {
  return const_cast<ParameterStore*>(this)->get(name);
}

std::size_t ParameterStore::element_count() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += static_cast<std::size_t>(p.value.data().size());
  return n;
}

void ParameterStore::zero_grad() {
  for (auto& p : params_) p.value.zero_grad();
}

void ParameterStore::fill(double value) {
  for (auto& p : params_) p.value.mutable_data().setConstant(value);
}

double GradCheckReport::max_rel_error() const {
  double worst = 0.0;
  for (const auto& e : entries) worst = std::max(worst, e.max_rel_error);
  return worst;
}

std::vector<std::string> GradCheckReport::failures(double tolerance) const {
  std::vector<std::string> out;
  for (const auto& e : entries) {
    if (!(e.max_rel_error < tolerance)) out.push_back(e.name);
  }
  return out;
}

GradCheckReport grad_check(const std::function<Var()>& loss_fn,
                           std::vector<Parameter*> params, double eps,
                           double floor) {
  for (auto* p : params) p->value.zero_grad();
  backward(loss_fn());

  GradCheckReport report;
  for (auto* p : params) {
    GradCheckEntry entry;
    entry.name = p->name;
    const Matrix analytic = p->value.grad();
    Matrix& w = p->value.mutable_data();
    for (Eigen::Index r = 0; r < w.rows(); ++r) {
      for (Eigen::Index c = 0; c < w.cols(); ++c) {
        const double saved = w(r, c);
        w(r, c) = saved + eps;
        const double up = loss_fn().item();
        w(r, c) = saved - eps;
        const double down = loss_fn().item();
        w(r, c) = saved;
        const double numeric = (up - down) / (2.0 * eps);
        const double ga = analytic(r, c);
        const double denom =
            std::max({std::abs(ga), std::abs(numeric), floor});
        const double rel = std::abs(ga - numeric) / denom;
        if (rel > entry.max_rel_error || std::isnan(rel)) {
          entry.max_rel_error = std::isnan(rel) ? INFINITY : rel;
          entry.worst_row = r;
          entry.worst_col = c;
          entry.analytic = ga;
          entry.numeric = numeric;
        }
      }
    }
    report.entries.push_back(entry);
  }
  for (auto* p : params) p->value.zero_grad();
  return report;
}

}  // namespace g2k::ad
