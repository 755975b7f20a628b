#include "skelssl/autodiff.hpp"

#include <cmath>
#include <stdexcept>
#include <utility>

namespace skelssl::ad {

namespace {
thread_local bool g_grad_enabled = true;
}

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }
bool grad_enabled() { return g_grad_enabled; }

Var wrap(std::shared_ptr<Node> n) {
  Var v;
  v.node_ = std::move(n);
  return v;
}

Var::Var(Mat value, bool requires_grad) {
  node_ = std::make_shared<Node>();
  node_->value = std::move(value);
  node_->requires_grad = requires_grad && g_grad_enabled;
}

Var::Var(double scalar, bool requires_grad) : Var(Mat::Constant(1, 1, scalar), requires_grad) {}

double Var::scalar() const {
  if (rows() != 1 || cols() != 1) throw std::logic_error("Var::scalar on non-1x1 value");
  return node_->value(0, 0);
}

namespace {

// Builds an op node. `backward` receives the op node and must accumulate
// into parents' grad_ref(); it is skipped entirely in no-grad mode.
Var make_op(Mat value, std::vector<Var> parents, std::function<void(Node&)> backward) {
  auto n = std::make_shared<Node>();
  n->value = std::move(value);
  if (g_grad_enabled) {
    bool any = false;
    for (const auto& p : parents) any = any || p.requires_grad();
    if (any) {
      n->requires_grad = true;
      n->parents.reserve(parents.size());
      for (auto& p : parents) n->parents.push_back(p.node());
      n->backward = std::move(backward);
    }
  }
  return wrap(std::move(n));
}

void check_same_shape(const Var& a, const Var& b, const char* op) {
  if (a.rows() != b.rows() || a.cols() != b.cols())
    throw std::invalid_argument(std::string(op) + ": shape mismatch " +
                                std::to_string(a.rows()) + "x" + std::to_string(a.cols()) +
                                " vs " + std::to_string(b.rows()) + "x" +
                                std::to_string(b.cols()));
}

}  // namespace

void backward(const Var& loss) {
  if (loss.rows() != 1 || loss.cols() != 1)
    throw std::logic_error("backward: loss must be scalar (1x1)");
  if (!loss.requires_grad()) return;

  // Iterative post-order DFS for a topological ordering.
  std::vector<Node*> order;
  std::vector<std::pair<Node*, std::size_t>> stack;
  stack.emplace_back(loss.node().get(), 0);
  loss.node()->visit_mark = 1;
  while (!stack.empty()) {
    auto& [node, next_child] = stack.back();
    if (next_child < node->parents.size()) {
      Node* child = node->parents[next_child++].get();
      if (child->requires_grad && child->visit_mark == 0) {
        child->visit_mark = 1;
        stack.emplace_back(child, 0);
      }
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  loss.node()->grad_ref()(0, 0) += 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* node = *it;
    node->visit_mark = 0;
    if (node->backward) node->backward(*node);
  }
}

// --- elementwise / arithmetic ---

Var add(const Var& a, const Var& b) {
  check_same_shape(a, b, "add");
  return make_op(a.value() + b.value(), {a, b}, [](Node& n) {
    if (n.parents[0]->requires_grad) n.parents[0]->grad_ref() += n.grad;
    if (n.parents[1]->requires_grad) n.parents[1]->grad_ref() += n.grad;
  });
}

Var sub(const Var& a, const Var& b) {
  check_same_shape(a, b, "sub");
  return make_op(a.value() - b.value(), {a, b}, [](Node& n) {
    if (n.parents[0]->requires_grad) n.parents[0]->grad_ref() += n.grad;
    if (n.parents[1]->requires_grad) n.parents[1]->grad_ref() -= n.grad;
  });
}

Var mul(const Var& a, const Var& b) {
  check_same_shape(a, b, "mul");
  return make_op(a.value().cwiseProduct(b.value()), {a, b}, [](Node& n) {
    if (n.parents[0]->requires_grad)
      n.parents[0]->grad_ref() += n.grad.cwiseProduct(n.parents[1]->value);
    if (n.parents[1]->requires_grad)
      n.parents[1]->grad_ref() += n.grad.cwiseProduct(n.parents[0]->value);
  });
}

Var scale(const Var& a, double s) {
  return make_op(a.value() * s, {a}, [s](Node& n) {
    if (n.parents[0]->requires_grad) n.parents[0]->grad_ref() += n.grad * s;
  });
}

Var add_scalar(const Var& a, double s) {
  return make_op(a.value().array() + s, {a}, [](Node& n) {
    if (n.parents[0]->requires_grad) n.parents[0]->grad_ref() += n.grad;
  });
}

Var neg(const Var& a) { return scale(a, -1.0); }

// --- linear algebra ---

Var matmul(const Var& a, const Var& b) {
  if (a.cols() != b.rows()) throw std::invalid_argument("matmul: inner dimension mismatch");
  return make_op(a.value() * b.value(), {a, b}, [](Node& n) {
    if (n.parents[0]->requires_grad)
      n.parents[0]->grad_ref() += n.grad * n.parents[1]->value.transpose();
    if (n.parents[1]->requires_grad)
      n.parents[1]->grad_ref() += n.parents[0]->value.transpose() * n.grad;
  });
}

Var transpose(const Var& a) {
  return make_op(a.value().transpose(), {a}, [](Node& n) {
    if (n.parents[0]->requires_grad) n.parents[0]->grad_ref() += n.grad.transpose();
  });
}

Var add_rowvec(const Var& x, const Var& bias) {
  if (bias.rows() != 1 || bias.cols() != x.cols())
    throw std::invalid_argument("add_rowvec: bias must be 1 x cols(x)");
  Mat value = x.value();
  value.rowwise() += bias.value().row(0);
  return make_op(std::move(value), {x, bias}, [](Node& n) {
    if (n.parents[0]->requires_grad) n.parents[0]->grad_ref() += n.grad;
    if (n.parents[1]->requires_grad)
      n.parents[1]->grad_ref() += n.grad.colwise().sum();
  });
}

Var sub_colvec(const Var& x, const Var& col) {
  if (col.cols() != 1 || col.rows() != x.rows())
    throw std::invalid_argument("sub_colvec: col must be rows(x) x 1");
  Mat value = x.value();
  value.colwise() -= col.value().col(0);
  return make_op(std::move(value), {x, col}, [](Node& n) {
    if (n.parents[0]->requires_grad) n.parents[0]->grad_ref() += n.grad;
    if (n.parents[1]->requires_grad)
      n.parents[1]->grad_ref() -= n.grad.rowwise().sum();
  });
}

// --- nonlinearities ---

Var sigmoid(const Var& a) {
  Mat value = (1.0 / (1.0 + (-a.value().array()).exp())).matrix();
  return make_op(std::move(value), {a}, [](Node& n) {
    if (n.parents[0]->requires_grad) {
      const auto y = n.value.array();
      n.parents[0]->grad_ref().array() += n.grad.array() * y * (1.0 - y);
    }
  });
}

Var tanh_v(const Var& a) {
  Mat value = a.value().array().tanh().matrix();
  return make_op(std::move(value), {a}, [](Node& n) {
    if (n.parents[0]->requires_grad) {
      const auto y = n.value.array();
      n.parents[0]->grad_ref().array() += n.grad.array() * (1.0 - y * y);
    }
  });
}

Var relu(const Var& a) {
  Mat value = a.value().cwiseMax(0.0);
  return make_op(std::move(value), {a}, [](Node& n) {
    if (n.parents[0]->requires_grad) {
      n.parents[0]->grad_ref().array() +=
          n.grad.array() * (n.parents[0]->value.array() > 0.0).cast<double>();
    }
  });
}

Var exp_v(const Var& a) {
  Mat value = a.value().array().exp().matrix();
  return make_op(std::move(value), {a}, [](Node& n) {
    if (n.parents[0]->requires_grad)
      n.parents[0]->grad_ref().array() += n.grad.array() * n.value.array();
  });
}

Var log_v(const Var& a) {
  Mat value = a.value().array().log().matrix();
  return make_op(std::move(value), {a}, [](Node& n) {
    if (n.parents[0]->requires_grad)
      n.parents[0]->grad_ref().array() += n.grad.array() / n.parents[0]->value.array();
  });
}

// --- structure ---

Var slice_rows(const Var& a, Eigen::Index start, Eigen::Index count) {
  if (start < 0 || count < 0 || start + count > a.rows())
    throw std::invalid_argument("slice_rows: range out of bounds");
  return make_op(a.value().middleRows(start, count), {a}, [start, count](Node& n) {
    if (n.parents[0]->requires_grad)
      n.parents[0]->grad_ref().middleRows(start, count) += n.grad;
  });
}

Var slice_cols(const Var& a, Eigen::Index start, Eigen::Index count) {
  if (start < 0 || count < 0 || start + count > a.cols())
    throw std::invalid_argument("slice_cols: range out of bounds");
  return make_op(a.value().middleCols(start, count), {a}, [start, count](Node& n) {
    if (n.parents[0]->requires_grad)
      n.parents[0]->grad_ref().middleCols(start, count) += n.grad;
  });
}

Var concat_rows(const std::vector<Var>& parts) {
  if (parts.empty()) throw std::invalid_argument("concat_rows: no parts");
  Eigen::Index total = 0;
  const Eigen::Index cols = parts[0].cols();
  for (const auto& p : parts) {
    if (p.cols() != cols) throw std::invalid_argument("concat_rows: column mismatch");
    total += p.rows();
  }
  Mat value(total, cols);
  Eigen::Index row = 0;
  for (const auto& p : parts) {
    value.middleRows(row, p.rows()) = p.value();
    row += p.rows();
  }
  return make_op(std::move(value), parts, [](Node& n) {
    Eigen::Index row = 0;
    for (auto& parent : n.parents) {
      const Eigen::Index r = parent->value.rows();
      if (parent->requires_grad) parent->grad_ref() += n.grad.middleRows(row, r);
      row += r;
    }
  });
}

Var concat_cols(const Var& a, const Var& b) {
  if (a.rows() != b.rows()) throw std::invalid_argument("concat_cols: row mismatch");
  Mat value(a.rows(), a.cols() + b.cols());
  value.leftCols(a.cols()) = a.value();
  value.rightCols(b.cols()) = b.value();
  return make_op(std::move(value), {a, b}, [](Node& n) {
    const Eigen::Index ca = n.parents[0]->value.cols();
    const Eigen::Index cb = n.parents[1]->value.cols();
    if (n.parents[0]->requires_grad) n.parents[0]->grad_ref() += n.grad.leftCols(ca);
    if (n.parents[1]->requires_grad) n.parents[1]->grad_ref() += n.grad.rightCols(cb);
  });
}

Var mean_over_blocks(const Var& a, Eigen::Index num_blocks) {
  if (num_blocks <= 0 || a.rows() % num_blocks != 0)
    throw std::invalid_argument("mean_over_blocks: rows not divisible by block count");
  const Eigen::Index block = a.rows() / num_blocks;
  Mat value = Mat::Zero(block, a.cols());
  for (Eigen::Index t = 0; t < num_blocks; ++t) value += a.value().middleRows(t * block, block);
  value /= static_cast<double>(num_blocks);
  return make_op(std::move(value), {a}, [num_blocks, block](Node& n) {
    if (!n.parents[0]->requires_grad) return;
    Mat& g = n.parents[0]->grad_ref();
    const Mat scaled = n.grad / static_cast<double>(num_blocks);
    for (Eigen::Index t = 0; t < num_blocks; ++t) g.middleRows(t * block, block) += scaled;
  });
}

Var l2_normalize_rows(const Var& a, double eps) {
  Mat value = a.value();
  Eigen::VectorXd norms(a.rows());
  for (Eigen::Index r = 0; r < a.rows(); ++r) {
    norms(r) = std::max(value.row(r).norm(), eps);
    value.row(r) /= norms(r);
  }
  return make_op(std::move(value), {a}, [norms](Node& n) {
    if (!n.parents[0]->requires_grad) return;
    Mat& g = n.parents[0]->grad_ref();
    for (Eigen::Index r = 0; r < n.value.rows(); ++r) {
      const auto y = n.value.row(r);
      const auto gy = n.grad.row(r);
      g.row(r) += (gy - (gy.dot(y)) * y) / norms(r);
    }
  });
}

// --- reductions ---

Var sum(const Var& a) {
  return make_op(Mat::Constant(1, 1, a.value().sum()), {a}, [](Node& n) {
    if (n.parents[0]->requires_grad)
      n.parents[0]->grad_ref().array() += n.grad(0, 0);
  });
}

Var mean(const Var& a) {
  const double inv = 1.0 / static_cast<double>(a.value().size());
  return make_op(Mat::Constant(1, 1, a.value().sum() * inv), {a}, [inv](Node& n) {
    if (n.parents[0]->requires_grad)
      n.parents[0]->grad_ref().array() += n.grad(0, 0) * inv;
  });
}

Var rows_dot(const Var& a, const Var& b) {
  check_same_shape(a, b, "rows_dot");
  Mat value(a.rows(), 1);
  for (Eigen::Index r = 0; r < a.rows(); ++r) value(r, 0) = a.value().row(r).dot(b.value().row(r));
  return make_op(std::move(value), {a, b}, [](Node& n) {
    if (n.parents[0]->requires_grad) {
      Mat& g = n.parents[0]->grad_ref();
      for (Eigen::Index r = 0; r < g.rows(); ++r)
        g.row(r) += n.grad(r, 0) * n.parents[1]->value.row(r);
    }
    if (n.parents[1]->requires_grad) {
      Mat& g = n.parents[1]->grad_ref();
      for (Eigen::Index r = 0; r < g.rows(); ++r)
        g.row(r) += n.grad(r, 0) * n.parents[0]->value.row(r);
    }
  });
}

Var logsumexp_rows(const Var& a) {
  Mat value(a.rows(), 1);
  Mat softmax(a.rows(), a.cols());
  for (Eigen::Index r = 0; r < a.rows(); ++r) {
    const double m = a.value().row(r).maxCoeff();
    const Eigen::ArrayXd e = (a.value().row(r).array() - m).exp();
    const double s = e.sum();
    value(r, 0) = m + std::log(s);
    softmax.row(r) = (e / s).matrix();
  }
  return make_op(std::move(value), {a}, [softmax](Node& n) {
    if (!n.parents[0]->requires_grad) return;
    Mat& g = n.parents[0]->grad_ref();
    for (Eigen::Index r = 0; r < g.rows(); ++r) g.row(r) += n.grad(r, 0) * softmax.row(r);
  });
}

Var detach(const Var& a) { return Var(a.value(), false); }

Var constant(Mat value) { return Var(std::move(value), false); }

}  // namespace skelssl::ad
