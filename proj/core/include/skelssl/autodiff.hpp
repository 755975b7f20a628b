#pragma once

#include <Eigen/Core>
#include <functional>
#include <memory>
#include <vector>

namespace skelssl::ad {

using Mat = Eigen::MatrixXd;

// Reverse-mode automatic differentiation over dense matrices. Each Var wraps
// a graph node holding a value, an accumulated gradient, and a backward
// closure. Graphs are built dynamically per training step and freed when the
// last Var referencing them goes out of scope.
struct Node {
  Mat value;
  Mat grad;  // allocated lazily, same shape as value
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backward;  // pushes this->grad into parents
  int visit_mark = 0;                   // scratch for topological sort

  Mat& grad_ref() {
    if (grad.size() == 0) grad = Mat::Zero(value.rows(), value.cols());
    return grad;
  }
};

class Var {
 public:
  Var() = default;
  explicit Var(Mat value, bool requires_grad = false);
  explicit Var(double scalar, bool requires_grad = false);

  bool defined() const { return node_ != nullptr; }
  const Mat& value() const { return node_->value; }
  Mat& mutable_value() { return node_->value; }
  const Mat& grad() const { return node_->grad_ref(); }
  bool requires_grad() const { return node_ && node_->requires_grad; }
  void zero_grad() { if (node_) node_->grad.setZero(); }

  double scalar() const;  // requires a 1x1 value

  Eigen::Index rows() const { return node_->value.rows(); }
  Eigen::Index cols() const { return node_->value.cols(); }

  std::shared_ptr<Node> node() const { return node_; }

 private:
  friend Var wrap(std::shared_ptr<Node> n);
  std::shared_ptr<Node> node_;
};

// Scoped no-grad mode: ops built while active create constant leaves.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

bool grad_enabled();

// Runs the reverse sweep from a scalar loss (1x1 value).
void backward(const Var& loss);

// --- elementwise / arithmetic ---
Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);  // Hadamard, same shape
Var scale(const Var& a, double s);
Var add_scalar(const Var& a, double s);
Var neg(const Var& a);

// --- linear algebra ---
Var matmul(const Var& a, const Var& b);
Var transpose(const Var& a);
// x [R x C] + bias [1 x C] broadcast over rows.
Var add_rowvec(const Var& x, const Var& bias);
// x [R x C] - col [R x 1] broadcast over columns.
Var sub_colvec(const Var& x, const Var& col);

// --- nonlinearities ---
Var sigmoid(const Var& a);
Var tanh_v(const Var& a);
Var relu(const Var& a);
Var exp_v(const Var& a);
Var log_v(const Var& a);

// --- structure ---
Var slice_rows(const Var& a, Eigen::Index start, Eigen::Index count);
Var slice_cols(const Var& a, Eigen::Index start, Eigen::Index count);
Var concat_rows(const std::vector<Var>& parts);
Var concat_cols(const Var& a, const Var& b);
// [T*B x H] laid out as T blocks of B rows -> [B x H] mean over blocks.
Var mean_over_blocks(const Var& a, Eigen::Index num_blocks);
Var l2_normalize_rows(const Var& a, double eps = 1e-12);

// --- reductions ---
Var sum(const Var& a);
Var mean(const Var& a);
Var rows_dot(const Var& a, const Var& b);    // [R x C], [R x C] -> [R x 1]
Var logsumexp_rows(const Var& a);            // [R x C] -> [R x 1], stable

// Cuts the graph: value copied, no gradient flows.
Var detach(const Var& a);
// Constant leaf from a matrix.
Var constant(Mat value);

}  // namespace skelssl::ad
