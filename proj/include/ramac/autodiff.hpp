#pragma once

#include <Eigen/Core>
#include <functional>
#include <string>
#include <vector>

namespace ramac::ad {

using Matrix = Eigen::MatrixXd;

// A persistent trainable tensor. Tapes are per-step scratch; Params outlive
// them and collect gradients across Tape::backward calls until zero_grad().
struct Param {
  std::string name;
  Matrix value;
  Matrix grad;

  Param() = default;
  Param(std::string n, Matrix v)
      : name(std::move(n)), value(std::move(v)), grad(Matrix::Zero(value.rows(), value.cols())) {}

  void zero_grad() { grad.setZero(); }
};

class Tape;

// Lightweight handle to a tape node.
class Var {
 public:
  Var() = default;
  const Matrix& val() const;
  Eigen::Index rows() const { return val().rows(); }
  Eigen::Index cols() const { return val().cols(); }
  bool valid() const { return tape_ != nullptr; }

 private:
  friend class Tape;
  Var(Tape* t, int id) : tape_(t), id_(id) {}
  Tape* tape_ = nullptr;
  int id_ = -1;
};

// Reverse-mode tape over dense matrices. Nodes are created in topological
// order; backward() walks them in reverse, visiting only ancestors of the
// loss (nodes whose gradient buffer was touched).
class Tape {
 public:
  Tape() { nodes_.reserve(256); }
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var leaf(Param& p);
  Var constant(Matrix m);
  Var scalar(double s);

  Var matmul(Var a, Var b);
  Var add(Var a, Var b);
  Var sub(Var a, Var b);
  Var add_rowvec(Var a, Var bias);  // bias is 1 x cols, broadcast over rows
  Var hadamard(Var a, Var b);
  Var scale(Var a, double s);
  Var cmul(Var a, const Matrix& c);                  // elementwise constant factor
  Var scale_rows(Var a, const Eigen::VectorXd& s);   // row i scaled by s(i)
  Var silu(Var a);
  Var concat_cols(const std::vector<Var>& xs);
  Var repeat_rows_each(Var a, int n);  // each row repeated n consecutive times
  Var tile_rows(Var a, int n);         // whole block stacked n times
  Var tile_cols(Var a, int n);         // whole block repeated side by side
  Var flatten_rows(Var a);             // R x C -> (R*C) x 1, row-major order
  Var unflatten_rows(Var a, int rows, int cols);  // inverse of flatten_rows
  Var clamp(Var a, double lo, double hi);          // zero gradient outside
  Var min_elem(Var a, Var b);
  Var l2_project_rows(Var a, double radius);
  // Elementwise |tau - 1{delta<0}| * huber(delta; kappa); tau is a constant
  // matrix of the same shape (the indicator carries no gradient).
  Var quantile_huber(Var delta, const Matrix& tau, double kappa);
  Var sum(Var a);
  Var mean(Var a);

  // Seeds d(loss)/d(loss) = 1 and accumulates into every reachable Param's
  // grad. `loss` must be 1x1.
  void backward(Var loss);

  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Matrix val;
    Matrix grad;
    bool touched = false;
    std::function<void(Tape&)> back;
  };

  friend class Var;
  int push(Matrix val, std::function<void(Tape&)> back = nullptr);
  Matrix& grad_of(int id);
  const Matrix& val_of(int id) const { return nodes_[id].val; }
  void check_same_shape(const Var& a, const Var& b, const char* op) const;

  std::vector<Node> nodes_;
};

}  // namespace ramac::ad
