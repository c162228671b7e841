#include "ramac/autodiff.hpp"

#include <cmath>

#include "ramac/errors.hpp"

namespace ramac::ad {

const Matrix& Var::val() const {
  if (!tape_) throw ParamError("Var: empty handle");
  return tape_->val_of(id_);
}

int Tape::push(Matrix val, std::function<void(Tape&)> back) {
  Node n;
  n.val = std::move(val);
  n.back = std::move(back);
  nodes_.push_back(std::move(n));
  return static_cast<int>(nodes_.size()) - 1;
}

Matrix& Tape::grad_of(int id) {
  Node& n = nodes_[id];
  if (!n.touched) {
    n.grad = Matrix::Zero(n.val.rows(), n.val.cols());
    n.touched = true;
  }
  return n.grad;
}

void Tape::check_same_shape(const Var& a, const Var& b, const char* op) const {
  if (a.rows() != b.rows() || a.cols() != b.cols())
    throw ShapeError(std::string(op) + ": shape mismatch");
}

Var Tape::leaf(Param& p) {
  Param* pp = &p;
  const int id = push(p.value, nullptr);
  nodes_[id].back = [id, pp](Tape& t) { pp->grad += t.nodes_[id].grad; };
  return Var(this, id);
}

Var Tape::constant(Matrix m) { return Var(this, push(std::move(m))); }

Var Tape::scalar(double s) {
  Matrix m(1, 1);
  m(0, 0) = s;
  return constant(std::move(m));
}

Var Tape::matmul(Var a, Var b) {
  if (a.cols() != b.rows()) throw ShapeError("matmul: inner dimensions differ");
  const int ia = a.id_, ib = b.id_;
  const int id = push(a.val() * b.val());
  nodes_[id].back = [id, ia, ib](Tape& t) {
    const Matrix& g = t.nodes_[id].grad;
    t.grad_of(ia).noalias() += g * t.nodes_[ib].val.transpose();
    t.grad_of(ib).noalias() += t.nodes_[ia].val.transpose() * g;
  };
  return Var(this, id);
}

Var Tape::add(Var a, Var b) {
  check_same_shape(a, b, "add");
  const int ia = a.id_, ib = b.id_;
  const int id = push(a.val() + b.val());
  nodes_[id].back = [id, ia, ib](Tape& t) {
    t.grad_of(ia) += t.nodes_[id].grad;
    t.grad_of(ib) += t.nodes_[id].grad;
  };
  return Var(this, id);
}

Var Tape::sub(Var a, Var b) {
  check_same_shape(a, b, "sub");
  const int ia = a.id_, ib = b.id_;
  const int id = push(a.val() - b.val());
  nodes_[id].back = [id, ia, ib](Tape& t) {
    t.grad_of(ia) += t.nodes_[id].grad;
    t.grad_of(ib) -= t.nodes_[id].grad;
  };
  return Var(this, id);
}

Var Tape::add_rowvec(Var a, Var bias) {
  if (bias.rows() != 1 || bias.cols() != a.cols())
    throw ShapeError("add_rowvec: bias must be 1 x cols(a)");
  const int ia = a.id_, ib = bias.id_;
  Matrix out = a.val();
  out.rowwise() += bias.val().row(0);
  const int id = push(std::move(out));
  nodes_[id].back = [id, ia, ib](Tape& t) {
    const Matrix& g = t.nodes_[id].grad;
    t.grad_of(ia) += g;
    t.grad_of(ib) += g.colwise().sum();
  };
  return Var(this, id);
}

Var Tape::hadamard(Var a, Var b) {
  check_same_shape(a, b, "hadamard");
  const int ia = a.id_, ib = b.id_;
  const int id = push(a.val().cwiseProduct(b.val()));
  nodes_[id].back = [id, ia, ib](Tape& t) {
    const Matrix& g = t.nodes_[id].grad;
    t.grad_of(ia) += g.cwiseProduct(t.nodes_[ib].val);
    t.grad_of(ib) += g.cwiseProduct(t.nodes_[ia].val);
  };
  return Var(this, id);
}

Var Tape::scale(Var a, double s) {
  const int ia = a.id_;
  const int id = push(a.val() * s);
  nodes_[id].back = [id, ia, s](Tape& t) { t.grad_of(ia) += t.nodes_[id].grad * s; };
  return Var(this, id);
}

Var Tape::cmul(Var a, const Matrix& c) {
  if (c.rows() != a.rows() || c.cols() != a.cols())
    throw ShapeError("cmul: constant shape mismatch");
  const int ia = a.id_;
  const int id = push(a.val().cwiseProduct(c));
  Matrix cc = c;
  nodes_[id].back = [id, ia, cc](Tape& t) {
    t.grad_of(ia) += t.nodes_[id].grad.cwiseProduct(cc);
  };
  return Var(this, id);
}

Var Tape::scale_rows(Var a, const Eigen::VectorXd& s) {
  if (s.size() != a.rows()) throw ShapeError("scale_rows: size mismatch");
  const int ia = a.id_;
  const int id = push(s.asDiagonal() * a.val());
  Eigen::VectorXd sv = s;
  nodes_[id].back = [id, ia, sv](Tape& t) {
    t.grad_of(ia) += sv.asDiagonal() * t.nodes_[id].grad;
  };
  return Var(this, id);
}

Var Tape::silu(Var a) {
  const int ia = a.id_;
  const Matrix& x = a.val();
  Matrix sig = (1.0 + (-x.array()).exp()).inverse().matrix();
  const int id = push(x.cwiseProduct(sig));
  nodes_[id].back = [id, ia, sig](Tape& t) {
    const Matrix& x = t.nodes_[ia].val;
    // d/dx x*sig(x) = sig(x) * (1 + x * (1 - sig(x)))
    Matrix d = (sig.array() * (1.0 + x.array() * (1.0 - sig.array()))).matrix();
    t.grad_of(ia) += t.nodes_[id].grad.cwiseProduct(d);
  };
  return Var(this, id);
}

Var Tape::concat_cols(const std::vector<Var>& xs) {
  if (xs.empty()) throw ParamError("concat_cols: empty list");
  const Eigen::Index rows = xs[0].rows();
  Eigen::Index cols = 0;
  for (const Var& x : xs) {
    if (x.rows() != rows) throw ShapeError("concat_cols: row mismatch");
    cols += x.cols();
  }
  Matrix out(rows, cols);
  std::vector<int> ids;
  std::vector<Eigen::Index> offs, widths;
  Eigen::Index off = 0;
  for (const Var& x : xs) {
    out.middleCols(off, x.cols()) = x.val();
    ids.push_back(x.id_);
    offs.push_back(off);
    widths.push_back(x.cols());
    off += x.cols();
  }
  const int id = push(std::move(out));
  nodes_[id].back = [id, ids, offs, widths](Tape& t) {
    const Matrix& g = t.nodes_[id].grad;
    for (std::size_t k = 0; k < ids.size(); ++k)
      t.grad_of(ids[k]) += g.middleCols(offs[k], widths[k]);
  };
  return Var(this, id);
}

Var Tape::repeat_rows_each(Var a, int n) {
  if (n < 1) throw ParamError("repeat_rows_each: n >= 1");
  const int ia = a.id_;
  const Matrix& x = a.val();
  Matrix out(x.rows() * n, x.cols());
  for (Eigen::Index i = 0; i < x.rows(); ++i)
    out.middleRows(i * n, n) = x.row(i).replicate(n, 1);
  const int id = push(std::move(out));
  nodes_[id].back = [id, ia, n](Tape& t) {
    const Matrix& g = t.nodes_[id].grad;
    Matrix& ga = t.grad_of(ia);
    for (Eigen::Index i = 0; i < ga.rows(); ++i)
      ga.row(i) += g.middleRows(i * n, n).colwise().sum();
  };
  return Var(this, id);
}

Var Tape::tile_rows(Var a, int n) {
  if (n < 1) throw ParamError("tile_rows: n >= 1");
  const int ia = a.id_;
  const Matrix& x = a.val();
  const int id = push(x.replicate(n, 1));
  const Eigen::Index r = x.rows();
  nodes_[id].back = [id, ia, n, r](Tape& t) {
    const Matrix& g = t.nodes_[id].grad;
    Matrix& ga = t.grad_of(ia);
    for (int k = 0; k < n; ++k) ga += g.middleRows(k * r, r);
  };
  return Var(this, id);
}

Var Tape::tile_cols(Var a, int n) {
  if (n < 1) throw ParamError("tile_cols: n >= 1");
  const int ia = a.id_;
  const Matrix& x = a.val();
  const int id = push(x.replicate(1, n));
  const Eigen::Index c = x.cols();
  nodes_[id].back = [id, ia, n, c](Tape& t) {
    const Matrix& g = t.nodes_[id].grad;
    Matrix& ga = t.grad_of(ia);
    for (int k = 0; k < n; ++k) ga += g.middleCols(k * c, c);
  };
  return Var(this, id);
}

Var Tape::flatten_rows(Var a) {
  const int ia = a.id_;
  const Matrix& x = a.val();
  const Eigen::Index r = x.rows(), c = x.cols();
  Matrix out(r * c, 1);
  for (Eigen::Index i = 0; i < r; ++i)
    for (Eigen::Index j = 0; j < c; ++j) out(i * c + j, 0) = x(i, j);
  const int id = push(std::move(out));
  nodes_[id].back = [id, ia, r, c](Tape& t) {
    const Matrix& g = t.nodes_[id].grad;
    Matrix& ga = t.grad_of(ia);
    for (Eigen::Index i = 0; i < r; ++i)
      for (Eigen::Index j = 0; j < c; ++j) ga(i, j) += g(i * c + j, 0);
  };
  return Var(this, id);
}

Var Tape::unflatten_rows(Var a, int rows, int cols) {
  if (a.cols() != 1 || a.rows() != static_cast<Eigen::Index>(rows) * cols)
    throw ShapeError("unflatten_rows: needs (rows*cols) x 1 input");
  const int ia = a.id_;
  const Matrix& x = a.val();
  Matrix out(rows, cols);
  for (int i = 0; i < rows; ++i)
    for (int j = 0; j < cols; ++j) out(i, j) = x(i * cols + j, 0);
  const int id = push(std::move(out));
  nodes_[id].back = [id, ia, rows, cols](Tape& t) {
    const Matrix& g = t.nodes_[id].grad;
    Matrix& ga = t.grad_of(ia);
    for (int i = 0; i < rows; ++i)
      for (int j = 0; j < cols; ++j) ga(i * cols + j, 0) += g(i, j);
  };
  return Var(this, id);
}

Var Tape::clamp(Var a, double lo, double hi) {
  if (!(lo < hi)) throw ParamError("clamp: lo < hi required");
  const int ia = a.id_;
  const Matrix& x = a.val();
  const int id = push(x.cwiseMax(lo).cwiseMin(hi));
  nodes_[id].back = [id, ia, lo, hi](Tape& t) {
    const Matrix& x = t.nodes_[ia].val;
    Matrix mask = ((x.array() >= lo) && (x.array() <= hi)).cast<double>().matrix();
    t.grad_of(ia) += t.nodes_[id].grad.cwiseProduct(mask);
  };
  return Var(this, id);
}

Var Tape::min_elem(Var a, Var b) {
  check_same_shape(a, b, "min_elem");
  const int ia = a.id_, ib = b.id_;
  const int id = push(a.val().cwiseMin(b.val()));
  nodes_[id].back = [id, ia, ib](Tape& t) {
    const Matrix& g = t.nodes_[id].grad;
    Matrix take_a = (t.nodes_[ia].val.array() <= t.nodes_[ib].val.array()).cast<double>().matrix();
    t.grad_of(ia) += g.cwiseProduct(take_a);
    t.grad_of(ib) += g.cwiseProduct((1.0 - take_a.array()).matrix());
  };
  return Var(this, id);
}

Var Tape::l2_project_rows(Var a, double radius) {
  if (!(radius > 0.0)) throw ParamError("l2_project_rows: radius > 0");
  const int ia = a.id_;
  const Matrix& x = a.val();
  Matrix out = x;
  Eigen::VectorXd norms = x.rowwise().norm();
  for (Eigen::Index i = 0; i < x.rows(); ++i)
    if (norms(i) > radius) out.row(i) *= radius / norms(i);
  const int id = push(std::move(out));
  nodes_[id].back = [id, ia, radius, norms](Tape& t) {
    const Matrix& g = t.nodes_[id].grad;
    const Matrix& x = t.nodes_[ia].val;
    Matrix& ga = t.grad_of(ia);
    for (Eigen::Index i = 0; i < x.rows(); ++i) {
      const double r = norms(i);
      if (r <= radius) {
        ga.row(i) += g.row(i);
      } else {
        // Jacobian of x -> radius * x / |x| is (radius/r)(I - xhat xhat^T).
        Eigen::RowVectorXd xhat = x.row(i) / r;
        const double along = g.row(i).dot(xhat);
        ga.row(i) += (radius / r) * (g.row(i) - along * xhat);
      }
    }
  };
  return Var(this, id);
}

Var Tape::quantile_huber(Var delta, const Matrix& tau, double kappa) {
  if (!(kappa > 0.0)) throw ParamError("quantile_huber: kappa > 0");
  if (tau.rows() != delta.rows() || tau.cols() != delta.cols())
    throw ShapeError("quantile_huber: tau shape mismatch");
  const int ia = delta.id_;
  const Matrix& d = delta.val();
  Matrix w = (tau.array() - (d.array() < 0.0).cast<double>()).abs().matrix();
  Matrix h = (d.array().abs() <= kappa)
                 .select(d.array().square() / (2.0 * kappa), d.array().abs() - kappa / 2.0)
                 .matrix();
  const int id = push(w.cwiseProduct(h));
  nodes_[id].back = [id, ia, w, kappa](Tape& t) {
    const Matrix& d = t.nodes_[ia].val;
    Matrix dh = (d.array().abs() <= kappa)
                    .select(d.array() / kappa, d.array().sign())
                    .matrix();
    t.grad_of(ia) += t.nodes_[id].grad.cwiseProduct(w).cwiseProduct(dh);
  };
  return Var(this, id);
}

Var Tape::sum(Var a) {
  const int ia = a.id_;
  Matrix out(1, 1);
  out(0, 0) = a.val().sum();
  const int id = push(std::move(out));
  nodes_[id].back = [id, ia](Tape& t) {
    t.grad_of(ia).array() += t.nodes_[id].grad(0, 0);
  };
  return Var(this, id);
}

Var Tape::mean(Var a) {
  const int ia = a.id_;
  const double inv = 1.0 / static_cast<double>(a.rows() * a.cols());
  Matrix out(1, 1);
  out(0, 0) = a.val().sum() * inv;
  const int id = push(std::move(out));
  nodes_[id].back = [id, ia, inv](Tape& t) {
    t.grad_of(ia).array() += t.nodes_[id].grad(0, 0) * inv;
  };
  return Var(this, id);
}

void Tape::backward(Var loss) {
  if (loss.tape_ != this) throw ParamError("backward: loss from another tape");
  if (loss.rows() != 1 || loss.cols() != 1) throw ShapeError("backward: loss must be 1x1");
  grad_of(loss.id_)(0, 0) = 1.0;
  for (int i = loss.id_; i >= 0; --i) {
    Node& n = nodes_[i];
    if (n.touched && n.back) n.back(*this);
  }
}

}  // namespace ramac::ad
