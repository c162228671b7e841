#include "ramac/nets.hpp"

#include <cmath>

#include "ramac/errors.hpp"

namespace ramac {

Dense make_dense(const std::string& name, int in, int out, Rng& rng) {
  if (in < 1 || out < 1) throw ParamError("make_dense: dims must be positive");
  ad::Matrix w(in, out);
  const double std = std::sqrt(2.0 / in);
  for (int i = 0; i < in; ++i)
    for (int j = 0; j < out; ++j) w(i, j) = std * rng.normal();
  Dense d;
  d.W = ad::Param(name + "/W", std::move(w));
  d.b = ad::Param(name + "/b", ad::Matrix::Zero(1, out));
  return d;
}

ad::Var dense_forward(ad::Tape& tape, Dense& layer, ad::Var x) {
  return tape.add_rowvec(tape.matmul(x, tape.leaf(layer.W)), tape.leaf(layer.b));
}

Mlp make_mlp(const std::string& name, const std::vector<int>& dims, Rng& rng,
             bool activate_output) {
  if (dims.size() < 2) throw ParamError("make_mlp: need at least in/out dims");
  Mlp net;
  net.activate_output = activate_output;
  for (std::size_t i = 0; i + 1 < dims.size(); ++i)
    net.layers.push_back(
        make_dense(name + "/l" + std::to_string(i), dims[i], dims[i + 1], rng));
  return net;
}

ad::Var mlp_forward(ad::Tape& tape, Mlp& net, ad::Var x) {
  for (std::size_t i = 0; i < net.layers.size(); ++i) {
    x = dense_forward(tape, net.layers[i], x);
    if (i + 1 < net.layers.size() || net.activate_output) x = tape.silu(x);
  }
  return x;
}

void collect_params(Dense& layer, std::vector<ad::Param*>& out) {
  out.push_back(&layer.W);
  out.push_back(&layer.b);
}

void collect_params(Mlp& net, std::vector<ad::Param*>& out) {
  for (Dense& l : net.layers) collect_params(l, out);
}

ad::Matrix cosine_features(const Eigen::VectorXd& u, int dim) {
  if (dim < 1) throw ParamError("cosine_features: dim must be positive");
  ad::Matrix f(u.size(), dim);
  for (Eigen::Index k = 0; k < u.size(); ++k)
    for (int j = 0; j < dim; ++j) f(k, j) = std::cos(M_PI * j * u(k));
  return f;
}

}  // namespace ramac
