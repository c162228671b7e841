#pragma once

#include <string>
#include <vector>

#include "ramac/autodiff.hpp"
#include "ramac/rng.hpp"

namespace ramac {

struct Dense {
  ad::Param W;  // in x out
  ad::Param b;  // 1 x out
};

Dense make_dense(const std::string& name, int in, int out, Rng& rng);
ad::Var dense_forward(ad::Tape& tape, Dense& layer, ad::Var x);

// Plain MLP; SiLU between layers, optionally on the output too.
struct Mlp {
  std::vector<Dense> layers;
  bool activate_output = false;
};

Mlp make_mlp(const std::string& name, const std::vector<int>& dims, Rng& rng,
             bool activate_output = false);
ad::Var mlp_forward(ad::Tape& tape, Mlp& net, ad::Var x);

void collect_params(Dense& layer, std::vector<ad::Param*>& out);
void collect_params(Mlp& net, std::vector<ad::Param*>& out);

// Row k holds cos(pi * j * u_k) for j = 0..dim-1; the standard cosine basis
// for quantile-level and time embeddings.
ad::Matrix cosine_features(const Eigen::VectorXd& u, int dim);

}  // namespace ramac
