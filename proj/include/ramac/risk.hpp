#pragma once

#include <Eigen/Core>
#include <string>
#include <utility>
#include <vector>

#include "ramac/rng.hpp"

namespace ramac {

// Fixed uniform quantile grid tau_i = (i - 1/2)/count, i = 1..count.
struct QuantileGrid {
  int count = 0;
  Eigen::VectorXd taus;
};

QuantileGrid make_grid(int n);

enum class RiskKind { neutral, cvar, wang, cpw };

RiskKind risk_kind_from_string(const std::string& s);
std::string to_string(RiskKind kind);

// Which distortion drives the actor's risk term, plus its parameters.
// Defaults: CVaR level 0.1; Wang shift -0.75; CPW curvature 0.71.
struct RiskSpec {
  RiskKind kind = RiskKind::cvar;
  double alpha = 0.1;     // cvar level in (0,1]
  double lambda = -0.75;  // wang shift
  double gamma = 0.71;    // cpw curvature, > 0
  int tail_samples = 8;   // K for the Monte Carlo tail estimator

  void validate() const;
};

// Asymmetric Huber loss for quantile regression:
//   |tau - 1{delta<0}| * (delta^2/(2*kappa)   if |delta| <= kappa,
//                         |delta| - kappa/2   otherwise).
double quantile_huber(double delta, double tau, double kappa);

// Head count m = floor(alpha * n); throws if alpha * n < 1.
int cvar_head_count(double alpha, int n);

// Mean of the first m grid values, m = floor(alpha * N). `values` must hold
// quantile values evaluated at the canonical ascending grid; sortedness is
// the caller's responsibility (debug-asserted only).
double cvar_grid(const Eigen::Ref<const Eigen::VectorXd>& values, double alpha);

// Exact CVaR of a finite pmf via the reweighting dual: fill mass capped at
// 1/alpha from the lowest outcomes. Atoms are (outcome, probability) pairs.
double cvar_dual_discrete(const std::vector<std::pair<double, double>>& pmf,
                          double alpha);

// Nonnegative weights summing to 1 over the grid. neutral: uniform; cvar:
// 1/m on the first m points; wang/cpw: increments of the distortion function
// across the cumulative grid edges i/N.
Eigen::VectorXd distortion_weights(const RiskSpec& spec, const QuantileGrid& grid);

// K i.i.d. draws from U(0, alpha).
Eigen::VectorXd sample_tail_taus(double alpha, int k, Rng& rng);

// Standard normal CDF and its inverse (used by the Wang distortion).
double normal_cdf(double x);
double normal_quantile(double p);

}  // namespace ramac
