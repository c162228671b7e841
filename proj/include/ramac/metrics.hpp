#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "ramac/dataset.hpp"

namespace ramac {

// Per-checkpoint evaluation summary (JSON fields: mean, cvar, alpha,
// episodes, violations, eps_act?, seeds).
struct EvalReport {
  double mean = 0.0;
  double cvar = 0.0;
  double alpha = 0.1;
  int episodes = 0;
  std::vector<int> violations;  // per episode
  std::optional<std::pair<double, double>> eps_act;  // (rate, standard error)
  std::vector<std::uint64_t> seeds;

  nlohmann::json to_json() const;
};

// Mean of the ceil(alpha * n) smallest returns.
double episodic_cvar(const std::vector<double>& returns, double alpha);

struct OODConfig {
  double kappa = 3.0;  // threshold multiplier on the median 1-NN spacing
};

// Leave-one-out 1-NN spacings over the dataset actions give medNN; an eval
// action is OOD when its nearest-dataset distance exceeds kappa * medNN.
// Returns (rate, binomial standard error).
std::pair<double, double> ood_rate_1nn(const Eigen::MatrixXd& dataset_actions,
                                       const Eigen::MatrixXd& eval_actions,
                                       const OODConfig& config = {});

struct KlFenceResult {
  double delta = 0.0;  // pi-mass outside beta's support
  double bound = 0.0;  // 1 - exp(-KL(beta || pi))
  bool holds = false;
};

// Checks delta <= 1 - exp(-KL) on discrete pmfs over a shared atom set.
KlFenceResult kl_fence_check(const Eigen::VectorXd& beta, const Eigen::VectorXd& pi);

// Steps whose monitored next-state signal breaches the hazard threshold.
int violation_count(const std::vector<Transition>& episode, const HazardSpec& spec);

struct FrontierPoint {
  double violations = 0.0;
  double mean_return = 0.0;
  std::int64_t step = 0;
};

// Non-dominated subset under (minimize violations, maximize return), stable
// order by step.
std::vector<FrontierPoint> pareto_points(const std::vector<FrontierPoint>& snapshots);

// Normalized 2-D histogram over [-1,1]^2 as CSV rows
// x_lo,x_hi,y_lo,y_hi,mass (all cells emitted).
void density_export(const Eigen::MatrixXd& actions, int resolution, std::ostream& os);

}  // namespace ramac
