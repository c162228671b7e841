#pragma once

#include <optional>
#include <utility>
#include <vector>

#include "ramac/archive.hpp"
#include "ramac/autodiff.hpp"
#include "ramac/nets.hpp"
#include "ramac/risk.hpp"
#include "ramac/rng.hpp"

namespace ramac {

struct CriticConfig {
  int state_dim = 2;
  int action_dim = 2;
  int hidden = 256;
  int embed_dim = 128;  // cosine tau-embedding width
  int n_online = 32;
  int n_target = 32;
  double kappa = 1.0;
  double gamma = 0.99;
  std::optional<std::pair<double, double>> target_clip;
};

// One implicit-quantile head: a state-action trunk, a learned projection of
// the cosine tau features, multiplicative combination, then an output MLP.
struct QuantileHead {
  Mlp trunk;   // (ds+da) -> h -> h, activated output
  Dense embed; // embed_dim -> h
  Mlp post;    // h -> h -> 1
};

// Double IQN critic with matching EMA target copies.
struct Critic {
  CriticConfig cfg;
  QuantileGrid grid_online;
  QuantileGrid grid_target;
  QuantileHead online[2];
  QuantileHead target[2];

  std::vector<ad::Param*> online_params();
  std::vector<ad::Param*> target_params();
};

Critic make_critic(const CriticConfig& cfg, Rng& rng);

// Quantile values for every (row of sa) x tau, as a (batch x n_taus) Var.
ad::Var head_forward(ad::Tape& tape, QuantileHead& head, ad::Var sa,
                     const Eigen::VectorXd& taus, int embed_dim);

// Elementwise min over the two online heads (the actor's pessimistic view).
ad::Var critic_min_online(ad::Tape& tape, Critic& critic, ad::Var sa,
                          const Eigen::VectorXd& taus);

// No-grad forward for one head on constant inputs; `which` 0/1 selects the
// head, `use_target` picks the EMA copy.
Eigen::MatrixXd critic_values(Critic& critic, int which, bool use_target,
                              const Eigen::MatrixXd& states,
                              const Eigen::MatrixXd& actions,
                              const Eigen::VectorXd& taus);

// Averaged quantile-Huber Bellman loss over both heads and all N x N' pairs.
// `next_actions` must already be detached (sampled outside any tape); the
// bootstrap uses the elementwise min of the two target heads, zeroed on
// terminals, and optionally clamped to cfg.target_clip.
ad::Var critic_loss(ad::Tape& tape, Critic& critic,
                    const Eigen::MatrixXd& states, const Eigen::MatrixXd& actions,
                    const Eigen::VectorXd& rewards,
                    const Eigen::MatrixXd& next_states,
                    const std::vector<std::uint8_t>& terminals,
                    const Eigen::MatrixXd& next_actions);

// target <- rho * target + (1 - rho) * online, elementwise.
void ema_update(std::vector<ad::Param*> target, std::vector<ad::Param*> online,
                double rho);

void critic_to_archive(Critic& critic, Archive& ar);
void critic_from_archive(Critic& critic, const Archive& ar);

}  // namespace ramac
