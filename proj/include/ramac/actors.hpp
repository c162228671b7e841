#pragma once

#include <memory>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "ramac/archive.hpp"
#include "ramac/autodiff.hpp"
#include "ramac/critic.hpp"
#include "ramac/nets.hpp"
#include "ramac/risk.hpp"
#include "ramac/rng.hpp"

namespace ramac {

struct ActionBox {
  double lo = -1.0;
  double hi = 1.0;
};

// Variance-preserving noise schedule, re-spaced from the standard 1000-step
// linear beta ramp so small step counts keep the terminal signal-to-noise.
struct DiffusionSchedule {
  int steps = 5;
  Eigen::VectorXd betas;            // beta_t, t = 1..T (0-based storage)
  Eigen::VectorXd alphas;           // 1 - beta_t
  Eigen::VectorXd alpha_bars;       // prod_{u<=t} alpha_u
  Eigen::VectorXd alpha_bars_prev;  // alpha_bar_{t-1}, with alpha_bar_0 = 1
  Eigen::VectorXd posterior_var;    // beta_t (1-abar_{t-1}) / (1-abar_t)
};

DiffusionSchedule make_vp_schedule(int steps);

struct FlowPathConfig {
  int steps = 10;
  double dt() const { return 1.0 / steps; }
};

// Reparameterized generative policy a = psi_theta(s, z): sampling is
// differentiable w.r.t. the parameters, and each family exposes its native
// BC loss. Samplers are pure functions of (params, states, rng state).
class Actor {
 public:
  virtual ~Actor() = default;

  virtual ad::Var sample(ad::Tape& tape, const Eigen::MatrixXd& states, Rng& rng) = 0;
  virtual ad::Var bc_loss(ad::Tape& tape, const Eigen::MatrixXd& states,
                          const Eigen::MatrixXd& actions, Rng& rng) = 0;
  virtual std::vector<ad::Param*> params() = 0;
  virtual std::string kind() const = 0;
  virtual nlohmann::json path_config() const = 0;  // T or K etc. for sidecars

  Eigen::MatrixXd sample_plain(const Eigen::MatrixXd& states, Rng& rng);

  void to_archive(Archive& ar);
  void from_archive(const Archive& ar);

  ActionBox box;
  int state_dim = 0;
  int action_dim = 0;
};

class DiffusionActor : public Actor {
 public:
  DiffusionActor(int state_dim, int action_dim, int hidden, int time_dim,
                 const DiffusionSchedule& schedule, ActionBox box, Rng& rng,
                 const std::string& name = "actor");

  ad::Var sample(ad::Tape& tape, const Eigen::MatrixXd& states, Rng& rng) override;
  ad::Var bc_loss(ad::Tape& tape, const Eigen::MatrixXd& states,
                  const Eigen::MatrixXd& actions, Rng& rng) override;
  std::vector<ad::Param*> params() override;
  std::string kind() const override { return "diffusion"; }
  nlohmann::json path_config() const override;

  const DiffusionSchedule& schedule() const { return sched_; }

 private:
  ad::Var eps_forward(ad::Tape& tape, ad::Var states, ad::Var noisy,
                      const Eigen::VectorXd& t01);
  Mlp eps_net_;
  DiffusionSchedule sched_;
  int time_dim_;
};

class FlowActor : public Actor {
 public:
  FlowActor(int state_dim, int action_dim, int hidden, int time_dim,
            FlowPathConfig path, ActionBox box, Rng& rng,
            const std::string& name = "actor");

  ad::Var sample(ad::Tape& tape, const Eigen::MatrixXd& states, Rng& rng) override;
  // Euler integration with a caller-chosen step count (K from path config by
  // default); used to compare coarse and fine transports.
  ad::Var sample_with_steps(ad::Tape& tape, const Eigen::MatrixXd& states, Rng& rng,
                            int steps);
  ad::Var bc_loss(ad::Tape& tape, const Eigen::MatrixXd& states,
                  const Eigen::MatrixXd& actions, Rng& rng) override;
  std::vector<ad::Param*> params() override;
  std::string kind() const override { return "flow"; }
  nlohmann::json path_config() const override;

  const FlowPathConfig& path() const { return path_; }

 private:
  ad::Var vel_forward(ad::Tape& tape, ad::Var states, ad::Var position,
                      const Eigen::VectorXd& t01);
  Mlp vel_net_;
  FlowPathConfig path_;
  int time_dim_;
};

// a = b + zeta(s, b) with b from a pretrained generative behavior prior and
// ||zeta|| <= phi enforced by projection. The risk gradient reaches only the
// residual net; the prior keeps training on its own BC loss.
class AnchoredActor : public Actor {
 public:
  AnchoredActor(std::unique_ptr<Actor> prior, int hidden, double phi, Rng& rng);

  ad::Var sample(ad::Tape& tape, const Eigen::MatrixXd& states, Rng& rng) override;
  ad::Var bc_loss(ad::Tape& tape, const Eigen::MatrixXd& states,
                  const Eigen::MatrixXd& actions, Rng& rng) override;
  std::vector<ad::Param*> params() override;
  std::string kind() const override { return "anchored"; }
  nlohmann::json path_config() const override;

  Actor& prior() { return *prior_; }
  double phi() const { return phi_; }
  // Anchor and perturbed action side by side (for bound checks).
  std::pair<Eigen::MatrixXd, Eigen::MatrixXd> sample_with_anchor(
      const Eigen::MatrixXd& states, Rng& rng);

 private:
  std::unique_ptr<Actor> prior_;
  Mlp zeta_;
  double phi_;
};

struct ActorConfig {
  std::string kind = "diffusion";  // diffusion | flow | anchored
  int state_dim = 2;
  int action_dim = 2;
  int hidden = 256;
  int time_dim = 16;
  int diffusion_steps = 5;
  int flow_steps = 10;
  double phi = 0.5;
  std::string anchored_prior = "diffusion";
  ActionBox box;
};

std::unique_ptr<Actor> make_actor(const ActorConfig& cfg, Rng& rng);

// Detached action for the critic's bootstrap term (Algorithm line "a' =
// psi_theta(s', z')"): sampled outside any tape, inside the action box.
Eigen::MatrixXd bootstrap_action(Actor& actor, const Eigen::MatrixXd& next_states,
                                 Rng& rng);

// Negative distorted expectation of the min-head critic quantiles at
// actor-sampled actions; gradients flow through the whole generative path.
// The deterministic grid route is the default; `monte_carlo` switches to
// K tau-draws from U(0, alpha).
ad::Var risk_term(ad::Tape& tape, Actor& actor, Critic& critic,
                  const Eigen::MatrixXd& states, const RiskSpec& spec,
                  Rng& rng, bool monte_carlo = false);

struct ActorLossParts {
  ad::Var total;
  ad::Var bc;
  ad::Var risk;  // invalid when eta == 0
};

// lambda_bc * L_BC + eta * L_Risk; eta = 0 skips the risk path entirely.
ActorLossParts actor_loss(ad::Tape& tape, Actor& actor, Critic& critic,
                          const Eigen::MatrixXd& states, const Eigen::MatrixXd& actions,
                          double eta, double lambda_bc, const RiskSpec& spec,
                          Rng& rng, bool monte_carlo = false);

}  // namespace ramac
