#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "ramac/actors.hpp"
#include "ramac/critic.hpp"
#include "ramac/dataset.hpp"
#include "ramac/metrics.hpp"
#include "ramac/rng.hpp"

namespace ramac {

// Full run configuration; JSON fields mirror these names one-to-one and the
// CLI flags map onto the same schema.
struct TrainConfig {
  std::string actor = "radac";  // radac | rafmac | anchored | diffusion-ql | flow-ql
  int batch = 256;
  double gamma = 0.99;
  double tau_target = 0.005;  // EMA keeps rho = 1 - tau_target of the target
  double critic_lr = 3e-4;
  double actor_lr = 3e-4;
  double eta = 0.05;
  double lambda_bc = 1.0;
  RiskSpec risk;  // alpha 0.1, distortion per actor kind
  bool mc_risk = false;
  int n_online = 32;
  int n_target = 32;
  int hidden_critic = 256;
  int hidden_actor = 256;
  int embed_dim = 128;
  int time_dim = 16;
  int diffusion_steps = 5;
  int flow_steps = 10;
  double phi = 0.5;
  std::string anchored_prior = "diffusion";
  double grad_clip = 1.0;  // global-norm clip per parameter group; 0 disables
  std::optional<std::pair<double, double>> target_clip;
  double huber_kappa = 1.0;
  int epochs = 200;
  int steps_per_epoch = 100;
  int eval_interval = 20;  // epochs between evaluations
  int eval_episodes = 50;
  std::string eval_task = "bandit";  // bandit | corridor
  std::optional<HazardSpec> hazard;  // corridor evaluation hazard
  std::uint64_t seed = 1;
  int workers = 1;

  void validate() const;
  // Fills distortion kind and eta defaults implied by the actor kind, unless
  // the caller already overrode them.
  void apply_actor_defaults(bool eta_overridden, bool distortion_overridden);
  // Underlying generative family for `actor`.
  std::string actor_family() const;
};

nlohmann::json config_to_json(const TrainConfig& cfg);
TrainConfig config_from_json(const nlohmann::json& j);

// Scales the group's gradients in place so their joint norm is at most
// max_norm (no-op when max_norm <= 0); returns the pre-clip norm.
double clip_global_norm(const std::vector<ad::Param*>& params, double max_norm);

// Bias-corrected adaptive-moment optimizer with optional global-norm
// gradient clipping applied to the whole parameter group.
class Adam {
 public:
  Adam() = default;
  Adam(double lr, double clip) : lr_(lr), clip_(clip) {}

  void step(const std::vector<ad::Param*>& params);

  std::int64_t t() const { return t_; }
  void save_slots(Archive& ar, const std::string& prefix) const;
  void load_slots(const Archive& ar, const std::string& prefix,
                  const std::vector<ad::Param*>& params);

 private:
  double lr_ = 3e-4, beta1_ = 0.9, beta2_ = 0.999, eps_ = 1e-8, clip_ = 1.0;
  std::int64_t t_ = 0;
  std::vector<ad::Matrix> m_, v_;
};

struct TrainState {
  TrainConfig cfg;
  std::int64_t step = 0;
  Critic critic;
  std::unique_ptr<Actor> actor;
  Adam opt_critic, opt_actor;
  // Independent named streams; all serialized with checkpoints.
  Rng batch_rng, critic_rng, actor_rng;
};

TrainState make_train_state(const TrainConfig& cfg, const DatasetMeta& meta);

struct StepLog {
  std::int64_t step = 0;
  double critic_loss = 0.0;
  double bc_loss = 0.0;
  std::optional<double> risk_term;
};

// One critic step, one actor step, one EMA update, in that order.
StepLog train_step(TrainState& state, const OfflineDataset& dataset);

// Rollout evaluation. The CVaR pools all episodes across seeds by default;
// `per_seed_cvar` averages per-seed CVaRs instead. When `dataset_actions` is
// provided the report carries the 1-NN OOD action rate of all eval actions.
// Violations come from the hazard spec on corridor episodes.
EvalReport evaluate_policy(Actor& actor, const std::string& task,
                           const std::optional<HazardSpec>& hazard,
                           int episodes_per_seed,
                           const std::vector<std::uint64_t>& seeds, double alpha,
                           int workers = 1,
                           const Eigen::MatrixXd* dataset_actions = nullptr,
                           bool per_seed_cvar = false);

struct TrainSummary {
  std::int64_t last_step = 0;
  std::int64_t best_step = 0;  // by evaluated CVaR
  std::vector<std::pair<std::int64_t, EvalReport>> reports;
  std::string last_checkpoint;
  std::string best_checkpoint;
};

using MetricSink = std::function<void(const nlohmann::json& record)>;

// Runs the full loop: per-step metric records, periodic evaluation +
// checkpointing into out_dir (empty out_dir skips files).
TrainSummary train_loop(const OfflineDataset& dataset, const TrainConfig& cfg,
                        const std::string& out_dir, const MetricSink& sink = {});

void save_checkpoint(TrainState& state, const std::string& path);
TrainState load_checkpoint(const std::string& path);
// Actor-only load for evaluation/export tools.
std::unique_ptr<Actor> load_actor(const std::string& path);
TrainConfig checkpoint_config(const std::string& path);

struct GradCheckReport {
  double max_rel_err = 0.0;
  bool pass = false;
};

// Central finite differences against the tape gradient over every scalar in
// `params` (at most 512). `build` must be a deterministic function of the
// current parameter values.
GradCheckReport grad_check(const std::function<ad::Var(ad::Tape&)>& build,
                           const std::vector<ad::Param*>& params, double tolerance);

}  // namespace ramac
