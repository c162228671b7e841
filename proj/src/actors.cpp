#include "ramac/actors.hpp"

#include <cmath>

#include "ramac/errors.hpp"

namespace ramac {

namespace {

Eigen::MatrixXd gaussian_matrix(Eigen::Index rows, Eigen::Index cols, Rng& rng) {
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i)
    for (Eigen::Index j = 0; j < cols; ++j) m(i, j) = rng.normal();
  return m;
}

void check_finite(const ad::Var& x, const char* what, int step) {
  if (!x.val().allFinite())
    throw NumericalError(std::string(what) + ": non-finite value at step " +
                         std::to_string(step));
}

}  // namespace

DiffusionSchedule make_vp_schedule(int steps) {
  if (steps < 1) throw ParamError("make_vp_schedule: steps >= 1");
  constexpr int kBaseSteps = 1000;
  constexpr double kBetaLo = 1e-4, kBetaHi = 0.02;
  // alpha-bar of the reference linear ramp, then stride re-spacing so the
  // T-step schedule matches its cumulative products at the kept indices.
  std::vector<double> bar(kBaseSteps + 1);
  bar[0] = 1.0;
  for (int i = 0; i < kBaseSteps; ++i) {
    const double beta = kBetaLo + (kBetaHi - kBetaLo) * i / (kBaseSteps - 1.0);
    bar[i + 1] = bar[i] * (1.0 - beta);
  }
  DiffusionSchedule s;
  s.steps = steps;
  s.betas.resize(steps);
  s.alphas.resize(steps);
  s.alpha_bars.resize(steps);
  s.alpha_bars_prev.resize(steps);
  s.posterior_var.resize(steps);
  int prev_idx = 0;
  for (int t = 0; t < steps; ++t) {
    const int idx = static_cast<int>(std::llround((t + 1) * double(kBaseSteps) / steps));
    s.betas(t) = 1.0 - bar[idx] / bar[prev_idx];
    prev_idx = idx;
  }
  double abar = 1.0;
  for (int t = 0; t < steps; ++t) {
    s.alphas(t) = 1.0 - s.betas(t);
    s.alpha_bars_prev(t) = abar;
    abar *= s.alphas(t);
    s.alpha_bars(t) = abar;
    s.posterior_var(t) =
        s.betas(t) * (1.0 - s.alpha_bars_prev(t)) / (1.0 - s.alpha_bars(t));
  }
  return s;
}

Eigen::MatrixXd Actor::sample_plain(const Eigen::MatrixXd& states, Rng& rng) {
  ad::Tape tape;
  return sample(tape, states, rng).val();
}

void Actor::to_archive(Archive& ar) {
  for (ad::Param* p : params()) ar.tensors[p->name] = p->value;
}

void Actor::from_archive(const Archive& ar) {
  for (ad::Param* p : params()) p->value = ar.get(p->name);
}

// ---------------------------------------------------------------------------
// Diffusion actor

DiffusionActor::DiffusionActor(int state_dim_, int action_dim_, int hidden,
                               int time_dim, const DiffusionSchedule& schedule,
                               ActionBox box_, Rng& rng, const std::string& name)
    : sched_(schedule), time_dim_(time_dim) {
  state_dim = state_dim_;
  action_dim = action_dim_;
  box = box_;
  eps_net_ = make_mlp(name + "/eps",
                      {state_dim + action_dim + time_dim, hidden, hidden, action_dim},
                      rng);
}

ad::Var DiffusionActor::eps_forward(ad::Tape& tape, ad::Var states, ad::Var noisy,
                                    const Eigen::VectorXd& t01) {
  ad::Var tf = tape.constant(cosine_features(t01, time_dim_));
  return mlp_forward(tape, eps_net_, tape.concat_cols({states, noisy, tf}));
}

ad::Var DiffusionActor::sample(ad::Tape& tape, const Eigen::MatrixXd& states, Rng& rng) {
  if (states.cols() != state_dim) throw ShapeError("diffusion sample: state dim");
  const Eigen::Index batch = states.rows();
  ad::Var s = tape.constant(states);
  ad::Var x = tape.constant(gaussian_matrix(batch, action_dim, rng));
  for (int t = sched_.steps - 1; t >= 0; --t) {
    const Eigen::VectorXd t01 =
        Eigen::VectorXd::Constant(batch, double(t + 1) / sched_.steps);
    ad::Var eps = eps_forward(tape, s, x, t01);
    const double inv_sqrt_alpha = 1.0 / std::sqrt(sched_.alphas(t));
    const double eps_coef =
        sched_.betas(t) / std::sqrt(1.0 - sched_.alpha_bars(t)) * inv_sqrt_alpha;
    x = tape.sub(tape.scale(x, inv_sqrt_alpha), tape.scale(eps, eps_coef));
    if (t > 0) {
      const double sigma = std::sqrt(sched_.posterior_var(t));
      x = tape.add(x, tape.constant(sigma * gaussian_matrix(batch, action_dim, rng)));
    }
    check_finite(x, "diffusion_sample", t + 1);
  }
  return tape.clamp(x, box.lo, box.hi);
}

ad::Var DiffusionActor::bc_loss(ad::Tape& tape, const Eigen::MatrixXd& states,
                                const Eigen::MatrixXd& actions, Rng& rng) {
  const Eigen::Index batch = states.rows();
  if (batch < 1) throw ParamError("diffusion_bc_loss: empty batch");
  if (actions.rows() != batch) throw ShapeError("diffusion_bc_loss: batch mismatch");
  Eigen::VectorXd t01(batch);
  Eigen::MatrixXd noisy(batch, action_dim);
  Eigen::MatrixXd eps = gaussian_matrix(batch, action_dim, rng);
  for (Eigen::Index b = 0; b < batch; ++b) {
    const int t = static_cast<int>(rng.index(sched_.steps));
    t01(b) = double(t + 1) / sched_.steps;
    const double a_coef = std::sqrt(sched_.alpha_bars(t));
    const double e_coef = std::sqrt(1.0 - sched_.alpha_bars(t));
    noisy.row(b) = a_coef * actions.row(b) + e_coef * eps.row(b);
  }
  ad::Var pred = eps_forward(tape, tape.constant(states), tape.constant(noisy), t01);
  ad::Var diff = tape.sub(pred, tape.constant(eps));
  // Mean over the batch of per-sample squared norms.
  return tape.scale(tape.sum(tape.hadamard(diff, diff)), 1.0 / double(batch));
}

std::vector<ad::Param*> DiffusionActor::params() {
  std::vector<ad::Param*> out;
  collect_params(eps_net_, out);
  return out;
}

nlohmann::json DiffusionActor::path_config() const {
  return {{"diffusion_steps", sched_.steps}};
}

// ---------------------------------------------------------------------------
// Flow-matching actor

FlowActor::FlowActor(int state_dim_, int action_dim_, int hidden, int time_dim,
                     FlowPathConfig path, ActionBox box_, Rng& rng,
                     const std::string& name)
    : path_(path), time_dim_(time_dim) {
  if (path.steps < 1) throw ParamError("FlowActor: K >= 1");
  state_dim = state_dim_;
  action_dim = action_dim_;
  box = box_;
  vel_net_ = make_mlp(name + "/vel",
                      {state_dim + action_dim + time_dim, hidden, hidden, action_dim},
                      rng);
}

ad::Var FlowActor::vel_forward(ad::Tape& tape, ad::Var states, ad::Var position,
                               const Eigen::VectorXd& t01) {
  ad::Var tf = tape.constant(cosine_features(t01, time_dim_));
  return mlp_forward(tape, vel_net_, tape.concat_cols({states, position, tf}));
}

ad::Var FlowActor::sample(ad::Tape& tape, const Eigen::MatrixXd& states, Rng& rng) {
  return sample_with_steps(tape, states, rng, path_.steps);
}

ad::Var FlowActor::sample_with_steps(ad::Tape& tape, const Eigen::MatrixXd& states,
                                     Rng& rng, int steps) {
  if (steps < 1) throw ParamError("flow_sample: steps >= 1");
  if (states.cols() != state_dim) throw ShapeError("flow sample: state dim");
  const Eigen::Index batch = states.rows();
  const double dt = 1.0 / steps;
  ad::Var s = tape.constant(states);
  ad::Var x = tape.constant(gaussian_matrix(batch, action_dim, rng));
  for (int k = 0; k < steps; ++k) {
    const Eigen::VectorXd t01 = Eigen::VectorXd::Constant(batch, k * dt);
    x = tape.add(x, tape.scale(vel_forward(tape, s, x, t01), dt));
    check_finite(x, "flow_sample", k + 1);
  }
  return tape.clamp(x, box.lo, box.hi);
}

ad::Var FlowActor::bc_loss(ad::Tape& tape, const Eigen::MatrixXd& states,
                           const Eigen::MatrixXd& actions, Rng& rng) {
  const Eigen::Index batch = states.rows();
  if (batch < 1) throw ParamError("flow_bc_loss: empty batch");
  if (actions.rows() != batch) throw ShapeError("flow_bc_loss: batch mismatch");
  Eigen::MatrixXd z = gaussian_matrix(batch, action_dim, rng);
  Eigen::VectorXd t01(batch);
  for (Eigen::Index b = 0; b < batch; ++b) t01(b) = rng.uniform();
  Eigen::MatrixXd xt(batch, action_dim);
  for (Eigen::Index b = 0; b < batch; ++b)
    xt.row(b) = (1.0 - t01(b)) * z.row(b) + t01(b) * actions.row(b);
  ad::Var pred = vel_forward(tape, tape.constant(states), tape.constant(xt), t01);
  ad::Var diff = tape.sub(pred, tape.constant(actions - z));
  return tape.scale(tape.sum(tape.hadamard(diff, diff)), 1.0 / double(batch));
}

std::vector<ad::Param*> FlowActor::params() {
  std::vector<ad::Param*> out;
  collect_params(vel_net_, out);
  return out;
}

nlohmann::json FlowActor::path_config() const {
  return {{"flow_steps", path_.steps}};
}

// ---------------------------------------------------------------------------
// Anchored-perturbation actor

AnchoredActor::AnchoredActor(std::unique_ptr<Actor> prior, int hidden, double phi,
                             Rng& rng)
    : prior_(std::move(prior)), phi_(phi) {
  if (!(phi > 0.0)) throw ParamError("AnchoredActor: phi > 0");
  state_dim = prior_->state_dim;
  action_dim = prior_->action_dim;
  box = prior_->box;
  zeta_ = make_mlp("actor/zeta", {state_dim + action_dim, hidden, hidden, action_dim},
                   rng);
}

ad::Var AnchoredActor::sample(ad::Tape& tape, const Eigen::MatrixXd& states, Rng& rng) {
  // The anchor is detached: the risk gradient shapes only the residual.
  Eigen::MatrixXd b = prior_->sample_plain(states, rng);
  ad::Var anchors = tape.constant(b);
  ad::Var raw = mlp_forward(tape, zeta_, tape.concat_cols({tape.constant(states), anchors}));
  ad::Var bounded = tape.l2_project_rows(raw, phi_);
  return tape.clamp(tape.add(anchors, bounded), box.lo, box.hi);
}

std::pair<Eigen::MatrixXd, Eigen::MatrixXd> AnchoredActor::sample_with_anchor(
    const Eigen::MatrixXd& states, Rng& rng) {
  Eigen::MatrixXd b = prior_->sample_plain(states, rng);
  ad::Tape tape;
  ad::Var raw = mlp_forward(tape, zeta_,
                            tape.concat_cols({tape.constant(states), tape.constant(b)}));
  ad::Var bounded = tape.l2_project_rows(raw, phi_);
  Eigen::MatrixXd a = (b + bounded.val()).cwiseMax(box.lo).cwiseMin(box.hi);
  return {b, a};
}

ad::Var AnchoredActor::bc_loss(ad::Tape& tape, const Eigen::MatrixXd& states,
                               const Eigen::MatrixXd& actions, Rng& rng) {
  return prior_->bc_loss(tape, states, actions, rng);
}

std::vector<ad::Param*> AnchoredActor::params() {
  std::vector<ad::Param*> out = prior_->params();
  collect_params(zeta_, out);
  return out;
}

nlohmann::json AnchoredActor::path_config() const {
  nlohmann::json j = prior_->path_config();
  j["phi"] = phi_;
  j["prior"] = prior_->kind();
  return j;
}

// ---------------------------------------------------------------------------

std::unique_ptr<Actor> make_actor(const ActorConfig& cfg, Rng& rng) {
  if (cfg.kind == "diffusion")
    return std::make_unique<DiffusionActor>(cfg.state_dim, cfg.action_dim, cfg.hidden,
                                            cfg.time_dim,
                                            make_vp_schedule(cfg.diffusion_steps),
                                            cfg.box, rng);
  if (cfg.kind == "flow")
    return std::make_unique<FlowActor>(cfg.state_dim, cfg.action_dim, cfg.hidden,
                                       cfg.time_dim, FlowPathConfig{cfg.flow_steps},
                                       cfg.box, rng);
  if (cfg.kind == "anchored") {
    ActorConfig prior_cfg = cfg;
    prior_cfg.kind = cfg.anchored_prior;
    if (prior_cfg.kind != "diffusion" && prior_cfg.kind != "flow")
      throw ParamError("make_actor: anchored prior must be diffusion or flow");
    Rng prior_rng(derive_seed(rng.bits(), "prior"));
    auto prior = cfg.anchored_prior == "flow"
                     ? std::unique_ptr<Actor>(std::make_unique<FlowActor>(
                           cfg.state_dim, cfg.action_dim, cfg.hidden, cfg.time_dim,
                           FlowPathConfig{cfg.flow_steps}, cfg.box, prior_rng,
                           "actor/prior"))
                     : std::unique_ptr<Actor>(std::make_unique<DiffusionActor>(
                           cfg.state_dim, cfg.action_dim, cfg.hidden, cfg.time_dim,
                           make_vp_schedule(cfg.diffusion_steps), cfg.box, prior_rng,
                           "actor/prior"));
    return std::make_unique<AnchoredActor>(std::move(prior), cfg.hidden, cfg.phi, rng);
  }
  throw ParamError("make_actor: unknown kind " + cfg.kind);
}

Eigen::MatrixXd bootstrap_action(Actor& actor, const Eigen::MatrixXd& next_states,
                                 Rng& rng) {
  return actor.sample_plain(next_states, rng);
}

ad::Var risk_term(ad::Tape& tape, Actor& actor, Critic& critic,
                  const Eigen::MatrixXd& states, const RiskSpec& spec, Rng& rng,
                  bool monte_carlo) {
  spec.validate();
  ad::Var a = actor.sample(tape, states, rng);

  Eigen::VectorXd taus, weights;
  if (monte_carlo) {
    taus = sample_tail_taus(spec.kind == RiskKind::neutral ? 1.0 : spec.alpha,
                            spec.tail_samples, rng);
    weights = Eigen::VectorXd::Constant(taus.size(), 1.0 / taus.size());
  } else {
    const QuantileGrid& grid = critic.grid_online;
    Eigen::VectorXd w = distortion_weights(spec, grid);
    // Quantiles with zero weight contribute nothing; drop them.
    std::vector<int> keep;
    for (int i = 0; i < grid.count; ++i)
      if (w(i) > 0.0) keep.push_back(i);
    taus.resize(keep.size());
    weights.resize(keep.size());
    for (std::size_t i = 0; i < keep.size(); ++i) {
      taus(i) = grid.taus(keep[i]);
      weights(i) = w(keep[i]);
    }
  }

  ad::Var sa = tape.concat_cols({tape.constant(states), a});
  ad::Var zmin = critic_min_online(tape, critic, sa, taus);  // B x M
  ad::Var distorted = tape.matmul(zmin, tape.constant(weights));  // B x 1
  return tape.scale(tape.mean(distorted), -1.0);
}

ActorLossParts actor_loss(ad::Tape& tape, Actor& actor, Critic& critic,
                          const Eigen::MatrixXd& states, const Eigen::MatrixXd& actions,
                          double eta, double lambda_bc, const RiskSpec& spec,
                          Rng& rng, bool monte_carlo) {
  if (eta < 0.0) throw ParamError("actor_loss: eta must be >= 0");
  ActorLossParts parts;
  parts.bc = actor.bc_loss(tape, states, actions, rng);
  if (eta == 0.0) {
    parts.total = lambda_bc == 1.0 ? parts.bc : tape.scale(parts.bc, lambda_bc);
    return parts;
  }
  parts.risk = risk_term(tape, actor, critic, states, spec, rng, monte_carlo);
  parts.total = tape.add(tape.scale(parts.bc, lambda_bc), tape.scale(parts.risk, eta));
  return parts;
}

}  // namespace ramac
