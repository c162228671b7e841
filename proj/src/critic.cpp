#include "ramac/critic.hpp"

#include "ramac/errors.hpp"

namespace ramac {

namespace {

QuantileHead make_head(const std::string& name, const CriticConfig& cfg, Rng& rng) {
  QuantileHead head;
  head.trunk = make_mlp(name + "/trunk",
                        {cfg.state_dim + cfg.action_dim, cfg.hidden, cfg.hidden}, rng,
                        /*activate_output=*/true);
  head.embed = make_dense(name + "/embed", cfg.embed_dim, cfg.hidden, rng);
  head.post = make_mlp(name + "/post", {cfg.hidden, cfg.hidden, 1}, rng);
  return head;
}

void collect_head(QuantileHead& head, std::vector<ad::Param*>& out) {
  collect_params(head.trunk, out);
  collect_params(head.embed, out);
  collect_params(head.post, out);
}

}  // namespace

std::vector<ad::Param*> Critic::online_params() {
  std::vector<ad::Param*> out;
  collect_head(online[0], out);
  collect_head(online[1], out);
  return out;
}

std::vector<ad::Param*> Critic::target_params() {
  std::vector<ad::Param*> out;
  collect_head(target[0], out);
  collect_head(target[1], out);
  return out;
}

Critic make_critic(const CriticConfig& cfg, Rng& rng) {
  if (cfg.n_online < 1 || cfg.n_target < 1)
    throw ParamError("make_critic: grids must be nonempty");
  Critic c;
  c.cfg = cfg;
  c.grid_online = make_grid(cfg.n_online);
  c.grid_target = make_grid(cfg.n_target);
  c.online[0] = make_head("critic/online0", cfg, rng);
  c.online[1] = make_head("critic/online1", cfg, rng);
  c.target[0] = make_head("critic/target0", cfg, rng);
  c.target[1] = make_head("critic/target1", cfg, rng);
  // Targets start as exact copies of the online heads.
  ema_update(c.target_params(), c.online_params(), 0.0);
  return c;
}

ad::Var head_forward(ad::Tape& tape, QuantileHead& head, ad::Var sa,
                     const Eigen::VectorXd& taus, int embed_dim) {
  if (taus.size() < 1) throw ParamError("head_forward: taus nonempty");
  const int batch = static_cast<int>(sa.rows());
  const int n = static_cast<int>(taus.size());

  ad::Var trunk = mlp_forward(tape, head.trunk, sa);  // B x h
  ad::Var phi = tape.silu(dense_forward(
      tape, head.embed, tape.constant(cosine_features(taus, embed_dim))));  // N x h

  ad::Var trunk_rep = tape.repeat_rows_each(trunk, n);  // (B*N) x h, sample-major
  ad::Var phi_tile = tape.tile_rows(phi, batch);        // (B*N) x h
  ad::Var mixed = tape.hadamard(trunk_rep, phi_tile);
  ad::Var out = mlp_forward(tape, head.post, mixed);    // (B*N) x 1
  return tape.unflatten_rows(out, batch, n);            // B x N
}

ad::Var critic_min_online(ad::Tape& tape, Critic& critic, ad::Var sa,
                          const Eigen::VectorXd& taus) {
  ad::Var z0 = head_forward(tape, critic.online[0], sa, taus, critic.cfg.embed_dim);
  ad::Var z1 = head_forward(tape, critic.online[1], sa, taus, critic.cfg.embed_dim);
  return tape.min_elem(z0, z1);
}

Eigen::MatrixXd critic_values(Critic& critic, int which, bool use_target,
                              const Eigen::MatrixXd& states,
                              const Eigen::MatrixXd& actions,
                              const Eigen::VectorXd& taus) {
  if (states.rows() != actions.rows())
    throw ShapeError("critic_values: state/action row mismatch");
  if (states.cols() != critic.cfg.state_dim || actions.cols() != critic.cfg.action_dim)
    throw ShapeError("critic_values: dims do not match critic config");
  ad::Tape tape;
  Eigen::MatrixXd sa(states.rows(), states.cols() + actions.cols());
  sa << states, actions;
  QuantileHead& head = use_target ? critic.target[which] : critic.online[which];
  return head_forward(tape, head, tape.constant(sa), taus, critic.cfg.embed_dim).val();
}

ad::Var critic_loss(ad::Tape& tape, Critic& critic,
                    const Eigen::MatrixXd& states, const Eigen::MatrixXd& actions,
                    const Eigen::VectorXd& rewards,
                    const Eigen::MatrixXd& next_states,
                    const std::vector<std::uint8_t>& terminals,
                    const Eigen::MatrixXd& next_actions) {
  const Eigen::Index batch = states.rows();
  if (batch < 1) throw ParamError("critic_loss: empty batch");
  if (actions.rows() != batch || rewards.size() != batch ||
      next_states.rows() != batch || next_actions.rows() != batch ||
      static_cast<Eigen::Index>(terminals.size()) != batch)
    throw ShapeError("critic_loss: batch column mismatch");

  const CriticConfig& cfg = critic.cfg;
  const int n = cfg.n_online, np = cfg.n_target;

  // Bootstrapped target: r + gamma * (1 - terminal) * min_k Zbar_k(s',a';tau'),
  // computed without gradient flow.
  Eigen::MatrixXd t0 = critic_values(critic, 0, true, next_states, next_actions,
                                     critic.grid_target.taus);
  Eigen::MatrixXd t1 = critic_values(critic, 1, true, next_states, next_actions,
                                     critic.grid_target.taus);
  Eigen::MatrixXd tmin = t0.cwiseMin(t1);  // B x N'
  Eigen::MatrixXd y(batch, np);
  for (Eigen::Index b = 0; b < batch; ++b) {
    const double keep = terminals[b] ? 0.0 : 1.0;
    y.row(b) = (rewards(b) + cfg.gamma * keep * tmin.row(b).array()).matrix();
  }
  if (cfg.target_clip)
    y = y.cwiseMax(cfg.target_clip->first).cwiseMin(cfg.target_clip->second);

  // Rows of the expanded system are (sample, online tau) pairs.
  Eigen::MatrixXd y_exp(batch * n, np);
  for (Eigen::Index b = 0; b < batch; ++b)
    y_exp.middleRows(b * n, n) = y.row(b).replicate(n, 1);
  Eigen::MatrixXd tau_mat(batch * n, np);
  for (Eigen::Index b = 0; b < batch; ++b)
    for (int i = 0; i < n; ++i)
      tau_mat.row(b * n + i).setConstant(critic.grid_online.taus(i));

  Eigen::MatrixXd sa(batch, states.cols() + actions.cols());
  sa << states, actions;
  ad::Var sa_c = tape.constant(sa);
  ad::Var y_c = tape.constant(y_exp);

  ad::Var total;
  for (int k = 0; k < 2; ++k) {
    ad::Var z = head_forward(tape, critic.online[k], sa_c, critic.grid_online.taus,
                             cfg.embed_dim);                        // B x N
    ad::Var z_col = tape.flatten_rows(z);                           // (B*N) x 1
    ad::Var delta = tape.sub(y_c, tape.tile_cols(z_col, np));       // (B*N) x N'
    ad::Var head_loss = tape.mean(tape.quantile_huber(delta, tau_mat, cfg.kappa));
    total = k == 0 ? head_loss : tape.add(total, head_loss);
  }
  return tape.scale(total, 0.5);
}

void ema_update(std::vector<ad::Param*> target, std::vector<ad::Param*> online,
                double rho) {
  if (target.size() != online.size()) throw ShapeError("ema_update: param count mismatch");
  for (std::size_t i = 0; i < target.size(); ++i) {
    if (target[i]->value.rows() != online[i]->value.rows() ||
        target[i]->value.cols() != online[i]->value.cols())
      throw ShapeError("ema_update: shape mismatch at " + target[i]->name);
    target[i]->value = rho * target[i]->value + (1.0 - rho) * online[i]->value;
  }
}

void critic_to_archive(Critic& critic, Archive& ar) {
  for (ad::Param* p : critic.online_params()) ar.tensors[p->name] = p->value;
  for (ad::Param* p : critic.target_params()) ar.tensors[p->name] = p->value;
}

void critic_from_archive(Critic& critic, const Archive& ar) {
  for (ad::Param* p : critic.online_params()) p->value = ar.get(p->name);
  for (ad::Param* p : critic.target_params()) p->value = ar.get(p->name);
}

}  // namespace ramac
