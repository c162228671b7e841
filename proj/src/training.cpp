#include "ramac/training.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <limits>
#include <filesystem>
#include <fstream>
#include <thread>

#include "ramac/errors.hpp"

namespace ramac {

using nlohmann::json;

void TrainConfig::validate() const {
  actor_family();  // rejects unknown actor kinds
  if (batch < 1) throw ParamError("TrainConfig: batch >= 1");
  if (!(gamma >= 0.0 && gamma <= 1.0)) throw ParamError("TrainConfig: gamma in [0,1]");
  if (!(tau_target > 0.0 && tau_target <= 1.0))
    throw ParamError("TrainConfig: tau_target in (0,1]");
  if (!(critic_lr > 0.0 && critic_lr <= 1.0) || !(actor_lr > 0.0 && actor_lr <= 1.0))
    throw ParamError("TrainConfig: learning rates in (0,1]");
  if (eta < 0.0) throw ParamError("TrainConfig: eta >= 0");
  if (epochs < 0 || steps_per_epoch < 1) throw ParamError("TrainConfig: bad schedule");
  if (eval_interval < 1) throw ParamError("TrainConfig: eval_interval >= 1");
  if (eval_episodes < 1) throw ParamError("TrainConfig: eval_episodes >= 1");
  if (workers < 1) throw ParamError("TrainConfig: workers >= 1");
  risk.validate();
  if (target_clip && !(target_clip->first < target_clip->second))
    throw ParamError("TrainConfig: clip range must have lo < hi");
}

std::string TrainConfig::actor_family() const {
  if (actor == "radac" || actor == "diffusion-ql") return "diffusion";
  if (actor == "rafmac" || actor == "flow-ql") return "flow";
  if (actor == "anchored") return "anchored";
  throw ParamError("TrainConfig: unknown actor kind " + actor);
}

void TrainConfig::apply_actor_defaults(bool eta_overridden, bool distortion_overridden) {
  actor_family();  // validates the kind
  if (!distortion_overridden) {
    if (actor == "diffusion-ql" || actor == "flow-ql")
      risk.kind = RiskKind::neutral;
    else
      risk.kind = RiskKind::cvar;
  }
  if (!eta_overridden) {
    if (actor == "radac") eta = 0.05;
    else if (actor == "rafmac") eta = 1000.0;
    else eta = 1.0;
  }
}

json config_to_json(const TrainConfig& c) {
  json j;
  j["actor"] = c.actor;
  j["batch"] = c.batch;
  j["gamma"] = c.gamma;
  j["tau_target"] = c.tau_target;
  j["critic_lr"] = c.critic_lr;
  j["actor_lr"] = c.actor_lr;
  j["eta"] = c.eta;
  j["lambda_bc"] = c.lambda_bc;
  j["alpha"] = c.risk.alpha;
  j["distortion"] = to_string(c.risk.kind);
  j["wang_lambda"] = c.risk.lambda;
  j["cpw_gamma"] = c.risk.gamma;
  j["tail_samples"] = c.risk.tail_samples;
  j["mc_risk"] = c.mc_risk;
  j["n_online"] = c.n_online;
  j["n_target"] = c.n_target;
  j["hidden_critic"] = c.hidden_critic;
  j["hidden_actor"] = c.hidden_actor;
  j["embed_dim"] = c.embed_dim;
  j["time_dim"] = c.time_dim;
  j["diffusion_steps"] = c.diffusion_steps;
  j["flow_steps"] = c.flow_steps;
  j["phi"] = c.phi;
  j["anchored_prior"] = c.anchored_prior;
  j["grad_clip"] = c.grad_clip;
  if (c.target_clip) j["clip"] = {c.target_clip->first, c.target_clip->second};
  else j["clip"] = nullptr;
  j["huber_kappa"] = c.huber_kappa;
  j["epochs"] = c.epochs;
  j["steps_per_epoch"] = c.steps_per_epoch;
  j["eval_interval"] = c.eval_interval;
  j["eval_episodes"] = c.eval_episodes;
  j["eval_task"] = c.eval_task;
  if (c.hazard) j["hazard"] = hazard_to_json(*c.hazard);
  else j["hazard"] = nullptr;
  j["seed"] = c.seed;
  j["workers"] = c.workers;
  return j;
}

TrainConfig config_from_json(const json& j) {
  TrainConfig c;
  c.actor = j.value("actor", c.actor);
  c.batch = j.value("batch", c.batch);
  c.gamma = j.value("gamma", c.gamma);
  c.tau_target = j.value("tau_target", c.tau_target);
  c.critic_lr = j.value("critic_lr", c.critic_lr);
  c.actor_lr = j.value("actor_lr", c.actor_lr);
  c.eta = j.value("eta", c.eta);
  c.lambda_bc = j.value("lambda_bc", c.lambda_bc);
  c.risk.alpha = j.value("alpha", c.risk.alpha);
  if (j.contains("distortion")) c.risk.kind = risk_kind_from_string(j.at("distortion"));
  c.risk.lambda = j.value("wang_lambda", c.risk.lambda);
  c.risk.gamma = j.value("cpw_gamma", c.risk.gamma);
  c.risk.tail_samples = j.value("tail_samples", c.risk.tail_samples);
  c.mc_risk = j.value("mc_risk", c.mc_risk);
  c.n_online = j.value("n_online", c.n_online);
  c.n_target = j.value("n_target", c.n_target);
  c.hidden_critic = j.value("hidden_critic", c.hidden_critic);
  c.hidden_actor = j.value("hidden_actor", c.hidden_actor);
  c.embed_dim = j.value("embed_dim", c.embed_dim);
  c.time_dim = j.value("time_dim", c.time_dim);
  c.diffusion_steps = j.value("diffusion_steps", c.diffusion_steps);
  c.flow_steps = j.value("flow_steps", c.flow_steps);
  c.phi = j.value("phi", c.phi);
  c.anchored_prior = j.value("anchored_prior", c.anchored_prior);
  c.grad_clip = j.value("grad_clip", c.grad_clip);
  if (j.contains("clip") && !j.at("clip").is_null()) {
    const auto& cl = j.at("clip");
    c.target_clip = std::make_pair(cl.at(0).get<double>(), cl.at(1).get<double>());
  }
  c.huber_kappa = j.value("huber_kappa", c.huber_kappa);
  c.epochs = j.value("epochs", c.epochs);
  c.steps_per_epoch = j.value("steps_per_epoch", c.steps_per_epoch);
  c.eval_interval = j.value("eval_interval", c.eval_interval);
  c.eval_episodes = j.value("eval_episodes", c.eval_episodes);
  c.eval_task = j.value("eval_task", c.eval_task);
  if (j.contains("hazard") && !j.at("hazard").is_null())
    c.hazard = hazard_from_json(j.at("hazard"));
  c.seed = j.value("seed", c.seed);
  c.workers = j.value("workers", c.workers);
  return c;
}

double clip_global_norm(const std::vector<ad::Param*>& params, double max_norm) {
  double sq = 0.0;
  for (ad::Param* p : params) sq += p->grad.squaredNorm();
  const double norm = std::sqrt(sq);
  if (max_norm > 0.0 && norm > max_norm) {
    const double scale = max_norm / norm;
    for (ad::Param* p : params) p->grad *= scale;
  }
  return norm;
}

void Adam::step(const std::vector<ad::Param*>& params) {
  if (m_.empty()) {
    m_.reserve(params.size());
    v_.reserve(params.size());
    for (ad::Param* p : params) {
      m_.push_back(ad::Matrix::Zero(p->value.rows(), p->value.cols()));
      v_.push_back(ad::Matrix::Zero(p->value.rows(), p->value.cols()));
    }
  }
  if (m_.size() != params.size()) throw ShapeError("Adam: parameter group changed");

  clip_global_norm(params, clip_);

  ++t_;
  const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  for (std::size_t i = 0; i < params.size(); ++i) {
    const ad::Matrix& g = params[i]->grad;
    m_[i] = beta1_ * m_[i] + (1.0 - beta1_) * g;
    v_[i] = beta2_ * v_[i] + (1.0 - beta2_) * g.cwiseProduct(g);
    const ad::Matrix mhat = m_[i] / bc1;
    const ad::Matrix vhat = v_[i] / bc2;
    params[i]->value -=
        lr_ * (mhat.array() / (vhat.array().sqrt() + eps_)).matrix();
  }
}

void Adam::save_slots(Archive& ar, const std::string& prefix) const {
  ar.meta["opt"][prefix]["t"] = t_;
  ar.meta["opt"][prefix]["lr"] = lr_;
  ar.meta["opt"][prefix]["clip"] = clip_;
  for (std::size_t i = 0; i < m_.size(); ++i) {
    ar.tensors[prefix + "/m" + std::to_string(i)] = m_[i];
    ar.tensors[prefix + "/v" + std::to_string(i)] = v_[i];
  }
  ar.meta["opt"][prefix]["slots"] = m_.size();
}

void Adam::load_slots(const Archive& ar, const std::string& prefix,
                      const std::vector<ad::Param*>& params) {
  const json& o = ar.meta.at("opt").at(prefix);
  t_ = o.at("t").get<std::int64_t>();
  lr_ = o.at("lr").get<double>();
  clip_ = o.at("clip").get<double>();
  const std::size_t slots = o.at("slots").get<std::size_t>();
  m_.clear();
  v_.clear();
  if (slots != 0 && slots != params.size())
    throw FormatError("Adam::load_slots: slot count mismatch");
  for (std::size_t i = 0; i < slots; ++i) {
    m_.push_back(ar.get(prefix + "/m" + std::to_string(i)));
    v_.push_back(ar.get(prefix + "/v" + std::to_string(i)));
  }
}

TrainState make_train_state(const TrainConfig& cfg, const DatasetMeta& meta) {
  cfg.validate();
  TrainState st;
  st.cfg = cfg;

  CriticConfig ccfg;
  ccfg.state_dim = meta.state_dim;
  ccfg.action_dim = meta.action_dim;
  ccfg.hidden = cfg.hidden_critic;
  ccfg.embed_dim = cfg.embed_dim;
  ccfg.n_online = cfg.n_online;
  ccfg.n_target = cfg.n_target;
  ccfg.kappa = cfg.huber_kappa;
  ccfg.gamma = cfg.gamma;
  ccfg.target_clip = cfg.target_clip;
  Rng critic_init(derive_seed(cfg.seed, "init-critic"));
  st.critic = make_critic(ccfg, critic_init);

  ActorConfig acfg;
  acfg.kind = cfg.actor_family();
  acfg.state_dim = meta.state_dim;
  acfg.action_dim = meta.action_dim;
  acfg.hidden = cfg.hidden_actor;
  acfg.time_dim = cfg.time_dim;
  acfg.diffusion_steps = cfg.diffusion_steps;
  acfg.flow_steps = cfg.flow_steps;
  acfg.phi = cfg.phi;
  acfg.anchored_prior = cfg.anchored_prior;
  acfg.box = ActionBox{meta.action_lo, meta.action_hi};
  Rng actor_init(derive_seed(cfg.seed, "init-actor"));
  st.actor = make_actor(acfg, actor_init);

  st.opt_critic = Adam(cfg.critic_lr, cfg.grad_clip);
  st.opt_actor = Adam(cfg.actor_lr, cfg.grad_clip);
  st.batch_rng = Rng(derive_seed(cfg.seed, "batch"));
  st.critic_rng = Rng(derive_seed(cfg.seed, "critic"));
  st.actor_rng = Rng(derive_seed(cfg.seed, "actor"));
  return st;
}

StepLog train_step(TrainState& state, const OfflineDataset& dataset) {
  const Eigen::Index n = dataset.size();
  if (n < 1) throw ParamError("train_step: empty dataset");
  const TrainConfig& cfg = state.cfg;
  const int batch = cfg.batch;

  Eigen::MatrixXd S(batch, dataset.meta.state_dim);
  Eigen::MatrixXd A(batch, dataset.meta.action_dim);
  Eigen::VectorXd R(batch);
  Eigen::MatrixXd S2(batch, dataset.meta.state_dim);
  std::vector<std::uint8_t> term(batch);
  for (int b = 0; b < batch; ++b) {
    const Eigen::Index i = static_cast<Eigen::Index>(state.batch_rng.index(n));
    S.row(b) = dataset.states.row(i);
    A.row(b) = dataset.actions.row(i);
    R(b) = dataset.rewards(i);
    S2.row(b) = dataset.next_states.row(i);
    term[b] = dataset.terminals[i];
  }

  StepLog log;
  log.step = state.step + 1;

  // Critic update first, then actor, then EMA.
  {
    Eigen::MatrixXd a2 = bootstrap_action(*state.actor, S2, state.critic_rng);
    for (ad::Param* p : state.critic.online_params()) p->zero_grad();
    ad::Tape tape;
    ad::Var loss = critic_loss(tape, state.critic, S, A, R, S2, term, a2);
    log.critic_loss = loss.val()(0, 0);
    if (!std::isfinite(log.critic_loss))
      throw NumericalError("train_step: non-finite critic loss at step " +
                           std::to_string(log.step));
    tape.backward(loss);
    state.opt_critic.step(state.critic.online_params());
  }
  {
    for (ad::Param* p : state.actor->params()) p->zero_grad();
    ad::Tape tape;
    ActorLossParts parts =
        actor_loss(tape, *state.actor, state.critic, S, A, cfg.eta, cfg.lambda_bc,
                   cfg.risk, state.actor_rng, cfg.mc_risk);
    log.bc_loss = parts.bc.val()(0, 0);
    if (parts.risk.valid()) log.risk_term = parts.risk.val()(0, 0);
    const double total = parts.total.val()(0, 0);
    if (!std::isfinite(total) || !std::isfinite(log.bc_loss) ||
        (log.risk_term && !std::isfinite(*log.risk_term)))
      throw NumericalError(
          "train_step: non-finite actor loss at step " + std::to_string(log.step) +
          " (bc=" + std::to_string(log.bc_loss) +
          ", risk=" + std::to_string(log.risk_term.value_or(0.0)) + ")");
    tape.backward(parts.total);
    state.opt_actor.step(state.actor->params());
  }
  ema_update(state.critic.target_params(), state.critic.online_params(),
             1.0 - cfg.tau_target);

  state.step = log.step;
  return log;
}

namespace {

void run_episodes(Actor& actor, const std::string& task,
                  const std::optional<HazardSpec>& hazard, int total_episodes,
                  const std::vector<std::uint64_t>& episode_seeds, int workers,
                  std::vector<double>& returns, std::vector<int>& violations,
                  Eigen::MatrixXd& eval_actions) {
  returns.assign(total_episodes, 0.0);
  violations.assign(total_episodes, 0);
  std::vector<std::vector<Eigen::VectorXd>> actions_per_ep(total_episodes);

  auto run_one = [&](int e) {
    Rng rng(episode_seeds[e]);
    if (task == "bandit") {
      Eigen::MatrixXd state = Eigen::MatrixXd::Zero(1, actor.state_dim);
      Eigen::MatrixXd a = actor.sample_plain(state, rng);
      Eigen::Vector2d act(a(0, 0), a(0, 1));
      returns[e] = bandit_reward(act, rng);
      actions_per_ep[e].push_back(a.row(0).transpose());
    } else if (task == "corridor") {
      HazardSpec spec = hazard.value_or(HazardSpec{});
      Policy policy = [&](const Eigen::VectorXd& s, Rng& r) {
        Eigen::MatrixXd row = actor.sample_plain(s.transpose(), r);
        return Eigen::VectorXd(row.row(0).transpose());
      };
      auto episode = corridor_mdp(spec, policy, spec.max_steps, episode_seeds[e]);
      double ret = 0.0;
      for (const Transition& tr : episode) {
        ret += tr.reward;
        actions_per_ep[e].push_back(tr.action);
      }
      returns[e] = ret;
      violations[e] = violation_count(episode, spec);
    } else {
      throw ParamError("evaluate_policy: unknown task " + task);
    }
  };

  if (workers <= 1 || total_episodes <= 1) {
    for (int e = 0; e < total_episodes; ++e) run_one(e);
  } else {
    // Episodes are independent given their derived seeds, so any schedule
    // produces the same per-index results.
    std::vector<std::thread> pool;
    std::atomic<int> next{0};
    const int nw = std::min(workers, total_episodes);
    for (int w = 0; w < nw; ++w)
      pool.emplace_back([&]() {
        for (int e = next.fetch_add(1); e < total_episodes; e = next.fetch_add(1))
          run_one(e);
      });
    for (auto& th : pool) th.join();
  }

  Eigen::Index total_actions = 0;
  for (const auto& v : actions_per_ep) total_actions += static_cast<Eigen::Index>(v.size());
  eval_actions.resize(total_actions, actor.action_dim);
  Eigen::Index row = 0;
  for (const auto& v : actions_per_ep)
    for (const Eigen::VectorXd& a : v) eval_actions.row(row++) = a.transpose();
}

}  // namespace

EvalReport evaluate_policy(Actor& actor, const std::string& task,
                           const std::optional<HazardSpec>& hazard,
                           int episodes_per_seed,
                           const std::vector<std::uint64_t>& seeds, double alpha,
                           int workers, const Eigen::MatrixXd* dataset_actions,
                           bool per_seed_cvar) {
  if (episodes_per_seed < 1) throw ParamError("evaluate_policy: episodes >= 1");
  if (seeds.empty()) throw ParamError("evaluate_policy: need at least one seed");

  const int total = episodes_per_seed * static_cast<int>(seeds.size());
  std::vector<std::uint64_t> episode_seeds;
  episode_seeds.reserve(total);
  for (std::uint64_t s : seeds)
    for (int e = 0; e < episodes_per_seed; ++e)
      episode_seeds.push_back(derive_seed(s, "eval-ep" + std::to_string(e)));

  std::vector<double> returns;
  std::vector<int> violations;
  Eigen::MatrixXd eval_actions;
  run_episodes(actor, task, hazard, total, episode_seeds, workers, returns, violations,
               eval_actions);

  EvalReport report;
  report.alpha = alpha;
  report.episodes = total;
  report.mean = 0.0;
  for (double r : returns) report.mean += r;
  report.mean /= total;
  if (per_seed_cvar) {
    double acc = 0.0;
    for (std::size_t k = 0; k < seeds.size(); ++k) {
      std::vector<double> chunk(returns.begin() + k * episodes_per_seed,
                                returns.begin() + (k + 1) * episodes_per_seed);
      acc += episodic_cvar(chunk, alpha);
    }
    report.cvar = acc / static_cast<double>(seeds.size());
  } else {
    report.cvar = episodic_cvar(returns, alpha);
  }
  report.violations = violations;
  report.seeds = seeds;
  if (dataset_actions && eval_actions.rows() > 0)
    report.eps_act = ood_rate_1nn(*dataset_actions, eval_actions);
  return report;
}

namespace {

json step_record(const StepLog& log) {
  json j;
  j["step"] = log.step;
  j["critic_loss"] = log.critic_loss;
  j["bc_loss"] = log.bc_loss;
  if (log.risk_term) j["risk_term"] = *log.risk_term;
  return j;
}

}  // namespace

TrainSummary train_loop(const OfflineDataset& dataset, const TrainConfig& cfg,
                        const std::string& out_dir, const MetricSink& sink) {
  cfg.validate();
  dataset.validate();
  TrainState state = make_train_state(cfg, dataset.meta);

  const bool persist = !out_dir.empty();
  if (persist) std::filesystem::create_directories(out_dir);

  TrainSummary summary;
  double best_cvar = -std::numeric_limits<double>::infinity();

  auto do_eval = [&]() {
    const std::uint64_t eval_seed =
        derive_seed(cfg.seed, "eval-step" + std::to_string(state.step));
    EvalReport report =
        evaluate_policy(*state.actor, cfg.eval_task, cfg.hazard, cfg.eval_episodes,
                        {eval_seed}, cfg.risk.alpha, cfg.workers);
    summary.reports.emplace_back(state.step, report);
    if (sink) {
      json j;
      j["step"] = state.step;
      j["eval"] = report.to_json();
      sink(j);
    }
    std::string ckpt_path;
    if (persist) {
      ckpt_path = out_dir + "/ckpt_" + std::to_string(state.step) + ".bin";
      save_checkpoint(state, ckpt_path);
      summary.last_checkpoint = ckpt_path;
    }
    if (report.cvar > best_cvar) {
      best_cvar = report.cvar;
      summary.best_step = state.step;
      summary.best_checkpoint = ckpt_path;
    }
    summary.last_step = state.step;
  };

  do_eval();  // initial-state report (also the whole output for 0 epochs)
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    for (int s = 0; s < cfg.steps_per_epoch; ++s) {
      StepLog log = train_step(state, dataset);
      if (sink) sink(step_record(log));
    }
    if ((epoch + 1) % cfg.eval_interval == 0 || epoch + 1 == cfg.epochs) do_eval();
  }
  return summary;
}

void save_checkpoint(TrainState& state, const std::string& path) {
  Archive ar;
  ar.meta["kind"] = "checkpoint";
  ar.meta["step"] = state.step;
  ar.meta["config"] = config_to_json(state.cfg);
  ar.meta["grids"] = {{"n_online", state.critic.cfg.n_online},
                      {"n_target", state.critic.cfg.n_target}};
  ar.meta["kappa"] = state.critic.cfg.kappa;
  ar.meta["gamma"] = state.critic.cfg.gamma;
  if (state.critic.cfg.target_clip)
    ar.meta["clip"] = {state.critic.cfg.target_clip->first,
                       state.critic.cfg.target_clip->second};
  else
    ar.meta["clip"] = nullptr;
  ar.meta["state_dim"] = state.actor->state_dim;
  ar.meta["action_dim"] = state.actor->action_dim;
  ar.meta["rng"] = {{"batch", state.batch_rng.serialize()},
                    {"critic", state.critic_rng.serialize()},
                    {"actor", state.actor_rng.serialize()}};
  critic_to_archive(state.critic, ar);
  state.actor->to_archive(ar);
  state.opt_critic.save_slots(ar, "opt/critic");
  state.opt_actor.save_slots(ar, "opt/actor");
  ar.save(path);

  // JSON sidecar describing the actor.
  json side;
  side["actor"] = state.cfg.actor;
  side["family"] = state.actor->kind();
  side["path"] = state.actor->path_config();
  side["eta"] = state.cfg.eta;
  side["action_box"] = {state.actor->box.lo, state.actor->box.hi};
  std::ofstream os(path + ".json");
  os << side.dump(2) << "\n";
}

TrainState load_checkpoint(const std::string& path) {
  Archive ar = Archive::load(path);
  if (ar.meta.value("kind", "") != "checkpoint")
    throw FormatError("load_checkpoint: not a checkpoint archive");
  TrainConfig cfg = config_from_json(ar.meta.at("config"));
  DatasetMeta meta;
  meta.state_dim = ar.meta.at("state_dim").get<int>();
  meta.action_dim = ar.meta.at("action_dim").get<int>();
  TrainState state = make_train_state(cfg, meta);
  state.step = ar.meta.at("step").get<std::int64_t>();
  critic_from_archive(state.critic, ar);
  state.actor->from_archive(ar);
  state.opt_critic.load_slots(ar, "opt/critic", state.critic.online_params());
  state.opt_actor.load_slots(ar, "opt/actor", state.actor->params());
  state.batch_rng.deserialize(ar.meta.at("rng").at("batch").get<std::string>());
  state.critic_rng.deserialize(ar.meta.at("rng").at("critic").get<std::string>());
  state.actor_rng.deserialize(ar.meta.at("rng").at("actor").get<std::string>());
  return state;
}

std::unique_ptr<Actor> load_actor(const std::string& path) {
  TrainState state = load_checkpoint(path);
  return std::move(state.actor);
}

TrainConfig checkpoint_config(const std::string& path) {
  Archive ar = Archive::load(path);
  return config_from_json(ar.meta.at("config"));
}

GradCheckReport grad_check(const std::function<ad::Var(ad::Tape&)>& build,
                           const std::vector<ad::Param*>& params, double tolerance) {
  std::size_t scalars = 0;
  for (ad::Param* p : params) scalars += p->value.size();
  if (scalars > 512) throw ParamError("grad_check: too many parameters");

  for (ad::Param* p : params) p->zero_grad();
  std::vector<ad::Matrix> analytic;
  {
    ad::Tape tape;
    ad::Var loss = build(tape);
    tape.backward(loss);
    for (ad::Param* p : params) analytic.push_back(p->grad);
  }

  auto eval = [&]() {
    ad::Tape tape;
    return build(tape).val()(0, 0);
  };

  GradCheckReport report;
  for (std::size_t k = 0; k < params.size(); ++k) {
    ad::Matrix& value = params[k]->value;
    for (Eigen::Index i = 0; i < value.rows(); ++i)
      for (Eigen::Index j = 0; j < value.cols(); ++j) {
        const double saved = value(i, j);
        const double h = 1e-5 * std::max(1.0, std::abs(saved));
        value(i, j) = saved + h;
        const double up = eval();
        value(i, j) = saved - h;
        const double down = eval();
        value(i, j) = saved;
        const double fd = (up - down) / (2.0 * h);
        const double an = analytic[k](i, j);
        const double rel =
            std::abs(an - fd) / std::max({std::abs(an), std::abs(fd), 1e-6});
        report.max_rel_err = std::max(report.max_rel_err, rel);
      }
  }
  report.pass = report.max_rel_err <= tolerance;
  return report;
}

}  // namespace ramac
