#include <doctest.h>

#include <cstdio>
#include <filesystem>

#include "ramac/errors.hpp"
#include "ramac/training.hpp"
#include "test_helpers.hpp"

using namespace ramac;

namespace {

TrainConfig tiny_config() {
  TrainConfig cfg;
  cfg.actor = "radac";
  cfg.batch = 16;
  cfg.eta = 0.5;
  cfg.n_online = 10;
  cfg.n_target = 10;
  cfg.hidden_critic = 16;
  cfg.hidden_actor = 16;
  cfg.embed_dim = 8;
  cfg.time_dim = 8;
  cfg.diffusion_steps = 2;
  cfg.epochs = 1;
  cfg.steps_per_epoch = 5;
  cfg.eval_interval = 1;
  cfg.eval_episodes = 4;
  cfg.eval_task = "bandit";
  cfg.seed = 5;
  return cfg;
}

std::vector<ad::Param*> all_params(TrainState& st) {
  std::vector<ad::Param*> out = st.critic.online_params();
  for (ad::Param* p : st.critic.target_params()) out.push_back(p);
  for (ad::Param* p : st.actor->params()) out.push_back(p);
  return out;
}

}  // namespace

TEST_CASE("config json round trip and validation") {
  TrainConfig cfg = tiny_config();
  cfg.risk.kind = RiskKind::wang;
  cfg.risk.lambda = 0.35;
  cfg.target_clip = std::make_pair(-150.0, 150.0);
  HazardSpec hz;
  hz.prob = 0.1;
  hz.term_threshold = 1.5;
  cfg.hazard = hz;

  TrainConfig back = config_from_json(config_to_json(cfg));
  CHECK(back.actor == cfg.actor);
  CHECK(back.risk.kind == RiskKind::wang);
  CHECK(back.risk.lambda == doctest::Approx(0.35));
  CHECK(back.target_clip.has_value());
  CHECK(back.target_clip->first == doctest::Approx(-150.0));
  CHECK(back.hazard.has_value());
  CHECK(back.hazard->term_threshold.has_value());
  CHECK(back.seed == cfg.seed);

  TrainConfig bad = tiny_config();
  bad.batch = 0;
  CHECK_THROWS_AS(bad.validate(), ParamError);
  bad = tiny_config();
  bad.actor = "mystery";
  CHECK_THROWS_AS(bad.validate(), ParamError);
}

TEST_CASE("global norm clip caps the gradient group") {
  ad::Param a("a", Eigen::MatrixXd::Zero(2, 2));
  ad::Param b("b", Eigen::MatrixXd::Zero(1, 3));
  a.grad = Eigen::MatrixXd::Constant(2, 2, 100.0);
  b.grad = Eigen::MatrixXd::Constant(1, 3, -50.0);
  double before = std::sqrt(a.grad.squaredNorm() + b.grad.squaredNorm());
  double reported = clip_global_norm({&a, &b}, 1.0);
  CHECK(reported == doctest::Approx(before));
  double after = std::sqrt(a.grad.squaredNorm() + b.grad.squaredNorm());
  CHECK(after == doctest::Approx(1.0).epsilon(1e-12));

  // Below the cap nothing changes.
  a.grad.setConstant(0.01);
  b.grad.setConstant(0.01);
  clip_global_norm({&a, &b}, 1.0);
  CHECK(a.grad(0, 0) == doctest::Approx(0.01));
}

TEST_CASE("train_step is deterministic given the state streams") {
  OfflineDataset ds = generate_risky_bandit(256, 2);
  TrainConfig cfg = tiny_config();

  TrainState s1 = make_train_state(cfg, ds.meta);
  TrainState s2 = make_train_state(cfg, ds.meta);
  for (int i = 0; i < 100; ++i) {
    train_step(s1, ds);
    train_step(s2, ds);
  }
  auto p1 = all_params(s1), p2 = all_params(s2);
  REQUIRE(p1.size() == p2.size());
  for (std::size_t i = 0; i < p1.size(); ++i)
    CHECK((p1[i]->value - p2[i]->value).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("critic loss sends no gradient to the actor") {
  OfflineDataset ds = generate_risky_bandit(64, 3);
  TrainConfig cfg = tiny_config();
  TrainState st = make_train_state(cfg, ds.meta);

  for (ad::Param* p : st.actor->params()) p->zero_grad();
  Eigen::MatrixXd a2 =
      bootstrap_action(*st.actor, ds.next_states.topRows(16), st.critic_rng);
  ad::Tape tape;
  std::vector<std::uint8_t> term(ds.terminals.begin(), ds.terminals.begin() + 16);
  ad::Var loss = critic_loss(tape, st.critic, ds.states.topRows(16),
                             ds.actions.topRows(16), ds.rewards.head(16),
                             ds.next_states.topRows(16), term, a2);
  tape.backward(loss);
  for (ad::Param* p : st.actor->params()) CHECK(p->grad.cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("eta=0 training drives the critic to the point-mass reward law") {
  // Constant-reward one-step data: every quantile should land on the constant.
  const double c = 2.0;
  OfflineDataset ds = generate_risky_bandit(128, 4);
  ds.rewards.setConstant(c);

  TrainConfig cfg = tiny_config();
  cfg.eta = 0.0;
  cfg.batch = 16;
  cfg.hidden_critic = 24;
  cfg.critic_lr = 2e-3;
  cfg.epochs = 35;
  cfg.steps_per_epoch = 100;
  TrainState st = make_train_state(cfg, ds.meta);
  for (int i = 0; i < cfg.epochs * cfg.steps_per_epoch; ++i) train_step(st, ds);

  Eigen::MatrixXd z =
      critic_values(st.critic, 0, false, ds.states.topRows(8), ds.actions.topRows(8),
                    st.critic.grid_online.taus);
  CHECK((z.array() - c).abs().maxCoeff() < 0.1);
  CHECK(z.maxCoeff() - z.minCoeff() < 0.1);  // point-mass spread
}

TEST_CASE("non-finite losses abort with a numerical error") {
  OfflineDataset ds = generate_risky_bandit(64, 5);
  ds.rewards.setConstant(std::numeric_limits<double>::infinity());
  TrainConfig cfg = tiny_config();
  TrainState st = make_train_state(cfg, ds.meta);
  CHECK_THROWS_AS(train_step(st, ds), NumericalError);
}

TEST_CASE("checkpoint round trip resumes bitwise") {
  OfflineDataset ds = generate_risky_bandit(256, 6);
  TrainConfig cfg = tiny_config();
  const std::string dir = ramac::testing::temp_dir("ramac_ckpt_test");
  const std::string path = dir + "/ckpt.bin";

  TrainState live = make_train_state(cfg, ds.meta);
  for (int i = 0; i < 5; ++i) train_step(live, ds);
  save_checkpoint(live, path);

  StepLog live_logs[10];
  for (int i = 0; i < 10; ++i) live_logs[i] = train_step(live, ds);

  TrainState resumed = load_checkpoint(path);
  CHECK(resumed.step == 5);
  StepLog res_logs[10];
  for (int i = 0; i < 10; ++i) res_logs[i] = train_step(resumed, ds);

  for (int i = 0; i < 10; ++i) {
    CHECK(live_logs[i].critic_loss == res_logs[i].critic_loss);
    CHECK(live_logs[i].bc_loss == res_logs[i].bc_loss);
  }
  auto p1 = all_params(live), p2 = all_params(resumed);
  for (std::size_t i = 0; i < p1.size(); ++i)
    CHECK((p1[i]->value - p2[i]->value).cwiseAbs().maxCoeff() == 0.0);

  // Actor-only load serves evaluation.
  auto actor = load_actor(path);
  CHECK(actor->kind() == "diffusion");
  std::filesystem::remove_all(dir);
}

TEST_CASE("train_loop: zero epochs emit only the initial report") {
  OfflineDataset ds = generate_risky_bandit(128, 7);
  TrainConfig cfg = tiny_config();
  cfg.epochs = 0;
  std::vector<nlohmann::json> records;
  TrainSummary summary =
      train_loop(ds, cfg, "", [&](const nlohmann::json& j) { records.push_back(j); });
  CHECK(summary.reports.size() == 1);
  CHECK(summary.reports[0].first == 0);
  CHECK(summary.last_step == 0);
  REQUIRE(records.size() == 1);
  CHECK(records[0].contains("eval"));
}

TEST_CASE("train_loop: evals land after the EMA update of their step") {
  OfflineDataset ds = generate_risky_bandit(128, 8);
  TrainConfig cfg = tiny_config();
  cfg.epochs = 2;
  cfg.steps_per_epoch = 3;
  cfg.eval_interval = 1;
  std::vector<std::int64_t> eval_steps;
  std::int64_t last_train_step = -1;
  train_loop(ds, cfg, "", [&](const nlohmann::json& j) {
    if (j.contains("eval")) {
      eval_steps.push_back(j.at("step").get<std::int64_t>());
      CHECK(j.at("step").get<std::int64_t>() == std::max<std::int64_t>(last_train_step, 0));
    } else {
      last_train_step = j.at("step").get<std::int64_t>();
    }
  });
  CHECK(eval_steps == std::vector<std::int64_t>{0, 3, 6});
}

TEST_CASE("evaluate_policy: schema, worker determinism, OOD attachment") {
  Rng init(9);
  ActorConfig acfg;
  acfg.kind = "diffusion";
  acfg.state_dim = 2;
  acfg.action_dim = 2;
  acfg.hidden = 16;
  acfg.time_dim = 8;
  acfg.diffusion_steps = 2;
  auto actor = make_actor(acfg, init);

  OfflineDataset ds = generate_risky_bandit(512, 10);
  EvalReport a = evaluate_policy(*actor, "bandit", std::nullopt, 10, {1, 2}, 0.1, 1,
                                 &ds.actions);
  CHECK(a.episodes == 20);
  CHECK(static_cast<int>(a.violations.size()) == 20);
  CHECK(a.seeds == std::vector<std::uint64_t>{1, 2});
  CHECK(a.eps_act.has_value());
  CHECK(a.cvar <= a.mean + 1e-12);

  EvalReport b = evaluate_policy(*actor, "bandit", std::nullopt, 10, {1, 2}, 0.1, 4,
                                 &ds.actions);
  CHECK(a.mean == b.mean);
  CHECK(a.cvar == b.cvar);
  CHECK(a.eps_act->first == b.eps_act->first);

  // Corridor task (1-D actions): violations come from the hazard spec.
  Rng cinit(10);
  ActorConfig ccfg_actor = acfg;
  ccfg_actor.state_dim = 2;
  ccfg_actor.action_dim = 1;
  auto corridor_actor = make_actor(ccfg_actor, cinit);
  HazardSpec hz;
  hz.threshold = 0.1;
  hz.max_steps = 30;
  EvalReport c = evaluate_policy(*corridor_actor, "corridor", hz, 3, {4}, 0.5, 1);
  CHECK(c.episodes == 3);
  CHECK(static_cast<int>(c.violations.size()) == 3);

  CHECK_THROWS_AS(evaluate_policy(*actor, "nowhere", std::nullopt, 2, {1}, 0.1),
                  ParamError);
  CHECK_THROWS_AS(evaluate_policy(*actor, "bandit", std::nullopt, 0, {1}, 0.1),
                  ParamError);
}

TEST_CASE("per-seed cvar averaging differs from pooled on skewed seeds") {
  Rng init(21);
  ActorConfig acfg;
  acfg.kind = "diffusion";
  acfg.state_dim = 2;
  acfg.action_dim = 2;
  acfg.hidden = 16;
  acfg.time_dim = 8;
  acfg.diffusion_steps = 2;
  auto actor = make_actor(acfg, init);

  EvalReport pooled =
      evaluate_policy(*actor, "bandit", std::nullopt, 20, {1, 2, 3}, 0.1, 1);
  EvalReport per_seed = evaluate_policy(*actor, "bandit", std::nullopt, 20, {1, 2, 3},
                                        0.1, 1, nullptr, true);
  CHECK(pooled.mean == per_seed.mean);
  // Pooled tail is at least as pessimistic as the average of per-seed tails.
  CHECK(pooled.cvar <= per_seed.cvar + 1e-12);
}

TEST_CASE("grad_check: quadratic exactness and generative actor losses") {
  // Diffusion actor loss, T=2, tiny net, full composite objective.
  Rng init(11);
  DiffusionActor dact(1, 1, 3, 2, make_vp_schedule(2), ActionBox{-1, 1}, init);
  CriticConfig ccfg;
  ccfg.state_dim = 1;
  ccfg.action_dim = 1;
  ccfg.hidden = 6;
  ccfg.embed_dim = 4;
  ccfg.n_online = 4;
  ccfg.n_target = 4;
  Rng crng(12);
  Critic critic = make_critic(ccfg, crng);

  Eigen::MatrixXd S = Eigen::MatrixXd::Zero(3, 1);
  Eigen::MatrixXd A(3, 1);
  A << 0.2, -0.4, 0.1;
  RiskSpec spec;
  spec.kind = RiskKind::cvar;
  spec.alpha = 0.25;

  std::size_t n_params = 0;
  for (ad::Param* p : dact.params()) n_params += p->value.size();
  CHECK(n_params <= 64);

  auto build_diff = [&](ad::Tape& tape) {
    Rng r(303);
    return actor_loss(tape, dact, critic, S, A, 0.8, 1.0, spec, r).total;
  };
  auto rep = grad_check(build_diff, dact.params(), 1e-3);
  CHECK(rep.pass);

  // Flow actor loss, K=3.
  Rng finit(13);
  FlowActor fact(1, 1, 3, 2, FlowPathConfig{3}, ActionBox{-1, 1}, finit);
  auto build_flow = [&](ad::Tape& tape) {
    Rng r(404);
    return actor_loss(tape, fact, critic, S, A, 0.8, 1.0, spec, r).total;
  };
  auto repf = grad_check(build_flow, fact.params(), 1e-3);
  CHECK(repf.pass);
}
