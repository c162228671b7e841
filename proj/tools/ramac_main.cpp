// ramac: risk-aware offline RL laboratory (datasets, training, evaluation,
// OOD measurement, export).

#include <CLI11.hpp>
#include <chrono>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>

#include <nlohmann/json.hpp>

#include "ramac/dataset.hpp"
#include "ramac/errors.hpp"
#include "ramac/metrics.hpp"
#include "ramac/training.hpp"

using nlohmann::json;
using namespace ramac;

namespace {

constexpr const char* kToolVersion = "0.1.0";

std::string timestamp_now() {
  const auto now = std::chrono::system_clock::now();
  const std::time_t t = std::chrono::system_clock::to_time_t(now);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&t));
  return buf;
}

json load_json_file(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw DataError("cannot open " + path);
  json j;
  try {
    is >> j;
  } catch (const json::exception& e) {
    throw FormatError("malformed JSON in " + path + ": " + e.what());
  }
  return j;
}

void write_manifest(const std::string& artifact_path, const std::string& command,
                    const json& config, const std::string& dataset_hash,
                    const std::vector<std::uint64_t>& seeds,
                    const std::string& started) {
  json m;
  m["tool"] = "ramac";
  m["version"] = kToolVersion;
  m["command"] = command;
  m["config"] = config;
  m["dataset_hash"] = dataset_hash.empty() ? json(nullptr) : json(dataset_hash);
  m["seeds"] = seeds;
  m["started"] = started;
  m["finished"] = timestamp_now();
  std::ofstream os(artifact_path + ".manifest.json");
  os << m.dump(2) << "\n";
}

std::vector<std::uint64_t> parse_seed_list(const std::string& text) {
  std::vector<std::uint64_t> seeds;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item.empty()) continue;
    seeds.push_back(std::stoull(item));
  }
  if (seeds.empty()) throw ParamError("--seeds: empty list");
  return seeds;
}

// ---------------------------------------------------------------------------

int cmd_gen_data(const std::string& task, int n, int episodes, std::uint64_t seed,
                 const std::string& hazard_path, const std::string& out) {
  const std::string started = timestamp_now();
  std::optional<HazardSpec> hazard;
  if (!hazard_path.empty()) hazard = hazard_from_json(load_json_file(hazard_path));

  OfflineDataset ds;
  if (task == "bandit") {
    ds = generate_risky_bandit(n, seed);
    if (hazard) ds = hazard_relabel(ds, *hazard, derive_seed(seed, "relabel"));
  } else if (task == "corridor") {
    ds = make_corridor_dataset(episodes, hazard.value_or(HazardSpec{}), seed);
  } else {
    throw ParamError("gen-data: unknown task " + task);
  }
  save_dataset(ds, out);

  json cfg;
  cfg["task"] = task;
  cfg["n"] = n;
  cfg["episodes"] = episodes;
  cfg["seed"] = seed;
  cfg["hazard"] = hazard ? hazard_to_json(*hazard) : json(nullptr);
  write_manifest(out, "gen-data", cfg, file_content_hash(out), {seed}, started);

  json report;
  report["out"] = out;
  report["rows"] = ds.size();
  report["hash"] = file_content_hash(out);
  std::cout << report.dump() << "\n";
  return 0;
}

int cmd_train(TrainConfig cfg, const std::string& dataset_path,
              const std::string& out_dir) {
  const std::string started = timestamp_now();
  OfflineDataset ds = load_dataset(dataset_path);
  std::filesystem::create_directories(out_dir);
  std::ofstream metrics(out_dir + "/metrics.ndjson");
  if (!metrics) throw DataError("train: cannot open metric log in " + out_dir);

  MetricSink sink = [&](const json& record) { metrics << record.dump() << "\n"; };
  TrainSummary summary = train_loop(ds, cfg, out_dir, sink);
  metrics.close();

  write_manifest(out_dir + "/run", "train", config_to_json(cfg),
                 file_content_hash(dataset_path), {cfg.seed}, started);

  json out;
  out["last_step"] = summary.last_step;
  out["best_step"] = summary.best_step;
  out["last_checkpoint"] = summary.last_checkpoint;
  out["best_checkpoint"] = summary.best_checkpoint;
  if (!summary.reports.empty())
    out["final_eval"] = summary.reports.back().second.to_json();
  std::cout << out.dump() << "\n";
  return 0;
}

int cmd_eval(const std::string& ckpt, std::string task, const std::string& hazard_path,
             int episodes, const std::string& seeds_text, double alpha, int workers,
             const std::string& dataset_path, const std::string& out_path,
             bool per_seed_cvar) {
  if (episodes < 1) throw ParamError("eval: --episodes must be >= 1");
  const std::string started = timestamp_now();
  std::unique_ptr<Actor> actor = load_actor(ckpt);
  TrainConfig cfg = checkpoint_config(ckpt);
  if (task.empty()) task = cfg.eval_task;
  std::optional<HazardSpec> hazard = cfg.hazard;
  if (!hazard_path.empty()) hazard = hazard_from_json(load_json_file(hazard_path));

  std::vector<std::uint64_t> seeds = parse_seed_list(seeds_text);
  std::optional<Eigen::MatrixXd> ds_actions;
  if (!dataset_path.empty()) ds_actions = load_dataset(dataset_path).actions;

  EvalReport report = evaluate_policy(*actor, task, hazard, episodes, seeds, alpha,
                                      workers, ds_actions ? &*ds_actions : nullptr,
                                      per_seed_cvar);
  const std::string text = report.to_json().dump();
  std::cout << text << "\n";
  if (!out_path.empty()) {
    std::ofstream os(out_path);
    os << text << "\n";
    json cfg_j;
    cfg_j["ckpt"] = ckpt;
    cfg_j["task"] = task;
    cfg_j["episodes"] = episodes;
    cfg_j["alpha"] = alpha;
    write_manifest(out_path, "eval", cfg_j,
                   dataset_path.empty() ? "" : file_content_hash(dataset_path), seeds,
                   started);
  }
  return 0;
}

int cmd_ood(const std::string& dataset_path, const std::string& ckpt, double kappa,
            int samples, std::uint64_t seed, const std::string& out_path) {
  if (samples < 1) throw ParamError("ood: --samples must be >= 1");
  const std::string started = timestamp_now();
  OfflineDataset ds = load_dataset(dataset_path);
  std::unique_ptr<Actor> actor = load_actor(ckpt);

  // Policy actions at dataset states (resampled with the given seed).
  Rng pick(derive_seed(seed, "ood-states"));
  Eigen::MatrixXd states(samples, ds.meta.state_dim);
  for (int i = 0; i < samples; ++i)
    states.row(i) = ds.states.row(static_cast<Eigen::Index>(pick.index(ds.size())));
  Rng sample_rng(derive_seed(seed, "ood-actions"));
  Eigen::MatrixXd actions = actor->sample_plain(states, sample_rng);

  OODConfig ocfg;
  ocfg.kappa = kappa;
  auto [rate, se] = ood_rate_1nn(ds.actions, actions, ocfg);
  json out;
  out["eps_act"] = {{"rate", rate}, {"se", se}};
  out["kappa"] = kappa;
  out["samples"] = samples;
  std::cout << out.dump() << "\n";
  if (!out_path.empty()) {
    std::ofstream os(out_path);
    os << out.dump() << "\n";
    write_manifest(out_path, "ood", out, file_content_hash(dataset_path), {seed},
                   started);
  }
  return 0;
}

int cmd_export(const std::string& ckpt, const std::string& log_path, int samples,
               int resolution, std::uint64_t seed, const std::string& dataset_path,
               const std::string& out_path) {
  const std::string started = timestamp_now();
  if (!ckpt.empty()) {
    std::unique_ptr<Actor> actor = load_actor(ckpt);
    Eigen::MatrixXd states;
    if (!dataset_path.empty()) {
      OfflineDataset ds = load_dataset(dataset_path);
      Rng pick(derive_seed(seed, "export-states"));
      states.resize(samples, ds.meta.state_dim);
      for (int i = 0; i < samples; ++i)
        states.row(i) = ds.states.row(static_cast<Eigen::Index>(pick.index(ds.size())));
    } else {
      states = Eigen::MatrixXd::Zero(samples, actor->state_dim);
    }
    Rng rng(derive_seed(seed, "export-actions"));
    Eigen::MatrixXd actions = actor->sample_plain(states, rng);
    std::ofstream os(out_path);
    if (!os) throw DataError("export: cannot open " + out_path);
    density_export(actions, resolution, os);
    write_manifest(out_path, "export-density", {{"ckpt", ckpt}, {"samples", samples}},
                   "", {seed}, started);
  } else if (!log_path.empty()) {
    std::ifstream is(log_path);
    if (!is) throw DataError("export: cannot open " + log_path);
    std::vector<FrontierPoint> points;
    std::string line;
    while (std::getline(is, line)) {
      if (line.empty()) continue;
      json rec;
      try {
        rec = json::parse(line);
      } catch (const json::exception& e) {
        throw FormatError(std::string("export: malformed metric line: ") + e.what());
      }
      if (!rec.contains("eval")) continue;
      const json& ev = rec.at("eval");
      double viol = 0.0;
      for (const auto& v : ev.at("violations")) viol += v.get<double>();
      const int eps = ev.at("episodes").get<int>();
      FrontierPoint p;
      p.step = rec.at("step").get<std::int64_t>();
      p.mean_return = ev.at("mean").get<double>();
      p.violations = eps > 0 ? viol / eps : 0.0;
      points.push_back(p);
    }
    if (points.empty()) throw DataError("export: no eval records in " + log_path);
    std::vector<FrontierPoint> frontier = pareto_points(points);
    std::ofstream os(out_path);
    if (!os) throw DataError("export: cannot open " + out_path);
    os << "step,violations,mean_return\n";
    char buf[96];
    for (const FrontierPoint& p : frontier) {
      std::snprintf(buf, sizeof(buf), "%lld,%.12g,%.12g\n",
                    static_cast<long long>(p.step), p.violations, p.mean_return);
      os << buf;
    }
    write_manifest(out_path, "export-frontier", {{"log", log_path}}, "", {}, started);
  } else {
    throw ParamError("export: provide --ckpt (density) or --log (frontier)");
  }
  std::cout << json{{"out", out_path}}.dump() << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"ramac: risk-aware generative offline RL laboratory"};
  app.require_subcommand(1);

  // gen-data ---------------------------------------------------------------
  auto* gen = app.add_subcommand("gen-data", "Generate an offline dataset");
  std::string gen_task = "bandit", gen_hazard, gen_out;
  int gen_n = 10000, gen_episodes = 50;
  std::uint64_t gen_seed = 1;
  gen->add_option("--task", gen_task, "bandit | corridor");
  gen->add_option("--n", gen_n, "transition count (bandit)");
  gen->add_option("--episodes", gen_episodes, "episode count (corridor)");
  gen->add_option("--seed", gen_seed, "generator seed");
  gen->add_option("--hazard", gen_hazard, "hazard spec JSON file");
  gen->add_option("--out", gen_out, "output dataset path")->required();

  // train ------------------------------------------------------------------
  auto* train = app.add_subcommand("train", "Run the training loop");
  std::string tr_dataset, tr_out, tr_config, tr_actor = "radac", tr_distortion,
              tr_hazard, tr_eval_task, tr_anchored_prior;
  double tr_eta = -1.0, tr_alpha = -1.0, tr_lambda_bc = -1.0, tr_gamma = -1.0,
         tr_tau_target = -1.0, tr_critic_lr = -1.0, tr_actor_lr = -1.0,
         tr_phi = -1.0, tr_grad_clip = -1.0, tr_kappa = -1.0, tr_wang = -99.0,
         tr_cpw = -1.0;
  int tr_batch = -1, tr_epochs = -1, tr_steps = -1, tr_eval_interval = -1,
      tr_eval_episodes = -1, tr_n_online = -1, tr_n_target = -1, tr_hidden_c = -1,
      tr_hidden_a = -1, tr_embed = -1, tr_time = -1, tr_diff_steps = -1,
      tr_flow_steps = -1, tr_workers = -1, tr_tail = -1;
  std::uint64_t tr_seed = 0;
  bool tr_mc = false;
  std::vector<double> tr_clip;
  train->add_option("--dataset", tr_dataset, "dataset file")->required();
  train->add_option("--out-dir", tr_out, "output directory")->required();
  train->add_option("--config", tr_config, "JSON config file (flags override)");
  train->add_option("--actor", tr_actor,
                    "radac | rafmac | anchored | diffusion-ql | flow-ql");
  train->add_option("--eta", tr_eta, "risk weight");
  train->add_option("--alpha", tr_alpha, "risk level");
  train->add_option("--distortion", tr_distortion, "cvar | wang | cpw | neutral");
  train->add_option("--wang-lambda", tr_wang, "wang shift");
  train->add_option("--cpw-gamma", tr_cpw, "cpw curvature");
  train->add_flag("--mc-risk", tr_mc, "Monte Carlo tail estimator for the risk term");
  train->add_option("--tail-samples", tr_tail, "K tail samples (Monte Carlo)");
  train->add_option("--lambda-bc", tr_lambda_bc, "BC weight");
  train->add_option("--batch", tr_batch, "batch size");
  train->add_option("--gamma", tr_gamma, "discount");
  train->add_option("--tau-target", tr_tau_target, "EMA target rate");
  train->add_option("--critic-lr", tr_critic_lr, "critic learning rate");
  train->add_option("--actor-lr", tr_actor_lr, "actor learning rate");
  train->add_option("--n-online", tr_n_online, "online quantile grid size");
  train->add_option("--n-target", tr_n_target, "target quantile grid size");
  train->add_option("--hidden-critic", tr_hidden_c, "critic hidden width");
  train->add_option("--hidden-actor", tr_hidden_a, "actor hidden width");
  train->add_option("--embed-dim", tr_embed, "tau embedding dim");
  train->add_option("--time-dim", tr_time, "time embedding dim");
  train->add_option("--diffusion-steps", tr_diff_steps, "reverse diffusion steps T");
  train->add_option("--flow-steps", tr_flow_steps, "flow Euler steps K");
  train->add_option("--phi", tr_phi, "anchored perturbation bound");
  train->add_option("--anchored-prior", tr_anchored_prior, "diffusion | flow");
  train->add_option("--grad-clip", tr_grad_clip, "gradient norm clip (0 disables)");
  train->add_option("--clip", tr_clip, "target clip range lo hi")->expected(2);
  train->add_option("--kappa", tr_kappa, "quantile-Huber kappa");
  train->add_option("--epochs", tr_epochs, "epochs");
  train->add_option("--steps-per-epoch", tr_steps, "gradient steps per epoch");
  train->add_option("--eval-interval", tr_eval_interval, "epochs between evals");
  train->add_option("--eval-episodes", tr_eval_episodes, "episodes per eval");
  train->add_option("--eval-task", tr_eval_task, "bandit | corridor");
  train->add_option("--hazard", tr_hazard, "hazard spec JSON file");
  train->add_option("--seed", tr_seed, "master seed");
  train->add_option("--workers", tr_workers, "evaluation workers");

  // eval -------------------------------------------------------------------
  auto* ev = app.add_subcommand("eval", "Evaluate a checkpoint");
  std::string ev_ckpt, ev_task, ev_hazard, ev_seeds = "1", ev_dataset, ev_out;
  int ev_episodes = 10, ev_workers = 1;
  double ev_alpha = 0.1;
  bool ev_per_seed = false;
  ev->add_option("--ckpt", ev_ckpt, "checkpoint file")->required();
  ev->add_option("--task", ev_task, "bandit | corridor (default from checkpoint)");
  ev->add_option("--hazard", ev_hazard, "hazard spec JSON file");
  ev->add_option("--episodes", ev_episodes, "episodes per seed");
  ev->add_option("--seeds", ev_seeds, "comma-separated seed list");
  ev->add_option("--alpha", ev_alpha, "CVaR level");
  ev->add_option("--workers", ev_workers, "evaluation workers");
  ev->add_option("--dataset", ev_dataset, "dataset for the OOD action rate");
  ev->add_flag("--per-seed-cvar", ev_per_seed,
               "average per-seed CVaRs instead of pooling episodes");
  ev->add_option("--out", ev_out, "write the report JSON here");

  // ood --------------------------------------------------------------------
  auto* ood = app.add_subcommand("ood", "1-NN OOD action rate of a checkpoint");
  std::string ood_dataset, ood_ckpt, ood_out;
  double ood_kappa = 3.0;
  int ood_samples = 1000;
  std::uint64_t ood_seed = 1;
  ood->add_option("--dataset", ood_dataset, "dataset file")->required();
  ood->add_option("--ckpt", ood_ckpt, "checkpoint file")->required();
  ood->add_option("--kappa", ood_kappa, "threshold multiplier");
  ood->add_option("--samples", ood_samples, "actions to draw");
  ood->add_option("--seed", ood_seed, "sampling seed");
  ood->add_option("--out", ood_out, "write the report JSON here");

  // export -----------------------------------------------------------------
  auto* ex = app.add_subcommand("export", "Density histogram / Pareto frontier");
  std::string ex_ckpt, ex_log, ex_dataset, ex_out;
  int ex_samples = 1000, ex_resolution = 40;
  std::uint64_t ex_seed = 1;
  ex->add_option("--ckpt", ex_ckpt, "checkpoint (density export)");
  ex->add_option("--log", ex_log, "metrics.ndjson (frontier export)");
  ex->add_option("--dataset", ex_dataset, "dataset supplying states for sampling");
  ex->add_option("--samples", ex_samples, "actions to draw");
  ex->add_option("--resolution", ex_resolution, "histogram cells per axis");
  ex->add_option("--seed", ex_seed, "sampling seed");
  ex->add_option("--out", ex_out, "output CSV path")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << e.what() << "\n";
    return 2;
  }

  try {
    if (gen->parsed())
      return cmd_gen_data(gen_task, gen_n, gen_episodes, gen_seed, gen_hazard, gen_out);

    if (train->parsed()) {
      TrainConfig cfg;
      bool eta_set = train->count("--eta") > 0;
      bool distortion_set = train->count("--distortion") > 0;
      if (!tr_config.empty()) {
        const json j = load_json_file(tr_config);
        cfg = config_from_json(j);
        eta_set = eta_set || j.contains("eta");
        distortion_set = distortion_set || j.contains("distortion");
      }
      if (train->count("--actor")) cfg.actor = tr_actor;
      if (train->count("--eta")) cfg.eta = tr_eta;
      if (tr_alpha >= 0.0) cfg.risk.alpha = tr_alpha;
      if (!tr_distortion.empty()) cfg.risk.kind = risk_kind_from_string(tr_distortion);
      if (tr_wang > -99.0) cfg.risk.lambda = tr_wang;
      if (tr_cpw >= 0.0) cfg.risk.gamma = tr_cpw;
      if (tr_mc) cfg.mc_risk = true;
      if (tr_tail >= 1) cfg.risk.tail_samples = tr_tail;
      if (tr_lambda_bc >= 0.0) cfg.lambda_bc = tr_lambda_bc;
      if (tr_batch >= 1) cfg.batch = tr_batch;
      if (tr_gamma >= 0.0) cfg.gamma = tr_gamma;
      if (tr_tau_target >= 0.0) cfg.tau_target = tr_tau_target;
      if (tr_critic_lr >= 0.0) cfg.critic_lr = tr_critic_lr;
      if (tr_actor_lr >= 0.0) cfg.actor_lr = tr_actor_lr;
      if (tr_n_online >= 1) cfg.n_online = tr_n_online;
      if (tr_n_target >= 1) cfg.n_target = tr_n_target;
      if (tr_hidden_c >= 1) cfg.hidden_critic = tr_hidden_c;
      if (tr_hidden_a >= 1) cfg.hidden_actor = tr_hidden_a;
      if (tr_embed >= 1) cfg.embed_dim = tr_embed;
      if (tr_time >= 1) cfg.time_dim = tr_time;
      if (tr_diff_steps >= 1) cfg.diffusion_steps = tr_diff_steps;
      if (tr_flow_steps >= 1) cfg.flow_steps = tr_flow_steps;
      if (tr_phi >= 0.0) cfg.phi = tr_phi;
      if (!tr_anchored_prior.empty()) cfg.anchored_prior = tr_anchored_prior;
      if (tr_grad_clip >= 0.0) cfg.grad_clip = tr_grad_clip;
      if (!tr_clip.empty()) cfg.target_clip = std::make_pair(tr_clip[0], tr_clip[1]);
      if (tr_kappa > 0.0) cfg.huber_kappa = tr_kappa;
      if (tr_epochs >= 0 && train->count("--epochs")) cfg.epochs = tr_epochs;
      if (tr_steps >= 1) cfg.steps_per_epoch = tr_steps;
      if (tr_eval_interval >= 1) cfg.eval_interval = tr_eval_interval;
      if (tr_eval_episodes >= 1) cfg.eval_episodes = tr_eval_episodes;
      if (!tr_eval_task.empty()) cfg.eval_task = tr_eval_task;
      if (!tr_hazard.empty()) cfg.hazard = hazard_from_json(load_json_file(tr_hazard));
      if (train->count("--seed")) cfg.seed = tr_seed;
      if (tr_workers >= 1) cfg.workers = tr_workers;
      cfg.apply_actor_defaults(eta_set, distortion_set);
      if (!train->count("--eval-task") &&
          (tr_config.empty() || !load_json_file(tr_config).contains("eval_task"))) {
        // Default the evaluation task to the dataset's source tag.
        cfg.eval_task = load_dataset(tr_dataset).meta.source;
      }
      return cmd_train(cfg, tr_dataset, tr_out);
    }

    if (ev->parsed())
      return cmd_eval(ev_ckpt, ev_task, ev_hazard, ev_episodes, ev_seeds, ev_alpha,
                      ev_workers, ev_dataset, ev_out, ev_per_seed);
    if (ood->parsed())
      return cmd_ood(ood_dataset, ood_ckpt, ood_kappa, ood_samples, ood_seed, ood_out);
    if (ex->parsed())
      return cmd_export(ex_ckpt, ex_log, ex_samples, ex_resolution, ex_seed, ex_dataset,
                        ex_out);
    std::cerr << "no subcommand\n";
    return 2;
  } catch (const ParamError& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return 2;
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return 3;
  } catch (const FormatError& e) {
    std::cerr << "format error: " << e.what() << "\n";
    return 3;
  } catch (const NumericalError& e) {
    std::cerr << "numerical abort: " << e.what() << "\n";
    return 4;
  }
}
