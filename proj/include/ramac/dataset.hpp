#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <nlohmann/json.hpp>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "ramac/rng.hpp"

namespace ramac {

struct Transition {
  Eigen::VectorXd state;
  Eigen::VectorXd action;
  double reward = 0.0;
  Eigen::VectorXd next_state;
  bool terminal = false;
};

struct DatasetMeta {
  int state_dim = 0;
  int action_dim = 0;
  double action_lo = -1.0;
  double action_hi = 1.0;
  std::uint64_t seed = 0;
  std::string source;
};

// Columnar logged data; all column row counts match.
struct OfflineDataset {
  DatasetMeta meta;
  Eigen::MatrixXd states;       // n x state_dim
  Eigen::MatrixXd actions;      // n x action_dim
  Eigen::VectorXd rewards;      // n
  Eigen::MatrixXd next_states;  // n x state_dim
  std::vector<std::uint8_t> terminals;

  Eigen::Index size() const { return actions.rows(); }
  void validate() const;
};

// Stochastic-hazard description; also the JSON schema accepted by the CLI
// (fields: signal, threshold, penalty, prob, term_threshold, max_steps).
struct HazardSpec {
  int signal = 1;            // monitored component of next_state
  double threshold = 1.0;
  double penalty = -70.0;    // <= 0
  double prob = 0.05;        // in [0,1]
  std::optional<double> term_threshold;  // early termination on |signal|
  int max_steps = 200;

  void validate() const;
};

nlohmann::json hazard_to_json(const HazardSpec& spec);
HazardSpec hazard_from_json(const nlohmann::json& j);

// Two-mode contextual bandit: 80% ring (radius 0.9 +- 0.04, reward N(9,0.3^2)
// with a -40 trap at probability 0.05) and 20% centre (N(0,0.1^2 I), reward
// N(5,0.3^2)). One-step episodes, dummy zero states, actions in [-1,1]^2.
OfflineDataset generate_risky_bandit(Eigen::Index n, std::uint64_t seed);

// Stochastic reward for an arbitrary action: classifies to ring band
// (| |a|-0.9 | <= 0.12), centre ball (|a| <= 0.3) or background (reward 0).
double bandit_reward(const Eigen::Vector2d& action, Rng& rng);

inline bool bandit_in_ring(const Eigen::Vector2d& a) {
  return std::abs(a.norm() - 0.9) <= 0.12;
}
inline bool bandit_in_center(const Eigen::Vector2d& a) { return a.norm() <= 0.3; }

// 1-D double integrator: state (position, velocity), action = acceleration in
// [-1,1], base reward = velocity after the step. Breaching the hazard
// threshold adds `penalty` with probability `prob`; optional early
// termination on |velocity| > term_threshold.
using Policy = std::function<Eigen::VectorXd(const Eigen::VectorXd& state, Rng& rng)>;

std::vector<Transition> corridor_mdp(const HazardSpec& spec, const Policy& policy,
                                     int horizon, std::uint64_t seed);

// Offline corridor data from a mixture behavior policy (per-episode random
// target velocity, proportional control + exploration noise).
OfflineDataset make_corridor_dataset(int episodes, const HazardSpec& spec,
                                     std::uint64_t seed);

// Rewrites rewards/terminals where the monitored next-state signal breaches
// the threshold; states and actions are untouched.
OfflineDataset hazard_relabel(const OfflineDataset& ds, const HazardSpec& spec,
                              std::uint64_t seed);

// File format: "RMDS" magic, u32 little-endian header length, JSON header
// (version "1", metadata, column directory), then raw little-endian float32
// row-major column blocks.
void save_dataset(const OfflineDataset& ds, const std::string& path);
OfflineDataset load_dataset(const std::string& path);

// FNV-1a over the file bytes, hex encoded; used by run manifests.
std::string file_content_hash(const std::string& path);

}  // namespace ramac
