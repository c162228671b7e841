#pragma once

#include <filesystem>
#include <string>

#include "ramac/actors.hpp"
#include "ramac/critic.hpp"

namespace ramac::testing {

// Deterministic stub policy emitting one fixed raw action row (box-clamped).
class ConstantActor : public Actor {
 public:
  ConstantActor(Eigen::RowVectorXd raw, int state_dim_, ActionBox box_)
      : raw_(std::move(raw)) {
    state_dim = state_dim_;
    action_dim = static_cast<int>(raw_.size());
    box = box_;
  }

  ad::Var sample(ad::Tape& tape, const Eigen::MatrixXd& states, Rng&) override {
    return tape.clamp(tape.constant(raw_.replicate(states.rows(), 1)), box.lo, box.hi);
  }
  ad::Var bc_loss(ad::Tape& tape, const Eigen::MatrixXd&, const Eigen::MatrixXd&,
                  Rng&) override {
    return tape.scalar(0.0);
  }
  std::vector<ad::Param*> params() override { return {}; }
  std::string kind() const override { return "stub"; }
  nlohmann::json path_config() const override { return nlohmann::json::object(); }

 private:
  Eigen::RowVectorXd raw_;
};

// Tiny differentiable policy: action row = theta, identically in the state.
class AffineActor : public Actor {
 public:
  AffineActor(int state_dim_, const Eigen::RowVectorXd& theta0, ActionBox box_)
      : theta("theta", theta0) {
    state_dim = state_dim_;
    action_dim = static_cast<int>(theta0.size());
    box = box_;
  }

  ad::Var sample(ad::Tape& tape, const Eigen::MatrixXd& states, Rng&) override {
    return tape.clamp(tape.tile_rows(tape.leaf(theta), static_cast<int>(states.rows())),
                      box.lo, box.hi);
  }
  ad::Var bc_loss(ad::Tape& tape, const Eigen::MatrixXd&, const Eigen::MatrixXd& actions,
                  Rng&) override {
    ad::Var d = tape.sub(tape.tile_rows(tape.leaf(theta), static_cast<int>(actions.rows())),
                         tape.constant(actions));
    return tape.mean(tape.hadamard(d, d));
  }
  std::vector<ad::Param*> params() override { return {&theta}; }
  std::string kind() const override { return "affine"; }
  nlohmann::json path_config() const override { return nlohmann::json::object(); }

  ad::Param theta;
};

inline void zero_params(const std::vector<ad::Param*>& params) {
  for (ad::Param* p : params) p->value.setZero();
}

// Forces every head of the critic to output exactly `c` for any input.
inline void set_critic_constant(Critic& critic, double c) {
  zero_params(critic.online_params());
  zero_params(critic.target_params());
  for (QuantileHead* head : {&critic.online[0], &critic.online[1], &critic.target[0],
                             &critic.target[1]})
    head->post.layers.back().b.value(0, 0) = c;
}

inline void copy_params(const std::vector<ad::Param*>& dst,
                        const std::vector<ad::Param*>& src) {
  for (std::size_t i = 0; i < dst.size(); ++i) dst[i]->value = src[i]->value;
}

inline std::string temp_dir(const std::string& name) {
  auto p = std::filesystem::temp_directory_path() / name;
  std::filesystem::create_directories(p);
  return p.string();
}

}  // namespace ramac::testing
