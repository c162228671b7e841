#include "ramac/dataset.hpp"

#include <cmath>
#include <cstring>
#include <fstream>

#include <nlohmann/json.hpp>

#include "ramac/errors.hpp"

namespace ramac {

using nlohmann::json;

namespace {

constexpr char kMagic[4] = {'R', 'M', 'D', 'S'};
constexpr double kPi = 3.14159265358979323846;
constexpr double kCorridorDt = 0.1;
constexpr double kCorridorVmax = 2.0;

}  // namespace

void OfflineDataset::validate() const {
  const Eigen::Index n = actions.rows();
  if (states.rows() != n || next_states.rows() != n || rewards.size() != n ||
      static_cast<Eigen::Index>(terminals.size()) != n)
    throw DataError("OfflineDataset: column lengths differ");
  if (states.cols() != meta.state_dim || actions.cols() != meta.action_dim ||
      next_states.cols() != meta.state_dim)
    throw DataError("OfflineDataset: metadata dims do not match columns");
  if (!rewards.allFinite()) throw DataError("OfflineDataset: non-finite reward");
}

nlohmann::json hazard_to_json(const HazardSpec& spec) {
  json j;
  j["signal"] = spec.signal;
  j["threshold"] = spec.threshold;
  j["penalty"] = spec.penalty;
  j["prob"] = spec.prob;
  if (spec.term_threshold) j["term_threshold"] = *spec.term_threshold;
  else j["term_threshold"] = nullptr;
  j["max_steps"] = spec.max_steps;
  return j;
}

HazardSpec hazard_from_json(const nlohmann::json& j) {
  HazardSpec spec;
  spec.signal = j.value("signal", spec.signal);
  spec.threshold = j.value("threshold", spec.threshold);
  spec.penalty = j.value("penalty", spec.penalty);
  spec.prob = j.value("prob", spec.prob);
  if (j.contains("term_threshold") && !j.at("term_threshold").is_null())
    spec.term_threshold = j.at("term_threshold").get<double>();
  spec.max_steps = j.value("max_steps", spec.max_steps);
  spec.validate();
  return spec;
}

void HazardSpec::validate() const {
  if (signal < 0) throw ParamError("HazardSpec: signal index must be >= 0");
  if (!(prob >= 0.0 && prob <= 1.0)) throw ParamError("HazardSpec: prob in [0,1]");
  if (penalty > 0.0) throw ParamError("HazardSpec: penalty must be <= 0");
  if (max_steps < 1) throw ParamError("HazardSpec: max_steps must be >= 1");
}

OfflineDataset generate_risky_bandit(Eigen::Index n, std::uint64_t seed) {
  if (n < 1) throw ParamError("generate_risky_bandit: N must be >= 1");
  OfflineDataset ds;
  ds.meta.state_dim = 2;
  ds.meta.action_dim = 2;
  ds.meta.action_lo = -1.0;
  ds.meta.action_hi = 1.0;
  ds.meta.seed = seed;
  ds.meta.source = "bandit";
  ds.states = Eigen::MatrixXd::Zero(n, 2);
  ds.next_states = Eigen::MatrixXd::Zero(n, 2);
  ds.actions.resize(n, 2);
  ds.rewards.resize(n);
  ds.terminals.assign(n, 1);

  Rng rng(derive_seed(seed, "bandit"));
  for (Eigen::Index i = 0; i < n; ++i) {
    if (rng.uniform() < 0.8) {
      const double radius = rng.normal(0.9, 0.04);
      const double angle = rng.uniform(0.0, 2.0 * kPi);
      ds.actions(i, 0) = radius * std::cos(angle);
      ds.actions(i, 1) = radius * std::sin(angle);
      double r = rng.normal(9.0, 0.3);
      if (rng.uniform() < 0.05) r -= 40.0;  // trap penalty is additive
      ds.rewards(i) = r;
    } else {
      ds.actions(i, 0) = rng.normal(0.0, 0.1);
      ds.actions(i, 1) = rng.normal(0.0, 0.1);
      ds.rewards(i) = rng.normal(5.0, 0.3);
    }
  }
  ds.actions = ds.actions.cwiseMax(-1.0).cwiseMin(1.0);
  return ds;
}

double bandit_reward(const Eigen::Vector2d& action, Rng& rng) {
  if (bandit_in_ring(action)) {
    double r = rng.normal(9.0, 0.3);
    if (rng.uniform() < 0.05) r -= 40.0;
    return r;
  }
  if (bandit_in_center(action)) return rng.normal(5.0, 0.3);
  return 0.0;
}

std::vector<Transition> corridor_mdp(const HazardSpec& spec, const Policy& policy,
                                     int horizon, std::uint64_t seed) {
  spec.validate();
  if (horizon < 1 || horizon > spec.max_steps)
    throw ParamError("corridor_mdp: horizon must be in [1, max_steps]");
  Rng rng(derive_seed(seed, "corridor"));
  std::vector<Transition> episode;
  episode.reserve(horizon);
  Eigen::VectorXd s = Eigen::VectorXd::Zero(2);  // (position, velocity)
  for (int t = 0; t < horizon; ++t) {
    Eigen::VectorXd a = policy(s, rng);
    if (a.size() != 1) throw ShapeError("corridor_mdp: action must be 1-D");
    const double acc = std::clamp(a(0), -1.0, 1.0);
    Eigen::VectorXd s2(2);
    s2(1) = std::clamp(s(1) + kCorridorDt * acc, -kCorridorVmax, kCorridorVmax);
    s2(0) = s(0) + kCorridorDt * s2(1);
    double reward = s2(1);
    if (s2(1) > spec.threshold && spec.prob > 0.0 && rng.uniform() < spec.prob)
      reward += spec.penalty;
    bool terminal = false;
    if (spec.term_threshold && std::abs(s2(1)) > *spec.term_threshold) terminal = true;
    if (t + 1 == horizon) terminal = true;
    Transition tr;
    tr.state = s;
    tr.action = Eigen::VectorXd::Constant(1, acc);
    tr.reward = reward;
    tr.next_state = s2;
    tr.terminal = terminal;
    episode.push_back(std::move(tr));
    if (terminal) break;
    s = s2;
  }
  return episode;
}

OfflineDataset make_corridor_dataset(int episodes, const HazardSpec& spec,
                                     std::uint64_t seed) {
  if (episodes < 1) throw ParamError("make_corridor_dataset: episodes >= 1");
  std::vector<Transition> all;
  Rng meta_rng(derive_seed(seed, "corridor-behavior"));
  for (int e = 0; e < episodes; ++e) {
    // Mixture behavior: some episodes chase velocities past the hazard
    // threshold, others stay below it.
    const double target_v = meta_rng.uniform(0.2, 1.8);
    Policy behavior = [target_v](const Eigen::VectorXd& s, Rng& rng) {
      const double u = 4.0 * (target_v - s(1)) + 0.3 * rng.normal();
      return Eigen::VectorXd::Constant(1, std::clamp(u, -1.0, 1.0));
    };
    auto ep = corridor_mdp(spec, behavior, spec.max_steps,
                           derive_seed(seed, "ep" + std::to_string(e)));
    all.insert(all.end(), ep.begin(), ep.end());
  }

  OfflineDataset ds;
  ds.meta.state_dim = 2;
  ds.meta.action_dim = 1;
  ds.meta.seed = seed;
  ds.meta.source = "corridor";
  const Eigen::Index n = static_cast<Eigen::Index>(all.size());
  ds.states.resize(n, 2);
  ds.actions.resize(n, 1);
  ds.rewards.resize(n);
  ds.next_states.resize(n, 2);
  ds.terminals.resize(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    ds.states.row(i) = all[i].state.transpose();
    ds.actions.row(i) = all[i].action.transpose();
    ds.rewards(i) = all[i].reward;
    ds.next_states.row(i) = all[i].next_state.transpose();
    ds.terminals[i] = all[i].terminal ? 1 : 0;
  }
  return ds;
}

OfflineDataset hazard_relabel(const OfflineDataset& ds, const HazardSpec& spec,
                              std::uint64_t seed) {
  spec.validate();
  ds.validate();
  if (spec.signal >= ds.meta.state_dim)
    throw DataError("hazard_relabel: signal index out of range");
  OfflineDataset out = ds;
  Rng rng(derive_seed(seed, "hazard"));
  for (Eigen::Index i = 0; i < ds.size(); ++i) {
    const double sig = ds.next_states(i, spec.signal);
    if (sig > spec.threshold && spec.prob > 0.0 && rng.uniform() < spec.prob)
      out.rewards(i) += spec.penalty;
    if (spec.term_threshold && std::abs(sig) > *spec.term_threshold)
      out.terminals[i] = 1;
  }
  return out;
}

namespace {

void write_f32_block(std::ofstream& os, const Eigen::MatrixXd& m) {
  // Row-major little-endian f32.
  std::vector<float> buf(m.rows() * m.cols());
  for (Eigen::Index i = 0; i < m.rows(); ++i)
    for (Eigen::Index j = 0; j < m.cols(); ++j)
      buf[i * m.cols() + j] = static_cast<float>(m(i, j));
  os.write(reinterpret_cast<const char*>(buf.data()),
           static_cast<std::streamsize>(buf.size() * sizeof(float)));
}

Eigen::MatrixXd read_f32_block(std::ifstream& is, Eigen::Index rows, Eigen::Index cols) {
  std::vector<float> buf(rows * cols);
  is.read(reinterpret_cast<char*>(buf.data()),
          static_cast<std::streamsize>(buf.size() * sizeof(float)));
  if (!is) throw FormatError("dataset: truncated column block");
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i)
    for (Eigen::Index j = 0; j < cols; ++j) m(i, j) = buf[i * cols + j];
  return m;
}

}  // namespace

void save_dataset(const OfflineDataset& ds, const std::string& path) {
  ds.validate();
  const Eigen::Index n = ds.size();
  json header;
  header["version"] = "1";
  header["meta"] = {{"state_dim", ds.meta.state_dim},
                    {"action_dim", ds.meta.action_dim},
                    {"action_lo", ds.meta.action_lo},
                    {"action_hi", ds.meta.action_hi},
                    {"seed", ds.meta.seed},
                    {"source", ds.meta.source}};
  header["columns"] = json::array();
  auto col = [&](const std::string& name, Eigen::Index rows, Eigen::Index cols) {
    header["columns"].push_back({{"name", name}, {"rows", rows}, {"cols", cols}, {"dtype", "f32"}});
  };
  col("states", n, ds.meta.state_dim);
  col("actions", n, ds.meta.action_dim);
  col("rewards", n, 1);
  col("next_states", n, ds.meta.state_dim);
  col("terminals", n, 1);

  std::ofstream os(path, std::ios::binary);
  if (!os) throw DataError("save_dataset: cannot open " + path);
  const std::string head = header.dump();
  const std::uint32_t len = static_cast<std::uint32_t>(head.size());
  os.write(kMagic, 4);
  os.write(reinterpret_cast<const char*>(&len), 4);
  os.write(head.data(), static_cast<std::streamsize>(head.size()));
  write_f32_block(os, ds.states);
  write_f32_block(os, ds.actions);
  write_f32_block(os, ds.rewards);
  write_f32_block(os, ds.next_states);
  Eigen::MatrixXd term(n, 1);
  for (Eigen::Index i = 0; i < n; ++i) term(i, 0) = ds.terminals[i] ? 1.0 : 0.0;
  write_f32_block(os, term);
  if (!os) throw DataError("save_dataset: write failed for " + path);
}

OfflineDataset load_dataset(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw FormatError("load_dataset: cannot open " + path);
  char magic[4];
  is.read(magic, 4);
  if (!is || std::memcmp(magic, kMagic, 4) != 0)
    throw FormatError("load_dataset: bad magic");
  std::uint32_t len = 0;
  is.read(reinterpret_cast<char*>(&len), 4);
  if (!is) throw FormatError("load_dataset: truncated header length");
  std::string head(len, '\0');
  is.read(head.data(), len);
  if (!is) throw FormatError("load_dataset: truncated header");
  json header;
  try {
    header = json::parse(head);
  } catch (const json::exception& e) {
    throw FormatError(std::string("load_dataset: malformed header: ") + e.what());
  }
  if (header.value("version", "") != "1")
    throw FormatError("load_dataset: unknown version");

  OfflineDataset ds;
  const json& meta = header.at("meta");
  ds.meta.state_dim = meta.at("state_dim").get<int>();
  ds.meta.action_dim = meta.at("action_dim").get<int>();
  ds.meta.action_lo = meta.at("action_lo").get<double>();
  ds.meta.action_hi = meta.at("action_hi").get<double>();
  ds.meta.seed = meta.at("seed").get<std::uint64_t>();
  ds.meta.source = meta.at("source").get<std::string>();

  for (const json& c : header.at("columns")) {
    const std::string name = c.at("name").get<std::string>();
    const Eigen::Index rows = c.at("rows").get<Eigen::Index>();
    const Eigen::Index cols = c.at("cols").get<Eigen::Index>();
    if (c.value("dtype", "") != "f32") throw FormatError("load_dataset: unknown dtype");
    Eigen::MatrixXd m = read_f32_block(is, rows, cols);
    if (name == "states") ds.states = std::move(m);
    else if (name == "actions") ds.actions = std::move(m);
    else if (name == "rewards") ds.rewards = m.col(0);
    else if (name == "next_states") ds.next_states = std::move(m);
    else if (name == "terminals") {
      ds.terminals.resize(rows);
      for (Eigen::Index i = 0; i < rows; ++i) ds.terminals[i] = m(i, 0) != 0.0 ? 1 : 0;
    } else {
      throw FormatError("load_dataset: unknown column " + name);
    }
  }
  try {
    ds.validate();
  } catch (const DataError& e) {
    throw FormatError(std::string("load_dataset: ") + e.what());
  }
  return ds;
}

std::string file_content_hash(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw DataError("file_content_hash: cannot open " + path);
  std::uint64_t h = 0xcbf29ce484222325ULL;
  char buf[4096];
  while (is.read(buf, sizeof(buf)) || is.gcount() > 0) {
    for (std::streamsize i = 0; i < is.gcount(); ++i) {
      h ^= static_cast<unsigned char>(buf[i]);
      h *= 0x100000001b3ULL;
    }
    if (!is) break;
  }
  char out[17];
  std::snprintf(out, sizeof(out), "%016llx", static_cast<unsigned long long>(h));
  return std::string(out);
}

}  // namespace ramac
