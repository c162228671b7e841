#include "ramac/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "ramac/errors.hpp"

namespace ramac {

using nlohmann::json;

json EvalReport::to_json() const {
  json j;
  j["mean"] = mean;
  j["cvar"] = cvar;
  j["alpha"] = alpha;
  j["episodes"] = episodes;
  j["violations"] = violations;
  if (eps_act) j["eps_act"] = {{"rate", eps_act->first}, {"se", eps_act->second}};
  j["seeds"] = seeds;
  return j;
}

double episodic_cvar(const std::vector<double>& returns, double alpha) {
  if (returns.empty()) throw ParamError("episodic_cvar: empty returns");
  if (!(alpha > 0.0 && alpha <= 1.0)) throw ParamError("episodic_cvar: alpha in (0,1]");
  const std::size_t n = returns.size();
  const std::size_t tail = std::min<std::size_t>(
      n, static_cast<std::size_t>(std::ceil(alpha * static_cast<double>(n) - 1e-12)));
  std::vector<double> sorted = returns;
  std::sort(sorted.begin(), sorted.end());
  double sum = 0.0;
  for (std::size_t i = 0; i < tail; ++i) sum += sorted[i];
  return sum / static_cast<double>(tail);
}

namespace {

// Per-row distance from each query to its nearest dataset row, with an
// optional leave-one-out index to skip.
double nearest_distance(const Eigen::MatrixXd& points, const Eigen::RowVectorXd& q,
                        Eigen::Index skip) {
  double best = std::numeric_limits<double>::infinity();
  for (Eigen::Index i = 0; i < points.rows(); ++i) {
    if (i == skip) continue;
    const double d = (points.row(i) - q).squaredNorm();
    if (d < best) best = d;
  }
  return std::sqrt(best);
}

}  // namespace

std::pair<double, double> ood_rate_1nn(const Eigen::MatrixXd& dataset_actions,
                                       const Eigen::MatrixXd& eval_actions,
                                       const OODConfig& config) {
  if (dataset_actions.rows() < 2)
    throw ParamError("ood_rate_1nn: need at least 2 dataset actions");
  if (!(config.kappa > 0.0)) throw ParamError("ood_rate_1nn: kappa > 0");
  if (eval_actions.rows() < 1) throw ParamError("ood_rate_1nn: empty eval actions");
  if (eval_actions.cols() != dataset_actions.cols())
    throw ShapeError("ood_rate_1nn: action dims differ");

  const Eigen::Index n = dataset_actions.rows();
  std::vector<double> spacings(n);
  for (Eigen::Index i = 0; i < n; ++i)
    spacings[i] = nearest_distance(dataset_actions, dataset_actions.row(i), i);
  std::sort(spacings.begin(), spacings.end());
  const double med_nn = n % 2 == 1 ? spacings[n / 2]
                                   : 0.5 * (spacings[n / 2 - 1] + spacings[n / 2]);
  const double tau = config.kappa * med_nn;

  const Eigen::Index t = eval_actions.rows();
  Eigen::Index ood = 0;
  for (Eigen::Index i = 0; i < t; ++i)
    if (nearest_distance(dataset_actions, eval_actions.row(i), -1) > tau) ++ood;
  const double rate = static_cast<double>(ood) / static_cast<double>(t);
  const double se = std::sqrt(rate * (1.0 - rate) / static_cast<double>(t));
  return {rate, se};
}

KlFenceResult kl_fence_check(const Eigen::VectorXd& beta, const Eigen::VectorXd& pi) {
  if (beta.size() != pi.size()) throw DataError("kl_fence_check: atom counts differ");
  if (beta.size() < 1) throw DataError("kl_fence_check: empty pmfs");
  if ((beta.array() < 0.0).any() || (pi.array() < 0.0).any())
    throw DataError("kl_fence_check: negative mass");
  if (std::abs(beta.sum() - 1.0) > 1e-9 || std::abs(pi.sum() - 1.0) > 1e-9)
    throw DataError("kl_fence_check: pmfs must sum to 1");

  KlFenceResult res;
  double kl = 0.0;
  for (Eigen::Index i = 0; i < beta.size(); ++i) {
    if (beta(i) > 0.0) {
      if (pi(i) <= 0.0) {
        kl = std::numeric_limits<double>::infinity();
        break;
      }
      kl += beta(i) * std::log(beta(i) / pi(i));
    } else {
      res.delta += pi(i);
    }
  }
  res.bound = std::isinf(kl) ? 1.0 : 1.0 - std::exp(-kl);
  res.holds = res.delta <= res.bound + 1e-12;
  return res;
}

int violation_count(const std::vector<Transition>& episode, const HazardSpec& spec) {
  spec.validate();
  int count = 0;
  for (const Transition& tr : episode) {
    if (spec.signal >= tr.next_state.size())
      throw DataError("violation_count: signal index out of range");
    if (tr.next_state(spec.signal) > spec.threshold) ++count;
  }
  return count;
}

std::vector<FrontierPoint> pareto_points(const std::vector<FrontierPoint>& snapshots) {
  if (snapshots.empty()) throw ParamError("pareto_points: empty input");
  std::vector<FrontierPoint> out;
  for (const FrontierPoint& p : snapshots) {
    bool dominated = false;
    for (const FrontierPoint& q : snapshots) {
      const bool leq = q.violations <= p.violations && q.mean_return >= p.mean_return;
      const bool strict = q.violations < p.violations || q.mean_return > p.mean_return;
      if (leq && strict) {
        dominated = true;
        break;
      }
    }
    if (!dominated) out.push_back(p);
  }
  std::stable_sort(out.begin(), out.end(),
                   [](const FrontierPoint& a, const FrontierPoint& b) { return a.step < b.step; });
  return out;
}

void density_export(const Eigen::MatrixXd& actions, int resolution, std::ostream& os) {
  if (actions.cols() != 2) throw ParamError("density_export: actions must be 2-D");
  if (resolution < 1) throw ParamError("density_export: resolution >= 1");
  if (actions.rows() < 1) throw ParamError("density_export: no samples");

  const int r = resolution;
  Eigen::MatrixXd mass = Eigen::MatrixXd::Zero(r, r);
  const double cell = 2.0 / r;
  for (Eigen::Index i = 0; i < actions.rows(); ++i) {
    int ix = static_cast<int>(std::floor((actions(i, 0) + 1.0) / cell));
    int iy = static_cast<int>(std::floor((actions(i, 1) + 1.0) / cell));
    ix = std::clamp(ix, 0, r - 1);
    iy = std::clamp(iy, 0, r - 1);
    mass(ix, iy) += 1.0;
  }
  mass /= static_cast<double>(actions.rows());

  os << "x_lo,x_hi,y_lo,y_hi,mass\n";
  char line[160];
  for (int ix = 0; ix < r; ++ix)
    for (int iy = 0; iy < r; ++iy) {
      std::snprintf(line, sizeof(line), "%.10g,%.10g,%.10g,%.10g,%.12g\n",
                    -1.0 + ix * cell, -1.0 + (ix + 1) * cell, -1.0 + iy * cell,
                    -1.0 + (iy + 1) * cell, mass(ix, iy));
      os << line;
    }
}

}  // namespace ramac
