#include "ramac/risk.hpp"

#include <algorithm>
#include <cassert>
#include <cmath>

#include "ramac/errors.hpp"

namespace ramac {

QuantileGrid make_grid(int n) {
  if (n < 1) throw ParamError("make_grid: N must be >= 1");
  QuantileGrid grid;
  grid.count = n;
  grid.taus.resize(n);
  for (int i = 0; i < n; ++i) grid.taus(i) = (i + 0.5) / n;
  return grid;
}

RiskKind risk_kind_from_string(const std::string& s) {
  if (s == "neutral") return RiskKind::neutral;
  if (s == "cvar") return RiskKind::cvar;
  if (s == "wang") return RiskKind::wang;
  if (s == "cpw") return RiskKind::cpw;
  throw ParamError("unknown risk distortion: " + s);
}

std::string to_string(RiskKind kind) {
  switch (kind) {
    case RiskKind::neutral: return "neutral";
    case RiskKind::cvar: return "cvar";
    case RiskKind::wang: return "wang";
    case RiskKind::cpw: return "cpw";
  }
  return "?";
}

void RiskSpec::validate() const {
  switch (kind) {
    case RiskKind::neutral:
      break;  // parameters ignored
    case RiskKind::cvar:
      if (!(alpha > 0.0 && alpha <= 1.0))
        throw ParamError("RiskSpec: cvar level must be in (0,1]");
      break;
    case RiskKind::wang:
      if (!std::isfinite(lambda)) throw ParamError("RiskSpec: wang shift must be finite");
      break;
    case RiskKind::cpw:
      if (!(gamma > 0.0)) throw ParamError("RiskSpec: cpw curvature must be positive");
      break;
  }
  if (tail_samples < 1) throw ParamError("RiskSpec: tail_samples must be >= 1");
}

double quantile_huber(double delta, double tau, double kappa) {
  if (!(tau > 0.0 && tau < 1.0)) throw ParamError("quantile_huber: tau must be in (0,1)");
  if (!(kappa > 0.0)) throw ParamError("quantile_huber: kappa must be positive");
  const double w = std::abs(tau - (delta < 0.0 ? 1.0 : 0.0));
  const double a = std::abs(delta);
  const double h = a <= kappa ? delta * delta / (2.0 * kappa) : a - kappa / 2.0;
  return w * h;
}

int cvar_head_count(double alpha, int n) {
  if (!(alpha > 0.0 && alpha <= 1.0)) throw ParamError("cvar: level must be in (0,1]");
  if (n < 1) throw ParamError("cvar: grid must be nonempty");
  // Small guard so exactly representable m/N levels survive rounding.
  const int m = static_cast<int>(std::floor(alpha * n + 1e-9));
  if (m < 1)
    throw ParamError("cvar: level too small, alpha*N < 1 leaves no head quantile");
  return std::min(m, n);
}

double cvar_grid(const Eigen::Ref<const Eigen::VectorXd>& values, double alpha) {
  const int n = static_cast<int>(values.size());
  const int m = cvar_head_count(alpha, n);
#ifndef NDEBUG
  for (int i = 1; i < n; ++i) assert(values(i) >= values(i - 1) && "cvar_grid: values not ascending");
#endif
  return values.head(m).mean();
}

double cvar_dual_discrete(const std::vector<std::pair<double, double>>& pmf,
                          double alpha) {
  if (!(alpha > 0.0 && alpha <= 1.0)) throw ParamError("cvar_dual_discrete: alpha in (0,1]");
  if (pmf.empty()) throw DataError("cvar_dual_discrete: empty pmf");
  double total = 0.0;
  for (const auto& [x, p] : pmf) {
    if (p < 0.0 || !std::isfinite(x)) throw DataError("cvar_dual_discrete: bad atom");
    total += p;
  }
  if (std::abs(total - 1.0) > 1e-9)
    throw DataError("cvar_dual_discrete: pmf does not sum to 1");

  std::vector<std::pair<double, double>> atoms = pmf;
  std::sort(atoms.begin(), atoms.end());
  // dq/dP <= 1/alpha and the infimum loads the lowest outcomes, so q assigns
  // min(cum, alpha) increments scanned in ascending order.
  double acc = 0.0, used = 0.0, value = 0.0;
  for (const auto& [x, p] : atoms) {
    const double take = std::min(p, alpha - used);
    if (take <= 0.0) break;
    value += take * x;
    used += take;
    acc += p;
    if (used >= alpha) break;
  }
  (void)acc;
  if (used < alpha - 1e-12) {
    // Rounding left a sliver; assign it to the largest outcome.
    value += (alpha - used) * atoms.back().first;
    used = alpha;
  }
  return value / alpha;
}

Eigen::VectorXd distortion_weights(const RiskSpec& spec, const QuantileGrid& grid) {
  spec.validate();
  const int n = grid.count;
  if (n < 1) throw ParamError("distortion_weights: empty grid");
  Eigen::VectorXd w(n);
  switch (spec.kind) {
    case RiskKind::neutral:
      w.setConstant(1.0 / n);
      break;
    case RiskKind::cvar: {
      const int m = cvar_head_count(spec.alpha, n);
      w.setZero();
      w.head(m).setConstant(1.0 / m);
      break;
    }
    case RiskKind::wang:
    case RiskKind::cpw: {
      auto g = [&](double u) -> double {
        if (u <= 0.0) return 0.0;
        if (u >= 1.0) return 1.0;
        if (spec.kind == RiskKind::wang)
          return normal_cdf(normal_quantile(u) + spec.lambda);
        const double a = std::pow(u, spec.gamma);
        const double b = std::pow(1.0 - u, spec.gamma);
        return a / std::pow(a + b, 1.0 / spec.gamma);
      };
      // CPW curvatures below the monotonicity threshold dip locally, so
      // difference the running-max envelope; it telescopes to exactly 1.
      double running = 0.0;
      for (int i = 0; i < n; ++i) {
        const double edge_hi = static_cast<double>(i + 1) / n;
        const double lifted = std::max(running, g(edge_hi));
        w(i) = lifted - running;
        running = lifted;
      }
      break;
    }
  }
  return w;
}

Eigen::VectorXd sample_tail_taus(double alpha, int k, Rng& rng) {
  if (!(alpha > 0.0 && alpha <= 1.0)) throw ParamError("sample_tail_taus: alpha in (0,1]");
  if (k < 1) throw ParamError("sample_tail_taus: K must be >= 1");
  Eigen::VectorXd taus(k);
  for (int i = 0; i < k; ++i) taus(i) = rng.uniform() * alpha;
  return taus;
}

double normal_cdf(double x) { return 0.5 * std::erfc(-x * M_SQRT1_2); }

double normal_quantile(double p) {
  if (!(p > 0.0 && p < 1.0)) throw ParamError("normal_quantile: p must be in (0,1)");
  // Acklam's rational approximation, then one Halley refinement via erfc.
  static const double a[] = {-3.969683028665376e+01, 2.209460984245205e+02,
                             -2.759285104469687e+02, 1.383577518672690e+02,
                             -3.066479806614716e+01, 2.506628277459239e+00};
  static const double b[] = {-5.447609879822406e+01, 1.615858368580409e+02,
                             -1.556989798598866e+02, 6.680131188771972e+01,
                             -1.328068155288572e+01};
  static const double c[] = {-7.784894002430293e-03, -3.223964580411365e-01,
                             -2.400758277161838e+00, -2.549732539343734e+00,
                             4.374664141464968e+00,  2.938163982698783e+00};
  static const double d[] = {7.784695709041462e-03, 3.224671290700398e-01,
                             2.445134137142996e+00, 3.754408661907416e+00};
  const double plow = 0.02425, phigh = 1.0 - plow;
  double x;
  if (p < plow) {
    const double q = std::sqrt(-2.0 * std::log(p));
    x = (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
        ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
  } else if (p <= phigh) {
    const double q = p - 0.5, r = q * q;
    x = (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * q /
        (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1.0);
  } else {
    const double q = std::sqrt(-2.0 * std::log(1.0 - p));
    x = -(((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
        ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
  }
  // Halley step pushes the approximation to near machine precision.
  const double e = normal_cdf(x) - p;
  const double u = e * std::sqrt(2.0 * M_PI) * std::exp(x * x / 2.0);
  return x - u / (1.0 + x * u / 2.0);
}

}  // namespace ramac
