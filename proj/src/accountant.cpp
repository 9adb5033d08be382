#include "dpwavelet/accountant.hpp"

#include <cmath>
#include <limits>

namespace dpw::accountant {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

double log_binom(int n, int k) {
  return std::lgamma(n + 1.0) - std::lgamma(k + 1.0) - std::lgamma(n - k + 1.0);
}

double logsumexp(const std::vector<double>& terms) {
  double mx = -kInf;
  for (double t : terms) mx = std::max(mx, t);
  if (mx == -kInf) return -kInf;
  double s = 0.0;
  for (double t : terms) s += std::exp(t - mx);
  return mx + std::log(s);
}

}  // namespace

std::vector<double> default_orders() {
  std::vector<double> orders;
  for (int a = 2; a <= 64; ++a) orders.push_back(a);
  for (int a : {80, 128, 256, 512}) orders.push_back(a);
  return orders;
}

RdpCurve rdp_subsampled_gaussian(double q, double sigma,
                                 const std::vector<double>& orders) {
  if (q < 0.0 || q > 1.0) throw ConfigError("accountant: q must be in [0,1]");
  if (sigma < 0.0) throw ConfigError("accountant: sigma must be >= 0");
  RdpCurve curve;
  curve.q = q;
  curve.sigma = sigma;
  curve.orders = orders;
  curve.rdp.reserve(orders.size());
  for (double order : orders) {
    const int alpha = int(std::llround(order));
    if (alpha < 2 || double(alpha) != order)
      throw ConfigError("accountant: orders must be integers >= 2");
    if (q == 0.0) {
      curve.rdp.push_back(0.0);
      continue;
    }
    if (sigma == 0.0) {
      curve.rdp.push_back(kInf);
      continue;
    }
    // E_{x~N(0,1)} [ ((1-q) + q e^{(2x-1)/(2s^2)})^alpha ] expanded via the
    // binomial theorem; the k-th moment of the ratio is e^{k(k-1)/(2s^2)}.
    std::vector<double> terms;
    terms.reserve(alpha + 1);
    for (int k = 0; k <= alpha; ++k) {
      if (q < 1.0) {
        terms.push_back(log_binom(alpha, k) + (alpha - k) * std::log1p(-q) +
                        k * std::log(q) +
                        k * (k - 1.0) / (2.0 * sigma * sigma));
      } else if (k == alpha) {
        terms.push_back(k * (k - 1.0) / (2.0 * sigma * sigma));
      }
    }
    curve.rdp.push_back(std::max(0.0, logsumexp(terms) / (alpha - 1.0)));
  }
  return curve;
}

double compose_and_convert(const RdpCurve& curve, int steps, double delta) {
  if (steps < 0) throw ConfigError("accountant: negative step count");
  if (delta <= 0.0 || delta >= 1.0)
    throw ConfigError("accountant: delta must be in (0,1)");
  if (steps == 0) return 0.0;
  double best = kInf;
  for (size_t i = 0; i < curve.orders.size(); ++i) {
    const double alpha = curve.orders[i];
    const double rdp_t = steps * curve.rdp[i];
    if (!std::isfinite(rdp_t)) continue;
    // Canonne-Kairouz-Steinke style conversion
    const double eps = rdp_t + std::log((alpha - 1.0) / alpha) -
                       (std::log(delta) + std::log(alpha)) / (alpha - 1.0);
    best = std::min(best, std::max(0.0, eps));
  }
  return best;  // +inf when every order was infinite (sigma == 0)
}

double calibrate_sigma(const PrivacySpec& target, double q, int steps) {
  target.validate();
  if (steps < 1) throw ConfigError("calibrate_sigma: steps must be >= 1");
  const std::vector<double> orders = default_orders();
  auto eps_at = [&](double sigma) {
    return compose_and_convert(rdp_subsampled_gaussian(q, sigma, orders),
                               steps, target.delta);
  };
  constexpr double kSigmaMax = 1e6;
  const double floor_eps = eps_at(kSigmaMax);
  if (floor_eps > target.epsilon)
    throw CalibrationError(
        "calibrate_sigma: target epsilon " + std::to_string(target.epsilon) +
        " infeasible; epsilon floor at sigma=1e6 is " +
        std::to_string(floor_eps));
  double lo = 1e-3, hi = kSigmaMax;
  if (eps_at(lo) <= target.epsilon) return lo;
  while (hi - lo > 1e-4) {
    const double mid = 0.5 * (lo + hi);
    if (eps_at(mid) <= target.epsilon)
      hi = mid;
    else
      lo = mid;
  }
  return hi;
}

}  // namespace dpw::accountant
