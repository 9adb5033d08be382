#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "dpwavelet/accountant.hpp"

using namespace dpw;

namespace {

// Quadrature oracle for the integer-order Renyi bound of the subsampled
// Gaussian: (1/(a-1)) log E_Q[(P/Q)^a] with P = (1-q)N(0,s^2) + qN(1,s^2)
// and Q = N(0,s^2), evaluated by composite Simpson integration.
double renyi_quadrature(double q, double sigma, int alpha) {
  const double lo = -1.0 - 30.0 * sigma, hi = 1.0 + 30.0 * sigma;
  const int n = 200000;  // even
  const double h = (hi - lo) / n;
  auto integrand = [&](double x) {
    const double s2 = sigma * sigma;
    const double qx = std::exp(-x * x / (2.0 * s2));
    const double px = (1.0 - q) * qx + q * std::exp(-(x - 1.0) * (x - 1.0) / (2.0 * s2));
    // (P/Q)^alpha * Q, with the shared normalizer folded in afterwards
    if (qx <= 0.0) return 0.0;
    return std::pow(px / qx, double(alpha)) * qx;
  };
  double acc = integrand(lo) + integrand(hi);
  for (int i = 1; i < n; ++i)
    acc += integrand(lo + i * h) * (i % 2 ? 4.0 : 2.0);
  const double integral = acc * h / 3.0 / (sigma * std::sqrt(2.0 * M_PI));
  return std::log(integral) / (alpha - 1.0);
}

}  // namespace

TEST_CASE("integer-order Renyi bound matches quadrature to 1e-6") {
  const std::vector<double> orders = {2.0, 3.0, 5.0, 8.0, 16.0};
  for (double q : {0.1, 0.5, 1.0}) {
    for (double sigma : {0.8, 1.5, 3.0}) {
      const auto curve = accountant::rdp_subsampled_gaussian(q, sigma, orders);
      for (size_t i = 0; i < orders.size(); ++i) {
        const double oracle = renyi_quadrature(q, sigma, int(orders[i]));
        CHECK(curve.rdp[i] ==
              doctest::Approx(oracle).epsilon(1e-6).scale(1.0));
      }
    }
  }
}

TEST_CASE("q=1 reduces to the plain Gaussian closed form alpha/(2 sigma^2)") {
  const auto orders = accountant::default_orders();
  for (double sigma : {0.7, 1.0, 4.0}) {
    const auto curve = accountant::rdp_subsampled_gaussian(1.0, sigma, orders);
    for (size_t i = 0; i < orders.size(); ++i)
      CHECK(curve.rdp[i] ==
            doctest::Approx(orders[i] / (2.0 * sigma * sigma)).epsilon(1e-10));
  }
}

TEST_CASE("degenerate parameters") {
  const auto orders = accountant::default_orders();
  const auto zero_q = accountant::rdp_subsampled_gaussian(0.0, 1.0, orders);
  for (double r : zero_q.rdp) CHECK(r == 0.0);

  const auto zero_sigma = accountant::rdp_subsampled_gaussian(0.5, 0.0, orders);
  for (double r : zero_sigma.rdp) CHECK(std::isinf(r));
  CHECK(std::isinf(accountant::compose_and_convert(zero_sigma, 10, 1e-5)));

  const auto curve = accountant::rdp_subsampled_gaussian(0.5, 1.0, orders);
  CHECK(accountant::compose_and_convert(curve, 0, 1e-5) == 0.0);
}

TEST_CASE("epsilon is monotone in steps, q, and 1/sigma") {
  const auto orders = accountant::default_orders();
  auto eps = [&](double q, double sigma, int T) {
    return accountant::compose_and_convert(
        accountant::rdp_subsampled_gaussian(q, sigma, orders), T, 1e-5);
  };
  for (int T : {1, 4, 16})
    CHECK(eps(0.3, 1.5, T) < eps(0.3, 1.5, 4 * T));
  for (double sigma : {0.8, 1.6})
    CHECK(eps(0.3, 2.0 * sigma, 10) < eps(0.3, sigma, 10));
  for (double q : {0.1, 0.4})
    CHECK(eps(q, 1.5, 10) < eps(2.0 * q, 1.5, 10));
}

TEST_CASE("calibrate_sigma round trips within tolerance") {
  for (double target_eps : {0.5, 2.0, 8.0}) {
    for (double q : {0.2, 1.0}) {
      const int T = 25;
      const double sigma = accountant::calibrate_sigma({target_eps, 1e-5}, q, T);
      const double achieved = accountant::compose_and_convert(
          accountant::rdp_subsampled_gaussian(q, sigma, accountant::default_orders()),
          T, 1e-5);
      CHECK(achieved <= target_eps + 1e-9);  // never overshoots the budget
      CHECK(achieved == doctest::Approx(target_eps).epsilon(1e-3));
    }
  }
}

TEST_CASE("infeasible calibration reports the epsilon floor") {
  CHECK_THROWS_AS(accountant::calibrate_sigma({1e-12, 1e-5}, 0.5, 100),
                  CalibrationError);
}

TEST_CASE("privacy spec validation") {
  CHECK_THROWS_AS(accountant::PrivacySpec({0.0, 1e-5}).validate(), ConfigError);
  CHECK_THROWS_AS(accountant::PrivacySpec({1.0, 0.0}).validate(), ConfigError);
  CHECK_THROWS_AS(accountant::PrivacySpec({1.0, 1.5}).validate(), ConfigError);
  CHECK_NOTHROW(accountant::PrivacySpec({1.0, 1e-5}).validate());
}

TEST_CASE("subsampling amplifies privacy") {
  // with q < 1 the per-order bound is strictly below the unsubsampled one
  const std::vector<double> orders = {2.0, 4.0, 8.0};
  const auto sub = accountant::rdp_subsampled_gaussian(0.1, 1.0, orders);
  const auto full = accountant::rdp_subsampled_gaussian(1.0, 1.0, orders);
  for (size_t i = 0; i < orders.size(); ++i) CHECK(sub.rdp[i] < full.rdp[i]);
}
