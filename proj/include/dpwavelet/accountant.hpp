#pragma once

#include <vector>

#include "dpwavelet/types.hpp"

namespace dpw::accountant {

struct PrivacySpec {
  double epsilon = 0.0;
  double delta = 0.0;

  void validate() const {
    if (epsilon <= 0.0) throw ConfigError("privacy spec: epsilon must be > 0");
    if (delta <= 0.0 || delta >= 1.0)
      throw ConfigError("privacy spec: delta must be in (0,1)");
  }
};

struct RdpCurve {
  std::vector<double> orders;  // integer alpha > 1
  std::vector<double> rdp;     // per-order Renyi bound, nats, one step
  double q = 0.0, sigma = 0.0;
};

// Integers 2..64 plus a sparse high-order tail.
std::vector<double> default_orders();

// Exact binomial expansion of the Poisson-subsampled Gaussian Renyi bound at
// integer orders. sigma == 0 yields +inf per order (infinite-epsilon signal,
// not an exception). q == 0 yields 0.
RdpCurve rdp_subsampled_gaussian(double q, double sigma,
                                 const std::vector<double>& orders);

// T-fold composition per order, then RDP->(eps,delta) conversion minimized
// over orders. Depends on sigma and q only; the clipping norm cancels.
double compose_and_convert(const RdpCurve& curve, int steps, double delta);

// Smallest sigma (binary search, 1e-4 tolerance) whose composed epsilon stays
// at or below the target.
double calibrate_sigma(const PrivacySpec& target, double q, int steps);

}  // namespace dpw::accountant
