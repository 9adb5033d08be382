#pragma once

#include <cstdint>
#include <functional>
#include <random>
#include <vector>

#include "dpwavelet/rng.hpp"
#include "dpwavelet/types.hpp"

namespace dpw::dpoptim {

struct DpSgdConfig {
  double clip = 1.0;      // per-example l2 clipping norm C
  double sigma = 0.0;     // noise multiplier, in units of C
  double q = 1.0;         // Poisson sampling rate B/N
  int steps = 1;          // T
  double lr = 0.1;
  enum class Variant { Sgd, Adam } variant = Variant::Sgd;
  double beta1 = 0.9, beta2 = 0.999, eps_adam = 1e-8;
  uint64_t seed = 0;

  void validate() const {
    if (clip <= 0.0) throw ConfigError("dp config: clip norm must be > 0");
    if (sigma < 0.0) throw ConfigError("dp config: sigma must be >= 0");
    if (q <= 0.0 || q > 1.0) throw ConfigError("dp config: q must be in (0,1]");
    if (steps < 1) throw ConfigError("dp config: step count must be >= 1");
    if (lr <= 0.0) throw ConfigError("dp config: learning rate must be > 0");
  }
};

struct ExampleGrad {
  double loss = 0.0;
  Eigen::VectorXd grad;
};
using GradFn = std::function<ExampleGrad(const Eigen::VectorXd& theta, int example)>;

struct StepLog {
  int step = 0;
  double loss = 0.0;           // mean loss over the realized batch
  double clipped_fraction = 0.0;
  int realized_batch = 0;
};

struct OptimizerState {
  DpSgdConfig cfg;
  int t = 0;
  Eigen::VectorXd theta;
  Eigen::VectorXd trainable;  // 0/1 per coordinate
  Eigen::VectorXd m, v;       // Adam moments
  std::mt19937_64 sample_rng;
  GaussianStream noise_stream;
  uint64_t noise_draws_before_step = 0;  // stream-offset bookkeeping

  OptimizerState(DpSgdConfig config, Eigen::VectorXd theta0,
                 Eigen::VectorXd trainable_mask)
      : cfg(config),
        theta(std::move(theta0)),
        trainable(std::move(trainable_mask)),
        m(Eigen::VectorXd::Zero(theta.size())),
        v(Eigen::VectorXd::Zero(theta.size())),
        sample_rng(mix_seed(config.seed, 0)),
        noise_stream(mix_seed(config.seed, 1)) {
    cfg.validate();
    if (trainable.size() != theta.size())
      throw ConfigError("optimizer: trainable mask misaligned with theta");
  }
};

// Rescale so the output norm is min(||g||, C); direction preserved.
Eigen::VectorXd clip(const Eigen::VectorXd& g, double clip_norm);

// One DP-SGD/DP-Adam step: Poisson-select examples, clip each gradient,
// sum, add N(0, sigma^2 C^2) on trainable coordinates, normalize by 1/(qN),
// update. An empty batch still takes a noise-only step.
StepLog dp_step(OptimizerState& state, int dataset_size, const GradFn& grad_fn);

// T steps; returns the per-step logs. state.theta holds the final params.
std::vector<StepLog> run(OptimizerState& state, int dataset_size,
                         const GradFn& grad_fn, int steps);

}  // namespace dpw::dpoptim
