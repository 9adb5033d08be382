#include "dpwavelet/dpoptim.hpp"

#include <cmath>

namespace dpw::dpoptim {

Eigen::VectorXd clip(const Eigen::VectorXd& g, double clip_norm) {
  if (!g.allFinite()) throw NumericError("clip: non-finite gradient");
  const double norm = g.norm();
  if (norm <= clip_norm) return g;
  return g * (clip_norm / norm);
}

namespace {

// Order-independent pairwise tree sum over the clipped gradients.
Eigen::VectorXd tree_sum(std::vector<Eigen::VectorXd>& terms, Eigen::Index dim) {
  if (terms.empty()) return Eigen::VectorXd::Zero(dim);
  while (terms.size() > 1) {
    std::vector<Eigen::VectorXd> next;
    next.reserve((terms.size() + 1) / 2);
    for (size_t i = 0; i + 1 < terms.size(); i += 2)
      next.push_back(terms[i] + terms[i + 1]);
    if (terms.size() % 2 == 1) next.push_back(terms.back());
    terms = std::move(next);
  }
  return terms[0];
}

}  // namespace

StepLog dp_step(OptimizerState& state, int dataset_size, const GradFn& grad_fn) {
  const DpSgdConfig& cfg = state.cfg;
  if (dataset_size < 1) throw ConfigError("dp_step: empty dataset");
  state.noise_draws_before_step = state.noise_stream.draws();

  // i.i.d. Bernoulli(q) membership per example; the sampling stream advances
  // exactly N draws per step regardless of the outcome.
  std::vector<int> batch;
  for (int i = 0; i < dataset_size; ++i)
    if (uniform01(state.sample_rng) < cfg.q) batch.push_back(i);

  std::vector<Eigen::VectorXd> clipped;
  clipped.reserve(batch.size());
  double loss_sum = 0.0;
  int clipped_count = 0;
  for (int idx : batch) {
    ExampleGrad eg = grad_fn(state.theta, idx);
    loss_sum += eg.loss;
    if (eg.grad.norm() > cfg.clip) ++clipped_count;
    clipped.push_back(clip(eg.grad, cfg.clip));
  }
  Eigen::VectorXd sum = tree_sum(clipped, state.theta.size());

  if (cfg.sigma > 0.0) {
    for (Eigen::Index i = 0; i < sum.size(); ++i)
      if (state.trainable(i) != 0.0)
        sum(i) += cfg.sigma * cfg.clip * state.noise_stream.next();
  }
  const Eigen::VectorXd avg = sum / (cfg.q * dataset_size);

  ++state.t;
  if (cfg.variant == DpSgdConfig::Variant::Sgd) {
    state.theta -= cfg.lr * avg.cwiseProduct(state.trainable);
  } else {
    const double b1 = cfg.beta1, b2 = cfg.beta2;
    for (Eigen::Index i = 0; i < state.theta.size(); ++i) {
      if (state.trainable(i) == 0.0) continue;
      state.m(i) = b1 * state.m(i) + (1.0 - b1) * avg(i);
      state.v(i) = b2 * state.v(i) + (1.0 - b2) * avg(i) * avg(i);
      const double mhat = state.m(i) / (1.0 - std::pow(b1, state.t));
      const double vhat = state.v(i) / (1.0 - std::pow(b2, state.t));
      state.theta(i) -= cfg.lr * mhat / (std::sqrt(vhat) + cfg.eps_adam);
    }
  }

  StepLog log;
  log.step = state.t;
  log.realized_batch = int(batch.size());
  log.loss = batch.empty() ? 0.0 : loss_sum / double(batch.size());
  log.clipped_fraction =
      batch.empty() ? 0.0 : double(clipped_count) / double(batch.size());
  return log;
}

std::vector<StepLog> run(OptimizerState& state, int dataset_size,
                         const GradFn& grad_fn, int steps) {
  std::vector<StepLog> logs;
  logs.reserve(steps);
  for (int s = 0; s < steps; ++s)
    logs.push_back(dp_step(state, dataset_size, grad_fn));
  return logs;
}

}  // namespace dpw::dpoptim
