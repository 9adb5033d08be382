#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <random>

#include "dpwavelet/dpoptim.hpp"

using namespace dpw;
using Eigen::VectorXd;

namespace {

// Deterministic per-example quadratic losses: grad_i(theta) = theta - target_i.
struct QuadraticTask {
  std::vector<VectorXd> targets;

  explicit QuadraticTask(int n, int dim, uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> g(0.0, 1.0);
    for (int i = 0; i < n; ++i) {
      VectorXd t(dim);
      for (int k = 0; k < dim; ++k) t(k) = g(rng);
      targets.push_back(t);
    }
  }

  dpoptim::GradFn grad_fn() const {
    return [this](const VectorXd& theta, int i) {
      dpoptim::ExampleGrad eg;
      eg.grad = theta - targets[size_t(i)];
      eg.loss = 0.5 * eg.grad.squaredNorm();
      return eg;
    };
  }
};

}  // namespace

TEST_CASE("clip preserves direction and bounds the norm") {
  VectorXd g(3);
  g << 3.0, 0.0, 4.0;  // norm 5
  const VectorXd c = dpoptim::clip(g, 1.0);
  CHECK(c.norm() == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(c(0) / c(2) == doctest::Approx(0.75).epsilon(1e-12));
  // short vectors pass through untouched
  const VectorXd small = dpoptim::clip(g, 10.0);
  CHECK((small - g).norm() == 0.0);
  const VectorXd zero = dpoptim::clip(VectorXd::Zero(3), 1.0);
  CHECK(zero.norm() == 0.0);
}

TEST_CASE("sigma=0 q=1 run is bit-identical to the plain clipped-SGD oracle") {
  const int n = 6, dim = 5, steps = 7;
  const QuadraticTask task(n, dim, 3);

  dpoptim::DpSgdConfig cfg;
  cfg.clip = 0.7;
  cfg.sigma = 0.0;
  cfg.q = 1.0;
  cfg.steps = steps;
  cfg.lr = 0.1;
  cfg.seed = 5;

  dpoptim::OptimizerState state(cfg, VectorXd::Zero(dim), VectorXd::Ones(dim));
  dpoptim::run(state, n, task.grad_fn(), steps);

  // independent oracle: full batch, clip each gradient, pairwise-sum (the
  // summation order is part of the algorithm contract), average, SGD step
  VectorXd theta = VectorXd::Zero(dim);
  for (int t = 0; t < steps; ++t) {
    std::vector<VectorXd> terms;
    for (int i = 0; i < n; ++i)
      terms.push_back(dpoptim::clip(theta - task.targets[size_t(i)], cfg.clip));
    while (terms.size() > 1) {
      std::vector<VectorXd> next;
      for (size_t i = 0; i + 1 < terms.size(); i += 2)
        next.push_back(terms[i] + terms[i + 1]);
      if (terms.size() % 2 == 1) next.push_back(terms.back());
      terms = std::move(next);
    }
    theta -= cfg.lr * (terms[0] / (cfg.q * double(n)));
  }
  for (int k = 0; k < dim; ++k) CHECK(state.theta(k) == theta(k));
}

TEST_CASE("per-step pre-noise sum norm never exceeds batch * C") {
  // with every gradient clipped to C, a swap of one example moves the
  // pre-noise sum by at most 2C; check via direct recomputation
  const int n = 8, dim = 6;
  const QuadraticTask a(n, dim, 11);
  QuadraticTask b = a;
  b.targets[3] = a.targets[3] + VectorXd::Constant(dim, 10.0);  // the swap

  dpoptim::DpSgdConfig cfg;
  cfg.clip = 0.5;
  cfg.sigma = 0.0;
  cfg.q = 1.0;
  cfg.lr = 0.05;
  cfg.seed = 9;

  VectorXd theta = VectorXd::Constant(dim, 0.3);
  for (int t = 0; t < 5; ++t) {
    VectorXd sum_a = VectorXd::Zero(dim), sum_b = VectorXd::Zero(dim);
    for (int i = 0; i < n; ++i) {
      sum_a += dpoptim::clip(theta - a.targets[size_t(i)], cfg.clip);
      sum_b += dpoptim::clip(theta - b.targets[size_t(i)], cfg.clip);
      CHECK(dpoptim::clip(theta - a.targets[size_t(i)], cfg.clip).norm() <=
            cfg.clip + 1e-9);
    }
    CHECK((sum_a - sum_b).norm() <= 2.0 * cfg.clip + 1e-9);
    theta -= cfg.lr * sum_a / double(n);
  }
}

TEST_CASE("noise lands only on trainable coordinates with std sigma*C/(qN)") {
  const int dim = 4, n = 10;
  dpoptim::DpSgdConfig cfg;
  cfg.clip = 2.0;
  cfg.sigma = 1.5;
  cfg.q = 1.0;
  cfg.lr = 1.0;
  cfg.seed = 21;

  VectorXd mask = VectorXd::Ones(dim);
  mask(2) = 0.0;  // frozen coordinate

  // zero gradients isolate the noise: theta update = -lr * noise/(qN)
  const auto zero_grad = [](const VectorXd&, int) {
    dpoptim::ExampleGrad eg;
    eg.grad = VectorXd::Zero(4);
    return eg;
  };

  const int trials = 4000;
  std::vector<double> sum(dim, 0.0), sumsq(dim, 0.0);
  dpoptim::OptimizerState state(cfg, VectorXd::Zero(dim), mask);
  VectorXd prev = state.theta;
  for (int t = 0; t < trials; ++t) {
    dpoptim::dp_step(state, n, zero_grad);
    const VectorXd delta = prev - state.theta;  // lr=1: the noisy update
    prev = state.theta;
    for (int k = 0; k < dim; ++k) {
      sum[size_t(k)] += delta(k);
      sumsq[size_t(k)] += delta(k) * delta(k);
    }
  }
  const double expect_std = cfg.sigma * cfg.clip / (cfg.q * n);
  for (int k = 0; k < dim; ++k) {
    const double mean = sum[size_t(k)] / trials;
    const double var = sumsq[size_t(k)] / trials - mean * mean;
    if (k == 2) {
      CHECK(var == 0.0);  // frozen coordinate never moves
    } else {
      CHECK(std::sqrt(var) ==
            doctest::Approx(expect_std).epsilon(0.1));  // statistical bound
      CHECK(std::abs(mean) < 5.0 * expect_std / std::sqrt(double(trials)));
    }
  }
}

TEST_CASE("poisson sampling realizes roughly q*N examples per step") {
  const int n = 200;
  dpoptim::DpSgdConfig cfg;
  cfg.clip = 1.0;
  cfg.sigma = 0.0;
  cfg.q = 0.3;
  cfg.lr = 1e-6;
  cfg.seed = 4;
  const QuadraticTask task(n, 3, 8);
  dpoptim::OptimizerState state(cfg, VectorXd::Zero(3), VectorXd::Ones(3));
  const auto logs = dpoptim::run(state, n, task.grad_fn(), 200);
  double total = 0.0;
  bool varied = false;
  for (const auto& l : logs) {
    total += l.realized_batch;
    if (l.realized_batch != logs[0].realized_batch) varied = true;
  }
  const double mean_batch = total / double(logs.size());
  CHECK(mean_batch == doctest::Approx(cfg.q * n).epsilon(0.1));
  CHECK(varied);  // actually random, not a fixed-size batch
}

TEST_CASE("noisy DP-Adam still makes progress on a quadratic") {
  const int n = 32, dim = 8;
  const QuadraticTask task(n, dim, 17);
  dpoptim::DpSgdConfig cfg;
  cfg.clip = 1.0;
  cfg.sigma = 0.6;
  cfg.q = 0.5;
  cfg.steps = 150;
  cfg.lr = 0.05;
  cfg.variant = dpoptim::DpSgdConfig::Variant::Adam;
  cfg.seed = 2;

  VectorXd mean_target = VectorXd::Zero(dim);
  for (const auto& t : task.targets) mean_target += t;
  mean_target /= double(n);

  dpoptim::OptimizerState state(cfg, VectorXd::Constant(dim, 4.0),
                                VectorXd::Ones(dim));
  const double start_dist = (state.theta - mean_target).norm();
  dpoptim::run(state, n, task.grad_fn(), cfg.steps);
  const double end_dist = (state.theta - mean_target).norm();
  CHECK(end_dist < 0.5 * start_dist);
}

TEST_CASE("runs are reproducible in the seed") {
  const int n = 12, dim = 5;
  const QuadraticTask task(n, dim, 23);
  dpoptim::DpSgdConfig cfg;
  cfg.clip = 1.0;
  cfg.sigma = 1.0;
  cfg.q = 0.4;
  cfg.lr = 0.1;
  cfg.seed = 77;

  dpoptim::OptimizerState s1(cfg, VectorXd::Zero(dim), VectorXd::Ones(dim));
  dpoptim::OptimizerState s2(cfg, VectorXd::Zero(dim), VectorXd::Ones(dim));
  dpoptim::run(s1, n, task.grad_fn(), 20);
  dpoptim::run(s2, n, task.grad_fn(), 20);
  CHECK((s1.theta - s2.theta).cwiseAbs().maxCoeff() == 0.0);

  cfg.seed = 78;
  dpoptim::OptimizerState s3(cfg, VectorXd::Zero(dim), VectorXd::Ones(dim));
  dpoptim::run(s3, n, task.grad_fn(), 20);
  CHECK((s1.theta - s3.theta).cwiseAbs().maxCoeff() > 0.0);
}

TEST_CASE("config validation") {
  dpoptim::DpSgdConfig cfg;
  cfg.clip = 0.0;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg.clip = 1.0;
  cfg.q = 1.5;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg.q = 0.5;
  cfg.sigma = -1.0;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg.sigma = 0.0;
  CHECK_NOTHROW(cfg.validate());
}
