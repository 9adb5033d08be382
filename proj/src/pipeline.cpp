#include "dpwavelet/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <ctime>
#include <limits>
#include <random>

#include <json.hpp>

#include "dpwavelet/checkpoint.hpp"
#include "dpwavelet/rng.hpp"
#include "dpwavelet/wavelet.hpp"

namespace dpw::pipeline {

namespace {

using nlohmann::json;

std::string iso_now() {
  const auto now = std::chrono::system_clock::now();
  const std::time_t t = std::chrono::system_clock::to_time_t(now);
  char buf[32];
  std::tm tm_utc;
  gmtime_r(&t, &tm_utc);
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm_utc);
  return buf;
}

json num_or_inf(double v) {
  if (std::isinf(v)) return "inf";
  return v;
}

double parse_num_or_inf(const json& j) {
  if (j.is_string() && j.get<std::string>() == "inf")
    return std::numeric_limits<double>::infinity();
  return j.get<double>();
}

armodel::TrainExample make_example(const tokenizer::TokenSequence& seq,
                                   int cond_id, bool coarse_only) {
  armodel::TrainExample ex;
  ex.cond = {cond_id};
  ex.body.assign(seq.body.begin(), seq.body.end());
  if (coarse_only && seq.layout &&
      int(ex.body.size()) > seq.layout->coarse_len)
    ex.body.resize(seq.layout->coarse_len);
  ex.loss_mask.assign(ex.body.size(), 1);
  return ex;
}

}  // namespace

armodel::ModelConfig PipelineConfig::model_config(
    const tokenizer::CodebookSet& cb) const {
  const tokenizer::SequenceLayout lay = cb.layout();
  armodel::ModelConfig mc;
  mc.vocab_size = cb.total_vocab();
  mc.approx_vocab = cb.approx_vocab();
  mc.cond_vocab = cond_vocab;
  mc.max_seq_len = 1 + int(lay.slots.size());
  mc.embed_dim = embed_dim;
  mc.n_layers = n_layers;
  mc.n_heads = n_heads;
  mc.mlp_width = mlp_width;
  mc.coarse_prefix_len = lay.coarse_len;
  mc.seed = model_seed;
  return mc;
}

std::string RunManifest::to_json() const {
  json j;
  j["epsilon"] = num_or_inf(epsilon);
  j["delta"] = delta;
  j["sigma"] = sigma;
  j["clip"] = clip;
  j["q"] = q;
  j["steps"] = steps;
  j["accountant_version"] = accountant_version;
  j["codebook_hash"] = codebook_hash;
  j["pretrained_hash"] = pretrained_hash;
  j["created"] = created;
  j["outputs"] = outputs;
  return j.dump(2);
}

RunManifest RunManifest::from_json(const std::string& text) {
  const json j = json::parse(text);
  RunManifest m;
  m.epsilon = parse_num_or_inf(j.at("epsilon"));
  m.delta = j.at("delta").get<double>();
  m.sigma = j.at("sigma").get<double>();
  m.clip = j.at("clip").get<double>();
  m.q = j.at("q").get<double>();
  m.steps = j.at("steps").get<int>();
  m.accountant_version = j.at("accountant_version").get<std::string>();
  m.codebook_hash = j.at("codebook_hash").get<std::string>();
  m.pretrained_hash = j.at("pretrained_hash").get<std::string>();
  m.created = j.at("created").get<std::string>();
  m.outputs = j.at("outputs").get<std::vector<std::string>>();
  return m;
}

PublicModel pretrain_public(const Dataset& public_data,
                            const PipelineConfig& cfg, StepLogFn log_fn) {
  if (public_data.size() == 0)
    throw ConfigError("pretrain_public: empty public dataset");

  std::vector<SubbandPyramid> pyramids;
  pyramids.reserve(public_data.size());
  for (const auto& img : public_data.images)
    pyramids.push_back(wavelet::decompose(img, cfg.depth));

  PublicModel model;
  model.codebooks = tokenizer::fit_codebooks(pyramids, cfg.tok, cfg.model_seed);

  std::vector<armodel::TrainExample> examples;
  examples.reserve(public_data.size());
  for (int i = 0; i < public_data.size(); ++i)
    examples.push_back(make_example(tokenizer::encode(pyramids[i],
                                                      model.codebooks),
                                    public_data.conds[i], false));

  model.params = armodel::init_params(cfg.model_config(model.codebooks));
  armodel::set_stage_mask(model.params, armodel::Stage::Pretrain);

  // plain (non-private) Adam over shuffled minibatches
  const int n = public_data.size();
  const int batch = std::min(cfg.pretrain_batch, n);
  Eigen::VectorXd m = Eigen::VectorXd::Zero(model.params.theta.size());
  Eigen::VectorXd v = Eigen::VectorXd::Zero(model.params.theta.size());
  std::mt19937_64 rng(cfg.pretrain_seed);
  std::vector<int> order(n);
  for (int i = 0; i < n; ++i) order[i] = i;
  size_t cursor = order.size();

  const double b1 = 0.9, b2 = 0.999, eps = 1e-8;
  for (int step = 1; step <= cfg.pretrain_steps; ++step) {
    Eigen::VectorXd grad = Eigen::VectorXd::Zero(model.params.theta.size());
    double loss_sum = 0.0;
    for (int k = 0; k < batch; ++k) {
      if (cursor == order.size()) {
        for (size_t i = order.size() - 1; i > 0; --i)
          std::swap(order[i], order[size_t(uniform01(rng) * double(i + 1))]);
        cursor = 0;
      }
      double loss = 0.0;
      grad += armodel::per_example_grad(model.params, examples[order[cursor++]],
                                        &loss);
      loss_sum += loss;
    }
    grad /= double(batch);
    m = b1 * m + (1.0 - b1) * grad;
    v = b2 * v.array() + (1.0 - b2) * grad.array().square();
    const double c1 = 1.0 - std::pow(b1, step), c2 = 1.0 - std::pow(b2, step);
    model.params.theta.array() -=
        cfg.pretrain_lr * (m.array() / c1) /
        ((v.array() / c2).sqrt() + eps);
    if (log_fn) {
      dpoptim::StepLog log;
      log.step = step;
      log.loss = loss_sum / batch;
      log.realized_batch = batch;
      log_fn(log);
    }
  }
  return model;
}

armodel::ModelParams finetune_private(const PublicModel& base,
                                      const PrivateDataset& private_data,
                                      const PipelineConfig& cfg,
                                      RunManifest* manifest,
                                      StepLogFn log_fn) {
  const dpoptim::DpSgdConfig& dp = cfg.dp;
  dp.validate();

  // Budget pre-check comes before any private record is read.
  double achieved_eps = std::numeric_limits<double>::infinity();
  if (dp.sigma > 0.0)
    achieved_eps = accountant::compose_and_convert(
        accountant::rdp_subsampled_gaussian(dp.q, dp.sigma,
                                            accountant::default_orders()),
        dp.steps, cfg.delta);
  if (achieved_eps > cfg.target_epsilon)
    throw CalibrationError(
        "finetune_private: (sigma,q,T) yields epsilon " +
        std::to_string(achieved_eps) + " above the configured budget " +
        std::to_string(cfg.target_epsilon));

  std::vector<armodel::TrainExample> examples;
  examples.reserve(private_data.size());
  for (int i = 0; i < private_data.size(); ++i) {
    const SubbandPyramid pyr =
        wavelet::decompose(private_data.image(i), cfg.depth);
    const tokenizer::TokenSequence coarse =
        tokenizer::coarse_slice(tokenizer::encode(pyr, base.codebooks));
    examples.push_back(make_example(coarse, private_data.cond(i), true));
  }

  armodel::ModelParams work = base.params;
  armodel::set_stage_mask(work, armodel::Stage::CoarseFinetune);
  dpoptim::OptimizerState state(dp, work.theta, work.coordinate_mask());

  dpoptim::GradFn grad_fn = [&work, &examples](const Eigen::VectorXd& theta,
                                               int idx) {
    work.theta = theta;
    dpoptim::ExampleGrad eg;
    eg.grad = armodel::per_example_grad(work, examples[idx], &eg.loss);
    return eg;
  };
  const auto logs = dpoptim::run(state, private_data.size(), grad_fn, dp.steps);
  if (log_fn)
    for (const auto& log : logs) log_fn(log);
  work.theta = state.theta;

  if (manifest) {
    manifest->epsilon = achieved_eps;
    manifest->delta = cfg.delta;
    manifest->sigma = dp.sigma;
    manifest->clip = dp.clip;
    manifest->q = dp.q;
    manifest->steps = dp.steps;
    const auto cb_bytes = checkpoint::serialize_codebooks(base.codebooks);
    manifest->codebook_hash = checkpoint::hash_hex(cb_bytes);
    const auto p_bytes = checkpoint::serialize_params(base.params);
    manifest->pretrained_hash = checkpoint::hash_hex(p_bytes);
    manifest->created = iso_now();
  }
  return work;
}

GenerateResult generate(const armodel::ModelParams& finetuned,
                        const armodel::ModelParams& pretrained,
                        const tokenizer::CodebookSet& codebooks,
                        const std::vector<int>& conds, int n,
                        double temperature, uint64_t seed) {
  if (conds.empty()) throw ConfigError("generate: no conditions");
  auto lay = std::make_shared<tokenizer::SequenceLayout>(codebooks.layout());
  const auto ranges = lay->slot_ranges();
  if (finetuned.cfg.vocab_size != codebooks.total_vocab() ||
      pretrained.cfg.vocab_size != codebooks.total_vocab() ||
      finetuned.cfg.coarse_prefix_len != lay->coarse_len)
    throw ConfigError("generate: model/layout mismatch");

  GenerateResult result;
  for (int i = 0; i < n; ++i) {
    const int cond = conds[i % conds.size()];
    const std::vector<int> coarse =
        armodel::sample(finetuned, {cond}, {}, ranges, lay->coarse_len,
                        temperature, mix_seed(seed, 2 * uint64_t(i)));
    const std::vector<int> full =
        armodel::sample(pretrained, {cond}, coarse, ranges,
                        int(ranges.size()), temperature,
                        mix_seed(seed, 2 * uint64_t(i) + 1));

    tokenizer::TokenSequence seq;
    seq.layout = lay;
    seq.cond = {int32_t(cond)};
    seq.body.assign(full.begin(), full.end());

    result.images.push_back(
        wavelet::reconstruct(tokenizer::decode(seq, codebooks), true));
    result.coarse_images.push_back(wavelet::reconstruct(
        tokenizer::decode(tokenizer::coarse_slice(seq), codebooks), true));
    result.sequences.push_back(std::move(seq));
    result.conds.push_back(cond);
  }
  return result;
}

Eigen::VectorXd spectral_features(const ImageTensor& image, int depth) {
  const auto profile =
      wavelet::energy_profile(wavelet::decompose(image, depth));
  return Eigen::Map<const Eigen::VectorXd>(profile.data(),
                                           Eigen::Index(profile.size()));
}

namespace {

Eigen::MatrixXd sym_sqrt(const Eigen::MatrixXd& m) {
  const Eigen::MatrixXd sym = 0.5 * (m + m.transpose());
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(sym);
  const Eigen::VectorXd lam = es.eigenvalues().cwiseMax(0.0).cwiseSqrt();
  return es.eigenvectors() * lam.asDiagonal() * es.eigenvectors().transpose();
}

}  // namespace

double frechet_gaussian(const std::vector<Eigen::VectorXd>& a,
                        const std::vector<Eigen::VectorXd>& b) {
  if (a.size() < 2 || b.size() < 2)
    throw StatisticsError("frechet_gaussian: need at least 2 samples per side");
  const Eigen::Index d = a[0].size();
  auto fit = [&](const std::vector<Eigen::VectorXd>& s, Eigen::VectorXd& mu,
                 Eigen::MatrixXd& cov) {
    mu = Eigen::VectorXd::Zero(d);
    for (const auto& x : s) mu += x;
    mu /= double(s.size());
    cov = Eigen::MatrixXd::Zero(d, d);
    for (const auto& x : s) cov += (x - mu) * (x - mu).transpose();
    cov /= double(s.size() - 1);
  };
  Eigen::VectorXd mu1, mu2;
  Eigen::MatrixXd c1, c2;
  fit(a, mu1, c1);
  fit(b, mu2, c2);
  const Eigen::MatrixXd c1h = sym_sqrt(c1);
  const Eigen::MatrixXd cross = sym_sqrt(c1h * c2 * c1h);
  const double d2 = (mu1 - mu2).squaredNorm() + c1.trace() + c2.trace() -
                    2.0 * cross.trace();
  return std::max(0.0, d2);
}

double psnr(const ImageTensor& a, const ImageTensor& b) {
  if (a.num_channels() != b.num_channels() || a.height() != b.height() ||
      a.width() != b.width())
    throw DimensionError("psnr: image shapes differ");
  double se = 0.0;
  for (int ch = 0; ch < a.num_channels(); ++ch)
    se += (a.channels[ch] - b.channels[ch]).squaredNorm();
  const double mse =
      se / (double(a.height()) * a.width() * a.num_channels());
  if (mse == 0.0) return std::numeric_limits<double>::infinity();
  return -10.0 * std::log10(mse);
}

MetricReport evaluate(const std::vector<ImageTensor>& real,
                      const std::vector<ImageTensor>& generated, int depth,
                      const tokenizer::CodebookSet* codebooks,
                      const armodel::ModelParams* model,
                      const std::vector<int>* conds,
                      const std::vector<ImageTensor>* generated_coarse) {
  if (real.size() < 2 || generated.size() < 2)
    throw StatisticsError("evaluate: need at least 2 images per side");

  std::vector<Eigen::VectorXd> fa, fb;
  for (const auto& img : real) fa.push_back(spectral_features(img, depth));
  for (const auto& img : generated)
    fb.push_back(spectral_features(img, depth));

  MetricReport report;
  report.sfd = frechet_gaussian(fa, fb);
  report.coarse_psnr = std::numeric_limits<double>::quiet_NaN();
  report.token_accuracy = std::numeric_limits<double>::quiet_NaN();

  if (codebooks && generated_coarse) {
    const size_t pairs = std::min(real.size(), generated_coarse->size());
    double sum = 0.0;
    for (size_t i = 0; i < pairs; ++i) {
      SubbandPyramid pyr = wavelet::decompose(real[i], depth);
      const ImageTensor true_coarse =
          wavelet::partial_reconstruct(pyr, 0, true);
      sum += std::min(psnr(true_coarse, (*generated_coarse)[i]), 99.0);
    }
    report.coarse_psnr = sum / double(pairs);
  }

  if (codebooks && model && conds) {
    const auto lay = codebooks->layout();
    const auto ranges = lay.slot_ranges();
    int correct = 0, total = 0;
    for (size_t i = 0; i < real.size(); ++i) {
      const tokenizer::TokenSequence seq =
          tokenizer::encode(wavelet::decompose(real[i], depth), *codebooks);
      armodel::TrainExample ex =
          make_example(seq, (*conds)[i % conds->size()], true);
      Eigen::MatrixXd logits;
      armodel::forward_loss(*model, ex, &logits);
      for (int t = 0; t < int(ex.body.size()); ++t) {
        const int row = int(ex.cond.size()) + t - 1;
        const auto [off, nvoc] = ranges[t];
        int arg = 0;
        for (int k = 1; k < nvoc; ++k)
          if (logits(row, off + k) > logits(row, off + arg)) arg = k;
        correct += (off + arg == ex.body[t]) ? 1 : 0;
        ++total;
      }
    }
    report.token_accuracy = total ? double(correct) / total : 0.0;
  }
  return report;
}

std::string MetricReport::to_json() const {
  json j;
  j["sfd"] = sfd;
  j["coarse_psnr"] = num_or_inf(coarse_psnr);
  j["token_accuracy"] = token_accuracy;
  return j.dump(2);
}

std::string MetricReport::to_table() const {
  char buf[160];
  std::snprintf(buf, sizeof(buf),
                "metric            value\n"
                "sfd               %.6f\n"
                "coarse_psnr_db    %.3f\n"
                "token_accuracy    %.4f\n",
                sfd, coarse_psnr, token_accuracy);
  return buf;
}

}  // namespace dpw::pipeline
