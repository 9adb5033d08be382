#pragma once

#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "dpwavelet/accountant.hpp"
#include "dpwavelet/armodel.hpp"
#include "dpwavelet/dpoptim.hpp"
#include "dpwavelet/tokenizer.hpp"
#include "dpwavelet/types.hpp"

namespace dpw::pipeline {

struct PipelineConfig {
  int image_size = 16;
  int channels = 1;
  int depth = 2;  // J; coarse plane is image_size / 2^J
  tokenizer::TokenizerSpec tok;
  int cond_vocab = 4;

  int embed_dim = 32;
  int n_layers = 2;
  int n_heads = 4;
  int mlp_width = 64;
  uint64_t model_seed = 1;

  int pretrain_steps = 800;
  int pretrain_batch = 32;
  double pretrain_lr = 3e-3;
  uint64_t pretrain_seed = 2;

  dpoptim::DpSgdConfig dp;
  double delta = 1e-5;
  double target_epsilon = 8.0;  // +inf means non-private mode (sigma 0 allowed)

  int sample_count = 16;
  double temperature = 1.0;
  uint64_t sample_seed = 3;

  armodel::ModelConfig model_config(const tokenizer::CodebookSet& cb) const;
};

struct Dataset {
  std::vector<ImageTensor> images;
  std::vector<int> conds;

  int size() const { return int(images.size()); }
};

// Counts private-record reads per stage; stage 2 must never touch one.
struct AccessAudit {
  std::string stage = "none";
  std::map<std::string, int> private_opens;

  void enter(const std::string& s) { stage = s; }
  void note_private_open() { ++private_opens[stage]; }
  int opens(const std::string& s) const {
    const auto it = private_opens.find(s);
    return it == private_opens.end() ? 0 : it->second;
  }
};

// Private records are only reachable through this wrapper, so every access
// lands in the audit.
class PrivateDataset {
 public:
  PrivateDataset(Dataset data, AccessAudit* audit)
      : data_(std::move(data)), audit_(audit) {}

  int size() const { return data_.size(); }
  const ImageTensor& image(int i) const {
    if (audit_) audit_->note_private_open();
    return data_.images[i];
  }
  int cond(int i) const { return data_.conds[i]; }

 private:
  Dataset data_;
  AccessAudit* audit_;
};

// Privacy certificate plus provenance of the artifacts a run emitted.
struct RunManifest {
  double epsilon = 0.0, delta = 0.0, sigma = 0.0, clip = 0.0, q = 0.0;
  int steps = 0;
  std::string accountant_version = "rdp-1";
  std::string codebook_hash, pretrained_hash;
  std::string created;  // ISO timestamp
  std::vector<std::string> outputs;

  std::string to_json() const;
  static RunManifest from_json(const std::string& text);
};

struct PublicModel {
  tokenizer::CodebookSet codebooks;
  armodel::ModelParams params;
};

using StepLogFn = std::function<void(const dpoptim::StepLog&)>;

// Fits codebooks then trains the full model non-privately on full sequences.
PublicModel pretrain_public(const Dataset& public_data,
                            const PipelineConfig& cfg,
                            StepLogFn log_fn = nullptr);

// Stage 1: accountant pre-check, coarse-slice tokenization, DP finetuning of
// the stage-1 trainable subset. Throws CalibrationError before touching any
// private record when the budget is infeasible.
armodel::ModelParams finetune_private(const PublicModel& base,
                                      const PrivateDataset& private_data,
                                      const PipelineConfig& cfg,
                                      RunManifest* manifest = nullptr,
                                      StepLogFn log_fn = nullptr);

struct GenerateResult {
  std::vector<ImageTensor> images;         // full reconstructions
  std::vector<ImageTensor> coarse_images;  // decoded coarse intermediaries
  std::vector<tokenizer::TokenSequence> sequences;
  std::vector<int> conds;
};

// Stage 2: coarse sampling from the finetuned model, detail completion with
// the frozen pretrained model, decoding. Takes no private-image argument.
GenerateResult generate(const armodel::ModelParams& finetuned,
                        const armodel::ModelParams& pretrained,
                        const tokenizer::CodebookSet& codebooks,
                        const std::vector<int>& conds, int n,
                        double temperature, uint64_t seed);

struct MetricReport {
  double sfd = 0.0;            // spectral Frechet distance
  double coarse_psnr = 0.0;    // dB, paired coarse intermediaries; inf if exact
  double token_accuracy = 0.0; // teacher-forced coarse-token accuracy

  std::string to_json() const;
  std::string to_table() const;
};

// Subband-energy feature vector of one image: energy fractions per plane.
Eigen::VectorXd spectral_features(const ImageTensor& image, int depth);

// Frechet distance between Gaussian fits of two feature samples.
double frechet_gaussian(const std::vector<Eigen::VectorXd>& a,
                        const std::vector<Eigen::VectorXd>& b);

// SFD always; the coarse PSNR and token-accuracy diagnostics additionally
// need the codebooks, a model, and paired conditions.
MetricReport evaluate(const std::vector<ImageTensor>& real,
                      const std::vector<ImageTensor>& generated, int depth,
                      const tokenizer::CodebookSet* codebooks = nullptr,
                      const armodel::ModelParams* model = nullptr,
                      const std::vector<int>* conds = nullptr,
                      const std::vector<ImageTensor>* generated_coarse = nullptr);

double psnr(const ImageTensor& a, const ImageTensor& b);

}  // namespace dpw::pipeline
