#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "dpwavelet/types.hpp"

namespace dpw::armodel {

struct ModelConfig {
  int vocab_size = 0;    // image-token vocab, approx ids first
  int approx_vocab = 0;  // ids [0, approx_vocab) belong to the approx band
  int cond_vocab = 0;
  int max_seq_len = 0;
  int embed_dim = 0;
  int n_layers = 0;
  int n_heads = 0;
  int mlp_width = 0;
  int coarse_prefix_len = 0;  // body positions routed through the approx group
  uint64_t seed = 0;

  void validate() const;
};

struct Segment {
  std::string name;
  int offset = 0;
  int size = 0;
};

enum class Stage { Pretrain, CoarseFinetune };

// Flat parameter vector with a named-segment index and per-segment
// trainability. Segment extents partition theta exactly.
struct ModelParams {
  ModelConfig cfg;
  Eigen::VectorXd theta;
  std::vector<Segment> segments;
  std::vector<char> trainable;  // per segment

  int segment_index(const std::string& name) const;
  const Segment& segment(const std::string& name) const;
  Eigen::VectorXd coordinate_mask() const;  // 1.0 on trainable coords
};

// Deterministic from config + stage. Stage-1 freezes everything the detail
// band touches: detail LN/MLP groups, detail token embeddings, detail head
// columns, and positional embeddings.
void set_stage_mask(ModelParams& params, Stage stage);

struct TrainExample {
  std::vector<int> cond;
  std::vector<int> body;
  std::vector<char> loss_mask;  // per body position
};

ModelParams init_params(const ModelConfig& cfg);

// Next-token cross-entropy averaged over loss-mask positions. logits, when
// requested, holds one row per sequence position over the image vocab.
double forward_loss(const ModelParams& params, const TrainExample& example,
                    Eigen::MatrixXd* logits = nullptr);

// Exact gradient of forward_loss restricted to trainable segments.
Eigen::VectorXd per_example_grad(const ModelParams& params,
                                 const TrainExample& example,
                                 double* loss_out = nullptr);

// Autoregressive sampling with the prefix forced verbatim. slot_ranges gives
// (offset, vocab) per body position; logits outside the slot's range are
// masked out. temperature <= 1e-12 means greedy argmax.
std::vector<int> sample(const ModelParams& params, const std::vector<int>& cond,
                        const std::vector<int>& prefix,
                        const std::vector<std::pair<int, int>>& slot_ranges,
                        int stop, double temperature, uint64_t seed);

}  // namespace dpw::armodel
