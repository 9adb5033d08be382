#pragma once

#include <cstdint>
#include <memory>
#include <utility>

#include "dpwavelet/types.hpp"

namespace dpw::tokenizer {

// One per-band codebook: centroids are columns, dimension is
// patch * patch * channels with channel-major patch flattening.
struct Codebook {
  int patch = 0;       // square patch edge in coefficients
  int offset = 0;      // first token id owned by this codebook
  Eigen::MatrixXd centroids;  // dim x K

  int size() const { return int(centroids.cols()); }
  int dim() const { return int(centroids.rows()); }
};

// Fixed coarse-first slot order over one pyramid shape.
struct SequenceLayout {
  struct Slot {
    int scale;   // -1 for approx, otherwise detail scale j
    int band;    // 0=LH 1=HL 2=HH, unused for approx
    int prow, pcol;
    int offset;  // token-id range [offset, offset + vocab)
    int vocab;
  };
  std::vector<Slot> slots;
  int coarse_len = 0;  // approx slots, always a prefix

  // (offset, vocab) per body position; what the sampler needs.
  std::vector<std::pair<int, int>> slot_ranges() const {
    std::vector<std::pair<int, int>> r;
    r.reserve(slots.size());
    for (const auto& s : slots) r.emplace_back(s.offset, s.vocab);
    return r;
  }
};

struct CodebookSet {
  int depth = 0;
  int channels = 0;
  int image_h = 0, image_w = 0;  // shape the set was fitted for
  uint64_t seed = 0;
  Codebook approx;
  std::vector<std::array<Codebook, 3>> details;  // [scale][band]

  int approx_vocab() const { return approx.size(); }
  int total_vocab() const {
    int v = approx.size();
    for (const auto& scale : details)
      for (const auto& cb : scale) v += cb.size();
    return v;
  }
  SequenceLayout layout() const;
};

struct TokenSequence {
  std::vector<int32_t> cond;
  std::vector<int32_t> body;
  std::shared_ptr<const SequenceLayout> layout;
};

struct TokenizerSpec {
  int approx_k = 32;
  int detail_k = 16;
  int approx_patch = 1;
  int detail_patch = 4;
};

// Seeded k-means (k-means++ init, 50 Lloyd iterations) per band over the
// training pyramids. Codebooks are public artifacts; callers must only pass
// public/pretraining data here.
CodebookSet fit_codebooks(const std::vector<SubbandPyramid>& pyramids,
                          const TokenizerSpec& spec, uint64_t seed);

// Nearest-centroid assignment per patch, ties to the lowest id.
TokenSequence encode(const SubbandPyramid& pyramid, const CodebookSet& cb);

// Inverse of encode onto centroid tilings. A coarse-only body (approx slots
// just) yields zero detail planes.
SubbandPyramid decode(const TokenSequence& tokens, const CodebookSet& cb);

// cond + approx-band body prefix; idempotent.
TokenSequence coarse_slice(const TokenSequence& tokens);

// Canonical flat serialization: [cond_len, cond..., body_len, body...] LE i32.
std::vector<uint8_t> serialize(const TokenSequence& tokens);
TokenSequence parse(const std::vector<uint8_t>& bytes,
                    std::shared_ptr<const SequenceLayout> layout);

}  // namespace dpw::tokenizer
