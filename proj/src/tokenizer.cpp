#include "dpwavelet/tokenizer.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <random>
#include <set>

#include "dpwavelet/rng.hpp"

namespace dpw::tokenizer {

namespace {

// Channel-major flattening of one square patch across all channel planes.
Eigen::VectorXd extract_patch(const std::vector<Plane>& planes, int patch,
                              int prow, int pcol) {
  const int nc = int(planes.size());
  Eigen::VectorXd v(patch * patch * nc);
  int idx = 0;
  for (int ch = 0; ch < nc; ++ch)
    for (int r = 0; r < patch; ++r)
      for (int c = 0; c < patch; ++c)
        v(idx++) = planes[ch](prow * patch + r, pcol * patch + c);
  return v;
}

void write_patch(std::vector<Plane>& planes, int patch, int prow, int pcol,
                 const Eigen::VectorXd& v) {
  const int nc = int(planes.size());
  int idx = 0;
  for (int ch = 0; ch < nc; ++ch)
    for (int r = 0; r < patch; ++r)
      for (int c = 0; c < patch; ++c)
        planes[ch](prow * patch + r, pcol * patch + c) = v(idx++);
}

Eigen::MatrixXd gather_patches(const std::vector<const std::vector<Plane>*>& bands,
                               int patch) {
  std::vector<Eigen::VectorXd> cols;
  for (const auto* planes : bands) {
    const Eigen::Index rows = (*planes)[0].rows(), colsn = (*planes)[0].cols();
    if (rows % patch != 0 || colsn % patch != 0)
      throw ConfigError("tokenizer: plane " + std::to_string(rows) + "x" +
                        std::to_string(colsn) + " not divisible by patch " +
                        std::to_string(patch));
    const int npr = int(rows) / patch, npc = int(colsn) / patch;
    for (int pr = 0; pr < npr; ++pr)
      for (int pc = 0; pc < npc; ++pc)
        cols.push_back(extract_patch(*planes, patch, pr, pc));
  }
  Eigen::MatrixXd X(cols[0].size(), cols.size());
  for (size_t i = 0; i < cols.size(); ++i) X.col(i) = cols[i];
  return X;
}

int nearest_centroid(const Eigen::MatrixXd& centroids,
                     const Eigen::VectorXd& v) {
  int best = 0;
  double best_d = (centroids.col(0) - v).squaredNorm();
  for (int k = 1; k < centroids.cols(); ++k) {
    const double d = (centroids.col(k) - v).squaredNorm();
    if (d < best_d) {
      best_d = d;
      best = k;
    }
  }
  return best;
}

Eigen::MatrixXd kmeans(const Eigen::MatrixXd& X, int k, std::mt19937_64& rng) {
  const int n = int(X.cols());
  if (k < 2) throw CodebookError("fit_codebooks: K must be >= 2");
  std::set<std::vector<double>> distinct;
  for (int i = 0; i < n; ++i)
    distinct.insert(
        std::vector<double>(X.col(i).data(), X.col(i).data() + X.rows()));
  if (int(distinct.size()) < k)
    throw CodebookError("fit_codebooks: only " +
                        std::to_string(distinct.size()) +
                        " distinct patches for K=" + std::to_string(k) +
                        "; use a smaller K");

  // k-means++ seeding
  Eigen::MatrixXd centroids(X.rows(), k);
  centroids.col(0) = X.col(int(uniform01(rng) * n));
  Eigen::VectorXd d2 =
      (X.colwise() - centroids.col(0)).colwise().squaredNorm().transpose();
  for (int c = 1; c < k; ++c) {
    const double total = d2.sum();
    int pick = 0;
    if (total > 0.0) {
      double target = uniform01(rng) * total, acc = 0.0;
      for (int i = 0; i < n; ++i) {
        acc += d2(i);
        if (acc >= target) {
          pick = i;
          break;
        }
      }
    } else {
      pick = int(uniform01(rng) * n);
    }
    centroids.col(c) = X.col(pick);
    for (int i = 0; i < n; ++i)
      d2(i) = std::min(d2(i), (X.col(i) - centroids.col(c)).squaredNorm());
  }

  std::vector<int> assign(n, 0);
  for (int iter = 0; iter < 50; ++iter) {
    for (int i = 0; i < n; ++i) assign[i] = nearest_centroid(centroids, X.col(i));
    Eigen::MatrixXd sums = Eigen::MatrixXd::Zero(X.rows(), k);
    Eigen::VectorXi counts = Eigen::VectorXi::Zero(k);
    for (int i = 0; i < n; ++i) {
      sums.col(assign[i]) += X.col(i);
      counts(assign[i])++;
    }
    for (int c = 0; c < k; ++c) {
      if (counts(c) > 0) {
        centroids.col(c) = sums.col(c) / counts(c);
      } else {
        // re-seed from the point farthest from its current centroid
        int far = 0;
        double far_d = -1.0;
        for (int i = 0; i < n; ++i) {
          const double d = (X.col(i) - centroids.col(assign[i])).squaredNorm();
          if (d > far_d) {
            far_d = d;
            far = i;
          }
        }
        centroids.col(c) = X.col(far);
      }
    }
  }
  return centroids;
}

}  // namespace

SequenceLayout CodebookSet::layout() const {
  SequenceLayout lay;
  auto add_band = [&](const Codebook& cb, int scale, int band,
                      Eigen::Index rows, Eigen::Index cols) {
    const int npr = int(rows) / cb.patch, npc = int(cols) / cb.patch;
    for (int pr = 0; pr < npr; ++pr)
      for (int pc = 0; pc < npc; ++pc)
        lay.slots.push_back({scale, band, pr, pc, cb.offset, cb.size()});
  };
  const Eigen::Index ar = image_h >> depth, ac = image_w >> depth;
  add_band(approx, -1, 0, ar, ac);
  lay.coarse_len = int(lay.slots.size());
  for (int j = 0; j < depth; ++j)
    for (int b = 0; b < 3; ++b)
      add_band(details[j][b], j, b, ar << j, ac << j);
  return lay;
}

CodebookSet fit_codebooks(const std::vector<SubbandPyramid>& pyramids,
                          const TokenizerSpec& spec, uint64_t seed) {
  if (pyramids.empty()) throw CodebookError("fit_codebooks: no pyramids");
  const auto& first = pyramids[0];
  for (const auto& p : pyramids)
    if (p.depth != first.depth || p.num_channels() != first.num_channels() ||
        p.approx[0].rows() != first.approx[0].rows() ||
        p.approx[0].cols() != first.approx[0].cols())
      throw DimensionError("fit_codebooks: pyramids disagree in shape");

  CodebookSet set;
  set.depth = first.depth;
  set.channels = first.num_channels();
  set.image_h = first.image_height();
  set.image_w = first.image_width();
  set.seed = seed;
  set.details.resize(set.depth);

  int next_offset = 0;
  uint64_t stream = 0;
  auto fit_band = [&](std::function<const std::vector<Plane>&(const SubbandPyramid&)>
                          select,
                      int k, int patch) {
    std::vector<const std::vector<Plane>*> bands;
    for (const auto& p : pyramids) bands.push_back(&select(p));
    const Eigen::MatrixXd X = gather_patches(bands, patch);
    std::mt19937_64 rng(mix_seed(seed, stream++));
    Codebook cb;
    cb.patch = patch;
    cb.offset = next_offset;
    cb.centroids = kmeans(X, k, rng);
    next_offset += cb.size();
    return cb;
  };

  set.approx = fit_band([](const SubbandPyramid& p) -> const std::vector<Plane>& {
    return p.approx;
  }, spec.approx_k, spec.approx_patch);
  for (int j = 0; j < set.depth; ++j)
    for (int b = 0; b < 3; ++b)
      set.details[j][b] = fit_band(
          [j, b](const SubbandPyramid& p) -> const std::vector<Plane>& {
            return p.details[j][b];
          },
          spec.detail_k, spec.detail_patch);
  return set;
}

static const Codebook& slot_codebook(const CodebookSet& cb,
                                     const SequenceLayout::Slot& s) {
  return s.scale < 0 ? cb.approx : cb.details[s.scale][s.band];
}

TokenSequence encode(const SubbandPyramid& pyramid, const CodebookSet& cb) {
  if (pyramid.depth != cb.depth || pyramid.num_channels() != cb.channels ||
      pyramid.image_height() != cb.image_h ||
      pyramid.image_width() != cb.image_w)
    throw DimensionError("encode: pyramid shape incompatible with codebooks");
  auto lay = std::make_shared<SequenceLayout>(cb.layout());
  TokenSequence seq;
  seq.layout = lay;
  seq.body.reserve(lay->slots.size());
  for (const auto& s : lay->slots) {
    const Codebook& book = slot_codebook(cb, s);
    const auto& planes = s.scale < 0 ? pyramid.approx
                                     : pyramid.details[s.scale][s.band];
    const Eigen::VectorXd v = extract_patch(planes, book.patch, s.prow, s.pcol);
    seq.body.push_back(int32_t(s.offset + nearest_centroid(book.centroids, v)));
  }
  return seq;
}

SubbandPyramid decode(const TokenSequence& tokens, const CodebookSet& cb) {
  const SequenceLayout lay = cb.layout();
  if (tokens.body.size() != lay.slots.size() &&
      int(tokens.body.size()) != lay.coarse_len)
    throw CorruptSequenceError("decode: body length " +
                               std::to_string(tokens.body.size()) +
                               " is neither full nor coarse-only");
  SubbandPyramid pyr;
  pyr.depth = cb.depth;
  const int ar = cb.image_h >> cb.depth, ac = cb.image_w >> cb.depth;
  pyr.approx.assign(cb.channels, Plane::Zero(ar, ac));
  pyr.details.resize(cb.depth);
  for (int j = 0; j < cb.depth; ++j)
    for (int b = 0; b < 3; ++b)
      pyr.details[j][b].assign(cb.channels, Plane::Zero(ar << j, ac << j));

  for (size_t i = 0; i < tokens.body.size(); ++i) {
    const auto& s = lay.slots[i];
    const int32_t id = tokens.body[i];
    if (id < s.offset || id >= s.offset + s.vocab)
      throw CorruptSequenceError("decode: token " + std::to_string(id) +
                                 " outside codebook range at slot " +
                                 std::to_string(i));
    const Codebook& book = slot_codebook(cb, s);
    auto& planes = s.scale < 0 ? pyr.approx : pyr.details[s.scale][s.band];
    write_patch(planes, book.patch, s.prow, s.pcol,
                book.centroids.col(id - s.offset));
  }
  return pyr;
}

TokenSequence coarse_slice(const TokenSequence& tokens) {
  TokenSequence out = tokens;
  if (tokens.layout &&
      out.body.size() > size_t(tokens.layout->coarse_len))
    out.body.resize(tokens.layout->coarse_len);
  return out;
}

std::vector<uint8_t> serialize(const TokenSequence& tokens) {
  std::vector<uint8_t> bytes;
  auto put = [&](int32_t v) {
    for (int i = 0; i < 4; ++i) bytes.push_back(uint8_t((uint32_t(v) >> (8 * i)) & 0xff));
  };
  put(int32_t(tokens.cond.size()));
  for (int32_t t : tokens.cond) put(t);
  put(int32_t(tokens.body.size()));
  for (int32_t t : tokens.body) put(t);
  return bytes;
}

TokenSequence parse(const std::vector<uint8_t>& bytes,
                    std::shared_ptr<const SequenceLayout> layout) {
  size_t pos = 0;
  auto get = [&]() -> int32_t {
    if (pos + 4 > bytes.size())
      throw CorruptSequenceError("parse: truncated token sequence");
    uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= uint32_t(bytes[pos++]) << (8 * i);
    return int32_t(v);
  };
  TokenSequence seq;
  seq.layout = std::move(layout);
  const int32_t nc = get();
  if (nc < 0) throw CorruptSequenceError("parse: negative cond length");
  for (int32_t i = 0; i < nc; ++i) seq.cond.push_back(get());
  const int32_t nb = get();
  if (nb < 0) throw CorruptSequenceError("parse: negative body length");
  for (int32_t i = 0; i < nb; ++i) seq.body.push_back(get());
  if (pos != bytes.size())
    throw CorruptSequenceError("parse: trailing bytes after sequence");
  return seq;
}

}  // namespace dpw::tokenizer
