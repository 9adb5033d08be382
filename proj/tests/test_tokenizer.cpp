#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <random>

#include "dpwavelet/tokenizer.hpp"
#include "dpwavelet/wavelet.hpp"

using namespace dpw;

namespace {

std::vector<SubbandPyramid> toy_pyramids(int count, uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<SubbandPyramid> out;
  for (int n = 0; n < count; ++n) {
    ImageTensor img(16, 16, 1);
    for (Eigen::Index i = 0; i < 16; ++i)
      for (Eigen::Index j = 0; j < 16; ++j)
        img.channels[0](i, j) = u(rng);
    out.push_back(wavelet::decompose(img, 2));
  }
  return out;
}

}  // namespace

TEST_CASE("layout is coarse first with disjoint contiguous id ranges") {
  const auto pyramids = toy_pyramids(24, 1);
  const auto cb = tokenizer::fit_codebooks(pyramids, {}, 42);
  const tokenizer::SequenceLayout layout = cb.layout();

  REQUIRE(layout.coarse_len > 0);
  for (int i = 0; i < layout.coarse_len; ++i)
    CHECK(layout.slots[size_t(i)].scale == -1);
  for (size_t i = size_t(layout.coarse_len); i < layout.slots.size(); ++i)
    CHECK(layout.slots[i].scale >= 0);

  // scale ordering: all coarser-scale slots precede finer-scale slots
  for (size_t i = 1; i < layout.slots.size(); ++i)
    CHECK(layout.slots[i - 1].scale <= layout.slots[i].scale);

  // token id ranges cover disjoint intervals and approx ids come first
  CHECK(layout.slots[0].offset == 0);
  CHECK(cb.approx.offset == 0);
  int max_end = 0;
  for (const auto& s : layout.slots) {
    CHECK(s.vocab > 0);
    max_end = std::max(max_end, s.offset + s.vocab);
  }
  CHECK(max_end == cb.total_vocab());
  for (const auto& scale : cb.details)
    for (const auto& bandcb : scale) CHECK(bandcb.offset >= cb.approx.size());
}

TEST_CASE("encode emits tokens inside each slot's range; decode round trips") {
  const auto pyramids = toy_pyramids(40, 2);
  const auto cb = tokenizer::fit_codebooks(pyramids, {}, 7);
  const auto layout = cb.layout();

  for (int n = 0; n < 5; ++n) {
    const tokenizer::TokenSequence seq = tokenizer::encode(pyramids[size_t(n)], cb);
    REQUIRE(seq.body.size() == layout.slots.size());
    for (size_t i = 0; i < seq.body.size(); ++i) {
      const auto& s = layout.slots[i];
      CHECK(seq.body[i] >= s.offset);
      CHECK(seq.body[i] < s.offset + s.vocab);
    }
    // decode lands on centroid tilings: re-encoding is a fixed point
    const SubbandPyramid dec = tokenizer::decode(seq, cb);
    const tokenizer::TokenSequence seq2 = tokenizer::encode(dec, cb);
    CHECK(seq2.body == seq.body);
  }
}

TEST_CASE("quantization error shrinks as the codebook grows") {
  const auto pyramids = toy_pyramids(40, 3);
  auto approx_err = [&](int k) {
    tokenizer::TokenizerSpec spec;
    spec.approx_k = k;
    const auto cb = tokenizer::fit_codebooks(pyramids, spec, 13);
    double err = 0.0;
    for (const auto& pyr : pyramids) {
      const SubbandPyramid dec =
          tokenizer::decode(tokenizer::encode(pyr, cb), cb);
      err += (dec.approx[0] - pyr.approx[0]).squaredNorm();
    }
    return err;
  };
  const double coarse_err = approx_err(2), fine_err = approx_err(32);
  CHECK(fine_err < 0.5 * coarse_err);
}

TEST_CASE("fitting is deterministic in the seed") {
  const auto pyramids = toy_pyramids(24, 5);
  const auto a = tokenizer::fit_codebooks(pyramids, {}, 11);
  const auto b = tokenizer::fit_codebooks(pyramids, {}, 11);
  const auto c = tokenizer::fit_codebooks(pyramids, {}, 12);
  CHECK((a.approx.centroids - b.approx.centroids).cwiseAbs().maxCoeff() == 0.0);
  CHECK((a.details[0][0].centroids - b.details[0][0].centroids).cwiseAbs().maxCoeff() == 0.0);
  CHECK((a.approx.centroids - c.approx.centroids).cwiseAbs().maxCoeff() > 0.0);
}

TEST_CASE("nearest-centroid ties resolve to the lowest id") {
  // hand-built codebook with duplicate centroids
  const auto pyramids = toy_pyramids(16, 6);
  auto cb = tokenizer::fit_codebooks(pyramids, {}, 9);
  cb.approx.centroids.col(1) = cb.approx.centroids.col(0);
  const auto seq = tokenizer::encode(pyramids[0], cb);
  for (int i = 0; i < cb.layout().coarse_len; ++i)
    CHECK(seq.body[size_t(i)] != cb.approx.offset + 1);  // 0 wins the tie
}

TEST_CASE("coarse slice keeps the approx prefix and is idempotent") {
  const auto pyramids = toy_pyramids(16, 8);
  const auto cb = tokenizer::fit_codebooks(pyramids, {}, 4);
  const auto layout = cb.layout();
  tokenizer::TokenSequence seq = tokenizer::encode(pyramids[0], cb);
  seq.cond = {2};
  const auto sliced = tokenizer::coarse_slice(seq);
  CHECK(sliced.cond == seq.cond);
  REQUIRE(int(sliced.body.size()) == layout.coarse_len);
  for (int i = 0; i < layout.coarse_len; ++i)
    CHECK(sliced.body[size_t(i)] == seq.body[size_t(i)]);
  const auto twice = tokenizer::coarse_slice(sliced);
  CHECK(twice.body == sliced.body);

  // decoding a coarse-only body yields zero detail planes
  const SubbandPyramid dec = tokenizer::decode(sliced, cb);
  for (const auto& scale : dec.details)
    for (const auto& band : scale)
      for (const auto& p : band) CHECK(p.cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("out-of-range tokens are rejected with the offending slot named") {
  const auto pyramids = toy_pyramids(16, 10);
  const auto cb = tokenizer::fit_codebooks(pyramids, {}, 5);
  tokenizer::TokenSequence seq = tokenizer::encode(pyramids[0], cb);
  seq.body[0] = cb.total_vocab() + 3;  // outside every range
  CHECK_THROWS_AS(tokenizer::decode(seq, cb), CorruptSequenceError);
  seq.body[0] = cb.approx.size();  // valid id but wrong slot (a detail id)
  CHECK_THROWS_AS(tokenizer::decode(seq, cb), CorruptSequenceError);
}

TEST_CASE("serialize and parse round trip") {
  const auto pyramids = toy_pyramids(16, 12);
  const auto cb = tokenizer::fit_codebooks(pyramids, {}, 6);
  tokenizer::TokenSequence seq = tokenizer::encode(pyramids[0], cb);
  seq.cond = {1, 3};
  const auto bytes = tokenizer::serialize(seq);
  const auto back = tokenizer::parse(bytes, seq.layout);
  CHECK(back.cond == seq.cond);
  CHECK(back.body == seq.body);
  auto truncated = bytes;
  truncated.resize(bytes.size() - 3);
  CHECK_THROWS_AS(tokenizer::parse(truncated, seq.layout), CorruptSequenceError);
}
