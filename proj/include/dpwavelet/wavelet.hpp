#pragma once

#include "dpwavelet/types.hpp"

namespace dpw::wavelet {

// Orthonormal 2D Haar analysis of one plane. Each non-overlapping 2x2 block
// [[a,b],[c,d]] maps to LL=(a+b+c+d)/2, LH=(a+b-c-d)/2, HL=(a-b+c-d)/2,
// HH=(a-b-c+d)/2, so sum of squares is preserved exactly.
template <typename Scalar>
void dwt2_level(const PlaneT<Scalar>& plane, PlaneT<Scalar>& ll,
                PlaneT<Scalar>& lh, PlaneT<Scalar>& hl, PlaneT<Scalar>& hh) {
  const Eigen::Index rows = plane.rows(), cols = plane.cols();
  if (rows % 2 != 0)
    throw DimensionError("dwt2_level: height " + std::to_string(rows) +
                         " is odd");
  if (cols % 2 != 0)
    throw DimensionError("dwt2_level: width " + std::to_string(cols) +
                         " is odd");
  const Eigen::Index hr = rows / 2, hc = cols / 2;
  ll.resize(hr, hc);
  lh.resize(hr, hc);
  hl.resize(hr, hc);
  hh.resize(hr, hc);
  for (Eigen::Index i = 0; i < hr; ++i) {
    for (Eigen::Index j = 0; j < hc; ++j) {
      const Scalar a = plane(2 * i, 2 * j);
      const Scalar b = plane(2 * i, 2 * j + 1);
      const Scalar c = plane(2 * i + 1, 2 * j);
      const Scalar d = plane(2 * i + 1, 2 * j + 1);
      ll(i, j) = (a + b + c + d) / Scalar(2);
      lh(i, j) = (a + b - c - d) / Scalar(2);
      hl(i, j) = (a - b + c - d) / Scalar(2);
      hh(i, j) = (a - b - c + d) / Scalar(2);
    }
  }
}

// Exact inverse of dwt2_level.
template <typename Scalar>
PlaneT<Scalar> idwt2_level(const PlaneT<Scalar>& ll, const PlaneT<Scalar>& lh,
                           const PlaneT<Scalar>& hl, const PlaneT<Scalar>& hh) {
  const Eigen::Index hr = ll.rows(), hc = ll.cols();
  auto same = [&](const PlaneT<Scalar>& p) {
    return p.rows() == hr && p.cols() == hc;
  };
  if (!same(lh) || !same(hl) || !same(hh))
    throw DimensionError("idwt2_level: subband shapes differ");
  PlaneT<Scalar> plane(hr * 2, hc * 2);
  for (Eigen::Index i = 0; i < hr; ++i) {
    for (Eigen::Index j = 0; j < hc; ++j) {
      const Scalar s = ll(i, j), h = lh(i, j), v = hl(i, j), d = hh(i, j);
      plane(2 * i, 2 * j) = (s + h + v + d) / Scalar(2);
      plane(2 * i, 2 * j + 1) = (s + h - v - d) / Scalar(2);
      plane(2 * i + 1, 2 * j) = (s - h + v - d) / Scalar(2);
      plane(2 * i + 1, 2 * j + 1) = (s - h - v + d) / Scalar(2);
    }
  }
  return plane;
}

// J-level cascade applied to the running approximation, per channel.
// details[0] is the coarsest scale, matching the pyramid indexing.
SubbandPyramid decompose(const ImageTensor& image, int depth);

// Full inverse. clamp_display snaps the result into [0,1].
ImageTensor reconstruct(const SubbandPyramid& pyramid,
                        bool clamp_display = false);

// Approx plus detail scales 0..k-1 only; remaining details treated as zero.
// k == depth reproduces reconstruct exactly.
ImageTensor partial_reconstruct(const SubbandPyramid& pyramid, int k,
                                bool clamp_display = false);

// Energy fraction per plane: [0] = approx, then per scale j the three
// orientations in LH, HL, HH order. Sums to 1; all-zero pyramid gives zeros.
std::vector<double> energy_profile(const SubbandPyramid& pyramid);

}  // namespace dpw::wavelet
