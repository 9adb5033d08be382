#include "dpwavelet/wavelet.hpp"

#include <cmath>

namespace dpw::wavelet {

SubbandPyramid decompose(const ImageTensor& image, int depth) {
  if (depth < 1) throw ConfigError("decompose: depth must be >= 1");
  const int div = 1 << (depth + 1);
  if (image.height() % div != 0 || image.width() % div != 0)
    throw ResolutionError("decompose: image " + std::to_string(image.height()) +
                      "x" + std::to_string(image.width()) +
                      " not divisible by " + std::to_string(div) +
                      " required for depth " + std::to_string(depth));
  for (const auto& ch : image.channels)
    if (!ch.allFinite())
      throw NumericError("decompose: non-finite sample in image");

  SubbandPyramid pyr;
  pyr.depth = depth;
  pyr.approx.resize(image.num_channels());
  pyr.details.resize(depth);
  for (auto& scale : pyr.details)
    for (auto& band : scale) band.resize(image.num_channels());

  for (int c = 0; c < image.num_channels(); ++c) {
    Plane running = image.channels[c];
    // scale depth-1 is the first split (finest), scale 0 the last (coarsest)
    for (int j = depth - 1; j >= 0; --j) {
      Plane ll, lh, hl, hh;
      dwt2_level(running, ll, lh, hl, hh);
      pyr.details[j][0][c] = std::move(lh);
      pyr.details[j][1][c] = std::move(hl);
      pyr.details[j][2][c] = std::move(hh);
      running = std::move(ll);
    }
    pyr.approx[c] = std::move(running);
  }
  return pyr;
}

static void check_pyramid(const SubbandPyramid& pyr) {
  if (pyr.depth < 1 || int(pyr.details.size()) != pyr.depth)
    throw DimensionError("pyramid: depth/detail count mismatch");
  const int nc = pyr.num_channels();
  const Eigen::Index ar = pyr.approx[0].rows(), ac = pyr.approx[0].cols();
  for (int j = 0; j < pyr.depth; ++j) {
    const Eigen::Index er = ar << j, ec = ac << j;
    for (const auto& band : pyr.details[j]) {
      if (int(band.size()) != nc)
        throw DimensionError("pyramid: channel count mismatch at scale " +
                             std::to_string(j));
      for (const auto& p : band)
        if (p.rows() != er || p.cols() != ec)
          throw DimensionError("pyramid: plane shape mismatch at scale " +
                               std::to_string(j));
    }
  }
}

ImageTensor partial_reconstruct(const SubbandPyramid& pyr, int k,
                                bool clamp_display) {
  if (k < 0 || k > pyr.depth)
    throw ArgumentError("partial_reconstruct: k=" + std::to_string(k) +
                        " outside [0," + std::to_string(pyr.depth) + "]");
  check_pyramid(pyr);
  ImageTensor out;
  out.channels.resize(pyr.num_channels());
  for (int c = 0; c < pyr.num_channels(); ++c) {
    Plane running = pyr.approx[c];
    for (int j = 0; j < pyr.depth; ++j) {
      const Plane zero = Plane::Zero(running.rows(), running.cols());
      if (j < k) {
        running = idwt2_level(running, pyr.details[j][0][c],
                              pyr.details[j][1][c], pyr.details[j][2][c]);
      } else {
        running = idwt2_level(running, zero, zero, zero);
      }
    }
    if (clamp_display)
      running = running.cwiseMax(0.0).cwiseMin(1.0);
    out.channels[c] = std::move(running);
  }
  return out;
}

ImageTensor reconstruct(const SubbandPyramid& pyr, bool clamp_display) {
  return partial_reconstruct(pyr, pyr.depth, clamp_display);
}

std::vector<double> energy_profile(const SubbandPyramid& pyr) {
  std::vector<double> energies;
  double approx_e = 0.0;
  for (const auto& p : pyr.approx) approx_e += p.squaredNorm();
  energies.push_back(approx_e);
  for (const auto& scale : pyr.details) {
    for (const auto& band : scale) {
      double e = 0.0;
      for (const auto& p : band) e += p.squaredNorm();
      energies.push_back(e);
    }
  }
  double total = 0.0;
  for (double e : energies) total += e;
  if (total == 0.0) return std::vector<double>(energies.size(), 0.0);
  for (double& e : energies) e /= total;
  return energies;
}

}  // namespace dpw::wavelet
