#pragma once

#include <Eigen/Dense>
#include <array>
#include <stdexcept>
#include <string>
#include <vector>

namespace dpw {

using Plane = Eigen::MatrixXd;

template <typename Scalar>
using PlaneT = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;

// Error taxonomy shared across modules. Everything derives from Error so the
// CLI can map categories onto exit codes in one place.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct DimensionError : Error {
  using Error::Error;
};
struct ConfigError : Error {
  using Error::Error;
};
struct ArgumentError : Error {
  using Error::Error;
};
struct CodebookError : Error {
  using Error::Error;
};
struct CorruptSequenceError : Error {
  using Error::Error;
};
struct NumericError : Error {
  using Error::Error;
};
struct CalibrationError : Error {
  using Error::Error;
};
struct StatisticsError : Error {
  using Error::Error;
};
struct LengthError : Error {
  using Error::Error;
};
struct ResolutionError : Error {
  using Error::Error;
};
struct IoError : Error {
  using Error::Error;
};

// H x W x C pixel grid, one dense plane per channel, samples nominally in [0,1].
struct ImageTensor {
  std::vector<Plane> channels;  // each height x width

  ImageTensor() = default;
  ImageTensor(int height, int width, int num_channels)
      : channels(num_channels, Plane::Zero(height, width)) {}

  int height() const { return channels.empty() ? 0 : int(channels[0].rows()); }
  int width() const { return channels.empty() ? 0 : int(channels[0].cols()); }
  int num_channels() const { return int(channels.size()); }

  double squared_norm() const {
    double s = 0.0;
    for (const auto& p : channels) s += p.squaredNorm();
    return s;
  }
};

enum class Band { LH = 0, HL = 1, HH = 2 };

inline const char* band_name(Band b) {
  switch (b) {
    case Band::LH: return "LH";
    case Band::HL: return "HL";
    default: return "HH";
  }
}

// Multiscale coefficient set: one approx plane per channel plus, per detail
// scale j (0 = coarsest) and orientation, one plane per channel.
struct SubbandPyramid {
  int depth = 0;  // J, number of detail scales
  std::vector<Plane> approx;  // per channel, (H/2^J) x (W/2^J)
  // details[j][band][channel], scale j plane is (H/2^(J-j)) x (W/2^(J-j))
  std::vector<std::array<std::vector<Plane>, 3>> details;

  int num_channels() const { return int(approx.size()); }
  int image_height() const {
    return approx.empty() ? 0 : int(approx[0].rows()) << depth;
  }
  int image_width() const {
    return approx.empty() ? 0 : int(approx[0].cols()) << depth;
  }

  double squared_norm() const {
    double s = 0.0;
    for (const auto& p : approx) s += p.squaredNorm();
    for (const auto& scale : details)
      for (const auto& band : scale)
        for (const auto& p : band) s += p.squaredNorm();
    return s;
  }
};

}  // namespace dpw
