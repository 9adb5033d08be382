#include "dpwavelet/synth.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "dpwavelet/rng.hpp"

namespace dpw::synth {

ImageTensor synth_image(const SynthSpec& spec, int class_id, int item_index) {
  if (class_id < 0 || class_id >= spec.classes)
    throw ArgumentError("synth_image: class id out of range");
  const int n = spec.image_size;
  std::mt19937_64 rng(mix_seed(spec.seed, uint64_t(class_id) * 1000003ULL +
                                              uint64_t(item_index) * 2ULL +
                                              uint64_t(spec.style)));
  const bool pub = spec.style == Style::Public;

  const double bg_lo = pub ? 0.10 + 0.10 * uniform01(rng)
                           : 0.60 + 0.10 * uniform01(rng);
  const double bg_hi = bg_lo + 0.20 + 0.10 * uniform01(rng);
  const double shape_v = pub ? 0.80 + 0.15 * uniform01(rng)
                             : 0.05 + 0.15 * uniform01(rng);
  const double cx = n * (0.40 + 0.20 * uniform01(rng));
  const double cy = n * (0.40 + 0.20 * uniform01(rng));
  const double radius = n * (0.18 + 0.10 * uniform01(rng));

  ImageTensor image(n, n, spec.channels);
  for (int r = 0; r < n; ++r) {
    for (int c = 0; c < n; ++c) {
      // public: horizontal gradient; private: vertical
      const double t = pub ? double(c) / (n - 1) : double(r) / (n - 1);
      double v = bg_lo + (bg_hi - bg_lo) * t;

      const double dx = c - cx, dy = r - cy;
      bool inside = false;
      switch (class_id % 4) {
        case 0:  // disk
          inside = dx * dx + dy * dy <= radius * radius;
          break;
        case 1:  // square
          inside = std::abs(dx) <= radius && std::abs(dy) <= radius;
          break;
        case 2:  // plus
          inside = (std::abs(dx) <= radius * 0.4 && std::abs(dy) <= radius) ||
                   (std::abs(dy) <= radius * 0.4 && std::abs(dx) <= radius);
          break;
        default:  // ring
          inside = dx * dx + dy * dy <= radius * radius &&
                   dx * dx + dy * dy >= 0.25 * radius * radius;
          break;
      }
      if (inside) v = shape_v;
      for (int ch = 0; ch < spec.channels; ++ch) {
        // color channels get a per-channel tint of the same structure
        const double tint = spec.channels == 1 ? 1.0 : 0.8 + 0.1 * ch;
        image.channels[ch](r, c) = std::clamp(v * tint, 0.0, 1.0);
      }
    }
  }
  return image;
}

}  // namespace dpw::synth
