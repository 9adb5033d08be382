#pragma once

#include <cstdint>

#include "dpwavelet/types.hpp"

namespace dpw::synth {

// Deterministic toy corpus: one geometric shape per class on a smooth
// gradient background. The two styles are deliberately disjoint (bright
// shapes on dark horizontal gradients vs dark shapes on bright vertical
// gradients) so a public/private distribution gap exists by construction.
enum class Style { Public = 0, Private = 1 };

struct SynthSpec {
  int image_size = 16;
  int channels = 1;
  int classes = 4;
  uint64_t seed = 0;
  Style style = Style::Public;
};

ImageTensor synth_image(const SynthSpec& spec, int class_id, int item_index);

}  // namespace dpw::synth
