#pragma once

// One training or evaluation example: a color image, its depth map, and
// the binary ground-truth mask, all at the same square extents.

#include <string>

#include "hct/tensor.hpp"

namespace hct {

struct Sample {
  Tensor rgb;    // [h, w, 3], values in [0, 1]
  Tensor depth;  // [h, w, 1], values in [0, 1]
  Tensor gt;     // [h, w], values in [0, 1]
  std::string id;
};

// Mirrors a rank-2 [h, w] or rank-3 [h, w, c] tensor left-to-right.
Tensor flip_horizontal(const Tensor& t);

// Mirrors rgb, depth and gt together; the id is kept.
Sample flip_horizontal(const Sample& s);

}  // namespace hct
