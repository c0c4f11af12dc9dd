#pragma once

#include <cstdint>
#include <vector>

#include "nlr/fields.hpp"
#include "nlr/geometry.hpp"
#include "nlr/image.hpp"
#include "nlr/tracer.hpp"

namespace nlr {

struct NeuralFrame {
  Image rgba;                      // linear RGB clamped to [0,1], alpha = hit
  Image depth;                     // distance from the camera center, 0 on background
  std::vector<std::uint8_t> mask;  // 1 where the ray hit the surface
};

// Sphere-traces every pixel center, then shades hits with the radiance field.
NeuralFrame render_neural(const FieldModel<float>& model, const Camera& cam, const TraceConfig& cfg);

}  // namespace nlr
