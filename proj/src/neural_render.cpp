#include "nlr/neural_render.hpp"

#include <algorithm>

#include "nlr/objective.hpp"
#include "nlr/parallel.hpp"
#include "nlr/sdf.hpp"

namespace nlr {
namespace {

constexpr std::size_t kShadeChunk = 512;

}  // namespace

NeuralFrame render_neural(const FieldModel<float>& model, const Camera& cam, const TraceConfig& cfg) {
  cfg.validate();
  const int w = cam.width(), h = cam.height();
  std::vector<Ray> rays(static_cast<std::size_t>(w) * h);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) rays[static_cast<std::size_t>(y) * w + x] = ray_from_pixel(cam, x, y);

  const NeuralSdf sdf(model.sdf);
  const auto hits = trace_bidirectional(sdf, rays, cfg, false);
  std::vector<std::size_t> fg;
  for (std::size_t i = 0; i < hits.size(); ++i)
    if (hits[i].hit()) fg.push_back(i);

  NeuralFrame out{Image(w, h, 4), Image(w, h, 1), std::vector<std::uint8_t>(rays.size(), 0)};
  const std::size_t chunks = (fg.size() + kShadeChunk - 1) / kShadeChunk;
  parallel_for(chunks, [&](std::size_t c) {
    const std::size_t b = c * kShadeChunk, e = std::min(fg.size(), b + kShadeChunk);
    std::vector<Vec3> xh, d;
    for (std::size_t k = b; k < e; ++k) {
      xh.push_back(hits[fg[k]].x);
      d.push_back(rays[fg[k]].dir);
    }
    const auto s = shade_surface(model, xh, d, cfg.denom_clamp);
    for (std::size_t k = b; k < e; ++k) {
      const std::size_t p = fg[k];
      for (int ch = 0; ch < 3; ++ch)
        out.rgba.data[p * 4 + ch] = static_cast<float>(std::clamp(s.rgb[k - b][ch], 0.0, 1.0));
      out.rgba.data[p * 4 + 3] = 1.0f;
      out.depth.data[p] = static_cast<float>((s.x[k - b] - rays[p].origin).norm());
      out.mask[p] = 1;
    }
  });
  return out;
}

}  // namespace nlr
