#include "nlr/lumigraph.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <limits>

#include <json.hpp>

#include "json_util.hpp"
#include "nlr/errors.hpp"
#include "nlr/parallel.hpp"

namespace nlr {
namespace {

constexpr int kBandRows = 8;
// Fewer than k visible textures: the closing angle sits 10% past the last.
constexpr double kPhantomAngle = 1.1;

struct ScreenVertex {
  double x, y, z;  // pixel coordinates and NDC depth
  double inv_w;
  bool valid;
};

// Texture camera data used per pixel.
struct TexView {
  Mat4 vp;
  Vec3 center;
  int w, h;
};

// Bilinear lookup over the texels with alpha > 0; returns false when none of
// the four taps is valid or the point falls outside the frame.
bool sample_bilinear(const Image& tex, const Image* depth, double u, double v, Vec3* rgb, double* d) {
  if (u < 0 || v < 0 || u >= tex.width || v >= tex.height) return false;
  const double fx = u - 0.5, fy = v - 0.5;
  const int x0 = static_cast<int>(std::floor(fx)), y0 = static_cast<int>(std::floor(fy));
  const double ax = fx - x0, ay = fy - y0;
  double wsum = 0, dsum = 0;
  Vec3 csum = Vec3::Zero();
  for (int dy = 0; dy < 2; ++dy)
    for (int dx = 0; dx < 2; ++dx) {
      const int x = std::clamp(x0 + dx, 0, tex.width - 1), y = std::clamp(y0 + dy, 0, tex.height - 1);
      const std::size_t p = static_cast<std::size_t>(y) * tex.width + x;
      if (tex.data[p * 4 + 3] <= 0) continue;
      const double w = (dx ? ax : 1 - ax) * (dy ? ay : 1 - ay);
      if (w <= 0) continue;
      wsum += w;
      if (rgb) csum += w * Vec3(tex.data[p * 4], tex.data[p * 4 + 1], tex.data[p * 4 + 2]);
      if (depth) dsum += w * depth->data[p];
    }
  if (wsum <= 0) return false;
  if (rgb) *rgb = csum / wsum;
  if (d) *d = dsum / wsum;
  return true;
}

bool visible_in(const TexView& tv, const Image& tex, const Image& depth, const Vec3& x, double bias, double* u,
                double* v) {
  const Vec4 clip = tv.vp * x.homogeneous();
  if (clip.w() <= 0) return false;
  const double nx = clip.x() / clip.w(), ny = clip.y() / clip.w();
  *u = (nx + 1.0) * 0.5 * tv.w;
  *v = (1.0 - ny) * 0.5 * tv.h;
  if (*u < 0 || *v < 0 || *u >= tv.w || *v >= tv.h) return false;
  // The texel under the point must itself be covered.
  const int px = std::min(static_cast<int>(*u), tv.w - 1), py = std::min(static_cast<int>(*v), tv.h - 1);
  if (tex.data[(static_cast<std::size_t>(py) * tv.w + px) * 4 + 3] <= 0) return false;
  double stored = 0;
  if (!sample_bilinear(tex, &depth, *u, *v, nullptr, &stored)) return false;
  return stored >= (x - tv.center).norm() - bias;
}

std::vector<TexView> texture_views(const ExportBundle& b) {
  std::vector<TexView> out;
  for (const auto& c : b.cameras) out.push_back({c.view_proj(), c.center(), c.width(), c.height()});
  return out;
}

double edge(double ax, double ay, double bx, double by, double px, double py) {
  return (bx - ax) * (py - ay) - (by - ay) * (px - ax);
}

bool top_left(double ax, double ay, double bx, double by) {
  const double dx = bx - ax, dy = by - ay;
  return (dy == 0 && dx > 0) || dy < 0;
}

// Blend weights w_i ~ (1 / tau_i)(1 - tau_i / tau_k) for ascending,
// non-negative angles, written into w[0..k).
void weights_into(const double* tau, std::size_t k, double* w) {
  std::fill(w, w + k, 0.0);
  const double tk = tau[k - 1];
  if (tau[0] == 0 && tk > 0) {
    // Limit of the 1 / tau factor: zero angles take everything.
    std::size_t zeros = 0;
    while (zeros < k && tau[zeros] == 0) ++zeros;
    for (std::size_t i = 0; i < zeros; ++i) w[i] = 1.0 / static_cast<double>(zeros);
    return;
  }
  double sum = 0;
  for (std::size_t i = 0; i < k; ++i) {
    w[i] = tk > 0 ? (1.0 / tau[i]) * (1.0 - tau[i] / tk) : 0.0;
    sum += w[i];
  }
  if (!(sum >= 1e-9) || !std::isfinite(sum)) {
    std::fill(w, w + k, 1.0 / static_cast<double>(k));
    return;
  }
  for (std::size_t i = 0; i < k; ++i) w[i] /= sum;
}

}  // namespace

GBuffer rasterize(const Mesh& mesh, const Camera& cam) {
  mesh.validate();
  const int W = cam.width(), H = cam.height();
  GBuffer g;
  g.width = W;
  g.height = H;
  const std::size_t np = static_cast<std::size_t>(W) * H;
  g.position.assign(np, Vec3::Zero());
  g.depth.assign(np, 0.0f);
  g.covered.assign(np, 0);

  const Mat4& vp = cam.view_proj();
  std::vector<ScreenVertex> sv(mesh.vertices.size());
  for (std::size_t i = 0; i < sv.size(); ++i) {
    const Vec4 c = vp * mesh.vertices[i].homogeneous();
    if (c.w() <= 1e-12) {
      sv[i] = {0, 0, 0, 0, false};
      continue;
    }
    const double iw = 1.0 / c.w();
    sv[i] = {(c.x() * iw + 1.0) * 0.5 * W, (1.0 - c.y() * iw) * 0.5 * H, c.z() * iw, iw, true};
  }

  // Bin triangles by the row bands their bounding boxes touch.
  const int bands = (H + kBandRows - 1) / kBandRows;
  std::vector<std::vector<std::uint32_t>> bins(static_cast<std::size_t>(bands));
  for (std::size_t t = 0; t < mesh.triangles.size(); ++t) {
    const auto& tri = mesh.triangles[t];
    const auto &a = sv[tri[0]], &b = sv[tri[1]], &c = sv[tri[2]];
    if (!a.valid || !b.valid || !c.valid) continue;
    const double ymin = std::min({a.y, b.y, c.y}), ymax = std::max({a.y, b.y, c.y});
    const double xmin = std::min({a.x, b.x, c.x}), xmax = std::max({a.x, b.x, c.x});
    if (ymax < 0 || ymin > H || xmax < 0 || xmin > W) continue;
    const int b0 = std::clamp(static_cast<int>(std::floor(ymin - 0.5)) / kBandRows, 0, bands - 1);
    const int b1 = std::clamp(static_cast<int>(std::ceil(ymax - 0.5)) / kBandRows, 0, bands - 1);
    for (int k = b0; k <= b1; ++k) bins[k].push_back(static_cast<std::uint32_t>(t));
  }

  parallel_for(static_cast<std::size_t>(bands), [&](std::size_t band) {
    const int row0 = static_cast<int>(band) * kBandRows, row1 = std::min(H, row0 + kBandRows);
    std::vector<double> zbuf(static_cast<std::size_t>(row1 - row0) * W, std::numeric_limits<double>::infinity());
    for (std::uint32_t t : bins[band]) {
      auto tri = mesh.triangles[t];
      const ScreenVertex* v[3] = {&sv[tri[0]], &sv[tri[1]], &sv[tri[2]]};
      double area = edge(v[0]->x, v[0]->y, v[1]->x, v[1]->y, v[2]->x, v[2]->y);
      if (area == 0) continue;
      if (area < 0) {
        std::swap(v[1], v[2]);
        std::swap(tri[1], tri[2]);
        area = -area;
      }
      const int x0 = std::max(0, static_cast<int>(std::ceil(std::min({v[0]->x, v[1]->x, v[2]->x}) - 0.5)));
      const int x1 = std::min(W - 1, static_cast<int>(std::floor(std::max({v[0]->x, v[1]->x, v[2]->x}) - 0.5)));
      const int y0 = std::max(row0, static_cast<int>(std::ceil(std::min({v[0]->y, v[1]->y, v[2]->y}) - 0.5)));
      const int y1 = std::min(row1 - 1, static_cast<int>(std::floor(std::max({v[0]->y, v[1]->y, v[2]->y}) - 0.5)));
      const bool tl[3] = {top_left(v[1]->x, v[1]->y, v[2]->x, v[2]->y), top_left(v[2]->x, v[2]->y, v[0]->x, v[0]->y),
                          top_left(v[0]->x, v[0]->y, v[1]->x, v[1]->y)};
      for (int y = y0; y <= y1; ++y) {
        const double py = y + 0.5;
        for (int x = x0; x <= x1; ++x) {
          const double px = x + 0.5;
          // e[i] is the edge opposite vertex i, so e[i] / area is its barycentric.
          const double e[3] = {edge(v[1]->x, v[1]->y, v[2]->x, v[2]->y, px, py),
                               edge(v[2]->x, v[2]->y, v[0]->x, v[0]->y, px, py),
                               edge(v[0]->x, v[0]->y, v[1]->x, v[1]->y, px, py)};
          bool inside = true;
          for (int i = 0; i < 3 && inside; ++i) inside = e[i] > 0 || (e[i] == 0 && tl[i]);
          if (!inside) continue;
          const double l0 = e[0] / area, l1 = e[1] / area, l2 = e[2] / area;
          const double z = l0 * v[0]->z + l1 * v[1]->z + l2 * v[2]->z;
          double& zb = zbuf[static_cast<std::size_t>(y - row0) * W + x];
          if (!(z < zb)) continue;
          zb = z;
          // Perspective-correct weights.
          const double p0 = l0 * v[0]->inv_w, p1 = l1 * v[1]->inv_w, p2 = l2 * v[2]->inv_w;
          const double s = p0 + p1 + p2;
          const Vec3 pos = (p0 * mesh.vertices[tri[0]] + p1 * mesh.vertices[tri[1]] + p2 * mesh.vertices[tri[2]]) / s;
          const std::size_t idx = g.index(x, y);
          g.position[idx] = pos;
          g.depth[idx] = static_cast<float>((pos - cam.center()).norm());
          g.covered[idx] = 1;
        }
      }
    }
  });
  return g;
}

std::vector<double> blend_weights(std::span<const double> tau) {
  const std::size_t k = tau.size();
  if (k < 2) throw InvalidArgument("lumigraph: blend_weights needs at least 2 angles");
  for (std::size_t i = 0; i < k; ++i) {
    if (!(tau[i] >= 0) || (i > 0 && tau[i] < tau[i - 1])) {
      throw InvalidArgument("lumigraph: angles must be non-negative and ascending");
    }
  }
  std::vector<double> w(k);
  weights_into(tau.data(), k, w.data());
  return w;
}

bool occlusion_test(const Vec3& x, std::size_t texture, const ExportBundle& bundle, double bias) {
  if (texture >= bundle.size()) throw InvalidArgument("lumigraph: texture index out of range");
  const auto& c = bundle.cameras[texture];
  const TexView tv{c.view_proj(), c.center(), c.width(), c.height()};
  double u, v;
  return visible_in(tv, bundle.textures[texture], bundle.depths[texture], x, bias, &u, &v);
}

std::size_t nearest_texture(const ExportBundle& bundle, const Camera& cam) {
  if (bundle.size() == 0) throw InvalidArgument("lumigraph: bundle has no textures");
  std::size_t best = 0;
  double best_dot = -2;
  for (std::size_t i = 0; i < bundle.size(); ++i) {
    const double d = bundle.cameras[i].forward().dot(cam.forward());
    if (d > best_dot) {
      best_dot = d;
      best = i;
    }
  }
  return best;
}

Image render_view(const ExportBundle& bundle, const Camera& cam, const LumigraphOptions& opts) {
  if (bundle.size() == 0) throw InvalidArgument("lumigraph: bundle has no textures");
  if (opts.k < 2) throw InvalidArgument("lumigraph: k must be >= 2");
  const GBuffer g = rasterize(bundle.mesh, cam);
  const auto views = texture_views(bundle);
  const std::size_t N = views.size();
  const std::size_t single = opts.mode == BlendMode::NearestSingle ? nearest_texture(bundle, cam) : 0;
  Image out(g.width, g.height, 4);
  const Vec3 eye = cam.center();

  const std::size_t k = static_cast<std::size_t>(opts.k);
  parallel_for(static_cast<std::size_t>(g.height), [&](std::size_t row) {
    struct Cand {
      double cos;
      std::size_t i;
    };
    struct Pick {
      std::size_t i;
      double u, v;
    };
    std::vector<Cand> cand(N);
    std::vector<Pick> pick(k);
    std::vector<double> tau(k), w(k);
    for (int x = 0; x < g.width; ++x) {
      const std::size_t p = g.index(x, static_cast<int>(row));
      if (!g.covered[p]) continue;
      const Vec3& X = g.position[p];
      const Vec3 to_eye = (eye - X).normalized();
      // Rank by angle first (cosine, descending; ties by index), then run the
      // visibility test only until k visible textures are found.
      std::size_t nc = 0;
      for (std::size_t i = 0; i < N; ++i) {
        if (opts.mode == BlendMode::NearestSingle && i != single) continue;
        cand[nc++] = {std::clamp(to_eye.dot((views[i].center - X).normalized()), -1.0, 1.0), i};
      }
      std::sort(cand.begin(), cand.begin() + static_cast<std::ptrdiff_t>(nc),
                [](const Cand& a, const Cand& b) { return a.cos != b.cos ? a.cos > b.cos : a.i < b.i; });
      std::size_t m = 0;
      for (std::size_t j = 0; j < nc && m < k; ++j) {
        const std::size_t i = cand[j].i;
        double u, v;
        if (!visible_in(views[i], bundle.textures[i], bundle.depths[i], X, opts.bias, &u, &v)) continue;
        pick[m] = {i, u, v};
        tau[m] = std::acos(cand[j].cos);
        ++m;
      }
      float* o = &out.data[p * 4];
      if (m == 0) {
        if (opts.debug) {
          o[0] = 1, o[1] = 0, o[2] = 1, o[3] = 1;
        }
        continue;
      }
      std::size_t nw = 1;
      if (m == 1) {
        w[0] = 1.0;
      } else {
        nw = m;
        if (m < k) tau[nw++] = std::max(tau[m - 1] * kPhantomAngle, 1e-12);
        weights_into(tau.data(), nw, w.data());
      }
      Vec3 acc = Vec3::Zero();
      double wsum = 0;
      for (std::size_t j = 0; j < nw && j < m; ++j) {
        if (w[j] <= 0) continue;
        Vec3 rgb;
        if (!sample_bilinear(bundle.textures[pick[j].i], nullptr, pick[j].u, pick[j].v, &rgb, nullptr)) continue;
        acc += w[j] * rgb;
        wsum += w[j];
      }
      if (wsum <= 0) continue;
      acc /= wsum;
      for (int ch = 0; ch < 3; ++ch) o[ch] = static_cast<float>(std::clamp(acc[ch], 0.0, 1.0));
      o[3] = 1.0f;
    }
  });
  return out;
}

std::vector<Mat4> load_camera_path(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw MissingFile("lumigraph: missing camera path " + path.string());
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw ParseError("lumigraph: " + path.string() + ": " + e.what());
  }
  if (j.is_object() && j.contains("views")) j = j["views"];
  if (!j.is_array() || j.empty()) throw ParseError("lumigraph: camera path must be a non-empty list of matrices");
  std::vector<Mat4> out;
  for (std::size_t i = 0; i < j.size(); ++i) {
    out.push_back(json_util::matrix_from_json(j[i], "lumigraph: camera path entry " + std::to_string(i)));
  }
  return out;
}

}  // namespace nlr
