#include "nlr/exporter.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>

#include <json.hpp>

#include "json_util.hpp"
#include "nlr/errors.hpp"
#include "nlr/neural_render.hpp"

namespace nlr {
namespace {

using nlohmann::json;

constexpr int kBundleVersion = 1;
// Viewing axes may miss the shared target by this fraction of the mean
// camera distance.
constexpr double kTargetTolerance = 1e-2;

std::string numbered(const char* dir, const char* prefix, std::size_t i, const char* ext) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%s/%s_%03zu.%s", dir, prefix, i, ext);
  return buf;
}

json read_json(const std::filesystem::path& p) {
  std::ifstream in(p);
  if (!in) throw MissingFile("exporter: missing " + p.string());
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw ParseError("exporter: " + p.string() + ": " + e.what());
  }
}

Vec3 camera_up(const Camera& c) { return c.view_inverse().block<3, 1>(0, 1); }

struct Orbit {
  double az, el, dist;
};

}  // namespace

void ExportBundle::validate() const {
  mesh.validate();
  if (textures.size() != cameras.size() || depths.size() != cameras.size()) {
    throw DimensionMismatch("exporter: texture, depth and camera counts differ");
  }
  for (std::size_t i = 0; i < cameras.size(); ++i) {
    const auto& t = textures[i];
    const auto& d = depths[i];
    const int w = cameras[i].width(), h = cameras[i].height();
    if (t.width != w || t.height != h || t.channels != 4 || d.width != w || d.height != h || d.channels != 1) {
      throw DimensionMismatch("exporter: texture " + std::to_string(i) + " does not match its camera");
    }
    for (std::size_t p = 0; p < d.data.size(); ++p) {
      if (t.data[p * 4 + 3] > 0 && !std::isfinite(d.data[p])) {
        throw NonFinite("exporter: non-finite depth under texture " + std::to_string(i));
      }
    }
  }
}

Vec3 common_target(const std::vector<Camera>& cams) {
  Eigen::Matrix3d A = Eigen::Matrix3d::Zero();
  Vec3 b = Vec3::Zero();
  for (const auto& c : cams) {
    const Vec3 d = c.forward();
    const Eigen::Matrix3d P = Eigen::Matrix3d::Identity() - d * d.transpose();
    A += P;
    b += P * c.center();
  }
  Eigen::JacobiSVD<Eigen::Matrix3d> svd(A);
  const auto s = svd.singularValues();
  if (cams.size() < 2 || s(2) < 1e-9 * std::max(s(0), 1.0)) {
    throw DegenerateLayout("exporter: camera axes are parallel, no common target");
  }
  return A.ldlt().solve(b);
}

std::vector<Camera> generate_texture_cameras(const std::vector<Camera>& base, int level, int cols, int rows) {
  if (level < 1 || level > 8) throw InvalidArgument("exporter: texture level must be in [1, 8]");
  if (cols < 2 || rows < 1 || static_cast<std::size_t>(cols) * rows != base.size()) {
    throw InvalidArgument("exporter: base cameras do not form a " + std::to_string(cols) + " x " +
                          std::to_string(rows) + " grid");
  }
  // Collinear centers leave no capture surface to interpolate on.
  Vec3 mean = Vec3::Zero();
  for (const auto& c : base) mean += c.center();
  mean /= static_cast<double>(base.size());
  Eigen::Matrix3d cov = Eigen::Matrix3d::Zero();
  for (const auto& c : base) cov += (c.center() - mean) * (c.center() - mean).transpose();
  const Vec3 ev = Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d>(cov).eigenvalues();
  if (rows > 1 && ev(1) <= 1e-9 * std::max(ev(2), 1e-300)) {
    throw DegenerateLayout("exporter: base camera positions are collinear");
  }
  const Vec3 target = common_target(base);
  double mean_dist = 0;
  for (const auto& c : base) mean_dist += (c.center() - target).norm();
  mean_dist /= static_cast<double>(base.size());
  for (const auto& c : base) {
    const Vec3 v = target - c.center();
    if ((v - v.dot(c.forward()) * c.forward()).norm() > kTargetTolerance * mean_dist) {
      throw DegenerateLayout("exporter: base cameras do not share a look-at target");
    }
  }
  if (level == 1) return base;

  Vec3 up = Vec3::Zero();
  for (const auto& c : base) up += camera_up(c);
  if (up.norm() < 1e-9) throw DegenerateLayout("exporter: base cameras disagree on the up direction");
  up.normalize();
  Vec3 f0 = mean - target;
  f0 -= f0.dot(up) * up;
  if (f0.norm() < 1e-9) throw DegenerateLayout("exporter: cameras straddle the up axis");
  f0.normalize();
  const Vec3 right = up.cross(f0);

  std::vector<Orbit> orbit;
  for (const auto& c : base) {
    const Vec3 v = c.center() - target;
    const double dist = v.norm();
    const Vec3 u = v / dist;
    orbit.push_back({std::atan2(u.dot(right), u.dot(f0)), std::asin(std::clamp(u.dot(up), -1.0, 1.0)), dist});
  }

  const int s = 1 << (level - 1);
  const int C = (cols - 1) * s + 1, R = (rows - 1) * s + 1;
  std::vector<Camera> out;
  out.reserve(static_cast<std::size_t>(C) * R);
  for (int r = 0; r < R; ++r) {
    for (int c = 0; c < C; ++c) {
      const int r0 = std::min(r / s, rows - 1), c0 = std::min(c / s, cols - 2);
      const Camera& ref = base[static_cast<std::size_t>(r0) * cols + c0];
      if (r % s == 0 && c % s == 0) {
        out.push_back(base[static_cast<std::size_t>(r / s) * cols + c / s]);
        continue;
      }
      const int r1 = std::min(r0 + 1, rows - 1), c1 = c0 + 1;
      const double fr = rows > 1 ? static_cast<double>(r - r0 * s) / s : 0.0;
      const double fc = static_cast<double>(c - c0 * s) / s;
      auto at = [&](int rr, int cc) { return orbit[static_cast<std::size_t>(rr) * cols + cc]; };
      auto lerp = [&](double Orbit::*m) {
        const double top = (1 - fc) * (at(r0, c0).*m) + fc * (at(r0, c1).*m);
        const double bot = (1 - fc) * (at(r1, c0).*m) + fc * (at(r1, c1).*m);
        return (1 - fr) * top + fr * bot;
      };
      const double az = lerp(&Orbit::az), el = lerp(&Orbit::el), dist = lerp(&Orbit::dist);
      const Vec3 eye = target + dist * (std::cos(el) * (std::sin(az) * right + std::cos(az) * f0) + std::sin(el) * up);
      out.emplace_back(look_at(eye, target, up), ref.proj(), ref.width(), ref.height());
    }
  }
  return out;
}

Bake bake_textures(const FieldModel<float>& model, const std::vector<Camera>& cameras, const TraceConfig& cfg) {
  Bake b;
  for (const auto& cam : cameras) {
    auto frame = render_neural(model, cam, cfg);
    b.textures.push_back(std::move(frame.rgba));
    b.depths.push_back(std::move(frame.depth));
  }
  return b;
}

Bake bake_synthetic(const SyntheticRenderer& renderer, const std::vector<Camera>& cameras) {
  Bake b;
  for (const auto& c : cameras) {
    const View v = renderer.render(c);
    Image t(c.width(), c.height(), 4), d(c.width(), c.height(), 1);
    for (int y = 0; y < c.height(); ++y)
      for (int x = 0; x < c.width(); ++x) {
        const std::size_t p = static_cast<std::size_t>(y) * c.width() + x;
        if (!v.mask[p]) continue;
        const auto hit = renderer.intersect(ray_from_pixel(c, x, y));
        if (!hit) continue;
        for (int ch = 0; ch < 3; ++ch) t.data[p * 4 + ch] = v.image.data[p * 3 + ch];
        t.data[p * 4 + 3] = 1;
        d.data[p] = static_cast<float>(*hit);
      }
    b.textures.push_back(std::move(t));
    b.depths.push_back(std::move(d));
  }
  return b;
}

ExportBundle export_bundle(const FieldModel<float>& model, const std::vector<Camera>& base_cameras,
                           const ExportOptions& opts) {
  ExportBundle out;
  const NeuralSdf sdf(model.sdf);
  out.mesh = marching_cubes(sdf, opts.mc);
  out.cameras = generate_texture_cameras(base_cameras, opts.texture_level, opts.grid_cols, opts.grid_rows);
  auto baked = bake_textures(model, out.cameras, opts.trace);
  // Quantize now so the in-memory bundle equals what a reader sees.
  for (auto& t : baked.textures)
    for (std::size_t i = 0; i < t.data.size(); ++i)
      t.data[i] = i % 4 == 3 ? t.data[i] : quantize_linear(t.data[i]);
  out.textures = std::move(baked.textures);
  out.depths = std::move(baked.depths);
  out.meta.iso = opts.mc.iso;
  out.meta.resolution = opts.mc.resolution;
  out.meta.checkpoint_hash = checkpoint_hash(model);
  out.meta.texture_level = opts.texture_level;
  return out;
}

void write_bundle(const ExportBundle& bundle, const std::filesystem::path& dir) {
  bundle.validate();
  std::filesystem::create_directories(dir / "tex");
  std::filesystem::create_directories(dir / "depth");
  write_obj(dir / "mesh.obj", bundle.mesh);
  json cams = json::array();
  for (std::size_t i = 0; i < bundle.size(); ++i) {
    const auto tex = numbered("tex", "tex", i, "png");
    const auto dep = numbered("depth", "dep", i, "pfm");
    write_png(dir / tex, bundle.textures[i]);
    write_pfm(dir / dep, bundle.depths[i]);
    const auto& c = bundle.cameras[i];
    cams.push_back({{"view", json_util::matrix_to_json(c.view())},
                    {"proj", json_util::matrix_to_json(c.proj())},
                    {"width", c.width()},
                    {"height", c.height()},
                    {"texture", tex},
                    {"depth", dep}});
  }
  std::ofstream(dir / "cameras.json") << json{{"cameras", cams}}.dump(2) << '\n';
  const json meta{{"version", kBundleVersion},
                  {"iso", bundle.meta.iso},
                  {"resolution", bundle.meta.resolution},
                  {"checkpoint_hash", bundle.meta.checkpoint_hash},
                  {"texture_level", bundle.meta.texture_level},
                  {"texture_count", bundle.size()}};
  std::ofstream out(dir / "meta.json");
  out << meta.dump(2) << '\n';
  if (!out) throw IoError("exporter: cannot write " + (dir / "meta.json").string());
}

ExportBundle read_bundle(const std::filesystem::path& dir) {
  ExportBundle b;
  const json meta = read_json(dir / "meta.json");
  const json cams = read_json(dir / "cameras.json");
  try {
    if (meta.at("version").get<int>() != kBundleVersion) throw ParseError("exporter: unsupported bundle version");
    b.meta.iso = meta.at("iso").get<double>();
    b.meta.resolution = meta.at("resolution").get<int>();
    b.meta.checkpoint_hash = meta.at("checkpoint_hash").get<std::string>();
    b.meta.texture_level = meta.at("texture_level").get<int>();
    const auto& list = cams.at("cameras");
    for (std::size_t i = 0; i < list.size(); ++i) {
      const auto& c = list[i];
      const std::string what = "exporter: camera " + std::to_string(i);
      b.cameras.emplace_back(json_util::matrix_from_json(c.at("view"), what + " view"),
                             json_util::matrix_from_json(c.at("proj"), what + " proj"), c.at("width").get<int>(),
                             c.at("height").get<int>());
      const auto tex = c.contains("texture") ? c["texture"].get<std::string>() : numbered("tex", "tex", i, "png");
      const auto dep = c.contains("depth") ? c["depth"].get<std::string>() : numbered("depth", "dep", i, "pfm");
      Image t = load_png(dir / tex);
      if (t.channels == 3) {
        Image rgba(t.width, t.height, 4, 1.0f);
        for (std::size_t p = 0; p < static_cast<std::size_t>(t.width) * t.height; ++p)
          for (int ch = 0; ch < 3; ++ch) rgba.data[p * 4 + ch] = t.data[p * 3 + ch];
        t = std::move(rgba);
      }
      b.textures.push_back(std::move(t));
      b.depths.push_back(load_pfm(dir / dep));
    }
    if (meta.contains("texture_count") && meta["texture_count"].get<std::size_t>() != b.size()) {
      throw ParseError("exporter: meta.json texture_count disagrees with cameras.json");
    }
  } catch (const json::exception& e) {
    throw ParseError("exporter: bad bundle metadata in " + dir.string() + ": " + e.what());
  }
  b.mesh = read_obj(dir / "mesh.obj");
  b.validate();
  return b;
}

}  // namespace nlr
