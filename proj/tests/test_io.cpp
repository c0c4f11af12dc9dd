#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <random>

#include <json.hpp>

#include "doctest.h"
#include "nlr/errors.hpp"
#include "nlr/scene.hpp"
#include "trace_oracle.hpp"

using namespace nlr;
namespace fs = std::filesystem;

namespace {

fs::path fresh_dir(const std::string& name) {
  const auto p = fs::temp_directory_path() / ("nlr_io_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::vector<char> slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

// Single-view scene written by hand.
fs::path minimal_scene(const std::string& name, const Mat4& view) {
  const auto dir = fresh_dir(name);
  Image img(4, 3, 3, 0.5f);
  write_png(dir / "img.png", img);
  std::vector<std::uint8_t> mask(12, 1);
  write_mask_png(dir / "mask.png", mask, 4, 3);
  nlohmann::json v;
  v["image"] = "img.png";
  v["mask"] = "mask.png";
  v["width"] = 4;
  v["height"] = 3;
  v["view"] = nlohmann::json::array();
  for (int k = 0; k < 16; ++k) v["view"].push_back(view(k / 4, k % 4));
  const Mat4 P = perspective(0.8, 4.0 / 3.0, 0.1, 10);
  v["proj"] = nlohmann::json::array();
  for (int k = 0; k < 16; ++k) v["proj"].push_back(P(k / 4, k % 4));
  std::ofstream(dir / "scene.json") << nlohmann::json{{"name", "mini"}, {"views", {v}}}.dump();
  return dir;
}

}  // namespace

TEST_CASE("sRGB table inverts exactly on every byte") {
  for (int b = 0; b < 256; ++b) CHECK(linear_to_srgb8(srgb8_to_linear(static_cast<std::uint8_t>(b))) == b);
  CHECK(linear_to_srgb8(-1.0f) == 0);
  CHECK(linear_to_srgb8(2.0f) == 255);
  CHECK(srgb8_to_linear(255) == 1.0f);
  // Standard curve at mid grey.
  CHECK(srgb8_to_linear(128) == doctest::Approx(0.2158605).epsilon(1e-5));
}

TEST_CASE("PNG round trip is exact for quantized images") {
  const auto dir = fresh_dir("png");
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<float> u(0, 1);
  for (int c : {3, 4}) {
    Image img(7, 5, c);
    for (std::size_t i = 0; i < img.data.size(); ++i) {
      img.data[i] = (c == 4 && i % 4 == 3) ? std::round(u(rng) * 255.0f) / 255.0f : quantize_linear(u(rng));
    }
    write_png(dir / "a.png", img);
    const Image back = load_png(dir / "a.png");
    CHECK(back.width == 7);
    CHECK(back.height == 5);
    CHECK(back.channels == c);
    CHECK(back.data == img.data);
  }
  CHECK_THROWS_AS(load_png(dir / "none.png"), MissingFile);
}

TEST_CASE("mask PNG thresholds at 128") {
  const auto dir = fresh_dir("mask");
  std::vector<std::uint8_t> m{1, 0, 0, 1, 1, 0};
  write_mask_png(dir / "m.png", m, 3, 2);
  int w = 0, h = 0;
  CHECK(load_mask_png(dir / "m.png", w, h) == m);
  CHECK(w == 3);
  CHECK(h == 2);
  // A grey level just under the threshold reads as background.
  Image g(2, 1, 3);
  g.data = {srgb8_to_linear(127), srgb8_to_linear(127), srgb8_to_linear(127),
            srgb8_to_linear(128), srgb8_to_linear(128), srgb8_to_linear(128)};
  write_png(dir / "g.png", g);
  CHECK(load_mask_png(dir / "g.png", w, h) == std::vector<std::uint8_t>{0, 1});
}

TEST_CASE("PFM layout and round trip") {
  const auto dir = fresh_dir("pfm");
  Image d(2, 2, 1);
  d.data = {1.0f, 2.0f, 3.0f, 4.5f};  // row 0 = top
  write_pfm(dir / "d.pfm", d);
  const auto bytes = slurp(dir / "d.pfm");
  const std::string header = "Pf\n2 2\n-1.0\n";
  REQUIRE(bytes.size() == header.size() + 16);
  CHECK(std::string(bytes.begin(), bytes.begin() + header.size()) == header);
  // First stored row is the bottom one.
  float first;
  std::memcpy(&first, bytes.data() + header.size(), 4);
  CHECK(first == 3.0f);
  CHECK(load_pfm(dir / "d.pfm").data == d.data);
  std::ofstream(dir / "bad.pfm") << "P6\n1 1\n255\n";
  CHECK_THROWS_AS(load_pfm(dir / "bad.pfm"), ParseError);
}

TEST_CASE("load_scene: minimal fixture") {
  const auto dir = minimal_scene("mini", look_at(Vec3(0, 0, 3), Vec3::Zero(), Vec3::UnitY()));
  const Scene s = load_scene(dir);
  CHECK(s.name == "mini");
  REQUIRE(s.views.size() == 1);
  CHECK(s.views[0].image.width == 4);
  CHECK(s.views[0].mask.size() == 12);
  CHECK(s.views[0].image.at(1, 1, 0) == quantize_linear(0.5f));
  CHECK(load_scene(dir / "scene.json").views.size() == 1);
}

TEST_CASE("load_scene errors name the view") {
  const auto dir = minimal_scene("singular", Mat4::Zero());
  try {
    load_scene(dir);
    FAIL("expected SingularMatrix");
  } catch (const SingularMatrix& e) {
    CHECK(std::string(e.what()).find("view 0") != std::string::npos);
  }
  const auto d2 = minimal_scene("missing", look_at(Vec3(0, 0, 3), Vec3::Zero(), Vec3::UnitY()));
  fs::remove(d2 / "mask.png");
  try {
    load_scene(d2);
    FAIL("expected MissingFile");
  } catch (const MissingFile& e) {
    CHECK(std::string(e.what()).find("view 0") != std::string::npos);
  }
  const auto d3 = minimal_scene("dims", look_at(Vec3(0, 0, 3), Vec3::Zero(), Vec3::UnitY()));
  write_mask_png(d3 / "mask.png", std::vector<std::uint8_t>(6, 1), 3, 2);
  try {
    load_scene(d3);
    FAIL("expected DimensionMismatch");
  } catch (const DimensionMismatch& e) {
    CHECK(std::string(e.what()).find("view 0") != std::string::npos);
  }
  const auto d4 = fresh_dir("garbage");
  std::ofstream(d4 / "scene.json") << "{ not json";
  CHECK_THROWS_AS(load_scene(d4), ParseError);
  CHECK_THROWS_AS(load_scene(fresh_dir("empty")), MissingFile);
}

TEST_CASE("write_scene(load_scene(p)) round-trips") {
  SynthSpec spec;
  spec.views = 3;
  spec.width = 24;
  spec.height = 20;
  const auto synth = generate_synthetic(spec);
  const auto a = fresh_dir("rt_a");
  write_scene(synth.scene, a);
  const Scene loaded = load_scene(a);
  const auto b = fresh_dir("rt_b");
  write_scene(loaded, b);
  std::ifstream ja(a / "scene.json"), jb(b / "scene.json");
  CHECK(nlohmann::json::parse(ja) == nlohmann::json::parse(jb));
  for (std::size_t i = 0; i < loaded.views.size(); ++i) {
    CHECK(loaded.views[i].image.data == synth.scene.views[i].image.data);
    CHECK(loaded.views[i].mask == synth.scene.views[i].mask);
    CHECK(loaded.views[i].camera.view() == synth.scene.views[i].camera.view());
  }
}

TEST_CASE("select_views") {
  SynthSpec spec;
  spec.views = 4;
  spec.width = spec.height = 8;
  const auto s = generate_synthetic(spec).scene;
  CHECK(select_views(s, {1}, true).views.size() == 3);
  CHECK(select_views(s, {1, 2}, false).views.size() == 2);
  CHECK_THROWS_AS(select_views(s, {7}, false), InvalidArgument);
}

TEST_CASE("synthetic sphere mask is the projected disk") {
  SynthSpec spec;
  spec.distance = 2.0;
  spec.width = spec.height = 96;
  SyntheticRenderer r(spec);
  const double fovy = spec.fovy_deg * std::numbers::pi / 180.0;
  const Camera cam(look_at(Vec3(0, 0, 2), Vec3::Zero(), Vec3::UnitY()), perspective(fovy, 1.0, 0.1, 10), 96, 96);
  const View v = r.render(cam);
  const double radius_px = std::tan(std::asin(0.5 / 2.0)) / std::tan(fovy / 2) * 48.0;
  int checked = 0;
  for (int y = 0; y < 96; ++y)
    for (int x = 0; x < 96; ++x) {
      const double d = std::hypot(x + 0.5 - 48.0, y + 0.5 - 48.0);
      if (d < radius_px - 1) {
        CHECK(v.mask[y * 96 + x] == 1);
        ++checked;
      } else if (d > radius_px + 1) {
        CHECK(v.mask[y * 96 + x] == 0);
        ++checked;
      }
    }
  CHECK(checked > 8000);
}

TEST_CASE("synthetic torus and box masks match the dense ray oracle") {
  for (auto kind : {ShapeKind::Torus, ShapeKind::Box}) {
    SynthSpec spec;
    spec.shape.kind = kind;
    spec.views = 2;
    spec.width = spec.height = 40;
    const auto s = generate_synthetic(spec);
    int agree = 0, total = 0;
    for (const auto& v : s.scene.views)
      for (int y = 0; y < 40; y += 3)
        for (int x = 0; x < 40; x += 3) {
          const bool hit = testing::dense_first_hit(s.renderer->sdf(), ray_from_pixel(v.camera, x, y), 20000)
                               .has_value();
          agree += hit == (v.mask[y * 40 + x] == 1);
          ++total;
        }
    CHECK(agree == total);
  }
}

TEST_CASE("diffuse-only shading is view independent") {
  SynthSpec spec;
  spec.specular = 0;
  SyntheticRenderer r(spec);
  const Vec3 p(0.3, 0.2, std::sqrt(0.25 - 0.13));
  const Vec3 n = p.normalized();
  const Vec3 c1 = r.shade(p, n, Vec3(0, 0, 1));
  const Vec3 c2 = r.shade(p, n, Vec3(0.6, 0.8, 0).normalized() + n);
  CHECK((c1 - c2).norm() == 0.0);
  SynthSpec glossy;
  SyntheticRenderer g(glossy);
  const Vec3 l = glossy.light_dir.normalized();
  const Vec3 mirror = 2 * n.dot(l) * n - l;
  CHECK((g.shade(p, n, mirror) - g.shade(p, n, n)).norm() > 0.01);
}

TEST_CASE("synthetic generation is deterministic") {
  SynthSpec spec;
  spec.views = 2;
  spec.width = spec.height = 32;
  const auto a = generate_synthetic(spec);
  const auto b = generate_synthetic(spec);
  for (std::size_t i = 0; i < 2; ++i) CHECK(a.scene.views[i].image.data == b.scene.views[i].image.data);
  const auto dir = fresh_dir("det");
  write_scene(a.scene, dir / "a");
  write_scene(b.scene, dir / "b");
  CHECK(slurp(dir / "a" / "images" / "view_001.png") == slurp(dir / "b" / "images" / "view_001.png"));
}

TEST_CASE("synthetic grid layout has 3 x 2 cameras aimed at the origin") {
  SynthSpec spec;
  spec.layout = CameraLayout::Grid;
  const auto cams = synthetic_cameras(spec);
  REQUIRE(cams.size() == 6);
  for (const auto& c : cams) {
    CHECK(c.center().norm() == doctest::Approx(spec.distance));
    CHECK((c.forward() + c.center().normalized()).norm() < 1e-12);
  }
}
