#include <cmath>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <random>

#include "doctest.h"
#include "nlr/errors.hpp"
#include "nlr/marching_cubes.hpp"
#include "nlr/mesh.hpp"
#include "test_util.hpp"

using namespace nlr;
namespace fs = std::filesystem;

namespace {

Mesh tetrahedron() {
  Mesh m;
  m.vertices = {Vec3(0, 0, 0), Vec3(1, 0, 0), Vec3(0, 1, 0), Vec3(0, 0, 1)};
  // Outward winding.
  m.triangles = {{0, 2, 1}, {0, 1, 3}, {0, 3, 2}, {1, 2, 3}};
  return m;
}

// Divergence theorem: sum of signed tetra volumes against the origin.
double enclosed_volume(const Mesh& m) {
  double v = 0;
  for (const auto& t : m.triangles) v += m.vertices[t[0]].dot(m.vertices[t[1]].cross(m.vertices[t[2]])) / 6.0;
  return v;
}

MarchingCubesOptions opts(int res, double iso = kDefaultIso, double band = 2.0) {
  MarchingCubesOptions o;
  o.resolution = res;
  o.iso = iso;
  o.band_factor = band;
  return o;
}

}  // namespace

TEST_CASE("mesh helpers on a tetrahedron") {
  auto m = tetrahedron();
  CHECK_NOTHROW(m.validate());
  CHECK(is_watertight(m));
  CHECK(euler_characteristic(m) == 2);
  CHECK(enclosed_volume(m) == doctest::Approx(1.0 / 6.0));
  CHECK(triangle_area(m, 3) == doctest::Approx(std::sqrt(3.0) / 2.0));

  m.triangles.pop_back();
  CHECK_FALSE(is_watertight(m));

  auto bad = tetrahedron();
  bad.triangles[0][1] = 9;
  CHECK_THROWS_AS(bad.validate(), InvalidArgument);
  bad = tetrahedron();
  bad.normals.resize(2);
  CHECK_THROWS_AS(bad.validate(), DimensionMismatch);
}

TEST_CASE("remove_degenerate drops slivers and orphaned vertices") {
  auto m = tetrahedron();
  m.vertices.push_back(Vec3(2, 0, 0));
  m.vertices.push_back(Vec3(4, 0, 0));
  m.triangles.push_back({1, 4, 5});  // collinear
  remove_degenerate(m);
  CHECK(m.triangles.size() == 4);
  CHECK(m.vertices.size() == 4);
  CHECK(is_watertight(m));
}

TEST_CASE("closest_point_on_triangle matches dense sampling") {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(-1, 1);
  for (int trial = 0; trial < 50; ++trial) {
    const Vec3 a(u(rng), u(rng), u(rng)), b(u(rng), u(rng), u(rng)), c(u(rng), u(rng), u(rng));
    const Vec3 p(2 * u(rng), 2 * u(rng), 2 * u(rng));
    const Vec3 q = closest_point_on_triangle(p, a, b, c);
    double best = 1e300;
    const int n = 200;
    for (int i = 0; i <= n; ++i)
      for (int j = 0; i + j <= n; ++j) {
        const Vec3 s = a + (b - a) * (double(i) / n) + (c - a) * (double(j) / n);
        best = std::min(best, (s - p).norm());
      }
    CHECK((q - p).norm() <= best + 1e-12);
    CHECK((q - p).norm() >= best - 0.02);
  }
}

TEST_CASE("intersect_mesh against a tetrahedron") {
  const auto m = tetrahedron();
  Ray r{Vec3(0.2, 0.2, 5), Vec3(0, 0, -1)};
  auto t = intersect_mesh(m, r);
  REQUIRE(t);
  CHECK(*t == doctest::Approx(5 - 0.6));
  r.origin = Vec3(2, 2, 5);
  CHECK_FALSE(intersect_mesh(m, r));
}

TEST_CASE("OBJ round trip is exact") {
  const SphereSdf s(0.5);
  const auto m = marching_cubes(s, opts(32));
  const auto p = fs::temp_directory_path() / "nlr_mc_roundtrip.obj";
  write_obj(p, m);
  const auto r = read_obj(p);
  REQUIRE(r.vertices.size() == m.vertices.size());
  REQUIRE(r.normals.size() == m.normals.size());
  REQUIRE(r.triangles == m.triangles);
  for (std::size_t i = 0; i < m.vertices.size(); ++i) {
    CHECK(r.vertices[i] == m.vertices[i]);
    CHECK(r.normals[i] == m.normals[i]);
  }
}

TEST_CASE("read_obj errors") {
  CHECK_THROWS_AS(read_obj("/nonexistent/x.obj"), MissingFile);
  const auto p = fs::temp_directory_path() / "nlr_mc_bad.obj";
  std::ofstream(p) << "v 0 0 0\nf 1 2 3\n";
  CHECK_THROWS(read_obj(p));
}

TEST_CASE("marching cubes: sphere vertices lie on the offset level set") {
  const double r = 0.5;
  const SphereSdf s(r);
  const int res = 64;
  const double h = 2.0 / res;
  const auto m = marching_cubes(s, opts(res));
  REQUIRE(!m.empty());
  double worst = 0;
  for (const auto& v : m.vertices) worst = std::max(worst, std::abs(v.norm() - (r + kDefaultIso)));
  CHECK(worst < 2 * h);
  // Linear interpolation of an exact distance field is much tighter than a cell.
  CHECK(worst < 0.01 * h + 1e-3);
}

TEST_CASE("marching cubes: raising iso grows the surface") {
  const SphereSdf s(0.5);
  auto mean_radius = [&](double iso) {
    const auto m = marching_cubes(s, opts(48, iso));
    double sum = 0;
    for (const auto& v : m.vertices) sum += v.norm();
    return sum / m.vertices.size();
  };
  const double r0 = mean_radius(0.0), r1 = mean_radius(0.01);
  CHECK(r1 > r0);
  CHECK(r1 - r0 == doctest::Approx(0.01).epsilon(0.05));
}

TEST_CASE("marching cubes: watertight with the right topology") {
  SUBCASE("sphere") {
    const auto m = marching_cubes(SphereSdf(0.5), opts(64));
    CHECK(is_watertight(m));
    CHECK(euler_characteristic(m) == 2);
  }
  SUBCASE("box at res 128") {
    const auto m = marching_cubes(BoxSdf(Vec3(0.4, 0.3, 0.35)), opts(128));
    CHECK(is_watertight(m));
    CHECK(euler_characteristic(m) == 2);
  }
  SUBCASE("torus") {
    const auto m = marching_cubes(TorusSdf(0.45, 0.2), opts(64));
    CHECK(is_watertight(m));
    CHECK(euler_characteristic(m) == 0);
  }
}

TEST_CASE("marching cubes: triangles face outward") {
  const double r = 0.5 + kDefaultIso;
  const auto m = marching_cubes(SphereSdf(0.5), opts(64));
  const double vol = enclosed_volume(m);
  CHECK(vol > 0);
  CHECK(vol == doctest::Approx(4.0 / 3.0 * std::numbers::pi * r * r * r).epsilon(0.01));

  const auto box = marching_cubes(BoxSdf(Vec3(0.4, 0.3, 0.35)), opts(64));
  CHECK(enclosed_volume(box) > 0);

  for (const auto* name : {"sphere", "torus", "box"}) {
    ShapeSpec spec;
    spec.kind = parse_shape_kind(name);
    const auto mm = marching_cubes(*make_shape(spec), opts(64));
    CHECK(normal_agreement(mm) >= 0.99);
  }
  // Stored normals point away from the center.
  for (std::size_t i = 0; i < m.vertices.size(); ++i) CHECK(m.normals[i].dot(m.vertices[i]) > 0);
}

TEST_CASE("marching cubes: narrow band equals the dense grid") {
  for (const auto* name : {"sphere", "torus", "box"}) {
    ShapeSpec spec;
    spec.kind = parse_shape_kind(name);
    const auto f = make_shape(spec);
    const auto dense = marching_cubes(*f, opts(64, kDefaultIso, 0.0));
    const auto band = marching_cubes(*f, opts(64, kDefaultIso, 2.0));
    CHECK(dense.triangles == band.triangles);
    CHECK(dense.vertices == band.vertices);
  }
}

TEST_CASE("marching cubes: errors") {
  CHECK_THROWS_AS(marching_cubes(SphereSdf(5.0), opts(16)), EmptyMesh);
  CHECK_THROWS_AS(marching_cubes(SphereSdf(0.5), opts(4)), InvalidArgument);
  // Iso above every sampled value: no crossing.
  CHECK_THROWS_AS(marching_cubes(SphereSdf(0.5), opts(16, 10.0)), EmptyMesh);
}
