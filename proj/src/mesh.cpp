#include "nlr/mesh.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>
#include <unordered_map>

#include "nlr/errors.hpp"

namespace nlr {
namespace {

std::uint64_t edge_key(int a, int b) {
  if (a > b) std::swap(a, b);
  return (static_cast<std::uint64_t>(static_cast<std::uint32_t>(a)) << 32) | static_cast<std::uint32_t>(b);
}

std::unordered_map<std::uint64_t, int> edge_counts(const Mesh& m) {
  std::unordered_map<std::uint64_t, int> counts;
  counts.reserve(m.triangles.size() * 2);
  for (const auto& t : m.triangles)
    for (int k = 0; k < 3; ++k) ++counts[edge_key(t[k], t[(k + 1) % 3])];
  return counts;
}

}  // namespace

void Mesh::validate() const {
  if (!normals.empty() && normals.size() != vertices.size()) {
    throw DimensionMismatch("exporter: normal count differs from vertex count");
  }
  const int n = static_cast<int>(vertices.size());
  for (const auto& t : triangles)
    for (int i : t)
      if (i < 0 || i >= n) throw InvalidArgument("exporter: triangle index out of range");
}

double triangle_area(const Mesh& m, std::size_t tri) {
  const auto& t = m.triangles[tri];
  return 0.5 * (m.vertices[t[1]] - m.vertices[t[0]]).cross(m.vertices[t[2]] - m.vertices[t[0]]).norm();
}

void remove_degenerate(Mesh& m, double min_area) {
  std::vector<std::array<int, 3>> kept;
  kept.reserve(m.triangles.size());
  for (std::size_t i = 0; i < m.triangles.size(); ++i) {
    const auto& t = m.triangles[i];
    if (t[0] == t[1] || t[1] == t[2] || t[0] == t[2]) continue;
    if (triangle_area(m, i) <= min_area) continue;
    kept.push_back(t);
  }
  std::vector<int> remap(m.vertices.size(), -1);
  Mesh out;
  for (auto& t : kept) {
    for (int& i : t) {
      if (remap[i] < 0) {
        remap[i] = static_cast<int>(out.vertices.size());
        out.vertices.push_back(m.vertices[i]);
        if (!m.normals.empty()) out.normals.push_back(m.normals[i]);
      }
      i = remap[i];
    }
  }
  out.triangles = std::move(kept);
  m = std::move(out);
}

bool is_watertight(const Mesh& m) {
  if (m.triangles.empty()) return false;
  for (const auto& [k, c] : edge_counts(m))
    if (c != 2) return false;
  return true;
}

long euler_characteristic(const Mesh& m) {
  std::vector<char> used(m.vertices.size(), 0);
  for (const auto& t : m.triangles)
    for (int i : t) used[i] = 1;
  const long v = std::count(used.begin(), used.end(), 1);
  const long e = static_cast<long>(edge_counts(m).size());
  return v - e + static_cast<long>(m.triangles.size());
}

void write_obj(const std::filesystem::path& path, const Mesh& m) {
  m.validate();
  std::FILE* f = std::fopen(path.c_str(), "w");
  if (f == nullptr) throw IoError("exporter: cannot write " + path.string());
  for (const auto& v : m.vertices) std::fprintf(f, "v %.17g %.17g %.17g\n", v.x(), v.y(), v.z());
  for (const auto& n : m.normals) std::fprintf(f, "vn %.17g %.17g %.17g\n", n.x(), n.y(), n.z());
  const bool nrm = !m.normals.empty();
  for (const auto& t : m.triangles) {
    if (nrm) {
      std::fprintf(f, "f %d//%d %d//%d %d//%d\n", t[0] + 1, t[0] + 1, t[1] + 1, t[1] + 1, t[2] + 1, t[2] + 1);
    } else {
      std::fprintf(f, "f %d %d %d\n", t[0] + 1, t[1] + 1, t[2] + 1);
    }
  }
  const bool ok = std::ferror(f) == 0;
  std::fclose(f);
  if (!ok) throw IoError("exporter: short write to " + path.string());
}

Mesh read_obj(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw MissingFile("exporter: missing mesh " + path.string());
  Mesh m;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    std::istringstream s(line);
    std::string tag;
    s >> tag;
    if (tag == "v" || tag == "vn") {
      Vec3 v;
      s >> v.x() >> v.y() >> v.z();
      if (!s) throw ParseError("exporter: bad vertex on line " + std::to_string(lineno) + " of " + path.string());
      (tag == "v" ? m.vertices : m.normals).push_back(v);
    } else if (tag == "f") {
      std::array<int, 3> t{};
      for (int k = 0; k < 3; ++k) {
        std::string tok;
        s >> tok;
        if (tok.empty()) throw ParseError("exporter: face needs 3 vertices on line " + std::to_string(lineno));
        t[k] = std::stoi(tok.substr(0, tok.find('/'))) - 1;
      }
      m.triangles.push_back(t);
    }
  }
  m.validate();
  return m;
}

Vec3 closest_point_on_triangle(const Vec3& p, const Vec3& a, const Vec3& b, const Vec3& c) {
  // Voronoi-region walk (Ericson, Real-Time Collision Detection 5.1.5).
  const Vec3 ab = b - a, ac = c - a, ap = p - a;
  const double d1 = ab.dot(ap), d2 = ac.dot(ap);
  if (d1 <= 0 && d2 <= 0) return a;
  const Vec3 bp = p - b;
  const double d3 = ab.dot(bp), d4 = ac.dot(bp);
  if (d3 >= 0 && d4 <= d3) return b;
  const double vc = d1 * d4 - d3 * d2;
  if (vc <= 0 && d1 >= 0 && d3 <= 0) return a + (d1 / (d1 - d3)) * ab;
  const Vec3 cp = p - c;
  const double d5 = ab.dot(cp), d6 = ac.dot(cp);
  if (d6 >= 0 && d5 <= d6) return c;
  const double vb = d5 * d2 - d1 * d6;
  if (vb <= 0 && d2 >= 0 && d6 <= 0) return a + (d2 / (d2 - d6)) * ac;
  const double va = d3 * d6 - d5 * d4;
  if (va <= 0 && (d4 - d3) >= 0 && (d5 - d6) >= 0) return b + ((d4 - d3) / ((d4 - d3) + (d5 - d6))) * (c - b);
  const double denom = 1.0 / (va + vb + vc);
  return a + ab * (vb * denom) + ac * (vc * denom);
}

std::optional<double> intersect_mesh(const Mesh& m, const Ray& ray) {
  std::optional<double> best;
  for (const auto& t : m.triangles) {
    const Vec3& a = m.vertices[t[0]];
    const Vec3 e1 = m.vertices[t[1]] - a, e2 = m.vertices[t[2]] - a;
    const Vec3 pv = ray.dir.cross(e2);
    const double det = e1.dot(pv);
    if (std::abs(det) < 1e-14) continue;
    const double inv = 1.0 / det;
    const Vec3 tv = ray.origin - a;
    const double u = tv.dot(pv) * inv;
    if (u < 0 || u > 1) continue;
    const Vec3 qv = tv.cross(e1);
    const double v = ray.dir.dot(qv) * inv;
    if (v < 0 || u + v > 1) continue;
    const double tt = e2.dot(qv) * inv;
    if (tt > 0 && (!best || tt < *best)) best = tt;
  }
  return best;
}

}  // namespace nlr
