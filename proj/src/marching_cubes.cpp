#include "nlr/marching_cubes.hpp"

#include <algorithm>
#include <cmath>

#include "mc_tables.hpp"
#include "nlr/errors.hpp"
#include "nlr/parallel.hpp"

namespace nlr {
namespace {

constexpr int kBlock = 8;
constexpr std::size_t kEvalChunk = 4096;
// Keeps vertices off the grid nodes so no triangle collapses to zero area.
constexpr double kInterpClamp = 1e-3;

// The case table winds triangles against the gradient for our inside bit
// convention; emitting (a, c, b) turns them outward.
constexpr bool kFlipWinding = true;

void evaluate_points(const SignedDistance& f, const std::vector<Vec3>& pts, std::vector<double>& out) {
  out.resize(pts.size());
  const std::size_t chunks = (pts.size() + kEvalChunk - 1) / kEvalChunk;
  parallel_for(chunks, [&](std::size_t c) {
    const std::size_t b = c * kEvalChunk, e = std::min(pts.size(), b + kEvalChunk);
    f.evaluate(std::span<const Vec3>(pts.data() + b, e - b), std::span<double>(out.data() + b, e - b));
  });
}

class Grid {
 public:
  Grid(const SignedDistance& f, const MarchingCubesOptions& o) : f_(f), opts_(o), n_(o.resolution), h_(2.0 / n_) {
    nb_ = (n_ + kBlock - 1) / kBlock;
    classify_blocks();
  }

  int cells() const { return n_; }
  double coord(int i) const { return -1.0 + h_ * i; }

  // Node values of slice k; inactive nodes carry their block's center value.
  void slice(int k, std::vector<double>& vals) const {
    const int N = n_ + 1;
    vals.assign(static_cast<std::size_t>(N) * N, 0.0);
    std::vector<Vec3> pts;
    std::vector<std::size_t> where;
    for (int j = 0; j < N; ++j)
      for (int i = 0; i < N; ++i) {
        const std::size_t idx = static_cast<std::size_t>(j) * N + i;
        if (node_active(i, j, k)) {
          pts.emplace_back(coord(i), coord(j), coord(k));
          where.push_back(idx);
        } else {
          vals[idx] = center_value(block_of(i), block_of(j), block_of(k));
        }
      }
    std::vector<double> out;
    evaluate_points(f_, pts, out);
    for (std::size_t q = 0; q < where.size(); ++q) vals[where[q]] = out[q];
  }

 private:
  int block_of(int node) const { return std::min(node, n_ - 1) / kBlock; }
  std::size_t bindex(int bi, int bj, int bk) const {
    return (static_cast<std::size_t>(bk) * nb_ + bj) * nb_ + bi;
  }
  double center_value(int bi, int bj, int bk) const { return centers_[bindex(bi, bj, bk)]; }

  bool node_active(int i, int j, int k) const {
    if (opts_.band_factor <= 0) return true;
    const int lo[3] = {std::max(i - 1, 0) / kBlock, std::max(j - 1, 0) / kBlock, std::max(k - 1, 0) / kBlock};
    const int hi[3] = {block_of(i), block_of(j), block_of(k)};
    for (int bk = lo[2]; bk <= hi[2]; ++bk)
      for (int bj = lo[1]; bj <= hi[1]; ++bj)
        for (int bi = lo[0]; bi <= hi[0]; ++bi)
          if (active_[bindex(bi, bj, bk)]) return true;
    return false;
  }

  void classify_blocks() {
    const std::size_t total = static_cast<std::size_t>(nb_) * nb_ * nb_;
    active_.assign(total, 1);
    centers_.assign(total, 0.0);
    if (opts_.band_factor <= 0) return;
    std::vector<Vec3> pts(total);
    std::vector<double> radius(total);
    for (int bk = 0; bk < nb_; ++bk)
      for (int bj = 0; bj < nb_; ++bj)
        for (int bi = 0; bi < nb_; ++bi) {
          Vec3 lo, hi;
          const int b[3] = {bi, bj, bk};
          for (int a = 0; a < 3; ++a) {
            lo[a] = coord(b[a] * kBlock);
            hi[a] = coord(std::min((b[a] + 1) * kBlock, n_));
          }
          pts[bindex(bi, bj, bk)] = 0.5 * (lo + hi);
          radius[bindex(bi, bj, bk)] = 0.5 * (hi - lo).norm();
        }
    evaluate_points(f_, pts, centers_);
    for (std::size_t b = 0; b < total; ++b) {
      active_[b] = std::abs(centers_[b] - opts_.iso) <= opts_.band_factor * radius[b];
    }
  }

  const SignedDistance& f_;
  MarchingCubesOptions opts_;
  int n_;
  double h_;
  int nb_ = 0;
  std::vector<char> active_;
  std::vector<double> centers_;
};

}  // namespace

Mesh marching_cubes(const SignedDistance& f, const MarchingCubesOptions& opts) {
  if (opts.resolution < 8) throw InvalidArgument("exporter: marching cubes resolution must be >= 8");
  if (!std::isfinite(opts.iso)) throw InvalidArgument("exporter: iso must be finite");
  const Grid grid(f, opts);
  const int n = grid.cells(), N = n + 1;
  const double iso = opts.iso;

  Mesh mesh;
  auto idx = [N](int i, int j) { return static_cast<std::size_t>(j) * N + i; };
  // Edge caches: x and y edges on the two bounding slices, z edges between.
  std::vector<int> xe[2], ye[2], ze;
  std::vector<double> val[2];
  auto reset = [&](std::vector<int>& v) { v.assign(static_cast<std::size_t>(N) * N, -1); };

  auto make_vertex = [&](const Vec3& p0, double v0, const Vec3& p1, double v1) {
    double t = (iso - v0) / (v1 - v0);
    t = std::clamp(t, kInterpClamp, 1.0 - kInterpClamp);
    mesh.vertices.push_back(p0 + t * (p1 - p0));
    return static_cast<int>(mesh.vertices.size() - 1);
  };

  grid.slice(0, val[0]);
  reset(xe[0]);
  reset(ye[0]);
  for (int k = 0; k < n; ++k) {
    grid.slice(k + 1, val[1]);
    reset(xe[1]);
    reset(ye[1]);
    reset(ze);
    const double z0 = grid.coord(k), z1 = grid.coord(k + 1);
    for (int j = 0; j < n; ++j) {
      const double y0 = grid.coord(j), y1 = grid.coord(j + 1);
      for (int i = 0; i < n; ++i) {
        const double c[8] = {val[0][idx(i, j)],         val[0][idx(i + 1, j)], val[0][idx(i + 1, j + 1)],
                             val[0][idx(i, j + 1)],     val[1][idx(i, j)],     val[1][idx(i + 1, j)],
                             val[1][idx(i + 1, j + 1)], val[1][idx(i, j + 1)]};
        int cube = 0;
        for (int q = 0; q < 8; ++q)
          if (c[q] < iso) cube |= 1 << q;
        const int edges = mc::kEdgeTable[cube];
        if (edges == 0) continue;
        const double x0 = grid.coord(i), x1 = grid.coord(i + 1);
        const Vec3 P[8] = {{x0, y0, z0}, {x1, y0, z0}, {x1, y1, z0}, {x0, y1, z0},
                           {x0, y0, z1}, {x1, y0, z1}, {x1, y1, z1}, {x0, y1, z1}};
        int* slot[12] = {&xe[0][idx(i, j)],     &ye[0][idx(i + 1, j)], &xe[0][idx(i, j + 1)], &ye[0][idx(i, j)],
                         &xe[1][idx(i, j)],     &ye[1][idx(i + 1, j)], &xe[1][idx(i, j + 1)], &ye[1][idx(i, j)],
                         &ze[idx(i, j)],        &ze[idx(i + 1, j)],    &ze[idx(i + 1, j + 1)], &ze[idx(i, j + 1)]};
        static constexpr int kEnds[12][2] = {{0, 1}, {1, 2}, {3, 2}, {0, 3}, {4, 5}, {5, 6},
                                             {7, 6}, {4, 7}, {0, 4}, {1, 5}, {2, 6}, {3, 7}};
        int vid[12];
        for (int e = 0; e < 12; ++e) {
          if (!(edges & (1 << e))) continue;
          if (*slot[e] < 0) {
            const int a = kEnds[e][0], b = kEnds[e][1];  // a is the lower-coordinate end
            *slot[e] = make_vertex(P[a], c[a], P[b], c[b]);
          }
          vid[e] = *slot[e];
        }
        for (const int* t = mc::kTriTable[cube]; *t != -1; t += 3) {
          if (kFlipWinding) {
            mesh.triangles.push_back({vid[t[0]], vid[t[2]], vid[t[1]]});
          } else {
            mesh.triangles.push_back({vid[t[0]], vid[t[1]], vid[t[2]]});
          }
        }
      }
    }
    std::swap(val[0], val[1]);
    std::swap(xe[0], xe[1]);
    std::swap(ye[0], ye[1]);
  }
  if (mesh.triangles.empty()) throw EmptyMesh("exporter: no sign change of f - iso in the grid");

  // Normals from grad f; fall back to the area-weighted face normal.
  mesh.normals.resize(mesh.vertices.size());
  const std::size_t nv = mesh.vertices.size();
  const std::size_t chunks = (nv + kEvalChunk - 1) / kEvalChunk;
  parallel_for(chunks, [&](std::size_t ch) {
    const std::size_t b = ch * kEvalChunk, e = std::min(nv, b + kEvalChunk);
    f.gradient(std::span<const Vec3>(mesh.vertices.data() + b, e - b), std::span<Vec3>(mesh.normals.data() + b, e - b));
  });
  std::vector<Vec3> face_sum(nv, Vec3::Zero());
  for (const auto& t : mesh.triangles) {
    const Vec3 fn = (mesh.vertices[t[1]] - mesh.vertices[t[0]]).cross(mesh.vertices[t[2]] - mesh.vertices[t[0]]);
    for (int v : t) face_sum[v] += fn;
  }
  for (std::size_t v = 0; v < nv; ++v) {
    Vec3& nrm = mesh.normals[v];
    const double len = nrm.norm();
    if (len > 1e-12 && std::isfinite(len)) {
      nrm /= len;
    } else {
      nrm = face_sum[v].norm() > 0 ? face_sum[v].normalized() : Vec3::UnitZ();
    }
  }
  return mesh;
}

double normal_agreement(const Mesh& m) {
  if (m.vertices.empty() || m.normals.size() != m.vertices.size()) return 0.0;
  std::vector<Vec3> acc(m.vertices.size(), Vec3::Zero());
  for (const auto& t : m.triangles) {
    const Vec3 fn = (m.vertices[t[1]] - m.vertices[t[0]]).cross(m.vertices[t[2]] - m.vertices[t[0]]);
    for (int v : t) acc[v] += fn;
  }
  std::size_t good = 0, used = 0;
  for (std::size_t v = 0; v < acc.size(); ++v) {
    if (acc[v].squaredNorm() == 0) continue;
    ++used;
    good += acc[v].dot(m.normals[v]) > 0;
  }
  return used == 0 ? 0.0 : static_cast<double>(good) / static_cast<double>(used);
}

}  // namespace nlr
