#include "nlr/evaluate.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>

#include <json.hpp>

#include "nlr/errors.hpp"
#include "nlr/parallel.hpp"

namespace nlr {
namespace {

constexpr int kLeafSize = 4;
constexpr std::size_t kPointChunk = 1024;

nlohmann::json db_to_json(double v) {
  if (std::isinf(v) && v > 0) return "inf";
  return v;
}

double db_from_json(const nlohmann::json& j) {
  if (j.is_string() && j.get<std::string>() == "inf") return std::numeric_limits<double>::infinity();
  return j.get<double>();
}

double point_triangle_distance(const Mesh& m, int t, const Vec3& p) {
  const auto& tri = m.triangles[static_cast<std::size_t>(t)];
  return (closest_point_on_triangle(p, m.vertices[tri[0]], m.vertices[tri[1]], m.vertices[tri[2]]) - p).norm();
}

}  // namespace

double masked_psnr(const Image& pred, const Image& gt, const std::vector<std::uint8_t>& mask) {
  if (pred.width != gt.width || pred.height != gt.height || pred.channels < 3 || gt.channels < 3) {
    throw DimensionMismatch("evaluate: prediction and ground truth sizes differ");
  }
  const std::size_t n = static_cast<std::size_t>(gt.width) * gt.height;
  if (mask.size() != n) throw DimensionMismatch("evaluate: mask size differs from the image");
  double se = 0;
  std::size_t count = 0;
  for (std::size_t p = 0; p < n; ++p) {
    if (!mask[p]) continue;
    for (int c = 0; c < 3; ++c) {
      const double d = static_cast<double>(pred.data[p * pred.channels + c]) - gt.data[p * gt.channels + c];
      se += d * d;
    }
    count += 3;
  }
  if (count == 0) throw EmptyMask("evaluate: mask selects no pixels");
  const double mse = se / static_cast<double>(count);
  if (mse == 0) return std::numeric_limits<double>::infinity();
  return 10.0 * std::log10(1.0 / mse);
}

MeshBvh::MeshBvh(const Mesh& mesh) : mesh_(mesh) {
  if (mesh.triangles.empty()) throw EmptyMesh("evaluate: mesh has no triangles");
  mesh.validate();
  order_.resize(mesh.triangles.size());
  std::iota(order_.begin(), order_.end(), 0);
  std::vector<Vec3> centroids(mesh.triangles.size());
  for (std::size_t t = 0; t < centroids.size(); ++t) {
    const auto& tri = mesh.triangles[t];
    centroids[t] = (mesh.vertices[tri[0]] + mesh.vertices[tri[1]] + mesh.vertices[tri[2]]) / 3.0;
  }
  nodes_.reserve(2 * mesh.triangles.size() / kLeafSize + 2);
  build(0, static_cast<int>(order_.size()), centroids);
}

int MeshBvh::build(int first, int count, std::vector<Vec3>& centroids) {
  const int id = static_cast<int>(nodes_.size());
  nodes_.emplace_back();
  Eigen::AlignedBox3d box, cbox;
  for (int i = first; i < first + count; ++i) {
    const auto& tri = mesh_.triangles[static_cast<std::size_t>(order_[i])];
    for (int v : tri) box.extend(mesh_.vertices[static_cast<std::size_t>(v)]);
    cbox.extend(centroids[static_cast<std::size_t>(order_[i])]);
  }
  nodes_[id].box = box;
  if (count <= kLeafSize) {
    nodes_[id].first = first;
    nodes_[id].count = count;
    return id;
  }
  int axis;
  cbox.sizes().maxCoeff(&axis);
  const int mid = first + count / 2;
  // Ties ordered by index so the tree does not depend on the sort algorithm.
  std::nth_element(order_.begin() + first, order_.begin() + mid, order_.begin() + first + count, [&](int a, int b) {
    const double ca = centroids[static_cast<std::size_t>(a)][axis], cb = centroids[static_cast<std::size_t>(b)][axis];
    return ca != cb ? ca < cb : a < b;
  });
  const int l = build(first, mid - first, centroids);
  const int r = build(mid, first + count - mid, centroids);
  nodes_[id].left = l;
  nodes_[id].right = r;
  return id;
}

double MeshBvh::distance(const Vec3& p) const {
  double best = std::numeric_limits<double>::infinity();
  int stack[128];
  int top = 0;
  stack[top++] = 0;
  while (top > 0) {
    const Node& n = nodes_[static_cast<std::size_t>(stack[--top])];
    const double bd = n.box.exteriorDistance(p);
    if (bd >= best) continue;
    if (n.left < 0) {
      for (int i = n.first; i < n.first + n.count; ++i) best = std::min(best, point_triangle_distance(mesh_, order_[i], p));
      continue;
    }
    // Visit the nearer child first.
    const double dl = nodes_[static_cast<std::size_t>(n.left)].box.exteriorDistance(p);
    const double dr = nodes_[static_cast<std::size_t>(n.right)].box.exteriorDistance(p);
    if (dl < dr) {
      stack[top++] = n.right;
      stack[top++] = n.left;
    } else {
      stack[top++] = n.left;
      stack[top++] = n.right;
    }
  }
  return best;
}

double chamfer_one_directional(const std::vector<Vec3>& gt_points, const Mesh& mesh, ChamferMethod method) {
  if (mesh.triangles.empty()) throw EmptyMesh("evaluate: mesh has no triangles");
  if (gt_points.empty()) throw InvalidArgument("evaluate: no ground-truth points");
  std::vector<double> d(gt_points.size());
  std::optional<MeshBvh> bvh;
  if (method == ChamferMethod::Bvh) bvh.emplace(mesh);
  const std::size_t chunks = (d.size() + kPointChunk - 1) / kPointChunk;
  parallel_for(chunks, [&](std::size_t c) {
    const std::size_t b = c * kPointChunk, e = std::min(d.size(), b + kPointChunk);
    for (std::size_t i = b; i < e; ++i) {
      if (bvh) {
        d[i] = bvh->distance(gt_points[i]);
      } else {
        double best = std::numeric_limits<double>::infinity();
        for (std::size_t t = 0; t < mesh.triangles.size(); ++t)
          best = std::min(best, point_triangle_distance(mesh, static_cast<int>(t), gt_points[i]));
        d[i] = best;
      }
    }
  });
  double sum = 0;
  for (double v : d) sum += v;
  return sum / static_cast<double>(d.size());
}

std::vector<Vec3> sample_sphere(std::size_t n, double radius, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g(0.0, 1.0);
  std::vector<Vec3> out;
  out.reserve(n);
  while (out.size() < n) {
    const Vec3 v(g(rng), g(rng), g(rng));
    const double len = v.norm();
    if (len < 1e-12) continue;
    out.push_back(radius * v / len);
  }
  return out;
}

void EvalReport::finalize() {
  double sum = 0;
  int finite = 0;
  for (double p : psnr) {
    if (std::isfinite(p)) {
      sum += p;
      ++finite;
    }
  }
  if (finite > 0) {
    mean_psnr = sum / finite;
  } else {
    mean_psnr = psnr.empty() ? 0.0 : std::numeric_limits<double>::infinity();
  }
}

void write_eval_report(const std::filesystem::path& path, const EvalReport& r) {
  nlohmann::json j;
  j["psnr"] = nlohmann::json::array();
  for (double p : r.psnr) j["psnr"].push_back(db_to_json(p));
  j["mean_psnr"] = db_to_json(r.mean_psnr);
  j["chamfer"] = r.chamfer ? nlohmann::json(*r.chamfer) : nlohmann::json(nullptr);
  j["seconds"] = r.seconds;
  std::ofstream out(path);
  out << j.dump(2) << '\n';
  if (!out) throw IoError("evaluate: cannot write " + path.string());
}

EvalReport read_eval_report(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw MissingFile("evaluate: missing " + path.string());
  EvalReport r;
  try {
    const auto j = nlohmann::json::parse(in);
    for (const auto& p : j.at("psnr")) r.psnr.push_back(db_from_json(p));
    r.mean_psnr = db_from_json(j.at("mean_psnr"));
    if (!j.at("chamfer").is_null()) r.chamfer = j["chamfer"].get<double>();
    r.seconds = j.at("seconds").get<std::map<std::string, double>>();
  } catch (const nlohmann::json::exception& e) {
    throw ParseError("evaluate: " + path.string() + ": " + e.what());
  }
  return r;
}

}  // namespace nlr
