#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "nlr/image.hpp"
#include "nlr/mesh.hpp"

namespace nlr {

// 10 log10(1 / MSE) over the RGB channels of mask pixels; +inf for a perfect
// match. Throws EmptyMask, DimensionMismatch.
double masked_psnr(const Image& pred, const Image& gt, const std::vector<std::uint8_t>& mask);

// Bounding volume hierarchy over the triangles for closest-point queries.
class MeshBvh {
 public:
  explicit MeshBvh(const Mesh& mesh);  // EmptyMesh for a mesh without triangles
  // Distance from p to the closest point on the mesh.
  double distance(const Vec3& p) const;

 private:
  struct Node {
    Eigen::AlignedBox3d box;
    int left = -1, right = -1;  // children, or -1 for a leaf
    int first = 0, count = 0;   // triangle range of a leaf
  };
  int build(int first, int count, std::vector<Vec3>& centroids);

  const Mesh& mesh_;
  std::vector<int> order_;
  std::vector<Node> nodes_;
};

enum class ChamferMethod { BruteForce, Bvh };

// Mean over points of the exact point-to-triangle distance to the mesh
// (ground truth to reconstruction only). Throws EmptyMesh, InvalidArgument
// for an empty point set.
double chamfer_one_directional(const std::vector<Vec3>& gt_points, const Mesh& mesh,
                               ChamferMethod method = ChamferMethod::Bvh);

// Area-uniform samples on a centered sphere.
std::vector<Vec3> sample_sphere(std::size_t n, double radius, std::uint64_t seed);

struct EvalReport {
  std::vector<double> psnr;  // per view, dB
  double mean_psnr = 0;      // mean of the finite entries, +inf if all are
  std::optional<double> chamfer;
  std::map<std::string, double> seconds;

  void finalize();  // recomputes mean_psnr
};

// eval_report.json; +inf PSNR is written as the string "inf".
void write_eval_report(const std::filesystem::path& path, const EvalReport& report);
EvalReport read_eval_report(const std::filesystem::path& path);

}  // namespace nlr
