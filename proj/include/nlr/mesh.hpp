#pragma once

#include <array>
#include <filesystem>
#include <vector>

#include "nlr/geometry.hpp"

namespace nlr {

struct Mesh {
  std::vector<Vec3> vertices;
  std::vector<Vec3> normals;  // per vertex; empty or same size as vertices
  std::vector<std::array<int, 3>> triangles;

  bool empty() const { return triangles.empty(); }
  // Throws DimensionMismatch / InvalidArgument on bad indices or normals.
  void validate() const;
};

double triangle_area(const Mesh& m, std::size_t tri);

// Drops triangles with area <= min_area and vertices no triangle uses.
void remove_degenerate(Mesh& m, double min_area = 1e-12);

// Every undirected edge is shared by exactly two triangles.
bool is_watertight(const Mesh& m);
// V - E + F over the referenced vertices.
long euler_characteristic(const Mesh& m);

// Wavefront OBJ with "v", "vn" and "f a//a b//b c//c" records (1-based).
void write_obj(const std::filesystem::path& path, const Mesh& m);
Mesh read_obj(const std::filesystem::path& path);

// Closest point on triangle (a, b, c) to p.
Vec3 closest_point_on_triangle(const Vec3& p, const Vec3& a, const Vec3& b, const Vec3& c);

// First intersection of a ray with the mesh (Moller-Trumbore, brute force).
// Returns the ray parameter.
std::optional<double> intersect_mesh(const Mesh& m, const Ray& ray);

}  // namespace nlr
