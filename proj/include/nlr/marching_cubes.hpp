#pragma once

#include "nlr/mesh.hpp"
#include "nlr/sdf.hpp"

namespace nlr {

// 0.5% of the object radius, with the radius taken as the domain radius 1.
inline constexpr double kDefaultIso = 0.005;

struct MarchingCubesOptions {
  int resolution = 512;  // cells per axis over [-1, 1]^3
  double iso = kDefaultIso;
  // Skip 8^3-cell blocks whose center value is farther from iso than
  // band_factor times the block half-diagonal. 0 evaluates every node.
  double band_factor = 2.0;
};

// Level set f = iso with linear edge interpolation, shared vertices per grid
// edge and triangles wound so their normals follow grad f (outward for
// outside-positive fields). Vertex normals are normalized grad f.
// Throws EmptyMesh when the grid has no sign change, InvalidArgument when
// resolution < 8.
Mesh marching_cubes(const SignedDistance& f, const MarchingCubesOptions& opts = {});

// Fraction of vertices whose stored normal has a positive dot with the
// geometric normal accumulated from the incident triangles.
double normal_agreement(const Mesh& m);

}  // namespace nlr
