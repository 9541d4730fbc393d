#pragma once

#include "gr/mesh.hpp"

namespace gr::primitives {

/// Flat rectangular sheet in the z = 0 plane, `nx` x `ny` quads, CCW seen from +z.
TriMesh grid(int nx, int ny, double width, double height);

/// Latitude/longitude sphere with per-corner uvs (u around, v pole to pole).
TriMesh uv_sphere(int segments, int rings, double radius, const Vec3& center = Vec3::Zero());

/// Subdivided icosahedron projected to a sphere; watertight, no uvs.
TriMesh icosphere(int subdivisions, double radius, const Vec3& center = Vec3::Zero());

/// Axis-aligned box with `n` quads per side edge; watertight.
TriMesh box(const Vec3& lo, const Vec3& hi, int n = 1);

/// Open tube around the y axis from y0 to y1 (two boundary loops), normals outward.
TriMesh tube(int segments, int rows, double radius, double y0, double y1);

/// Flat disk in the z = 0 plane, one boundary loop of `segments` rim vertices.
TriMesh disk(int segments, int rings, double radius);

struct SkirtShape {
  int segments = 96;
  int rows = 32;
  double top_radius = 0.35;
  double hem_radius = 0.5;
  double top_y = 0.5;
  double hem_y = -0.5;
  int pleats = 10;             // sinusoidal wrinkles around the circumference
  double amplitude = 0.0;      // radial wrinkle amplitude at the hem
  double top_amplitude_fraction = 0.2;
};

/// Flared open skirt; with amplitude > 0 carries radial pleats that grow toward the hem.
TriMesh skirt(const SkirtShape& shape);

}  // namespace gr::primitives
