#pragma once

#include "gr/mesh.hpp"

namespace gr {

struct PbdConfig {
  int iterations = 200;
  int substeps = 4;                  // constraint sweeps per iteration between collision passes
  double stretch_stiffness = 1.0;
  double bending_stiffness = 0.9;
  double collision_offset = 0.002;   // world units
  double tolerance = 0.0;            // penetration tolerance; also stops once a collision pass moves no vertex farther. <= 0 uses 1e-4 x body bbox

  void validate() const;
};

struct PenetrationReport {
  std::size_t count = 0;
  double worst_depth = 0.0;
  int worst_vertex = -1;
};

/// Counts garment vertices inside the body (winding number > 1/2) deeper than `tolerance`.
PenetrationReport penetration_check(const TriMesh& garment, const TriMesh& body, double tolerance);

/// Throws ValidationError unless the body is closed and consistently oriented.
void require_watertight(const TriMesh& body);

struct DrapeResult {
  TriMesh mesh;
  int iterations = 0;
  PenetrationReport before;
  PenetrationReport after;
};

/// Gauss-Seidel PBD: edge-length and hinge-angle constraints to the input rest state, plus
/// collision constraints moving penetrating vertices to the closest body point + offset along its normal.
DrapeResult pbd_push_out(const TriMesh& garment, const TriMesh& body, const PbdConfig& config = {});

struct Similarity {
  double scale = 1.0;
  Vec3 translation = Vec3::Zero();
};
TriMesh apply_similarity(const TriMesh& mesh, const Similarity& t);

}  // namespace gr
