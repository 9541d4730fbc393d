#include <cmath>
#include <limits>

#include "gr/error.hpp"
#include "gr/smoother.hpp"

namespace gr {
namespace {

Vec3 area_normal(const TriMesh& m, int f) {
  const Face& t = m.faces[f];
  return (m.vertices[t[1]] - m.vertices[t[0]]).cross(m.vertices[t[2]] - m.vertices[t[0]]);
}

struct HingeAngle {
  double theta;
  Vec3 n0, n1, e;  // unit normals and unit edge direction
  Vec3 a0, a1, edge;
};

HingeAngle compute_angle(const TriMesh& m, const Hinge& h) {
  HingeAngle r;
  r.a0 = area_normal(m, h.f0);
  r.a1 = area_normal(m, h.f1);
  r.edge = m.vertices[h.v1] - m.vertices[h.v0];
  r.n0 = r.a0.normalized();
  r.n1 = r.a1.normalized();
  r.e = r.edge.normalized();
  r.theta = std::atan2(r.n0.cross(r.n1).dot(r.e), r.n0.dot(r.n1));
  return r;
}

}  // namespace

void ShellEnergyConfig::validate() const {
  if (!(bending_stiffness > 0.0) || !(youngs_modulus > 0.0)) throw ValidationError("shell stiffnesses must be positive");
  if (!(poisson_ratio >= 0.0 && poisson_ratio < 0.5)) throw ValidationError("Poisson ratio must lie in [0, 0.5)");
  if (!(tolerance > 0.0) || max_iterations < 0 || history < 1) throw ValidationError("invalid solver settings");
}

double hinge_angle(const TriMesh& mesh, const Hinge& h) { return compute_angle(mesh, h).theta; }

double hinge_angle_gradient(const TriMesh& mesh, const Hinge& h, std::array<Vec3, 4>& grad) {
  const HingeAngle a = compute_angle(mesh, h);
  const double s = a.n0.cross(a.n1).dot(a.e), c = a.n0.dot(a.n1);
  const double den = s * s + c * c;
  const double gs = c / den, gc = -s / den;
  const Vec3 gn0 = gs * a.n1.cross(a.e) + gc * a.n1;
  const Vec3 gn1 = gs * a.e.cross(a.n0) + gc * a.n0;
  const Vec3 gedge = normalize_backward(a.edge, gs * a.n0.cross(a.n1));
  grad.fill(Vec3::Zero());
  const std::array<int, 4> ids{h.v0, h.v1, h.opp0, h.opp1};
  auto slot = [&](int v) {
    for (int k = 0; k < 4; ++k) {
      if (ids[k] == v) return k;
    }
    return 0;
  };
  auto scatter = [&](int f, const Vec3& ga) {
    const Face& t = mesh.faces[f];
    const Vec3 e1 = mesh.vertices[t[1]] - mesh.vertices[t[0]];
    const Vec3 e2 = mesh.vertices[t[2]] - mesh.vertices[t[0]];
    Vec3 g1 = Vec3::Zero(), g2 = Vec3::Zero();
    cross_backward(e1, e2, ga, g1, g2);
    grad[slot(t[1])] += g1;
    grad[slot(t[2])] += g2;
    grad[slot(t[0])] -= g1 + g2;
  };
  scatter(h.f0, normalize_backward(a.a0, gn0));
  scatter(h.f1, normalize_backward(a.a1, gn1));
  grad[1] += gedge;
  grad[0] -= gedge;
  return a.theta;
}

double bending_energy(const TriMesh& mesh, const TriMesh& rest, const AdjacencyIndex& adj, double k_b, std::vector<Vec3>* grad) {
  if (grad) grad->assign(mesh.vertex_count(), Vec3::Zero());
  const double eps = 2.0 * degenerate_area_threshold(rest);
  double total = 0.0;
  std::array<Vec3, 4> gt;
  for (const Hinge& h : adj.hinges) {
    const double r0 = area_normal(rest, h.f0).norm(), r1 = area_normal(rest, h.f1).norm();
    const double rest_len2 = (rest.vertices[h.v1] - rest.vertices[h.v0]).squaredNorm();
    if (r0 <= eps || r1 <= eps || rest_len2 <= 0.0) continue;
    if (area_normal(mesh, h.f0).norm() <= eps || area_normal(mesh, h.f1).norm() <= eps ||
        mesh.vertices[h.v1] == mesh.vertices[h.v0]) {
      continue;
    }
    // |e|^2 / (A0 + A1) with A = |area normal| / 2.
    const double coeff = k_b * rest_len2 / (0.5 * (r0 + r1));
    const double theta = grad ? hinge_angle_gradient(mesh, h, gt) : hinge_angle(mesh, h);
    total += coeff * theta * theta;
    if (!grad) continue;
    const std::array<int, 4> ids{h.v0, h.v1, h.opp0, h.opp1};
    for (int k = 0; k < 4; ++k) (*grad)[ids[k]] += 2.0 * coeff * theta * gt[k];
  }
  return total;
}

double neo_hookean_density(const Eigen::Matrix<double, 3, 2>& F, double mu, double lambda) {
  const Eigen::Matrix2d C = F.transpose() * F;
  const double detC = C.determinant();
  if (!(detC > 0.0)) return std::numeric_limits<double>::infinity();
  const double lnJ = 0.5 * std::log(detC);
  return 0.5 * mu * (C.trace() - 2.0) - mu * lnJ + 0.5 * lambda * lnJ * lnJ;
}

double membrane_energy(const TriMesh& mesh, const TriMesh& rest, double mu, double lambda, std::vector<Vec3>* grad) {
  if (mesh.face_count() != rest.face_count() || mesh.vertex_count() != rest.vertex_count()) {
    throw ValidationError("membrane energy: current and rest meshes differ in connectivity");
  }
  if (grad) grad->assign(mesh.vertex_count(), Vec3::Zero());
  const double eps = degenerate_area_threshold(rest);
  double total = 0.0;
  for (std::size_t f = 0; f < mesh.face_count(); ++f) {
    const Face& t = mesh.faces[f];
    const Vec3 r1 = rest.vertices[t[1]] - rest.vertices[t[0]];
    const Vec3 r2 = rest.vertices[t[2]] - rest.vertices[t[0]];
    const Vec3 rn = r1.cross(r2);
    const double area = 0.5 * rn.norm();
    if (area <= eps) continue;
    const Vec3 u = r1.normalized();
    const Vec3 w = rn.normalized().cross(u);
    Eigen::Matrix2d Dm;
    Dm << r1.dot(u), r2.dot(u), r1.dot(w), r2.dot(w);
    const Eigen::Matrix2d Dm_inv = Dm.inverse();
    Eigen::Matrix<double, 3, 2> Ds;
    Ds.col(0) = mesh.vertices[t[1]] - mesh.vertices[t[0]];
    Ds.col(1) = mesh.vertices[t[2]] - mesh.vertices[t[0]];
    const Eigen::Matrix<double, 3, 2> F = Ds * Dm_inv;
    const Eigen::Matrix2d C = F.transpose() * F;
    const double detC = C.determinant();
    if (!(detC > 0.0)) return std::numeric_limits<double>::infinity();
    const double lnJ = 0.5 * std::log(detC);
    total += area * (0.5 * mu * (C.trace() - 2.0) - mu * lnJ + 0.5 * lambda * lnJ * lnJ);
    if (!grad) continue;
    const Eigen::Matrix<double, 3, 2> FCinv = F * C.inverse();
    const Eigen::Matrix<double, 3, 2> P = mu * F - mu * FCinv + lambda * lnJ * FCinv;
    const Eigen::Matrix<double, 3, 2> H = area * P * Dm_inv.transpose();
    (*grad)[t[1]] += H.col(0);
    (*grad)[t[2]] += H.col(1);
    (*grad)[t[0]] -= H.col(0) + H.col(1);
  }
  return total;
}

}  // namespace gr
