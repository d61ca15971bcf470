#pragma once

// Polar finite-volume mesh of the disk {|x| < R}, its boundary circle, and the
// field containers living on it.
//
// Cells are indexed (i, j) with i the ring (0 = innermost) and j the angular
// sector; the flat index is i * nth + j. Boundary nodes are indexed by j and sit
// on the outer radial face of cell (nr - 1, j).

#include <Eigen/Core>

#include <array>
#include <cmath>
#include <numbers>
#include <stdexcept>
#include <string>

#include "dynbc/error.hpp"

namespace dynbc {

class DiskMesh {
 public:
  DiskMesh(double radius, int nr, int nth) : radius_(radius), nr_(nr), nth_(nth) {
    if (!(radius > 0.0) || !std::isfinite(radius)) {
      throw InvalidArgument("disk radius must be positive, got " + std::to_string(radius));
    }
    if (nr < 2) throw InvalidArgument("nr must be >= 2, got " + std::to_string(nr));
    if (nth < 4 || nth % 2 != 0) {
      throw InvalidArgument("nth must be even and >= 4, got " + std::to_string(nth));
    }
    dr_ = radius / nr;
    dtheta_ = 2.0 * std::numbers::pi / nth;
  }

  double radius() const noexcept { return radius_; }
  int nr() const noexcept { return nr_; }
  int nth() const noexcept { return nth_; }
  double dr() const noexcept { return dr_; }
  double dtheta() const noexcept { return dtheta_; }

  Eigen::Index num_cells() const noexcept { return Eigen::Index(nr_) * nth_; }
  Eigen::Index num_nodes() const noexcept { return nth_; }
  Eigen::Index num_unknowns() const noexcept { return num_cells() + num_nodes(); }

  Eigen::Index cell(int i, int j) const noexcept { return Eigen::Index(i) * nth_ + wrap(j); }
  int ring_of(Eigen::Index k) const noexcept { return int(k / nth_); }
  int sector_of(Eigen::Index k) const noexcept { return int(k % nth_); }

  /// Periodic angular index.
  int wrap(int j) const noexcept { return ((j % nth_) + nth_) % nth_; }

  /// Radius of the cell centers in ring i.
  double r(int i) const noexcept { return (i + 0.5) * dr_; }
  /// Angle of sector j (cell centers and boundary nodes share it).
  double theta(int j) const noexcept { return (wrap(j) + 0.5) * dtheta_; }
  /// Radius of the radial face between ring i-1 and ring i (0 <= i <= nr).
  double r_face(int i) const noexcept { return i * dr_; }

  /// Exact area of the annular sector of ring i.
  double cell_area(int i) const noexcept { return r(i) * dr_ * dtheta_; }
  double cell_area_of(Eigen::Index k) const noexcept { return cell_area(ring_of(k)); }
  /// Arclength carried by one boundary node.
  double boundary_measure() const noexcept { return radius_ * dtheta_; }

  /// Length of the radial face at r_face(i); zero at the origin.
  double radial_face_length(int i) const noexcept { return r_face(i) * dtheta_; }
  /// Length of an angular face (a segment of constant theta).
  double angular_face_length() const noexcept { return dr_; }
  /// Unit normal of the radial faces in the polar frame (e_r).
  static constexpr std::array<double, 2> radial_face_normal() { return {1.0, 0.0}; }
  /// Unit normal of the angular faces in the polar frame (e_theta).
  static constexpr std::array<double, 2> angular_face_normal() { return {0.0, 1.0}; }

  /// Quadrature weight of one of the four sub-cells (quarters) of a cell.
  ///
  /// Interior sub-cell weights are the exact polar areas of the half-rings, so
  /// the radial face between rings i and i+1 carries r_face(i+1)*dr*dtheta. The
  /// outer half of the last ring is weighted with R instead of its centroid
  /// radius so that the boundary flux is exactly A grad(y) . nu times the
  /// boundary measure.
  double subcell_weight(int i, bool outer) const noexcept {
    const double half = 0.5 * dr_ * 0.5 * dtheta_;
    if (outer) return (i == nr_ - 1 ? radius_ : r(i) + 0.25 * dr_) * half;
    return (r(i) - 0.25 * dr_) * half;
  }

  bool operator==(const DiskMesh& o) const noexcept {
    return radius_ == o.radius_ && nr_ == o.nr_ && nth_ == o.nth_;
  }

 private:
  double radius_;
  int nr_;
  int nth_;
  double dr_ = 0.0;
  double dtheta_ = 0.0;
};

inline DiskMesh build_disk_mesh(double radius, int nr, int nth) { return DiskMesh(radius, nr, nth); }

inline void require_same_mesh(const DiskMesh& a, const DiskMesh& b, const char* what) {
  if (!(a == b)) throw SizeMismatch(std::string(what) + ": fields live on different meshes");
}

struct BulkField {
  Eigen::VectorXd values;

  BulkField() = default;
  explicit BulkField(const DiskMesh& mesh) : values(Eigen::VectorXd::Zero(mesh.num_cells())) {}
  explicit BulkField(Eigen::VectorXd v) : values(std::move(v)) {}

  double& operator()(const DiskMesh& m, int i, int j) { return values[m.cell(i, j)]; }
  double operator()(const DiskMesh& m, int i, int j) const { return values[m.cell(i, j)]; }
  Eigen::Index size() const noexcept { return values.size(); }

  bool all_finite() const { return values.allFinite(); }
};

enum class SurfaceKind { Scalar, Tangent };

/// Field on the boundary circle. Tangent fields store the component along the
/// unit tangent e_theta, so |X|_Gamma = |value|.
struct SurfaceField {
  Eigen::VectorXd values;
  SurfaceKind kind = SurfaceKind::Scalar;

  SurfaceField() = default;
  explicit SurfaceField(const DiskMesh& mesh, SurfaceKind k = SurfaceKind::Scalar)
      : values(Eigen::VectorXd::Zero(mesh.num_nodes())), kind(k) {}
  explicit SurfaceField(Eigen::VectorXd v, SurfaceKind k = SurfaceKind::Scalar)
      : values(std::move(v)), kind(k) {}

  double& operator[](Eigen::Index j) { return values[j]; }
  double operator[](Eigen::Index j) const { return values[j]; }
  Eigen::Index size() const noexcept { return values.size(); }
};

/// Bulk field y together with its boundary trace y_Gamma. The surface component
/// is itself the trace unknown: every stencil reads boundary values from it, so
/// y_Gamma = y|_Gamma holds by construction.
struct CoupledField {
  BulkField bulk;
  SurfaceField surface;

  CoupledField() = default;
  explicit CoupledField(const DiskMesh& mesh) : bulk(mesh), surface(mesh) {}
  CoupledField(BulkField b, SurfaceField s) : bulk(std::move(b)), surface(std::move(s)) {}

  static CoupledField constant(const DiskMesh& mesh, double c) {
    CoupledField f(mesh);
    f.bulk.values.setConstant(c);
    f.surface.values.setConstant(c);
    return f;
  }

  /// Stacked [bulk; surface] vector used by the linear algebra.
  Eigen::VectorXd stacked() const {
    Eigen::VectorXd x(bulk.size() + surface.size());
    x << bulk.values, surface.values;
    return x;
  }

  static CoupledField from_stacked(const DiskMesh& mesh, const Eigen::VectorXd& x) {
    if (x.size() != mesh.num_unknowns()) throw SizeMismatch("stacked vector has wrong length");
    return CoupledField(BulkField(Eigen::VectorXd(x.head(mesh.num_cells()))),
                        SurfaceField(Eigen::VectorXd(x.tail(mesh.num_nodes()))));
  }

  CoupledField& operator+=(const CoupledField& o) {
    bulk.values += o.bulk.values;
    surface.values += o.surface.values;
    return *this;
  }
  CoupledField& operator-=(const CoupledField& o) {
    bulk.values -= o.bulk.values;
    surface.values -= o.surface.values;
    return *this;
  }
  CoupledField& operator*=(double a) {
    bulk.values *= a;
    surface.values *= a;
    return *this;
  }
  friend CoupledField operator+(CoupledField a, const CoupledField& b) { return a += b; }
  friend CoupledField operator-(CoupledField a, const CoupledField& b) { return a -= b; }
  friend CoupledField operator*(double s, CoupledField a) { return a *= s; }

  bool matches(const DiskMesh& mesh) const noexcept {
    return bulk.size() == mesh.num_cells() && surface.size() == mesh.num_nodes();
  }
};

inline void require_size(const DiskMesh& mesh, const BulkField& f, const char* what) {
  if (f.size() != mesh.num_cells()) throw SizeMismatch(std::string(what) + ": bulk field size mismatch");
}
inline void require_size(const DiskMesh& mesh, const SurfaceField& f, const char* what) {
  if (f.size() != mesh.num_nodes()) throw SizeMismatch(std::string(what) + ": surface field size mismatch");
}
inline void require_size(const DiskMesh& mesh, const CoupledField& f, const char* what) {
  require_size(mesh, f.bulk, what);
  require_size(mesh, f.surface, what);
}

/// Sample a function of (r, theta) at the cell centers.
template <class Fn>
BulkField sample_bulk(const DiskMesh& mesh, Fn&& fn) {
  BulkField f(mesh);
  for (int i = 0; i < mesh.nr(); ++i)
    for (int j = 0; j < mesh.nth(); ++j) f.values[mesh.cell(i, j)] = fn(mesh.r(i), mesh.theta(j));
  return f;
}

/// Sample a function of theta at the boundary nodes.
template <class Fn>
SurfaceField sample_surface(const DiskMesh& mesh, Fn&& fn, SurfaceKind kind = SurfaceKind::Scalar) {
  SurfaceField f(mesh, kind);
  for (int j = 0; j < mesh.nth(); ++j) f.values[j] = fn(mesh.theta(j));
  return f;
}

// -- Tangential calculus on the boundary circle ------------------------------
//
// The centered node gradient G and the divergence -G^T (adjoint under the
// uniform boundary measure R*dtheta) make the discrete divergence formula
//   sum div(X) z dS = - sum X grad(z) dS
// an exact algebraic identity.

struct SurfaceCalculus {
  SurfaceField grad;  // tangent
  SurfaceField div;   // scalar
};

inline SurfaceField surface_gradient(const DiskMesh& mesh, const SurfaceField& u) {
  require_size(mesh, u, "surface_gradient");
  const double h = 2.0 * mesh.boundary_measure();
  SurfaceField g(mesh, SurfaceKind::Tangent);
  const int n = mesh.nth();
  for (int j = 0; j < n; ++j) g.values[j] = (u.values[mesh.wrap(j + 1)] - u.values[mesh.wrap(j - 1)]) / h;
  return g;
}

inline SurfaceField surface_divergence(const DiskMesh& mesh, const SurfaceField& x) {
  require_size(mesh, x, "surface_divergence");
  // Face values X_{j+1/2} = (X_j + X_{j+1}) / 2, differenced over R*dtheta.
  const double h = mesh.boundary_measure();
  SurfaceField d(mesh, SurfaceKind::Scalar);
  const int n = mesh.nth();
  for (int j = 0; j < n; ++j) {
    const double xp = 0.5 * (x.values[j] + x.values[mesh.wrap(j + 1)]);
    const double xm = 0.5 * (x.values[mesh.wrap(j - 1)] + x.values[j]);
    d.values[j] = (xp - xm) / h;
  }
  return d;
}

inline SurfaceCalculus surface_calculus(const DiskMesh& mesh, const SurfaceField& u, const SurfaceField& x) {
  if (u.kind != SurfaceKind::Scalar) throw InvalidArgument("surface_calculus: u must be a scalar field");
  if (x.kind != SurfaceKind::Tangent) throw InvalidArgument("surface_calculus: X must be a tangent field");
  return {surface_gradient(mesh, u), surface_divergence(mesh, x)};
}

/// Compact Laplace-Beltrami operator (u_{j+1} - 2u_j + u_{j-1}) / (R dtheta)^2.
inline SurfaceField laplace_beltrami(const DiskMesh& mesh, const SurfaceField& u) {
  require_size(mesh, u, "laplace_beltrami");
  const double h = mesh.boundary_measure();
  SurfaceField out(mesh);
  for (int j = 0; j < mesh.nth(); ++j)
    out.values[j] = (u.values[mesh.wrap(j + 1)] - 2.0 * u.values[j] + u.values[mesh.wrap(j - 1)]) / (h * h);
  return out;
}

/// Boundary values seen by the flux stencils at the outer faces. The surface
/// unknown is the trace, so this is the identity on y_Gamma.
inline SurfaceField trace_restrict(const DiskMesh& mesh, const BulkField& y, const SurfaceField& y_gamma) {
  require_size(mesh, y, "trace_restrict");
  require_size(mesh, y_gamma, "trace_restrict");
  return y_gamma;
}

}  // namespace dynbc
