#pragma once

// Separable sources F = f(x) r(t, x), G = g(x) r~(t, x), the admissible set
//   S(C0) = { |F_t(t, x)| <= C0 |F(T0, x)|, |G_t| <= C0 |G(T0, x)| },
// and the finite source basis used for random draws and reconstruction.

#include <Eigen/Cholesky>
#include <Eigen/Core>

#include <cmath>
#include <functional>
#include <limits>
#include <memory>
#include <numbers>
#include <random>
#include <string>
#include <vector>

#include "dynbc/error.hpp"
#include "dynbc/forward.hpp"
#include "dynbc/mesh.hpp"

namespace dynbc {

/// Known time profiles r(t, r, theta) on the disk and r~(t, theta) on the circle,
/// with their time derivatives.
struct KnownPart {
  std::function<double(double, double, double)> r, r_t;
  std::function<double(double, double)> rs, rs_t;
  // Optional affine form r = 1 + a(t) phi(r, theta), r~ = 1 + a(t) phis(theta).
  // When set, SeparableSource::pair samples phi once instead of at every call.
  std::function<double(double)> a, a_t;
  std::function<double(double, double)> phi;
  std::function<double(double)> phis;

  bool affine() const noexcept { return a && a_t && phi && phis; }

  /// r = 1 + amp sin(t) (r/R) cos(theta),  r~ = 1 + amp sin(t) sin(theta).
  static KnownPart standard(double radius, double amp = 0.5) {
    KnownPart k;
    k.r = [=](double t, double r, double th) { return 1.0 + amp * std::sin(t) * (r / radius) * std::cos(th); };
    k.r_t = [=](double t, double r, double th) { return amp * std::cos(t) * (r / radius) * std::cos(th); };
    k.rs = [=](double t, double th) { return 1.0 + amp * std::sin(t) * std::sin(th); };
    k.rs_t = [=](double t, double th) { return amp * std::cos(t) * std::sin(th); };
    k.a = [=](double t) { return amp * std::sin(t); };
    k.a_t = [=](double t) { return amp * std::cos(t); };
    k.phi = [=](double r, double th) { return (r / radius) * std::cos(th); };
    k.phis = [](double th) { return std::sin(th); };
    return k;
  }

  static KnownPart constant_one() {
    KnownPart k;
    k.r = [](double, double, double) { return 1.0; };
    k.r_t = [](double, double, double) { return 0.0; };
    k.rs = [](double, double) { return 1.0; };
    k.rs_t = [](double, double) { return 0.0; };
    return k;
  }

  /// Sampled (r, r~) at time t as a coupled field.
  CoupledField sample(const DiskMesh& mesh, double t) const {
    return CoupledField(sample_bulk(mesh, [&](double rr, double th) { return r(t, rr, th); }),
                        sample_surface(mesh, [&](double th) { return rs(t, th); }));
  }
  CoupledField sample_dt(const DiskMesh& mesh, double t) const {
    return CoupledField(sample_bulk(mesh, [&](double rr, double th) { return r_t(t, rr, th); }),
                        sample_surface(mesh, [&](double th) { return rs_t(t, th); }));
  }
};

inline CoupledField hadamard(const CoupledField& a, const CoupledField& b) {
  return CoupledField(BulkField(Eigen::VectorXd(a.bulk.values.cwiseProduct(b.bulk.values))),
                      SurfaceField(Eigen::VectorXd(a.surface.values.cwiseProduct(b.surface.values))));
}

struct SeparableSource {
  BulkField f;
  SurfaceField g;
  KnownPart known;
  double T0 = 0.0;
  double r0 = 0.0;   // min |r(T0, .)|
  double rs0 = 0.0;  // min |r~(T0, .)|
  double C0 = 0.0;

  CoupledField unknown() const { return CoupledField(f, g); }

  SourcePair pair(const DiskMesh& mesh) const {
    const CoupledField u = unknown();
    const KnownPart k = known;
    if (k.affine()) {
      const Eigen::VectorXd us = u.stacked();
      const Eigen::VectorXd uphi =
          hadamard(u, CoupledField(sample_bulk(mesh, k.phi), sample_surface(mesh, k.phis))).stacked();
      return SourcePair([=](double t) { return CoupledField::from_stacked(mesh, us + k.a(t) * uphi); },
                        [=](double t) { return CoupledField::from_stacked(mesh, k.a_t(t) * uphi); });
    }
    return SourcePair([=](double t) { return hadamard(u, k.sample(mesh, t)); },
                      [=](double t) { return hadamard(u, k.sample_dt(mesh, t)); });
  }
};

/// Certifies (r, r~) on the grid and returns the separable source with
///   C0 = max( sup|r_t| / r0, sup|r~_t| / r~0 ).
inline SeparableSource make_separable(const BulkField& f, const SurfaceField& g, const KnownPart& known,
                                      const DiskMesh& mesh, const TimeGrid& grid, double T0) {
  require_size(mesh, f, "make_separable");
  require_size(mesh, g, "make_separable");
  grid.index_of(T0);
  SeparableSource s{f, g, known, T0, 0.0, 0.0, 0.0};
  const CoupledField at0 = known.sample(mesh, T0);
  s.r0 = at0.bulk.values.cwiseAbs().minCoeff();
  s.rs0 = at0.surface.values.cwiseAbs().minCoeff();
  if (!(s.r0 > 0.0)) throw DegenerateKnownPart("r(T0, x) vanishes in the bulk");
  if (!(s.rs0 > 0.0)) throw DegenerateKnownPart("r~(T0, x) vanishes on the boundary");
  double sup_rt = 0.0, sup_rst = 0.0;
  if (known.affine()) {
    // |a_t(t) phi(x)| factorizes, so the grid maximum is a product of maxima.
    double sup_at = 0.0;
    for (int n = 0; n < grid.num_points(); ++n) sup_at = std::max(sup_at, std::abs(known.a_t(grid.t(n))));
    sup_rt = sup_at * sample_bulk(mesh, known.phi).values.cwiseAbs().maxCoeff();
    sup_rst = sup_at * sample_surface(mesh, known.phis).values.cwiseAbs().maxCoeff();
    s.C0 = std::max(sup_rt / s.r0, sup_rst / s.rs0);
    return s;
  }
  for (int n = 0; n < grid.num_points(); ++n) {
    const CoupledField d = known.sample_dt(mesh, grid.t(n));
    sup_rt = std::max(sup_rt, d.bulk.values.cwiseAbs().maxCoeff());
    sup_rst = std::max(sup_rst, d.surface.values.cwiseAbs().maxCoeff());
  }
  s.C0 = std::max(sup_rt / s.r0, sup_rst / s.rs0);
  return s;
}

struct AdmissibilityWitness {
  double t = 0.0;
  bool on_boundary = false;
  Eigen::Index index = 0;
  double abs_dt = 0.0;       // |F_t(t, x)|
  double bound = 0.0;        // C0 |F(T0, x)|
};

struct AdmissibilityResult {
  bool admissible = true;
  AdmissibilityWitness witness;  // first violation in (time, bulk then boundary, index) order
  /// Smallest C0 for which the grid check passes (inf when F(T0, x) = 0 and F_t != 0 somewhere).
  double minimal_C0 = 0.0;
};

/// Grid-everywhere check of |F_t| <= C0 |F(T0)| and |G_t| <= C0 |G(T0)|. The
/// time derivative is the supplied one, or centered differences on the grid.
/// A relative slack of 1e-12 absorbs rounding in products that hit the bound exactly.
inline AdmissibilityResult check_admissible(const SourcePair& src, const DiskMesh& mesh, const TimeGrid& grid,
                                            double T0, double C0) {
  grid.index_of(T0);
  const Eigen::VectorXd at0 = src(T0).stacked().cwiseAbs();
  const Eigen::Index nc = mesh.num_cells();
  AdmissibilityResult res;
  for (int n = 0; n < grid.num_points(); ++n) {
    const double t = grid.t(n);
    Eigen::VectorXd d;
    if (src.has_derivative()) {
      d = src.derivative(t).stacked();
    } else {
      const int a = std::max(0, n - 1), b = std::min(grid.steps, n + 1);
      d = (src(grid.t(b)).stacked() - src(grid.t(a)).stacked()) / (grid.t(b) - grid.t(a));
    }
    for (Eigen::Index k = 0; k < d.size(); ++k) {
      const double lhs = std::abs(d[k]);
      const double bound = C0 * at0[k];
      if (lhs > 0.0) {
        const double need = at0[k] > 0.0 ? lhs / at0[k] : std::numeric_limits<double>::infinity();
        res.minimal_C0 = std::max(res.minimal_C0, need);
      }
      if (lhs > bound * (1.0 + 1e-12) && res.admissible) {
        res.admissible = false;
        res.witness = {t, k >= nc, k >= nc ? k - nc : k, lhs, bound};
      }
    }
  }
  return res;
}

// -- Source basis ----------------------------------------------------------------

/// Angular function number n of the sequence 1, cos t, sin t, cos 2t, sin 2t, ...
inline double angular_mode(int n, double th) {
  if (n == 0) return 1.0;
  const int k = (n + 1) / 2;
  return n % 2 == 1 ? std::cos(k * th) : std::sin(k * th);
}
inline int angular_order(int n) { return (n + 1) / 2; }

/// Finite source basis, orthonormal in the discrete L2 inner products.
///
/// Raw bulk functions are cos(m pi r/R) * rho^{min(k,1)} * angular_mode(n)
/// (m < n_radial, n < n_angular, k the angular order), raw surface functions
/// are angular_mode(n). Each family is orthonormalized through the Cholesky
/// factor of its Gram matrix.
class SourceBasis {
 public:
  SourceBasis(const DiskMesh& mesh, int n_radial, int n_angular, int n_surface)
      : mesh_(mesh), n_radial_(n_radial), n_angular_(n_angular), n_surface_(n_surface) {
    if (n_radial < 1 || n_angular < 1 || n_surface < 0) throw InvalidArgument("source basis dimensions must be positive");
    if (n_angular > mesh.nth() || n_surface > mesh.nth() || n_radial > mesh.nr())
      throw InvalidArgument("source basis exceeds mesh resolution");
    const double R = mesh.radius();
    Eigen::MatrixXd raw_b(mesh.num_cells(), n_radial * n_angular);
    for (int m = 0; m < n_radial; ++m)
      for (int n = 0; n < n_angular; ++n) {
        const int col = m * n_angular + n;
        raw_b.col(col) = sample_bulk(mesh, [&](double r, double th) {
                           const double rho = r / R;
                           return std::cos(m * std::numbers::pi * rho) * (angular_order(n) > 0 ? rho : 1.0) *
                                  angular_mode(n, th);
                         }).values;
      }
    Eigen::MatrixXd raw_s(mesh.num_nodes(), n_surface);
    for (int n = 0; n < n_surface; ++n)
      raw_s.col(n) = sample_surface(mesh, [&](double th) { return angular_mode(n, th); }).values;

    Eigen::VectorXd wb(mesh.num_cells());
    for (Eigen::Index k = 0; k < mesh.num_cells(); ++k) wb[k] = mesh.cell_area_of(k);
    bulk_ = orthonormalize(raw_b, wb);
    surface_ = orthonormalize(raw_s, Eigen::VectorXd::Constant(mesh.num_nodes(), mesh.boundary_measure()));
  }

  const DiskMesh& mesh() const noexcept { return mesh_; }
  int bulk_dim() const noexcept { return int(bulk_.cols()); }
  int surface_dim() const noexcept { return int(surface_.cols()); }
  int dim() const noexcept { return bulk_dim() + surface_dim(); }
  int n_radial() const noexcept { return n_radial_; }
  int n_angular() const noexcept { return n_angular_; }

  const Eigen::MatrixXd& bulk_matrix() const noexcept { return bulk_; }
  const Eigen::MatrixXd& surface_matrix() const noexcept { return surface_; }

  /// (f, g) from a coefficient vector [bulk; surface].
  CoupledField synthesize(const Eigen::VectorXd& c) const {
    if (c.size() != dim()) throw SizeMismatch("basis coefficient vector has wrong length");
    return CoupledField(BulkField(Eigen::VectorXd(bulk_ * c.head(bulk_dim()))),
                        SurfaceField(Eigen::VectorXd(surface_ * c.tail(surface_dim()))));
  }

  /// Basis element number i as (f, g); exactly one of the two is nonzero.
  CoupledField element(int i) const {
    Eigen::VectorXd c = Eigen::VectorXd::Zero(dim());
    c[i] = 1.0;
    return synthesize(c);
  }

  /// Discrete L2 projection coefficients of (f, g).
  Eigen::VectorXd project(const CoupledField& u) const {
    require_size(mesh_, u, "basis projection");
    Eigen::VectorXd c(dim());
    Eigen::VectorXd wb(mesh_.num_cells());
    for (Eigen::Index k = 0; k < mesh_.num_cells(); ++k) wb[k] = mesh_.cell_area_of(k);
    c.head(bulk_dim()) = bulk_.transpose() * wb.cwiseProduct(u.bulk.values);
    c.tail(surface_dim()) = surface_.transpose() * (mesh_.boundary_measure() * u.surface.values);
    return c;
  }

 private:
  static Eigen::MatrixXd orthonormalize(const Eigen::MatrixXd& raw, const Eigen::VectorXd& w) {
    if (raw.cols() == 0) return raw;
    const Eigen::MatrixXd gram = raw.transpose() * w.asDiagonal() * raw;
    Eigen::LLT<Eigen::MatrixXd> llt(gram);
    if (llt.info() != Eigen::Success) throw InvalidArgument("source basis is linearly dependent on this mesh");
    // raw = Q L^T  =>  Q = raw L^{-T}
    Eigen::MatrixXd q = llt.matrixU().solve<Eigen::OnTheRight>(raw);
    return q;
  }

  DiskMesh mesh_;
  int n_radial_, n_angular_, n_surface_;
  Eigen::MatrixXd bulk_, surface_;
};

/// Random in-basis unknown parts: i.i.d. standard normal coefficients.
inline Eigen::VectorXd random_coefficients(const SourceBasis& basis, std::mt19937_64& rng) {
  std::normal_distribution<double> nd(0.0, 1.0);
  Eigen::VectorXd c(basis.dim());
  for (Eigen::Index i = 0; i < c.size(); ++i) c[i] = nd(rng);
  return c;
}

}  // namespace dynbc
