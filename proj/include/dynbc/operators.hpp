#pragma once

// Discrete coupled operator, bilinear form, conormal derivative and norms.
//
// Bulk diffusion is built from sub-cell gradients. Every cell is split into
// four quarters (inner/outer half x minus/plus half); quarter c carries the
// polar gradient
//   g_c = (g_r, g_theta)
// where g_r is the two-point difference across the radial face on its side
// (half distance dr/2 to the boundary node for the outer half of the last
// ring, absent for the inner half of ring 0 whose face has zero length) and
// g_theta the difference across the angular face on its side. The energy
//   E(u, v) = sum_c w_c g_c(v)^T A_K g_c(u)
// is symmetric, and E(u, u) >= beta0 sum_c w_c |g_c(u)|^2, so symmetry,
// coercivity and the identity a[u, v] = <-Au, v> hold for the assembled
// operator without approximation. With a_rt = 0 the scheme reduces to the
// classical five-point two-point-flux stencil.
//
// Surface diffusion uses face differences (u_{j+1} - u_j)/(R dtheta) on the
// circle; drifts use centered differences.

#include <Eigen/Core>
#include <Eigen/SparseCore>

#include <algorithm>
#include <array>
#include <cmath>
#include <ostream>
#include <string>
#include <vector>

#include "dynbc/coefficients.hpp"
#include "dynbc/error.hpp"
#include "dynbc/field_io.hpp"
#include "dynbc/mesh.hpp"

namespace dynbc {

using SparseMatrix = Eigen::SparseMatrix<double>;

namespace detail {

/// Sparse row with at most two entries.
struct Stencil2 {
  std::array<Eigen::Index, 2> idx{};
  std::array<double, 2> w{};
  int n = 0;

  void add(Eigen::Index i, double c) {
    idx[n] = i;
    w[n] = c;
    ++n;
  }
  template <class Vec>
  double apply(const Vec& x) const {
    double s = 0.0;
    for (int k = 0; k < n; ++k) s += w[k] * x[idx[k]];
    return s;
  }
};

struct Corner {
  Eigen::Index cell;
  double weight;
  Stencil2 gr;  // radial component
  Stencil2 gt;  // angular component
};

/// Sub-cell gradient stencils over the stacked [bulk; surface] vector.
inline std::vector<Corner> corners(const DiskMesh& mesh) {
  std::vector<Corner> out;
  out.reserve(std::size_t(4 * mesh.num_cells()));
  const double dr = mesh.dr();
  const Eigen::Index nc = mesh.num_cells();
  for (int i = 0; i < mesh.nr(); ++i) {
    const double inv_rdt = 1.0 / (mesh.r(i) * mesh.dtheta());
    for (int j = 0; j < mesh.nth(); ++j) {
      const Eigen::Index k = mesh.cell(i, j);
      for (int outer = 0; outer < 2; ++outer) {
        Stencil2 gr;
        if (outer) {
          if (i < mesh.nr() - 1) {
            gr.add(mesh.cell(i + 1, j), 1.0 / dr);
            gr.add(k, -1.0 / dr);
          } else {
            gr.add(nc + j, 2.0 / dr);
            gr.add(k, -2.0 / dr);
          }
        } else if (i > 0) {
          gr.add(k, 1.0 / dr);
          gr.add(mesh.cell(i - 1, j), -1.0 / dr);
        }
        for (int plus = 0; plus < 2; ++plus) {
          Corner c{k, mesh.subcell_weight(i, outer != 0), gr, {}};
          if (plus) {
            c.gt.add(mesh.cell(i, j + 1), inv_rdt);
            c.gt.add(k, -inv_rdt);
          } else {
            c.gt.add(k, inv_rdt);
            c.gt.add(mesh.cell(i, j - 1), -inv_rdt);
          }
          out.push_back(c);
        }
      }
    }
  }
  return out;
}

/// Sum of the four sub-cell weights of each cell.
inline Eigen::VectorXd corner_weight_sums(const DiskMesh& mesh, const std::vector<Corner>& cs) {
  Eigen::VectorXd w = Eigen::VectorXd::Zero(mesh.num_cells());
  for (const auto& c : cs) w[c.cell] += c.weight;
  return w;
}

inline void add_outer(std::vector<Eigen::Triplet<double>>& t, const Stencil2& a, const Stencil2& b, double s) {
  for (int p = 0; p < a.n; ++p)
    for (int q = 0; q < b.n; ++q) t.emplace_back(a.idx[p], b.idx[q], s * a.w[p] * b.w[q]);
}

inline Eigen::VectorXd lumped_mass(const DiskMesh& mesh) {
  Eigen::VectorXd m(mesh.num_unknowns());
  for (Eigen::Index k = 0; k < mesh.num_cells(); ++k) m[k] = mesh.cell_area_of(k);
  m.tail(mesh.num_nodes()).setConstant(mesh.boundary_measure());
  return m;
}

}  // namespace detail

/// Per-cell polar gradient (g_r, g_theta): weighted mean of the sub-cell gradients.
struct CellGradient {
  Eigen::VectorXd r, t;
};

inline CellGradient cell_gradient(const DiskMesh& mesh, const CoupledField& u) {
  require_size(mesh, u, "cell_gradient");
  const auto cs = detail::corners(mesh);
  const Eigen::VectorXd w = detail::corner_weight_sums(mesh, cs);
  const Eigen::VectorXd x = u.stacked();
  CellGradient g{Eigen::VectorXd::Zero(mesh.num_cells()), Eigen::VectorXd::Zero(mesh.num_cells())};
  for (const auto& c : cs) {
    g.r[c.cell] += c.weight * c.gr.apply(x);
    g.t[c.cell] += c.weight * c.gt.apply(x);
  }
  g.r.array() /= w.array();
  g.t.array() /= w.array();
  return g;
}

/// Sub-cell gradient energy per cell: sum over its quarters of w_c |g_c|^2.
inline Eigen::VectorXd cell_gradient_energy(const DiskMesh& mesh, const CoupledField& u) {
  require_size(mesh, u, "cell_gradient_energy");
  const Eigen::VectorXd x = u.stacked();
  Eigen::VectorXd e = Eigen::VectorXd::Zero(mesh.num_cells());
  for (const auto& c : detail::corners(mesh)) {
    const double gr = c.gr.apply(x), gt = c.gt.apply(x);
    e[c.cell] += c.weight * (gr * gr + gt * gt);
  }
  return e;
}

/// Face differences (u_{j+1} - u_j) / (R dtheta); entry j lives on face j+1/2.
inline Eigen::VectorXd surface_face_gradient(const DiskMesh& mesh, const SurfaceField& u) {
  require_size(mesh, u, "surface_face_gradient");
  const double h = mesh.boundary_measure();
  Eigen::VectorXd g(mesh.nth());
  for (int j = 0; j < mesh.nth(); ++j) g[j] = (u.values[mesh.wrap(j + 1)] - u.values[j]) / h;
  return g;
}

/// Block operator  A = [ div(A grad) - B.grad - p          0                         ]
///                     [ -d_nu^A                           div_G(D grad_G) - b.grad_G - q ]
/// acting on the stacked vector [y; y_Gamma].
///
/// The stiffness S satisfies a[u, v] = v^T S u and A = -M^{-1} S with M the
/// lumped measure (cell areas, boundary arclengths).
class CoupledOperator {
 public:
  CoupledOperator(const DiskMesh& mesh, const ProblemCoefficients& coeffs) : mesh_(mesh), coeffs_(coeffs) {
    if (!coeffs.sized_for(mesh)) throw SizeMismatch("CoupledOperator: coefficients do not match the mesh");
    assemble();
  }

  const DiskMesh& mesh() const noexcept { return mesh_; }
  const ProblemCoefficients& coefficients() const noexcept { return coeffs_; }
  Eigen::Index size() const noexcept { return mesh_.num_unknowns(); }

  /// Lumped measures (cell areas then boundary arclengths).
  const Eigen::VectorXd& mass() const noexcept { return mass_; }
  /// Full stiffness S = bulk diffusion + surface diffusion + drift + potential.
  const SparseMatrix& stiffness() const noexcept { return stiffness_; }
  const SparseMatrix& bulk_diffusion() const noexcept { return bulk_diff_; }
  const SparseMatrix& surface_diffusion() const noexcept { return surf_diff_; }
  const SparseMatrix& drift() const noexcept { return drift_; }
  const SparseMatrix& potential() const noexcept { return potential_; }

  SparseMatrix symmetric_part() const {
    SparseMatrix t = stiffness_.transpose();
    return 0.5 * (stiffness_ + t);
  }
  SparseMatrix skew_part() const {
    SparseMatrix t = stiffness_.transpose();
    return 0.5 * (stiffness_ - t);
  }

  /// The operator itself as a sparse matrix, -M^{-1} S.
  SparseMatrix matrix() const {
    SparseMatrix a = stiffness_;
    const Eigen::VectorXd inv = mass_.cwiseInverse();
    a = (-inv).asDiagonal() * a;
    return a;
  }

  Eigen::VectorXd apply_stacked(const Eigen::VectorXd& x) const {
    if (x.size() != size()) throw SizeMismatch("apply_operator: vector length mismatch");
    Eigen::VectorXd y = stiffness_ * x;
    return -(y.array() / mass_.array()).matrix();
  }

  CoupledField apply(const CoupledField& u) const {
    require_size(mesh_, u, "apply_operator");
    return CoupledField::from_stacked(mesh_, apply_stacked(u.stacked()));
  }

  /// Second-order parts only: bulk div(A grad y), surface div_G(D grad_G y_G).
  CoupledField divergence_part(const CoupledField& u) const {
    require_size(mesh_, u, "divergence_part");
    const Eigen::VectorXd x = u.stacked();
    const Eigen::VectorXd kb = bulk_diff_ * x;
    const Eigen::VectorXd ks = surf_diff_ * x;
    const Eigen::Index nc = mesh_.num_cells();
    CoupledField out(mesh_);
    out.bulk.values = -(kb.head(nc).array() / mass_.head(nc).array()).matrix();
    out.surface.values = -(ks.tail(mesh_.num_nodes()).array() / mesh_.boundary_measure()).matrix();
    return out;
  }

  /// Outward conormal flux density fed into the surface equation, read from the
  /// assembled bulk diffusion rows of the boundary nodes.
  SurfaceField coupling_flux(const CoupledField& u) const {
    require_size(mesh_, u, "coupling_flux");
    const Eigen::VectorXd kb = bulk_diff_ * u.stacked();
    return SurfaceField(Eigen::VectorXd(kb.tail(mesh_.num_nodes()) / mesh_.boundary_measure()));
  }

  /// Coordinate-format dump "row,col,value" of -M^{-1} S.
  void export_triplets(std::ostream& os) const {
    const SparseMatrix a = matrix();
    os << "row,col,value\n";
    for (int col = 0; col < a.outerSize(); ++col)
      for (SparseMatrix::InnerIterator it(a, col); it; ++it)
        os << it.row() << ',' << it.col() << ',' << format_number(it.value()) << '\n';
  }

 private:
  void assemble() {
    using T = Eigen::Triplet<double>;
    const Eigen::Index n = mesh_.num_unknowns(), nc = mesh_.num_cells();
    const double h = mesh_.boundary_measure();
    const auto& c = coeffs_;
    mass_ = detail::lumped_mass(mesh_);

    const auto cs = detail::corners(mesh_);
    const Eigen::VectorXd wsum = detail::corner_weight_sums(mesh_, cs);

    std::vector<T> tb, td;
    tb.reserve(cs.size() * 16);
    td.reserve(cs.size() * 4);
    for (const auto& cr : cs) {
      const Eigen::Index k = cr.cell;
      detail::add_outer(tb, cr.gr, cr.gr, cr.weight * c.a_rr[k]);
      detail::add_outer(tb, cr.gr, cr.gt, cr.weight * c.a_rt[k]);
      detail::add_outer(tb, cr.gt, cr.gr, cr.weight * c.a_rt[k]);
      detail::add_outer(tb, cr.gt, cr.gt, cr.weight * c.a_tt[k]);
      // Drift row k: m_K (B . grad_K u), grad_K the weighted corner mean.
      const double s = mass_[k] * cr.weight / wsum[k];
      for (int q = 0; q < cr.gr.n; ++q) td.emplace_back(k, cr.gr.idx[q], s * c.b_r[k] * cr.gr.w[q]);
      for (int q = 0; q < cr.gt.n; ++q) td.emplace_back(k, cr.gt.idx[q], s * c.b_t[k] * cr.gt.w[q]);
    }

    std::vector<T> ts, tp;
    for (int j = 0; j < mesh_.nth(); ++j) {
      const Eigen::Index a = nc + j, b = nc + mesh_.wrap(j + 1), bm = nc + mesh_.wrap(j - 1);
      const double df = 0.5 * (c.d[j] + c.d[mesh_.wrap(j + 1)]) / h;
      ts.emplace_back(a, a, df);
      ts.emplace_back(b, b, df);
      ts.emplace_back(a, b, -df);
      ts.emplace_back(b, a, -df);
      td.emplace_back(a, b, 0.5 * c.b[j]);
      td.emplace_back(a, bm, -0.5 * c.b[j]);
      tp.emplace_back(a, a, h * c.q[j]);
    }
    for (Eigen::Index k = 0; k < nc; ++k) tp.emplace_back(k, k, mass_[k] * c.p[k]);

    auto build = [n](std::vector<T>& t) {
      SparseMatrix m(n, n);
      m.setFromTriplets(t.begin(), t.end());
      m.prune(0.0);
      return m;
    };
    bulk_diff_ = build(tb);
    surf_diff_ = build(ts);
    drift_ = build(td);
    potential_ = build(tp);
    stiffness_ = bulk_diff_ + surf_diff_ + drift_ + potential_;
  }

  DiskMesh mesh_;
  ProblemCoefficients coeffs_;
  Eigen::VectorXd mass_;
  SparseMatrix bulk_diff_, surf_diff_, drift_, potential_, stiffness_;
};

inline CoupledField apply_operator(const CoupledOperator& op, const CoupledField& u) { return op.apply(u); }

/// Outward conormal derivative A grad(y) . nu at the boundary nodes:
///   a_rr (y_G,j - y_{N-1,j}) / (dr/2) + a_rt * (centered angular difference of
///   the outermost ring),
/// with A taken from the outermost cell. This is exactly the flux density the
/// bulk hands to the surface equation.
inline SurfaceField conormal_derivative(const DiskMesh& mesh, const CoupledField& y, const ProblemCoefficients& c) {
  require_size(mesh, y, "conormal_derivative");
  if (!c.sized_for(mesh)) throw SizeMismatch("conormal_derivative: coefficients do not match the mesh");
  const int i = mesh.nr() - 1;
  const double ri = mesh.r(i);
  SurfaceField out(mesh);
  for (int j = 0; j < mesh.nth(); ++j) {
    const Eigen::Index k = mesh.cell(i, j);
    const double gn = (y.surface.values[j] - y.bulk.values[k]) / (0.5 * mesh.dr());
    const double gt = (y.bulk.values[mesh.cell(i, j + 1)] - y.bulk.values[mesh.cell(i, j - 1)]) /
                      (2.0 * ri * mesh.dtheta());
    out.values[j] = c.a_rr[k] * gn + c.a_rt[k] * gt;
  }
  return out;
}

/// Plain normal derivative (A = I) with the same one-sided stencil.
inline SurfaceField normal_derivative(const DiskMesh& mesh, const CoupledField& y) {
  require_size(mesh, y, "normal_derivative");
  const int i = mesh.nr() - 1;
  SurfaceField out(mesh);
  for (int j = 0; j < mesh.nth(); ++j)
    out.values[j] = (y.surface.values[j] - y.bulk.values[mesh.cell(i, j)]) / (0.5 * mesh.dr());
  return out;
}

// -- Bilinear form -------------------------------------------------------------

struct BilinearBreakdown {
  double bulk_diffusion = 0.0;
  double bulk_drift = 0.0;
  double bulk_potential = 0.0;
  double surface_diffusion = 0.0;
  double surface_drift = 0.0;
  double surface_potential = 0.0;

  double bulk() const { return bulk_diffusion + bulk_drift + bulk_potential; }
  double surface() const { return surface_diffusion + surface_drift + surface_potential; }
  double total() const { return bulk() + surface(); }
};

/// a[u, v] by direct quadrature over sub-cells, boundary faces and nodes.
inline BilinearBreakdown bilinear_form(const DiskMesh& mesh, const ProblemCoefficients& c, const CoupledField& u,
                                       const CoupledField& v) {
  require_size(mesh, u, "bilinear_form");
  require_size(mesh, v, "bilinear_form");
  if (!c.sized_for(mesh)) throw SizeMismatch("bilinear_form: coefficients do not match the mesh");
  const Eigen::VectorXd x = u.stacked(), z = v.stacked();
  const auto cs = detail::corners(mesh);
  const Eigen::VectorXd wsum = detail::corner_weight_sums(mesh, cs);
  BilinearBreakdown out;

  Eigen::VectorXd gr_cell = Eigen::VectorXd::Zero(mesh.num_cells());
  Eigen::VectorXd gt_cell = Eigen::VectorXd::Zero(mesh.num_cells());
  for (const auto& cr : cs) {
    const Eigen::Index k = cr.cell;
    const double ur = cr.gr.apply(x), ut = cr.gt.apply(x);
    const double vr = cr.gr.apply(z), vt = cr.gt.apply(z);
    const double fr = c.a_rr[k] * ur + c.a_rt[k] * ut;
    const double ft = c.a_rt[k] * ur + c.a_tt[k] * ut;
    out.bulk_diffusion += cr.weight * (fr * vr + ft * vt);
    gr_cell[k] += cr.weight * ur;
    gt_cell[k] += cr.weight * ut;
  }
  for (Eigen::Index k = 0; k < mesh.num_cells(); ++k) {
    const double m = mesh.cell_area_of(k);
    const double bgrad = (c.b_r[k] * gr_cell[k] + c.b_t[k] * gt_cell[k]) / wsum[k];
    out.bulk_drift += m * bgrad * v.bulk.values[k];
    out.bulk_potential += m * c.p[k] * u.bulk.values[k] * v.bulk.values[k];
  }

  const double h = mesh.boundary_measure();
  const Eigen::VectorXd du = surface_face_gradient(mesh, u.surface);
  const Eigen::VectorXd dv = surface_face_gradient(mesh, v.surface);
  const SurfaceField gu = surface_gradient(mesh, u.surface);
  for (int j = 0; j < mesh.nth(); ++j) {
    const double df = 0.5 * (c.d[j] + c.d[mesh.wrap(j + 1)]);
    out.surface_diffusion += h * df * du[j] * dv[j];
    out.surface_drift += h * c.b[j] * gu.values[j] * v.surface.values[j];
    out.surface_potential += h * c.q[j] * u.surface.values[j] * v.surface.values[j];
  }
  return out;
}

// -- Norms ---------------------------------------------------------------------

enum class NormKind { L2, H1, H2eq };

inline NormKind parse_norm_kind(const std::string& s) {
  if (s == "L2") return NormKind::L2;
  if (s == "H1") return NormKind::H1;
  if (s == "H2eq") return NormKind::H2eq;
  throw InvalidArgument("unknown norm kind '" + s + "'");
}

/// Discrete L2/H1/H2-equivalent norms.
///
/// H1 is the root sum of squares of the L2 norm and the sub-cell / face
/// gradient energies (the same gradients the bilinear form uses). H2eq follows
/// the equivalent norms |u| + |Lap u| on the disk (identity-coefficient
/// divergence-form operator with the trace as boundary value) and
/// |u_G| + |Lap_G u_G| on the circle; for a coupled field the two are added.
class NormCalculator {
 public:
  explicit NormCalculator(const DiskMesh& mesh)
      : mesh_(mesh), laplacian_(mesh, preset("identity", mesh)) {}

  const DiskMesh& mesh() const noexcept { return mesh_; }

  double bulk_l2(const BulkField& u) const {
    require_size(mesh_, u, "norm");
    return std::sqrt(weighted_square(u.values, laplacian_.mass().head(mesh_.num_cells())));
  }
  double surface_l2(const SurfaceField& u) const {
    require_size(mesh_, u, "norm");
    return std::sqrt(mesh_.boundary_measure() * u.values.squaredNorm());
  }
  double bulk_gradient_sq(const CoupledField& u) const { return cell_gradient_energy(mesh_, u).sum(); }
  double surface_gradient_sq(const SurfaceField& u) const {
    return mesh_.boundary_measure() * surface_face_gradient(mesh_, u).squaredNorm();
  }

  /// Bulk Laplacian of a coupled field (trace used at the outer faces).
  BulkField bulk_laplacian(const CoupledField& u) const {
    return laplacian_.divergence_part(u).bulk;
  }

  double norm(const CoupledField& u, NormKind kind) const {
    require_size(mesh_, u, "norm");
    switch (kind) {
      case NormKind::L2:
        return std::hypot(bulk_l2(u.bulk), surface_l2(u.surface));
      case NormKind::H1: {
        const double b = bulk_l2(u.bulk), s = surface_l2(u.surface);
        return std::sqrt(b * b + s * s + bulk_gradient_sq(u) + surface_gradient_sq(u.surface));
      }
      case NormKind::H2eq:
        return bulk_l2(u.bulk) + bulk_l2(bulk_laplacian(u)) + norm(u.surface, NormKind::H2eq);
    }
    throw InvalidArgument("unknown norm kind");
  }

  double norm(const SurfaceField& u, NormKind kind) const {
    require_size(mesh_, u, "norm");
    switch (kind) {
      case NormKind::L2:
        return surface_l2(u);
      case NormKind::H1:
        return std::sqrt(surface_l2(u) * surface_l2(u) + surface_gradient_sq(u));
      case NormKind::H2eq:
        return surface_l2(u) + surface_l2(laplace_beltrami(mesh_, u));
    }
    throw InvalidArgument("unknown norm kind");
  }

  /// Squared Hilbert version of H2eq: |u|^2 + |Lap u|^2 + |u_G|^2 + |Lap_G u_G|^2.
  double h2_squared(const CoupledField& u) const {
    const double a = bulk_l2(u.bulk), b = bulk_l2(bulk_laplacian(u));
    const double c = surface_l2(u.surface), d = surface_l2(laplace_beltrami(mesh_, u.surface));
    return a * a + b * b + c * c + d * d;
  }

 private:
  static double weighted_square(const Eigen::VectorXd& v, const Eigen::VectorXd& w) {
    return (v.array().square() * w.array()).sum();
  }

  DiskMesh mesh_;
  CoupledOperator laplacian_;
};

inline double norm(const DiskMesh& mesh, const CoupledField& u, NormKind kind) {
  return NormCalculator(mesh).norm(u, kind);
}
inline double norm(const DiskMesh& mesh, const SurfaceField& u, NormKind kind) {
  return NormCalculator(mesh).norm(u, kind);
}

// -- Conormal identity -----------------------------------------------------------

struct ConormalIdentityResult {
  double max_abs_residual = 0.0;
  /// Largest residual relative to |lhs| + |rhs| + 1 at the node.
  double max_rel_residual = 0.0;
};

namespace detail {

/// Symmetric square root of [[a, c], [c, d]] (positive definite).
inline std::array<double, 3> sqrt_spd2(double a, double c, double d) {
  const double s = std::sqrt(a * d - c * c);
  const double t = std::sqrt(a + d + 2.0 * s);
  return {(a + s) / t, c / t, (d + s) / t};
}

}  // namespace detail

/// Evaluates both sides of
///   (d_nu^A psi)^2 - (A grad_G psi . nu)^2 = |A^{1/2} nu|^2 (|A^{1/2} grad psi|^2 - |A^{1/2} grad_G psi|^2)
/// at each boundary node with the node-wise gradient grad psi = grad_G psi + (d_nu psi) nu,
/// built from the one-sided normal difference and the centered tangential
/// difference of the trace. A is taken from the outermost cell.
inline ConormalIdentityResult conormal_identity_check(const DiskMesh& mesh, const CoupledField& psi,
                                                      const ProblemCoefficients& c) {
  require_size(mesh, psi, "conormal_identity_check");
  const SurfaceField gn = normal_derivative(mesh, psi);
  const SurfaceField gt = surface_gradient(mesh, psi.surface);
  ConormalIdentityResult res;
  const int i = mesh.nr() - 1;
  for (int j = 0; j < mesh.nth(); ++j) {
    const Eigen::Index k = mesh.cell(i, j);
    const double a = c.a_rr[k], b = c.a_rt[k], d = c.a_tt[k];
    // Polar frame at the node: nu = (1, 0), tangent = (0, 1).
    const double g[2] = {gn.values[j], gt.values[j]};
    const double gtan[2] = {0.0, gt.values[j]};
    const double conormal = a * g[0] + b * g[1];
    const double tang_conormal = a * gtan[0] + b * gtan[1];
    const auto h = detail::sqrt_spd2(a, b, d);
    auto sq_half = [&](const double v[2]) {
      const double x = h[0] * v[0] + h[1] * v[1], y = h[1] * v[0] + h[2] * v[1];
      return x * x + y * y;
    };
    const double nu[2] = {1.0, 0.0};
    const double lhs = conormal * conormal - tang_conormal * tang_conormal;
    const double rhs = sq_half(nu) * (sq_half(g) - sq_half(gtan));
    const double r = std::abs(lhs - rhs);
    res.max_abs_residual = std::max(res.max_abs_residual, r);
    res.max_rel_residual = std::max(res.max_rel_residual, r / (std::abs(lhs) + std::abs(rhs) + 1.0));
  }
  return res;
}

}  // namespace dynbc
