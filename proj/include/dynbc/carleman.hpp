#pragma once

// Carleman weights on the disk and both sides of the weighted inequality
//
//   int_Q [ (|z_t|^2 + |div(A grad z)|^2)/(s xi) + s l^2 xi |grad z|^2 + s^3 l^4 xi^3 z^2 ] e^{-2 s alpha}
// + int_S [ (|z_G,t|^2 + |div_G(D grad_G z_G)|^2)/(s xi) + s l xi |grad_G z_G|^2
//           + s^3 l^3 xi^3 z_G^2 + s l xi |d_nu^A z|^2 ] e^{-2 s alpha}
//   <= C [ s^3 l^4 int_{omega} xi^3 z^2 e^{-2 s alpha} + int_Q |Lz|^2 e^{-2 s alpha} + int_S |L_G z|^2 e^{-2 s alpha} ]
//
// on the window (t0, T), with
//   eta0 = R^2 - r^2,
//   alpha = (e^{2 l |eta0|_inf} - e^{l eta0}) / ((t - t0)(T - t)),
//   xi    = e^{l eta0} / ((t - t0)(T - t)).
//
// e^{-2 s alpha} spans hundreds of orders of magnitude over the window. Every
// reported term is therefore stored relative to e^{m}, m = max of -2 s alpha
// over the quadrature nodes: true value = stored value * e^{m}.

#include <Eigen/Core>

#include <algorithm>
#include <cfloat>
#include <cmath>
#include <limits>
#include <random>
#include <string>
#include <vector>

#include "dynbc/coefficients.hpp"
#include "dynbc/error.hpp"
#include "dynbc/field_io.hpp"
#include "dynbc/forward.hpp"
#include "dynbc/mesh.hpp"
#include "dynbc/operators.hpp"
#include "dynbc/sources.hpp"

namespace dynbc {

struct Eta0Field {
  Eigen::VectorXd values;  // per cell
  Eigen::VectorXd grad_r;  // radial component per cell; the angular one is 0
  double c_bound = 0.0;    // d_nu eta0 <= -c_bound on the boundary
  double omega_prime_radius = 0.0;
  double sup = 0.0;        // |eta0|_inf = R^2
  double radius = 0.0;

  double value_at(double r) const { return radius * radius - r * r; }
  /// eta0 with its (zero) boundary trace as a coupled field.
  CoupledField as_coupled(const DiskMesh& mesh) const {
    return CoupledField(BulkField(values), SurfaceField(mesh));
  }
};

/// Smallest |grad eta0| over cells whose centers lie outside omega'.
inline double min_gradient_outside(const DiskMesh& mesh, const Eta0Field& e) {
  double m = std::numeric_limits<double>::infinity();
  for (int i = 0; i < mesh.nr(); ++i)
    if (mesh.r(i) >= e.omega_prime_radius) m = std::min(m, std::abs(e.grad_r[mesh.cell(i, 0)]));
  return m;
}

/// eta0 = R^2 - r^2, grad eta0 = -2 r e_r, c = 2R. omega' is the disk of the
/// given radius around the origin, the only critical point of eta0.
inline Eta0Field build_eta0(const DiskMesh& mesh, double omega_prime_radius) {
  const double R = mesh.radius();
  if (!(omega_prime_radius > 0.0) || !(omega_prime_radius < R))
    throw InvalidArgument("omega' radius must lie in (0, R)");
  Eta0Field e;
  e.radius = R;
  e.omega_prime_radius = omega_prime_radius;
  e.values = sample_bulk(mesh, [&](double r, double) { return R * R - r * r; }).values;
  e.grad_r = sample_bulk(mesh, [&](double r, double) { return -2.0 * r; }).values;
  e.c_bound = 2.0 * R;
  e.sup = R * R;
  if (!(e.values.minCoeff() > 0.0)) throw Error("build_eta0: eta0 must be positive in the disk");
  if (!(min_gradient_outside(mesh, e) > 0.0)) throw Error("build_eta0: gradient vanishes outside omega'");
  return e;
}

enum class Site { Cell, Node };

struct WeightValue {
  double alpha = 0.0;
  double xi = 0.0;
  double log_weight = 0.0;  // -2 s alpha
  double weight = 0.0;      // e^{-2 s alpha}, exactly 0 below the smallest normal double
};

class CarlemanWeightSet {
 public:
  CarlemanWeightSet(const DiskMesh& mesh, Eta0Field eta0, double s, double lambda, double t0, double T,
                    const ProblemCoefficients& c)
      : mesh_(mesh), eta0_(std::move(eta0)), s_(s), lambda_(lambda), t0_(t0), T_(T) {
    if (!(s > 0.0) || !(lambda > 0.0)) throw InvalidArgument("Carleman parameters s and lambda must be positive");
    if (!(T > t0)) throw InvalidArgument("Carleman window needs T > t0");
    if (!c.sized_for(mesh)) throw SizeMismatch("CarlemanWeightSet: coefficients do not match the mesh");
    // sigma = A grad eta0 . grad eta0 with grad eta0 = -2 r e_r.
    sigma_ = (eta0_.grad_r.array().square() * c.a_rr.array()).matrix();
    e_top_ = std::exp(2.0 * lambda * eta0_.sup);
  }

  const DiskMesh& mesh() const noexcept { return mesh_; }
  const Eta0Field& eta0() const noexcept { return eta0_; }
  double s() const noexcept { return s_; }
  double lambda() const noexcept { return lambda_; }
  double t0() const noexcept { return t0_; }
  double T() const noexcept { return T_; }
  double midpoint() const noexcept { return 0.5 * (t0_ + T_); }
  const Eigen::VectorXd& sigma() const noexcept { return sigma_; }

  CarlemanWeightSet with_s(double s) const {
    CarlemanWeightSet w = *this;
    if (!(s > 0.0)) throw InvalidArgument("Carleman parameter s must be positive");
    w.s_ = s;
    return w;
  }

  double denominator(double t) const {
    if (!(t > t0_ && t < T_)) throw InvalidArgument("time outside the open Carleman window");
    return (t - t0_) * (T_ - t);
  }

  /// Weights at a point where eta0 takes the value `eta`.
  WeightValue at_eta(double t, double eta) const {
    const double den = denominator(t);
    const double el = std::exp(lambda_ * eta);
    WeightValue w;
    w.alpha = (e_top_ - el) / den;
    w.xi = el / den;
    w.log_weight = -2.0 * s_ * w.alpha;
    w.weight = w.log_weight < std::log(DBL_MIN) ? 0.0 : std::exp(w.log_weight);
    return w;
  }

  WeightValue eval(double t, Site site, Eigen::Index index) const {
    if (site == Site::Cell) {
      if (index < 0 || index >= mesh_.num_cells()) throw InvalidArgument("cell index out of range");
      return at_eta(t, eta0_.values[index]);
    }
    if (index < 0 || index >= mesh_.num_nodes()) throw InvalidArgument("node index out of range");
    return at_eta(t, 0.0);
  }

 private:
  DiskMesh mesh_;
  Eta0Field eta0_;
  double s_, lambda_, t0_, T_;
  Eigen::VectorXd sigma_;
  double e_top_ = 1.0;
};

inline WeightValue eval_weights(const CarlemanWeightSet& w, double t, Site site, Eigen::Index index) {
  return w.eval(t, site, index);
}

struct WeightedNorms {
  double s = 0.0, lambda = 0.0;
  // Left-hand side, bulk.
  double bulk_dt = 0.0, bulk_div = 0.0, bulk_grad = 0.0, bulk_zero = 0.0;
  // Left-hand side, boundary.
  double surf_dt = 0.0, surf_div = 0.0, surf_grad = 0.0, surf_zero = 0.0, surf_conormal = 0.0;
  // Right-hand side.
  double obs = 0.0, bulk_source = 0.0, surf_source = 0.0;
  /// Common scale: true term = stored term * exp(log_scale).
  double log_scale = 0.0;
  int time_nodes = 0;

  double lhs() const {
    return bulk_dt + bulk_div + bulk_grad + bulk_zero + surf_dt + surf_div + surf_grad + surf_zero + surf_conormal;
  }
  double rhs() const { return obs + bulk_source + surf_source; }
  /// LHS / RHS; NaN when both vanish.
  double ratio() const {
    const double l = lhs(), r = rhs();
    if (r == 0.0) return l == 0.0 ? std::numeric_limits<double>::quiet_NaN() : std::numeric_limits<double>::infinity();
    return l / r;
  }

  static std::vector<std::string> term_names() {
    return {"bulk_dt", "bulk_div", "bulk_grad", "bulk_zero", "surf_dt", "surf_div",
            "surf_grad", "surf_zero", "surf_conormal", "obs", "bulk_source", "surf_source"};
  }
  std::vector<double> term_values() const {
    return {bulk_dt, bulk_div, bulk_grad, bulk_zero, surf_dt, surf_div,
            surf_grad, surf_zero, surf_conormal, obs, bulk_source, surf_source};
  }
};

/// Cell mask of the disk {r < radius}.
inline std::vector<char> disk_mask(const DiskMesh& mesh, double radius) {
  std::vector<char> m(std::size_t(mesh.num_cells()), 0);
  for (int i = 0; i < mesh.nr(); ++i)
    for (int j = 0; j < mesh.nth(); ++j) m[std::size_t(mesh.cell(i, j))] = mesh.r(i) < radius;
  return m;
}

/// Evaluates both sides for several weight sets sharing lambda and the window.
///
/// `z` is the trajectory of z (for instance z = dy/dt); its grid must contain
/// t0 and T. `Lz` holds (Lz, L_G z_G) per grid point, or is empty, in which
/// case it is computed from the operator as z_t - A z. Time quadrature uses the
/// grid nodes strictly inside (t0, T) with weight dt.
inline std::vector<WeightedNorms> carleman_sides(const CoupledOperator& op, const Trajectory& z,
                                                 const std::vector<CoupledField>& Lz,
                                                 const std::vector<CarlemanWeightSet>& weights,
                                                 const std::vector<char>& omega) {
  const DiskMesh& mesh = op.mesh();
  if (weights.empty()) return {};
  const double t0 = weights.front().t0(), T = weights.front().T();
  for (const auto& w : weights)
    if (w.t0() != t0 || w.T() != T || w.lambda() != weights.front().lambda() || !(w.mesh() == mesh))
      throw InvalidArgument("carleman_sides: weight sets must share mesh, window and lambda");
  int n0 = 0, n1 = 0;
  try {
    n0 = z.grid.index_of(t0);
    n1 = z.grid.index_of(T);
  } catch (const InvalidArgument&) {
    throw InvalidArgument("carleman_sides: trajectory grid does not contain the Carleman window");
  }
  if (!Lz.empty() && int(Lz.size()) != z.grid.num_points())
    throw SizeMismatch("carleman_sides: Lz must have one entry per grid point");
  if (omega.size() != std::size_t(mesh.num_cells())) throw SizeMismatch("carleman_sides: omega mask size");
  for (const auto& st : z.states) require_size(mesh, st, "carleman_sides");

  const std::vector<CoupledField> zt = time_derivative(z);
  const Eigen::Index nc = mesh.num_cells(), nn = mesh.num_nodes();
  const double h = mesh.boundary_measure(), dt = z.grid.dt;
  const double lambda = weights.front().lambda();
  const Eigen::VectorXd& eta = weights.front().eta0().values;
  Eigen::VectorXd area(nc);
  for (Eigen::Index k = 0; k < nc; ++k) area[k] = mesh.cell_area_of(k);

  std::vector<WeightedNorms> out(weights.size());
  // Common scale per weight set: the largest -2 s alpha over the quadrature nodes.
  const double eta_max = eta.maxCoeff();
  for (std::size_t q = 0; q < weights.size(); ++q) {
    double m = -std::numeric_limits<double>::infinity();
    for (int n = n0 + 1; n < n1; ++n) m = std::max(m, weights[q].at_eta(z.grid.t(n), eta_max).log_weight);
    out[q].log_scale = m;
    out[q].s = weights[q].s();
    out[q].lambda = lambda;
    out[q].time_nodes = std::max(0, n1 - n0 - 1);
  }

  Eigen::VectorXd w(nc), xi(nc);
  for (int n = n0 + 1; n < n1; ++n) {
    const double t = z.grid.t(n);
    const CoupledField& zn = z.states[std::size_t(n)];
    const CoupledField div = op.divergence_part(zn);
    const Eigen::VectorXd grad_e = cell_gradient_energy(mesh, zn);
    const Eigen::VectorXd face = surface_face_gradient(mesh, zn.surface);
    const SurfaceField conormal = conormal_derivative(mesh, zn, op.coefficients());
    CoupledField lz;
    if (Lz.empty()) {
      lz = zt[std::size_t(n)] - op.apply(zn);
    } else {
      lz = Lz[std::size_t(n)];
      require_size(mesh, lz, "carleman_sides");
    }

    for (std::size_t q = 0; q < weights.size(); ++q) {
      const auto& W = weights[q];
      const double s = W.s();
      auto& o = out[q];
      for (Eigen::Index k = 0; k < nc; ++k) {
        const WeightValue v = W.at_eta(t, eta[k]);
        w[k] = std::exp(v.log_weight - o.log_scale);
        xi[k] = v.xi;
      }
      const WeightValue vb = W.at_eta(t, 0.0);
      const double wb = std::exp(vb.log_weight - o.log_scale), xb = vb.xi;
      double bdt = 0, bdiv = 0, bgrad = 0, bzero = 0, obs = 0, bsrc = 0;
      for (Eigen::Index k = 0; k < nc; ++k) {
        const double a = area[k] * w[k];
        if (a == 0.0) continue;
        const double zk = zn.bulk.values[k], x = xi[k];
        bdt += a * zt[std::size_t(n)].bulk.values[k] * zt[std::size_t(n)].bulk.values[k] / (s * x);
        bdiv += a * div.bulk.values[k] * div.bulk.values[k] / (s * x);
        bgrad += w[k] * grad_e[k] * s * lambda * lambda * x;
        const double zz = a * s * s * s * lambda * lambda * lambda * lambda * x * x * x * zk * zk;
        bzero += zz;
        if (omega[std::size_t(k)]) obs += zz;
        bsrc += a * lz.bulk.values[k] * lz.bulk.values[k];
      }
      double sdt = 0, sdiv = 0, sgrad = 0, szero = 0, scon = 0, ssrc = 0;
      for (Eigen::Index j = 0; j < nn; ++j) {
        const double zj = zn.surface.values[j];
        const double ztj = zt[std::size_t(n)].surface.values[j];
        sdt += ztj * ztj;
        sdiv += div.surface.values[j] * div.surface.values[j];
        sgrad += face[j] * face[j];
        szero += zj * zj;
        scon += conormal.values[j] * conormal.values[j];
        ssrc += lz.surface.values[j] * lz.surface.values[j];
      }
      const double hw = h * wb;
      o.bulk_dt += dt * bdt;
      o.bulk_div += dt * bdiv;
      o.bulk_grad += dt * bgrad;
      o.bulk_zero += dt * bzero;
      o.obs += dt * obs;
      o.bulk_source += dt * bsrc;
      o.surf_dt += dt * hw * sdt / (s * xb);
      o.surf_div += dt * hw * sdiv / (s * xb);
      o.surf_grad += dt * hw * s * lambda * xb * sgrad;
      o.surf_zero += dt * hw * s * s * s * lambda * lambda * lambda * xb * xb * xb * szero;
      o.surf_conormal += dt * hw * s * lambda * xb * scon;
      o.surf_source += dt * hw * ssrc;
    }
  }
  return out;
}

inline WeightedNorms carleman_sides(const CoupledOperator& op, const Trajectory& z, const std::vector<CoupledField>& Lz,
                                    const CarlemanWeightSet& w, const std::vector<char>& omega) {
  return carleman_sides(op, z, Lz, std::vector<CarlemanWeightSet>{w}, omega).front();
}

// -- Sweep ---------------------------------------------------------------------------

struct CarlemanSweepConfig {
  double radius = 1.0;
  int nr = 32, nth = 64;
  std::string preset = "identity";
  PresetParams params;
  WindowSetup window;
  Scheme scheme = Scheme::ImplicitEuler;
  double rtol = 1e-10;
  double lambda = 1.5;
  std::vector<double> s_grid = {2, 4, 8, 16, 32};
  int ensemble = 20;
  std::uint64_t seed = 1;
  double omega_radius = 0.3;        // observation disk for the right-hand side
  double omega_prime_radius = 0.2;  // omega' inside omega
  int n_radial = 4, n_angular = 16, n_surface = 16;
  bool discrete_L = false;  // evaluate Lz from the operator instead of F_t, G_t
  double known_amplitude = 0.5;

  /// Same experiment with the mesh and the time steps refined by k.
  CarlemanSweepConfig refined(int k) const {
    CarlemanSweepConfig c = *this;
    c.nr *= k;
    c.nth *= k;
    c.window = window.refined(k);
    return c;
  }
};

struct CarlemanRow {
  int member = 0;
  WeightedNorms terms;
  double ratio = 0.0;
  bool skipped = false;  // 0/0
};

struct CarlemanTable {
  std::uint64_t seed = 0;
  std::vector<CarlemanRow> rows;
  std::vector<double> s_grid;
  std::vector<double> max_ratio_per_s;  // NaN when every member was skipped
  double max_ratio = std::numeric_limits<double>::quiet_NaN();
  int skipped = 0;
};

/// Largest finite-or-infinite ratio per s over the non-skipped rows.
inline void summarize(CarlemanTable& t) {
  t.max_ratio_per_s.assign(t.s_grid.size(), std::numeric_limits<double>::quiet_NaN());
  t.max_ratio = std::numeric_limits<double>::quiet_NaN();
  t.skipped = 0;
  for (const auto& row : t.rows) {
    if (row.skipped) {
      ++t.skipped;
      continue;
    }
    for (std::size_t q = 0; q < t.s_grid.size(); ++q)
      if (row.terms.s == t.s_grid[q] && !(row.ratio <= t.max_ratio_per_s[q])) t.max_ratio_per_s[q] = row.ratio;
    if (!(row.ratio <= t.max_ratio)) t.max_ratio = row.ratio;
  }
}

/// Ratios LHS/RHS for z = dy/dt, y solving the system from Y(t_start) = 0 with
/// random separable admissible sources (in-basis unknown parts, standard known
/// parts). `sources` overrides the random draw when non-empty.
inline CarlemanTable carleman_sweep(const CarlemanSweepConfig& cfg, std::vector<SeparableSource> sources = {}) {
  if (cfg.s_grid.empty()) throw InvalidArgument("s_grid must not be empty");
  for (std::size_t q = 0; q < cfg.s_grid.size(); ++q) {
    if (!(cfg.s_grid[q] >= 1.0)) throw InvalidArgument("s_grid entries must be >= 1");
    if (q > 0 && !(cfg.s_grid[q] > cfg.s_grid[q - 1])) throw InvalidArgument("s_grid must be increasing");
  }
  if (!(cfg.omega_prime_radius < cfg.omega_radius)) throw InvalidArgument("omega' must lie inside omega");
  const DiskMesh mesh(cfg.radius, cfg.nr, cfg.nth);
  const ProblemCoefficients coeffs = preset(cfg.preset, mesh, cfg.params);
  validate_coefficients(coeffs, mesh);
  const CoupledOperator op(mesh, coeffs);
  const TimeGrid grid = cfg.window.grid();
  const TimeStepper ts(op, grid.dt, cfg.scheme, cfg.rtol);
  const Eta0Field eta = build_eta0(mesh, cfg.omega_prime_radius);
  std::vector<CarlemanWeightSet> weights;
  for (double s : cfg.s_grid) weights.emplace_back(mesh, eta, s, cfg.lambda, cfg.window.t0, cfg.window.T, coeffs);
  const auto omega = disk_mask(mesh, cfg.omega_radius);

  if (sources.empty()) {
    const SourceBasis basis(mesh, cfg.n_radial, cfg.n_angular, cfg.n_surface);
    std::mt19937_64 rng(cfg.seed);
    const KnownPart known = KnownPart::standard(cfg.radius, cfg.known_amplitude);
    for (int m = 0; m < cfg.ensemble; ++m) {
      const CoupledField fg = basis.synthesize(random_coefficients(basis, rng));
      sources.push_back(make_separable(fg.bulk, fg.surface, known, mesh, grid, cfg.window.T0()));
    }
  }

  CarlemanTable table;
  table.seed = cfg.seed;
  table.s_grid = cfg.s_grid;
  for (std::size_t m = 0; m < sources.size(); ++m) {
    const SourcePair src = sources[m].pair(mesh);
    const Trajectory y = solve_trajectory(ts, mesh, CoupledField(mesh), src, grid);
    Trajectory z;
    z.grid = grid;
    z.scheme = y.scheme;
    z.states = time_derivative(y);
    std::vector<CoupledField> lz;
    if (!cfg.discrete_L) {
      lz.reserve(std::size_t(grid.num_points()));
      for (int n = 0; n < grid.num_points(); ++n) lz.push_back(src.derivative(grid.t(n)));
    }
    const auto sides = carleman_sides(op, z, lz, weights, omega);
    for (const auto& w : sides) {
      CarlemanRow row{int(m), w, w.ratio(), false};
      row.skipped = std::isnan(row.ratio);
      table.rows.push_back(row);
    }
  }
  summarize(table);
  return table;
}

inline std::string carleman_table_csv(const CarlemanTable& t) {
  std::string out = "member,seed,s,lambda,log_scale";
  for (const auto& n : WeightedNorms::term_names()) out += "," + n;
  out += ",lhs,rhs,ratio,skipped\n";
  for (const auto& row : t.rows) {
    out += std::to_string(row.member) + "," + std::to_string(t.seed) + "," + format_number(row.terms.s) + "," +
           format_number(row.terms.lambda) + "," + format_number(row.terms.log_scale);
    for (double v : row.terms.term_values()) out += "," + format_number(v);
    out += "," + format_number(row.terms.lhs()) + "," + format_number(row.terms.rhs()) + "," +
           format_number(row.ratio) + "," + (row.skipped ? "1" : "0") + "\n";
  }
  return out;
}

}  // namespace dynbc
