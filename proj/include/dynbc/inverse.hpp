#pragma once

// Inverse source problem: observation of Y(T0, .) and of dy/dt on (t0, T) x omega,
// the linear forward map (f, g) -> observation for separable sources with
// Y(t_start) = 0, Tikhonov reconstruction on a finite basis, and the
// stability-ratio experiment
//   rho = |(F, G)|_{L2(t_start, T; L2)} / (|Y(T0)|_{H2eq} + |dy/dt|_{L2((t0, T) x omega)}).

#include <Eigen/Cholesky>
#include <Eigen/Core>
#include <Eigen/Eigenvalues>
#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>
#include <random>
#include <string>
#include <vector>

#include "dynbc/coefficients.hpp"
#include "dynbc/error.hpp"
#include "dynbc/forward.hpp"
#include "dynbc/mesh.hpp"
#include "dynbc/operators.hpp"
#include "dynbc/sources.hpp"

namespace dynbc {

/// Annular sector {r_in < r < r_out, th_lo < theta < th_hi}, tested at cell centers.
struct SectorMask {
  double r_in = 0.5, r_out = 0.8, th_lo = 0.0, th_hi = std::numbers::pi / 2;

  std::vector<char> cells(const DiskMesh& mesh) const {
    std::vector<char> m(std::size_t(mesh.num_cells()), 0);
    for (int i = 0; i < mesh.nr(); ++i)
      for (int j = 0; j < mesh.nth(); ++j) {
        const double r = mesh.r(i), th = mesh.theta(j);
        m[std::size_t(mesh.cell(i, j))] = r > r_in && r < r_out && th > th_lo && th < th_hi;
      }
    return m;
  }
  void validate(double radius) const {
    if (!(r_in >= 0.0 && r_in < r_out && r_out < radius)) throw InvalidArgument("omega must satisfy 0 <= r_in < r_out < R");
    if (!(th_lo < th_hi)) throw InvalidArgument("omega needs th_lo < th_hi");
  }
};

struct ObservationRecord {
  double t0 = 0.0, T = 0.0, T0 = 0.0, dt = 0.0;
  CoupledField snapshot;                  // Y(T0)
  std::vector<Eigen::Index> omega_cells;  // cells of omega, increasing
  Eigen::MatrixXd interior_dt;            // dy/dt, rows = window nodes t0..T, cols = omega cells
  double snapshot_h2eq = 0.0;
  double interior_l2 = 0.0;

  double norm() const { return snapshot_h2eq + interior_l2; }

  ObservationRecord& operator-=(const ObservationRecord& o) {
    snapshot -= o.snapshot;
    interior_dt -= o.interior_dt;
    return *this;
  }
};

/// Trapezoid weights over n + 1 equally spaced nodes.
inline Eigen::VectorXd trapezoid_weights(int n, double dt) {
  Eigen::VectorXd w = Eigen::VectorXd::Constant(n + 1, dt);
  w[0] = w[n] = 0.5 * dt;
  return w;
}

/// Fixed problem data shared by all forward solves of the inverse experiments.
struct InverseSetup {
  DiskMesh mesh;
  ProblemCoefficients coeffs;
  WindowSetup window;
  SectorMask omega;
  KnownPart known;
  Scheme scheme = Scheme::ImplicitEuler;
  double rtol = 1e-10;

  InverseSetup(DiskMesh m, ProblemCoefficients c, WindowSetup w, SectorMask o, KnownPart k,
               Scheme s = Scheme::ImplicitEuler, double tol = 1e-10)
      : mesh(std::move(m)), coeffs(std::move(c)), window(w), omega(o), known(std::move(k)), scheme(s), rtol(tol) {}
};

/// Assembled operator, factored stepper and norm helpers for one setup.
class InverseProblem {
 public:
  explicit InverseProblem(InverseSetup setup)
      : setup_(std::move(setup)),
        op_(setup_.mesh, setup_.coeffs),
        grid_(setup_.window.grid()),
        stepper_(op_, grid_.dt, setup_.scheme, setup_.rtol),
        norms_(setup_.mesh) {
    validate_coefficients(setup_.coeffs, setup_.mesh);
    setup_.omega.validate(setup_.mesh.radius());
    const auto mask = setup_.omega.cells(setup_.mesh);
    for (Eigen::Index k = 0; k < setup_.mesh.num_cells(); ++k)
      if (mask[std::size_t(k)]) omega_cells_.push_back(k);
    if (omega_cells_.empty()) throw InvalidArgument("observation region omega contains no cell");
    wtime_ = trapezoid_weights(setup_.window.window_steps, grid_.dt);
  }

  const InverseSetup& setup() const noexcept { return setup_; }
  const DiskMesh& mesh() const noexcept { return setup_.mesh; }
  const CoupledOperator& op() const noexcept { return op_; }
  const TimeGrid& grid() const noexcept { return grid_; }
  const TimeStepper& stepper() const noexcept { return stepper_; }
  const NormCalculator& norms() const noexcept { return norms_; }
  const std::vector<Eigen::Index>& omega_cells() const noexcept { return omega_cells_; }
  double omega_area() const {
    double a = 0.0;
    for (auto k : omega_cells_) a += mesh().cell_area_of(k);
    return a;
  }

  /// Separable source with the setup's known parts.
  SeparableSource separable(const CoupledField& fg) const {
    return make_separable(fg.bulk, fg.surface, setup_.known, mesh(), grid_, setup_.window.T0());
  }

  /// Observation from a stored trajectory on this problem's grid.
  ObservationRecord observe(const Trajectory& tr) const {
    if (tr.grid.steps != grid_.steps || std::abs(tr.grid.dt - grid_.dt) > 1e-12 * grid_.dt ||
        std::abs(tr.grid.t_start - grid_.t_start) > 1e-12)
      throw InvalidArgument("observe: trajectory does not cover the observation window grid");
    Collector col(*this);
    for (int n = 0; n < grid_.num_points(); ++n) col(n, tr.states[std::size_t(n)].stacked());
    return col.finish();
  }

  /// Solves from y0 with the given source and observes, without storing the trajectory.
  ObservationRecord solve_and_observe(const CoupledField& y0, const SourcePair& src) const {
    Collector col(*this);
    march(stepper_, grid_, y0.stacked(), src, [&](int n, const Eigen::VectorXd& y) { col(n, y); });
    return col.finish();
  }

  /// (f, g) -> observation with F = f r, G = g r~, Y(t_start) = 0.
  ObservationRecord forward_map(const BulkField& f, const SurfaceField& g) const {
    const SeparableSource s = separable(CoupledField(f, g));
    return solve_and_observe(CoupledField(mesh()), s.pair(mesh()));
  }

  /// Recomputes the cached norms of a (possibly edited) record.
  void refresh_norms(ObservationRecord& rec) const {
    rec.snapshot_h2eq = norms_.norm(rec.snapshot, NormKind::H2eq);
    double s = 0.0;
    for (Eigen::Index q = 0; q < Eigen::Index(omega_cells_.size()); ++q) {
      const double m = mesh().cell_area_of(omega_cells_[std::size_t(q)]);
      s += m * (wtime_.array() * rec.interior_dt.col(q).array().square()).sum();
    }
    rec.interior_l2 = std::sqrt(s);
  }

  /// Feature vector whose squared Euclidean norm is
  ///   |y|^2 + |Lap y|^2 + |y_G|^2 + |Lap_G y_G|^2 + |dy/dt|^2_{L2(omega_{t0,T})}.
  Eigen::VectorXd features(const ObservationRecord& rec) const {
    const DiskMesh& m = mesh();
    const Eigen::Index nc = m.num_cells(), nn = m.num_nodes();
    const Eigen::Index ni = rec.interior_dt.size();
    Eigen::VectorXd v(2 * nc + 2 * nn + ni);
    Eigen::VectorXd sq(nc);
    for (Eigen::Index k = 0; k < nc; ++k) sq[k] = std::sqrt(m.cell_area_of(k));
    const double sh = std::sqrt(m.boundary_measure());
    v.segment(0, nc) = sq.cwiseProduct(rec.snapshot.bulk.values);
    v.segment(nc, nc) = sq.cwiseProduct(norms_.bulk_laplacian(rec.snapshot).values);
    v.segment(2 * nc, nn) = sh * rec.snapshot.surface.values;
    v.segment(2 * nc + nn, nn) = sh * laplace_beltrami(m, rec.snapshot.surface).values;
    Eigen::Index off = 2 * nc + 2 * nn;
    const Eigen::VectorXd sw = wtime_.cwiseSqrt();
    for (Eigen::Index q = 0; q < Eigen::Index(omega_cells_.size()); ++q) {
      const double sm = sq[omega_cells_[std::size_t(q)]];
      v.segment(off, sw.size()) = sm * sw.cwiseProduct(rec.interior_dt.col(q));
      off += sw.size();
    }
    return v;
  }

  /// |(F, G)|_{L2(t_start, T; L2)} by the trapezoid rule on the grid.
  double source_norm(const SourcePair& src) const {
    const Eigen::VectorXd w = trapezoid_weights(grid_.steps, grid_.dt);
    double s = 0.0;
    for (int n = 0; n < grid_.num_points(); ++n) {
      const double l2 = norms_.norm(src(grid_.t(n)), NormKind::L2);
      s += w[n] * l2 * l2;
    }
    return std::sqrt(s);
  }

 private:
  /// Streams states into an observation record; dy/dt uses the same stencils
  /// as time_derivative (centered inside the grid, one-sided at its ends).
  class Collector {
   public:
    explicit Collector(const InverseProblem& p) : p_(p) {
      const auto& w = p.setup_.window;
      n0_ = w.t0_index();
      n1_ = w.T_index();
      nT0_ = w.T0_index();
      first_ = std::max(0, n0_ - 1);
      vals_.resize(n1_ - first_ + 1, Eigen::Index(p.omega_cells_.size()));
    }
    void operator()(int n, const Eigen::VectorXd& y) {
      if (n == nT0_) snap_ = y;
      if (n < first_ || n > n1_) return;
      for (Eigen::Index q = 0; q < vals_.cols(); ++q) vals_(n - first_, q) = y[p_.omega_cells_[std::size_t(q)]];
    }
    ObservationRecord finish() {
      const auto& g = p_.grid_;
      ObservationRecord rec;
      rec.t0 = p_.setup_.window.t0;
      rec.T = p_.setup_.window.T;
      rec.T0 = p_.setup_.window.T0();
      rec.dt = g.dt;
      rec.snapshot = CoupledField::from_stacked(p_.mesh(), snap_);
      rec.omega_cells = p_.omega_cells_;
      rec.interior_dt.resize(n1_ - n0_ + 1, vals_.cols());
      const double h = g.dt;
      auto row = [&](int n) { return vals_.row(n - first_); };
      for (int n = n0_; n <= n1_; ++n) {
        Eigen::RowVectorXd d;
        if (n == 0) {
          d = (-3.0 * row(0) + 4.0 * row(1) - row(2)) / (2.0 * h);
        } else if (n == g.steps) {
          d = (3.0 * row(n) - 4.0 * row(n - 1) + row(n - 2)) / (2.0 * h);
        } else {
          d = (row(n + 1) - row(n - 1)) / (2.0 * h);
        }
        rec.interior_dt.row(n - n0_) = d;
      }
      p_.refresh_norms(rec);
      return rec;
    }

   private:
    const InverseProblem& p_;
    int n0_, n1_, nT0_, first_;
    Eigen::MatrixXd vals_;
    Eigen::VectorXd snap_;
  };

  InverseSetup setup_;
  CoupledOperator op_;
  TimeGrid grid_;
  TimeStepper stepper_;
  NormCalculator norms_;
  std::vector<Eigen::Index> omega_cells_;
  Eigen::VectorXd wtime_;
};

// -- Reconstruction ------------------------------------------------------------

/// Observation features of every basis element: column i = features(forward_map(e_i)).
class ForwardMatrix {
 public:
  ForwardMatrix(const InverseProblem& prob, const SourceBasis& basis) : basis_(basis) {
    require_same_mesh(prob.mesh(), basis.mesh(), "ForwardMatrix");
    for (int i = 0; i < basis.dim(); ++i) {
      const CoupledField e = basis.element(i);
      const Eigen::VectorXd col = prob.features(prob.forward_map(e.bulk, e.surface));
      if (i == 0) phi_.resize(col.size(), basis.dim());
      phi_.col(i) = col;
    }
    normal_ = phi_.transpose() * phi_;
  }

  const SourceBasis& basis() const noexcept { return basis_; }
  const Eigen::MatrixXd& matrix() const noexcept { return phi_; }
  const Eigen::MatrixXd& normal() const noexcept { return normal_; }

 private:
  SourceBasis basis_;
  Eigen::MatrixXd phi_;
  Eigen::MatrixXd normal_;
};

struct ReconstructionDiagnostics {
  double epsilon = 0.0;
  int basis_dim = 0;
  double residual = 0.0;           // |Phi c - phi|
  double relative_residual = 0.0;  // residual / |phi|
  double solution_norm = 0.0;      // |c| = |(f, g)|_{L2}
  double eig_min = 0.0, eig_max = 0.0;
  double condition = 0.0;          // (eig_max + eps) / (eig_min + eps)
};

struct Reconstruction {
  Eigen::VectorXd coefficients;
  BulkField f;
  SurfaceField g;
  ReconstructionDiagnostics diagnostics;
};

/// argmin_c |Phi c - phi|^2 + eps |c|^2 via the regularized normal equations.
/// The basis is L2-orthonormal, so |c| = |(f, g)|.
inline Reconstruction reconstruct(const ForwardMatrix& fm, const Eigen::VectorXd& data, double eps,
                                  int max_dim = 80) {
  if (!(eps > 0.0)) throw InvalidArgument("regularization weight must be positive");
  const int dim = fm.basis().dim();
  if (dim > max_dim) throw InvalidArgument("basis dimension " + std::to_string(dim) + " exceeds the cap");
  if (data.size() != fm.matrix().rows()) throw SizeMismatch("observation feature vector has wrong length");
  Eigen::MatrixXd a = fm.normal();
  a.diagonal().array() += eps;
  const Eigen::VectorXd rhs = fm.matrix().transpose() * data;
  Eigen::LLT<Eigen::MatrixXd> llt(a);
  if (llt.info() != Eigen::Success) throw SingularNormalEquations("regularized normal matrix is not positive definite");
  Reconstruction r;
  r.coefficients = llt.solve(rhs);
  if (!r.coefficients.allFinite()) throw SingularNormalEquations("normal-equation solve produced non-finite values");
  const Eigen::VectorXd check = a * r.coefficients - rhs;
  if (check.norm() > 1e-6 * std::max(rhs.norm(), 1e-300) && rhs.norm() > 0.0)
    throw SingularNormalEquations("normal-equation solve is inaccurate (eps too small for this basis)");
  const CoupledField fg = fm.basis().synthesize(r.coefficients);
  r.f = fg.bulk;
  r.g = fg.surface;
  auto& d = r.diagnostics;
  d.epsilon = eps;
  d.basis_dim = dim;
  d.residual = (fm.matrix() * r.coefficients - data).norm();
  d.relative_residual = data.norm() > 0.0 ? d.residual / data.norm() : 0.0;
  d.solution_norm = r.coefficients.norm();
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(fm.normal(), Eigen::EigenvaluesOnly);
  d.eig_min = es.eigenvalues().minCoeff();
  d.eig_max = es.eigenvalues().maxCoeff();
  d.condition = (d.eig_max + eps) / (std::max(d.eig_min, 0.0) + eps);
  return r;
}

/// Adds i.i.d. Gaussian noise to the snapshot values and to the interior
/// derivative samples; standard deviations are delta times the RMS of each.
inline ObservationRecord add_noise(const InverseProblem& prob, ObservationRecord rec, double delta,
                                   std::mt19937_64& rng) {
  if (delta < 0.0) throw InvalidArgument("noise level must be nonnegative");
  std::normal_distribution<double> nd(0.0, 1.0);
  Eigen::VectorXd snap = rec.snapshot.stacked();
  const double s1 = delta * std::sqrt(snap.squaredNorm() / double(snap.size()));
  const double s2 = delta * std::sqrt(rec.interior_dt.squaredNorm() / double(std::max<Eigen::Index>(1, rec.interior_dt.size())));
  for (Eigen::Index k = 0; k < snap.size(); ++k) snap[k] += s1 * nd(rng);
  for (Eigen::Index k = 0; k < rec.interior_dt.size(); ++k) rec.interior_dt.data()[k] += s2 * nd(rng);
  rec.snapshot = CoupledField::from_stacked(prob.mesh(), snap);
  prob.refresh_norms(rec);
  return rec;
}

struct NoiseSweepRow {
  double delta = 0.0;
  double error = 0.0;  // relative L2 error of (f, g)
  ReconstructionDiagnostics diagnostics;
};

struct NoiseSweep {
  std::vector<NoiseSweepRow> rows;
  double slope = 0.0;  // least-squares slope of log error vs log delta
};

inline NoiseSweep noise_sweep(const InverseProblem& prob, const ForwardMatrix& fm, const Eigen::VectorXd& truth,
                              const std::vector<double>& deltas, double eps, std::uint64_t seed) {
  const CoupledField fg = fm.basis().synthesize(truth);
  const ObservationRecord clean = prob.forward_map(fg.bulk, fg.surface);
  std::mt19937_64 rng(seed);
  NoiseSweep out;
  std::vector<double> xs, ys;
  for (double d : deltas) {
    const ObservationRecord noisy = add_noise(prob, clean, d, rng);
    const Reconstruction r = reconstruct(fm, prob.features(noisy), eps);
    const double err = (r.coefficients - truth).norm() / truth.norm();
    out.rows.push_back({d, err, r.diagnostics});
    xs.push_back(d);
    ys.push_back(err);
  }
  if (xs.size() >= 2) {
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    for (std::size_t k = 0; k < xs.size(); ++k) {
      const double x = std::log(xs[k]), y = std::log(ys[k]);
      sx += x;
      sy += y;
      sxx += x * x;
      sxy += x * y;
    }
    const double n = double(xs.size());
    out.slope = (n * sxy - sx * sy) / (n * sxx - sx * sx);
  }
  return out;
}

// -- Stability experiment -------------------------------------------------------

struct StabilityConfig {
  int samples = 50;
  int pairs = 25;
  std::uint64_t seed = 1;
  double scale = 2.5;            // factor for the scale-invariance check
  bool refine = true;            // repeat the ratio ensemble on the 2x refined problem
  bool refine_pairs = true;      // include difference pairs at the refined level
  int n_radial = 4, n_angular = 16, n_surface = 16;
  double uniqueness_obs_tol = 1e-10;
  double uniqueness_src_tol = 1e-6;
};

struct RatioStats {
  int count = 0;
  int skipped = 0;
  double max = std::numeric_limits<double>::quiet_NaN();
  double median = std::numeric_limits<double>::quiet_NaN();
  double min = std::numeric_limits<double>::quiet_NaN();
};

inline RatioStats ratio_stats(const std::vector<double>& v) {
  RatioStats s;
  std::vector<double> x;
  for (double r : v) {
    if (std::isnan(r)) {
      ++s.skipped;
    } else {
      x.push_back(r);
    }
  }
  s.count = int(x.size());
  if (x.empty()) return s;
  std::sort(x.begin(), x.end());
  s.min = x.front();
  s.max = x.back();
  const std::size_t m = x.size() / 2;
  s.median = x.size() % 2 ? x[m] : 0.5 * (x[m - 1] + x[m]);
  return s;
}

struct StabilityLevel {
  int nr = 0, nth = 0, steps = 0;
  std::vector<double> sample_ratios;
  std::vector<double> pair_ratios;
  RatioStats samples, pairs;
  double max_ratio = std::numeric_limits<double>::quiet_NaN();  // over samples and pairs
};

struct StabilityReport {
  std::uint64_t seed = 0;
  StabilityLevel base;
  bool refined = false;
  StabilityLevel fine;
  double refinement_drift = std::numeric_limits<double>::quiet_NaN();  // |max_fine - max_base| / max_base
  double scale_invariance_error = 0.0;
  int uniqueness_pairs_checked = 0;
  int uniqueness_violations = 0;
  double min_observation_distance = std::numeric_limits<double>::infinity();
};

inline double safe_ratio(double num, double den) {
  if (den == 0.0) return num == 0.0 ? std::numeric_limits<double>::quiet_NaN() : std::numeric_limits<double>::infinity();
  return num / den;
}

/// Ratio ensemble on one problem. Draws are consumed from `rng` in a fixed
/// order: samples first, then for every pair two source coefficient vectors and
/// one shared initial state.
inline StabilityLevel stability_level(const InverseProblem& prob, const SourceBasis& basis, const StabilityConfig& cfg,
                                      bool with_pairs, std::uint64_t seed, double* scale_error = nullptr,
                                      std::vector<Eigen::VectorXd>* src_coeffs = nullptr,
                                      std::vector<ObservationRecord>* records = nullptr) {
  std::mt19937_64 rng(seed);
  StabilityLevel lvl;
  lvl.nr = prob.mesh().nr();
  lvl.nth = prob.mesh().nth();
  lvl.steps = prob.grid().steps;
  const DiskMesh& mesh = prob.mesh();
  for (int i = 0; i < cfg.samples; ++i) {
    const Eigen::VectorXd c = random_coefficients(basis, rng);
    const SeparableSource s = prob.separable(basis.synthesize(c));
    const SourcePair src = s.pair(mesh);
    const ObservationRecord rec = prob.solve_and_observe(CoupledField(mesh), src);
    const double rho = safe_ratio(prob.source_norm(src), rec.norm());
    lvl.sample_ratios.push_back(rho);
    if (scale_error) {
      const SeparableSource s2 = prob.separable(basis.synthesize(cfg.scale * c));
      const SourcePair src2 = s2.pair(mesh);
      const double rho2 = safe_ratio(prob.source_norm(src2), prob.solve_and_observe(CoupledField(mesh), src2).norm());
      *scale_error = std::max(*scale_error, std::abs(rho2 - rho) / rho);
    }
    if (src_coeffs) src_coeffs->push_back(c);
    if (records) records->push_back(rec);
  }
  if (with_pairs) {
    for (int i = 0; i < cfg.pairs; ++i) {
      const Eigen::VectorXd c1 = random_coefficients(basis, rng);
      const Eigen::VectorXd c2 = random_coefficients(basis, rng);
      const CoupledField y0 = basis.synthesize(random_coefficients(basis, rng));
      const SourcePair s1 = prob.separable(basis.synthesize(c1)).pair(mesh);
      const SourcePair s2 = prob.separable(basis.synthesize(c2)).pair(mesh);
      ObservationRecord d = prob.solve_and_observe(y0, s1);
      d -= prob.solve_and_observe(y0, s2);
      prob.refresh_norms(d);
      const SourcePair diff = prob.separable(basis.synthesize(c1 - c2)).pair(mesh);
      lvl.pair_ratios.push_back(safe_ratio(prob.source_norm(diff), d.norm()));
      if (src_coeffs) src_coeffs->push_back(c1 - c2);
      if (records) records->push_back(d);
    }
  }
  lvl.samples = ratio_stats(lvl.sample_ratios);
  lvl.pairs = ratio_stats(lvl.pair_ratios);
  std::vector<double> all = lvl.sample_ratios;
  all.insert(all.end(), lvl.pair_ratios.begin(), lvl.pair_ratios.end());
  lvl.max_ratio = ratio_stats(all).max;
  return lvl;
}

/// `refined_setup` is the same problem on the 2x refined mesh and time grid.
inline StabilityReport stability_experiment(const InverseSetup& setup, const InverseSetup* refined_setup,
                                            const StabilityConfig& cfg) {
  if (cfg.samples + cfg.pairs < 2) throw InvalidArgument("stability ensemble needs at least two members");
  StabilityReport rep;
  rep.seed = cfg.seed;
  const InverseProblem prob(setup);
  const SourceBasis basis(setup.mesh, cfg.n_radial, cfg.n_angular, cfg.n_surface);
  std::vector<Eigen::VectorXd> coeffs;
  std::vector<ObservationRecord> records;
  rep.base = stability_level(prob, basis, cfg, true, cfg.seed, &rep.scale_invariance_error, &coeffs, &records);

  // Uniqueness: pairwise distances between all observed members (differences by linearity of the records).
  for (std::size_t a = 0; a < records.size(); ++a)
    for (std::size_t b = a + 1; b < records.size(); ++b) {
      ObservationRecord d = records[a];
      d -= records[b];
      prob.refresh_norms(d);
      const double od = d.norm();
      const double sd = (coeffs[a] - coeffs[b]).norm();
      ++rep.uniqueness_pairs_checked;
      rep.min_observation_distance = std::min(rep.min_observation_distance, od);
      if (od <= cfg.uniqueness_obs_tol && sd > cfg.uniqueness_src_tol) ++rep.uniqueness_violations;
    }

  if (cfg.refine && refined_setup) {
    const InverseProblem fine(*refined_setup);
    const SourceBasis fbasis(refined_setup->mesh, cfg.n_radial, cfg.n_angular, cfg.n_surface);
    rep.refined = true;
    rep.fine = stability_level(fine, fbasis, cfg, cfg.refine_pairs, cfg.seed);
    if (!cfg.refine_pairs) {
      // Compare like with like when the refined level has no pairs.
      rep.refinement_drift = std::abs(rep.fine.samples.max - rep.base.samples.max) / rep.base.samples.max;
    } else {
      rep.refinement_drift = std::abs(rep.fine.max_ratio - rep.base.max_ratio) / rep.base.max_ratio;
    }
  }
  return rep;
}

// -- JSON ------------------------------------------------------------------------

inline constexpr const char* kStabilitySchemaVersion = "1.0";

inline nlohmann::json number_or_null(double x) {
  if (std::isfinite(x)) return x;
  return nullptr;
}

inline double null_as_nan(const nlohmann::json& j) {
  return j.is_null() ? std::numeric_limits<double>::quiet_NaN() : j.get<double>();
}

inline nlohmann::json to_json(const RatioStats& s) {
  return {{"count", s.count}, {"skipped", s.skipped}, {"max", number_or_null(s.max)},
          {"median", number_or_null(s.median)}, {"min", number_or_null(s.min)}};
}
inline RatioStats ratio_stats_from_json(const nlohmann::json& j) {
  RatioStats s;
  s.count = j.at("count").get<int>();
  s.skipped = j.at("skipped").get<int>();
  s.max = null_as_nan(j.at("max"));
  s.median = null_as_nan(j.at("median"));
  s.min = null_as_nan(j.at("min"));
  return s;
}

inline nlohmann::json to_json(const StabilityLevel& l) {
  auto arr = [](const std::vector<double>& v) {
    nlohmann::json a = nlohmann::json::array();
    for (double x : v) a.push_back(number_or_null(x));
    return a;
  };
  return {{"nr", l.nr},
          {"nth", l.nth},
          {"steps", l.steps},
          {"sample_ratios", arr(l.sample_ratios)},
          {"pair_ratios", arr(l.pair_ratios)},
          {"samples", to_json(l.samples)},
          {"pairs", to_json(l.pairs)},
          {"max_ratio", number_or_null(l.max_ratio)}};
}
inline StabilityLevel stability_level_from_json(const nlohmann::json& j) {
  StabilityLevel l;
  l.nr = j.at("nr").get<int>();
  l.nth = j.at("nth").get<int>();
  l.steps = j.at("steps").get<int>();
  for (const auto& x : j.at("sample_ratios")) l.sample_ratios.push_back(null_as_nan(x));
  for (const auto& x : j.at("pair_ratios")) l.pair_ratios.push_back(null_as_nan(x));
  l.samples = ratio_stats_from_json(j.at("samples"));
  l.pairs = ratio_stats_from_json(j.at("pairs"));
  l.max_ratio = null_as_nan(j.at("max_ratio"));
  return l;
}

inline nlohmann::json to_json(const StabilityReport& r) {
  nlohmann::json j;
  j["schema_version"] = kStabilitySchemaVersion;
  j["kind"] = "stability_report";
  j["seed"] = r.seed;
  j["base"] = to_json(r.base);
  j["refined"] = r.refined;
  j["fine"] = r.refined ? to_json(r.fine) : nlohmann::json(nullptr);
  j["refinement_drift"] = number_or_null(r.refinement_drift);
  j["scale_invariance_error"] = r.scale_invariance_error;
  j["uniqueness"] = {{"pairs_checked", r.uniqueness_pairs_checked},
                     {"violations", r.uniqueness_violations},
                     {"min_observation_distance", number_or_null(r.min_observation_distance)}};
  return j;
}

inline StabilityReport stability_report_from_json(const nlohmann::json& j) {
  if (j.at("schema_version").get<std::string>() != kStabilitySchemaVersion)
    throw InvalidArgument("unsupported stability report schema version");
  StabilityReport r;
  r.seed = j.at("seed").get<std::uint64_t>();
  r.base = stability_level_from_json(j.at("base"));
  r.refined = j.at("refined").get<bool>();
  if (r.refined) r.fine = stability_level_from_json(j.at("fine"));
  r.refinement_drift = null_as_nan(j.at("refinement_drift"));
  r.scale_invariance_error = j.at("scale_invariance_error").get<double>();
  const auto& u = j.at("uniqueness");
  r.uniqueness_pairs_checked = u.at("pairs_checked").get<int>();
  r.uniqueness_violations = u.at("violations").get<int>();
  r.min_observation_distance = null_as_nan(u.at("min_observation_distance"));
  if (u.at("min_observation_distance").is_null()) r.min_observation_distance = std::numeric_limits<double>::infinity();
  return r;
}

}  // namespace dynbc
