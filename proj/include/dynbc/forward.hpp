#pragma once

// Time integration of  d/dt Y = A Y + F  with implicit Euler or the
// trapezoidal rule. With the lumped mass M and stiffness S (A = -M^{-1} S)
// both schemes are written in the symmetric-friendly scaled form
//   implicit Euler: (M + dt S) Y1 = M Y0 + dt M F1
//   trapezoidal:    (M + dt/2 S) Y1 = (M - dt/2 S) Y0 + dt/2 M (F0 + F1)
// and the left-hand matrix is factored once per (operator, dt, scheme).

#include <Eigen/Core>
#include <Eigen/OrderingMethods>
#include <Eigen/SparseCore>
#include <Eigen/SparseLU>
#include <json.hpp>

#include <cmath>
#include <filesystem>
#include <functional>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "dynbc/error.hpp"
#include "dynbc/field_io.hpp"
#include "dynbc/mesh.hpp"
#include "dynbc/operators.hpp"

namespace dynbc {

enum class Scheme { ImplicitEuler, Trapezoidal };

inline const char* scheme_name(Scheme s) { return s == Scheme::ImplicitEuler ? "implicit_euler" : "trapezoidal"; }

inline Scheme parse_scheme(const std::string& s) {
  if (s == "implicit_euler") return Scheme::ImplicitEuler;
  if (s == "trapezoidal") return Scheme::Trapezoidal;
  throw InvalidArgument("unknown time scheme '" + s + "'");
}

/// Uniform grid t_n = t_start + n dt, n = 0..steps.
struct TimeGrid {
  double t_start = 0.0;
  double dt = 1.0;
  int steps = 1;

  TimeGrid() = default;
  TimeGrid(double t0, double t1, int n) : t_start(t0), dt((t1 - t0) / n), steps(n) {
    if (n < 1) throw InvalidArgument("time grid needs at least one step");
    if (!(t1 > t0)) throw InvalidArgument("time grid needs t_end > t_start");
  }

  double t(int n) const noexcept { return t_start + n * dt; }
  double t_end() const noexcept { return t(steps); }
  int num_points() const noexcept { return steps + 1; }

  /// Index of a time lying on the grid; throws if it does not.
  int index_of(double time) const {
    const double x = (time - t_start) / dt;
    const long n = std::lround(x);
    if (n < 0 || n > steps || std::abs(x - double(n)) > 1e-8) throw InvalidArgument("time is not on the grid");
    return int(n);
  }
};

/// Time layout of the window experiments: a run starts at t_start, the
/// observation window is (t0, T) with an even number of steps so that the
/// observation time T0 = (t0 + T)/2 is a grid point, and the pre-window part
/// [t_start, t0] uses the same step.
struct WindowSetup {
  double t_start = 0.0;
  double t0 = 0.6;
  double T = 3.6;
  int window_steps = 200;
  int pre_steps = 40;

  void validate() const {
    if (!(T > t0)) throw InvalidArgument("window needs T > t0");
    if (window_steps < 2 || window_steps % 2 != 0) throw InvalidArgument("window_steps must be even and >= 2");
    if (pre_steps < 0) throw InvalidArgument("pre_steps must be >= 0");
    const double dt = (T - t0) / window_steps;
    if (std::abs((t0 - t_start) - pre_steps * dt) > 1e-9 * std::max(1.0, std::abs(t0)))
      throw InvalidArgument("t0 - t_start must equal pre_steps * (T - t0) / window_steps");
  }
  double dt() const { return (T - t0) / window_steps; }
  double T0() const { return 0.5 * (t0 + T); }
  TimeGrid grid() const {
    validate();
    TimeGrid g;
    g.t_start = t_start;
    g.dt = dt();
    g.steps = pre_steps + window_steps;
    return g;
  }
  int t0_index() const { return pre_steps; }
  int T0_index() const { return pre_steps + window_steps / 2; }
  int T_index() const { return pre_steps + window_steps; }
  /// Same window with space-time refinement factor k in time.
  WindowSetup refined(int k) const {
    WindowSetup w = *this;
    w.window_steps *= k;
    w.pre_steps *= k;
    return w;
  }
};

/// Source pair (F, G), evaluated at arbitrary times. An optional time
/// derivative is carried for the Carleman evaluation of L z = F_t.
struct SourcePair {
  std::function<CoupledField(double)> value;
  std::function<CoupledField(double)> derivative;

  SourcePair() = default;
  explicit SourcePair(std::function<CoupledField(double)> v, std::function<CoupledField(double)> dv = {})
      : value(std::move(v)), derivative(std::move(dv)) {}

  static SourcePair zero(const DiskMesh& mesh) {
    auto z = [mesh](double) { return CoupledField(mesh); };
    return SourcePair(z, z);
  }

  /// Time-constant source.
  static SourcePair constant(const DiskMesh& mesh, CoupledField f) {
    return SourcePair([f](double) { return f; }, [mesh](double) { return CoupledField(mesh); });
  }

  /// Stored snapshots, one per grid point; evaluation off the grid throws.
  static SourcePair from_snapshots(const TimeGrid& grid, std::vector<CoupledField> snaps) {
    if (int(snaps.size()) != grid.num_points()) throw SizeMismatch("source snapshots must cover every grid point");
    for (const auto& s : snaps)
      if (!s.bulk.values.allFinite() || !s.surface.values.allFinite())
        throw InvalidArgument("source snapshots must be finite");
    auto data = std::make_shared<std::vector<CoupledField>>(std::move(snaps));
    return SourcePair([grid, data](double t) { return (*data)[std::size_t(grid.index_of(t))]; });
  }

  CoupledField operator()(double t) const { return value(t); }
  bool has_derivative() const noexcept { return bool(derivative); }
};

struct Trajectory {
  TimeGrid grid;
  Scheme scheme = Scheme::ImplicitEuler;
  std::vector<CoupledField> states;
  /// Relative linear-solve residual of each step (entry n belongs to step n -> n+1).
  std::vector<double> residuals;

  const CoupledField& at(int n) const { return states.at(std::size_t(n)); }
  const CoupledField& at_time(double t) const { return at(grid.index_of(t)); }
};

/// Factored one-step map for a fixed operator, step size and scheme.
class TimeStepper {
 public:
  TimeStepper(const CoupledOperator& op, double dt, Scheme scheme, double rtol = 1e-10)
      : mass_(op.mass()), dt_(dt), scheme_(scheme), rtol_(rtol) {
    if (!(dt > 0.0) || !std::isfinite(dt)) throw InvalidArgument("time step must be positive");
    if (!(rtol > 0.0)) throw InvalidArgument("rtol must be positive");
    const double theta = scheme == Scheme::ImplicitEuler ? 1.0 : 0.5;
    SparseMatrix m(op.size(), op.size());
    m.setIdentity();
    m = mass_.asDiagonal() * m;
    lhs_ = m + (theta * dt) * op.stiffness();
    lhs_.makeCompressed();
    if (scheme == Scheme::Trapezoidal) explicit_part_ = m - (0.5 * dt) * op.stiffness();
    lu_ = std::make_shared<Eigen::SparseLU<SparseMatrix, Eigen::COLAMDOrdering<int>>>();
    lu_->analyzePattern(lhs_);
    lu_->factorize(lhs_);
    if (lu_->info() != Eigen::Success) throw SolverDiverged(0, INFINITY, rtol);
  }

  double dt() const noexcept { return dt_; }
  Scheme scheme() const noexcept { return scheme_; }
  double rtol() const noexcept { return rtol_; }

  /// One step on stacked vectors. f0, f1 are the sources at t_n and t_{n+1}.
  /// Returns the relative residual through `residual` when non-null.
  Eigen::VectorXd step(const Eigen::VectorXd& y0, const Eigen::VectorXd& f0, const Eigen::VectorXd& f1,
                       int index = 0, double* residual = nullptr) const {
    Eigen::VectorXd rhs;
    if (scheme_ == Scheme::ImplicitEuler) {
      rhs = (mass_.array() * (y0 + dt_ * f1).array()).matrix();
    } else {
      rhs = explicit_part_ * y0 + (0.5 * dt_) * (mass_.array() * (f0 + f1).array()).matrix();
    }
    return solve(rhs, index, residual);
  }

  /// Solves (M + theta dt S) x = rhs to the relative tolerance with up to
  /// three steps of iterative refinement.
  Eigen::VectorXd solve(const Eigen::VectorXd& rhs, int index = 0, double* residual = nullptr) const {
    const double bnorm = rhs.norm();
    if (bnorm == 0.0) {
      if (residual) *residual = 0.0;
      return Eigen::VectorXd::Zero(rhs.size());
    }
    Eigen::VectorXd x = lu_->solve(rhs);
    Eigen::VectorXd r = rhs - lhs_ * x;
    double rel = r.norm() / bnorm;
    for (int it = 0; it < 3 && rel > rtol_ && std::isfinite(rel); ++it) {
      x += lu_->solve(r);
      r = rhs - lhs_ * x;
      rel = r.norm() / bnorm;
    }
    if (!(rel <= rtol_)) throw SolverDiverged(index, rel, rtol_);
    if (residual) *residual = rel;
    return x;
  }

 private:
  Eigen::VectorXd mass_;
  double dt_;
  Scheme scheme_;
  double rtol_;
  SparseMatrix lhs_, explicit_part_;
  std::shared_ptr<Eigen::SparseLU<SparseMatrix, Eigen::COLAMDOrdering<int>>> lu_;
};

/// Single step with a freshly factored matrix. Prefer TimeStepper in loops.
inline CoupledField step(const CoupledOperator& op, const CoupledField& state, const CoupledField& f0,
                         const CoupledField& f1, double dt, Scheme scheme, double rtol = 1e-10) {
  const auto& mesh = op.mesh();
  require_size(mesh, state, "step");
  require_size(mesh, f0, "step");
  require_size(mesh, f1, "step");
  TimeStepper ts(op, dt, scheme, rtol);
  return CoupledField::from_stacked(mesh, ts.step(state.stacked(), f0.stacked(), f1.stacked()));
}

/// Runs the stepper over the grid, calling `sink(n, y_n)` for every state
/// (n = 0..steps) instead of storing them.
template <class Sink>
std::vector<double> march(const TimeStepper& ts, const TimeGrid& grid, const Eigen::VectorXd& y0,
                          const SourcePair& src, Sink&& sink) {
  if (std::abs(ts.dt() - grid.dt) > 1e-12 * grid.dt) throw InvalidArgument("stepper and grid use different dt");
  std::vector<double> res;
  res.reserve(std::size_t(grid.steps));
  Eigen::VectorXd y = y0;
  sink(0, y);
  Eigen::VectorXd f0 = ts.scheme() == Scheme::Trapezoidal ? src(grid.t(0)).stacked() : Eigen::VectorXd();
  for (int n = 0; n < grid.steps; ++n) {
    Eigen::VectorXd f1 = src(grid.t(n + 1)).stacked();
    if (f1.size() != y.size()) throw SizeMismatch("source has wrong size");
    double r = 0.0;
    y = ts.step(y, f0, f1, n, &r);
    if (!y.allFinite()) throw SolverDiverged(n, INFINITY, ts.rtol());
    res.push_back(r);
    sink(n + 1, y);
    if (ts.scheme() == Scheme::Trapezoidal) f0 = std::move(f1);
  }
  return res;
}

inline Trajectory solve_trajectory(const TimeStepper& ts, const DiskMesh& mesh, const CoupledField& y0,
                                   const SourcePair& src, const TimeGrid& grid) {
  require_size(mesh, y0, "solve_trajectory");
  Trajectory tr;
  tr.grid = grid;
  tr.scheme = ts.scheme();
  tr.states.reserve(std::size_t(grid.num_points()));
  tr.residuals = march(ts, grid, y0.stacked(), src,
                       [&](int, const Eigen::VectorXd& y) { tr.states.push_back(CoupledField::from_stacked(mesh, y)); });
  return tr;
}

inline Trajectory solve_trajectory(const CoupledOperator& op, const CoupledField& y0, const SourcePair& src,
                                   double t_start, double t_end, int steps, Scheme scheme, double rtol = 1e-10) {
  const TimeGrid grid(t_start, t_end, steps);
  const TimeStepper ts(op, grid.dt, scheme, rtol);
  return solve_trajectory(ts, op.mesh(), y0, src, grid);
}

/// d/dt on the grid: centered inside, second-order one-sided at both ends.
inline std::vector<CoupledField> time_derivative(const Trajectory& tr) {
  const auto& s = tr.states;
  const int n = int(s.size());
  if (n < 3) throw InvalidArgument("time_derivative needs at least 3 states");
  const double h = tr.grid.dt;
  std::vector<CoupledField> d;
  d.reserve(s.size());
  d.push_back((1.0 / (2.0 * h)) * (-3.0 * s[0] + 4.0 * s[1] - s[2]));
  for (int k = 1; k < n - 1; ++k) d.push_back((1.0 / (2.0 * h)) * (s[std::size_t(k + 1)] - s[std::size_t(k - 1)]));
  d.push_back((1.0 / (2.0 * h)) * (3.0 * s[std::size_t(n - 1)] - 4.0 * s[std::size_t(n - 2)] + s[std::size_t(n - 3)]));
  return d;
}

/// Writes snapshot_<n>.csv (stacked values) for the requested indices and
/// trajectory.json with the grid, scheme and residual log. Returns the file names.
inline std::vector<std::string> export_trajectory(const Trajectory& tr, const DiskMesh& mesh,
                                                  const std::filesystem::path& dir,
                                                  const std::vector<int>& snapshots) {
  std::filesystem::create_directories(dir);
  std::vector<std::string> files;
  nlohmann::json snaps = nlohmann::json::array();
  for (int n : snapshots) {
    char name[32];
    std::snprintf(name, sizeof name, "snapshot_%05d.csv", n);
    save_field_csv((dir / name).string(), tr.at(n).stacked());
    files.emplace_back(name);
    snaps.push_back({{"index", n}, {"t", tr.grid.t(n)}, {"file", name}});
  }
  nlohmann::json j;
  j["mesh"] = mesh_to_json(mesh);
  j["scheme"] = scheme_name(tr.scheme);
  j["t_start"] = tr.grid.t_start;
  j["dt"] = tr.grid.dt;
  j["steps"] = tr.grid.steps;
  j["layout"] = "stacked: bulk cells i*Nth+j, then boundary nodes j";
  j["snapshots"] = snaps;
  j["residuals"] = tr.residuals;
  write_text_file((dir / "trajectory.json").string(), j.dump(2) + "\n");
  files.emplace_back("trajectory.json");
  return files;
}

}  // namespace dynbc
