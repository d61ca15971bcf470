#pragma once

// Manufactured solutions and observed-order fits for the forward solver.
//
//   constant in space:  Y(t) = e^{-t} (1, 1),  F = G = -e^{-t}, identity coefficients
//   radial:             y = e^{-t} (R^2 - r^2), y_G = 0,
//                       F = -e^{-t}(R^2 - r^2) + 4 e^{-t},  G = -2R e^{-t}

#include <Eigen/Core>

#include <cmath>
#include <string>
#include <vector>

#include "dynbc/coefficients.hpp"
#include "dynbc/error.hpp"
#include "dynbc/forward.hpp"
#include "dynbc/mesh.hpp"
#include "dynbc/operators.hpp"

namespace dynbc {

namespace manufactured {

inline SourcePair constant_source(const DiskMesh& mesh) {
  return SourcePair([mesh](double t) { return CoupledField::constant(mesh, -std::exp(-t)); },
                    [mesh](double t) { return CoupledField::constant(mesh, std::exp(-t)); });
}

inline CoupledField constant_exact(const DiskMesh& mesh, double t) { return CoupledField::constant(mesh, std::exp(-t)); }

inline CoupledField radial_exact(const DiskMesh& mesh, double t) {
  const double R2 = mesh.radius() * mesh.radius(), e = std::exp(-t);
  return CoupledField(sample_bulk(mesh, [&](double r, double) { return e * (R2 - r * r); }), SurfaceField(mesh));
}

inline SourcePair radial_source(const DiskMesh& mesh) {
  auto f = [mesh](double t) {
    const double R = mesh.radius(), e = std::exp(-t);
    CoupledField out(sample_bulk(mesh, [&](double r, double) { return -e * (R * R - r * r) + 4.0 * e; }),
                     SurfaceField(mesh));
    out.surface.values.setConstant(-2.0 * R * e);
    return out;
  };
  auto df = [f](double t) { return -1.0 * f(t); };
  return SourcePair(f, df);
}

}  // namespace manufactured

/// Least-squares slope of log(err) against log(h).
inline double fit_order(const std::vector<double>& h, const std::vector<double>& err) {
  if (h.size() != err.size() || h.size() < 2) throw InvalidArgument("fit_order needs at least two points");
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  const double n = double(h.size());
  for (std::size_t k = 0; k < h.size(); ++k) {
    if (!(h[k] > 0.0) || !(err[k] > 0.0)) throw InvalidArgument("fit_order needs positive steps and errors");
    const double x = std::log(h[k]), y = std::log(err[k]);
    sx += x;
    sy += y;
    sxx += x * x;
    sxy += x * y;
  }
  return (n * sxy - sx * sy) / (n * sxx - sx * sx);
}

struct ConvergenceRow {
  std::string study;
  int level = 0;
  int nr = 0, nth = 0, steps = 0;
  double h = 0.0;      // dr for spatial studies, dt for temporal ones
  double error = 0.0;
  double order = 0.0;  // local order against the previous level (0 on the first)
};

struct ConvergenceStudy {
  std::string name;
  std::vector<ConvergenceRow> rows;
  double fitted_order = 0.0;
};

/// Constant-in-space case, max_n |Y_n - e^{-t_n}| over [0, t_end] for each step count.
inline ConvergenceStudy temporal_constant_study(Scheme scheme, const std::vector<int>& steps, double t_end = 1.0,
                                                const DiskMesh& mesh = DiskMesh(1.0, 4, 8)) {
  ConvergenceStudy st;
  st.name = std::string("constant_temporal_") + scheme_name(scheme);
  const CoupledOperator op(mesh, preset("identity", mesh));
  const SourcePair src = manufactured::constant_source(mesh);
  std::vector<double> hs, es;
  for (std::size_t l = 0; l < steps.size(); ++l) {
    const TimeGrid grid(0.0, t_end, steps[l]);
    const TimeStepper ts(op, grid.dt, scheme);
    double err = 0.0;
    march(ts, grid, manufactured::constant_exact(mesh, 0.0).stacked(), src, [&](int n, const Eigen::VectorXd& y) {
      err = std::max(err, (y.array() - std::exp(-grid.t(n))).abs().maxCoeff());
    });
    ConvergenceRow row{st.name, int(l), mesh.nr(), mesh.nth(), steps[l], grid.dt, err, 0.0};
    if (l > 0) row.order = std::log(es.back() / err) / std::log(hs.back() / grid.dt);
    hs.push_back(grid.dt);
    es.push_back(err);
    st.rows.push_back(row);
  }
  st.fitted_order = fit_order(hs, es);
  return st;
}

/// Radial case on a sequence of meshes; L2 error at t_end against the sampled
/// exact solution. The trapezoidal rule with `steps` steps keeps the time error
/// well below the spatial one.
inline ConvergenceStudy spatial_radial_study(const std::vector<std::pair<int, int>>& meshes, int steps = 400,
                                             double t_end = 1.0, double radius = 1.0) {
  ConvergenceStudy st;
  st.name = "radial_spatial";
  std::vector<double> hs, es;
  for (std::size_t l = 0; l < meshes.size(); ++l) {
    const DiskMesh mesh(radius, meshes[l].first, meshes[l].second);
    const CoupledOperator op(mesh, preset("identity", mesh));
    const TimeGrid grid(0.0, t_end, steps);
    const TimeStepper ts(op, grid.dt, Scheme::Trapezoidal);
    Eigen::VectorXd last;
    march(ts, grid, manufactured::radial_exact(mesh, 0.0).stacked(), manufactured::radial_source(mesh),
          [&](int n, const Eigen::VectorXd& y) {
            if (n == grid.steps) last = y;
          });
    const CoupledField diff = CoupledField::from_stacked(mesh, last) - manufactured::radial_exact(mesh, t_end);
    const double err = norm(mesh, diff, NormKind::L2);
    ConvergenceRow row{st.name, int(l), mesh.nr(), mesh.nth(), steps, mesh.dr(), err, 0.0};
    if (l > 0) row.order = std::log(es.back() / err) / std::log(hs.back() / mesh.dr());
    hs.push_back(mesh.dr());
    es.push_back(err);
    st.rows.push_back(row);
  }
  st.fitted_order = fit_order(hs, es);
  return st;
}

/// Radial case on one mesh with the time step refined; Richardson differences
/// |Y_dt(t_end) - Y_{dt/2}(t_end)| so the spatial error cancels.
inline ConvergenceStudy temporal_radial_study(Scheme scheme, const std::vector<int>& steps, const DiskMesh& mesh,
                                              double t_end = 1.0) {
  if (steps.size() < 3) throw InvalidArgument("temporal_radial_study needs at least three levels");
  ConvergenceStudy st;
  st.name = std::string("radial_temporal_") + scheme_name(scheme);
  const CoupledOperator op(mesh, preset("identity", mesh));
  std::vector<Eigen::VectorXd> finals;
  for (int n : steps) {
    const TimeGrid grid(0.0, t_end, n);
    const TimeStepper ts(op, grid.dt, scheme);
    Eigen::VectorXd last;
    march(ts, grid, manufactured::radial_exact(mesh, 0.0).stacked(), manufactured::radial_source(mesh),
          [&](int k, const Eigen::VectorXd& y) {
            if (k == grid.steps) last = y;
          });
    finals.push_back(last);
  }
  std::vector<double> hs, es;
  for (std::size_t l = 0; l + 1 < steps.size(); ++l) {
    const double dt = t_end / steps[l];
    const double err =
        norm(mesh, CoupledField::from_stacked(mesh, Eigen::VectorXd(finals[l] - finals[l + 1])), NormKind::L2);
    ConvergenceRow row{st.name, int(l), mesh.nr(), mesh.nth(), steps[l], dt, err, 0.0};
    if (l > 0) row.order = std::log(es.back() / err) / std::log(hs.back() / dt);
    hs.push_back(dt);
    es.push_back(err);
    st.rows.push_back(row);
  }
  st.fitted_order = fit_order(hs, es);
  return st;
}

}  // namespace dynbc
