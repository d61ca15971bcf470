// Acceptance suite: one PASS/FAIL line per criterion, exit status 0 only when
// every criterion passes. Optional arguments select criteria by number.

#include <unsupported/Eigen/MatrixFunctions>

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "dynbc/carleman.hpp"
#include "dynbc/config.hpp"
#include "dynbc/convergence.hpp"
#include "dynbc/experiments.hpp"
#include "dynbc/inverse.hpp"
#include "test_support.hpp"

using namespace dynbc;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, double a) {
  char buf[128];
  std::snprintf(buf, sizeof buf, f, a);
  return buf;
}

std::vector<ProblemCoefficients> all_presets(const DiskMesh& m) {
  std::vector<ProblemCoefficients> v;
  for (const char* n : preset_names()) v.push_back(preset(n, m));
  return v;
}

// 1. Bilinear form against the L2 pairing with the operator.
Outcome structural_identity() {
  const DiskMesh m(1.0, 32, 64);
  const NormCalculator nc(m);
  std::mt19937_64 rng(101);
  auto sets = all_presets(m);
  sets.push_back(support::random_coefficients_field(m, rng));
  double worst = 0.0;
  for (int t = 0; t < 100; ++t) {
    const auto& c = sets[std::size_t(t) % sets.size()];
    const CoupledOperator op(m, c);
    const auto u = support::random_field(m, rng), v = support::random_field(m, rng);
    const Eigen::VectorXd au = op.apply_stacked(u.stacked());
    const double pairing = -(au.array() * op.mass().array() * v.stacked().array()).sum();
    const double diff = std::abs(bilinear_form(m, c, u, v).total() - pairing);
    worst = std::max(worst, diff / (nc.norm(u, NormKind::H1) * nc.norm(v, NormKind::H1)));
  }
  return {worst <= 1e-12, fmt("max |a[u,v] - <-Au,v>| / (|u|_H1 |v|_H1) = %.3e over 100 pairs", worst)};
}

// 2. Garding inequality with the reported shift.
Outcome coercivity() {
  const DiskMesh m(1.0, 32, 64);
  const NormCalculator nc(m);
  std::mt19937_64 rng(102);
  double margin = std::numeric_limits<double>::infinity();
  for (const char* name : preset_names()) {
    const auto c = preset(name, m);
    const auto rep = validate_coefficients(c, m);
    for (int t = 0; t < 100; ++t) {
      const auto u = t % 2 ? support::random_field(m, rng) : support::smooth_random_field(m, rng);
      const double l2 = nc.norm(u, NormKind::L2), h1 = nc.norm(u, NormKind::H1);
      const double lhs = bilinear_form(m, c, u, u).total() + rep.mu * l2 * l2;
      margin = std::min(margin, lhs / (0.5 * rep.beta0 * h1 * h1));
    }
  }
  return {margin >= 1.0, fmt("min (a[u,u] + mu|u|^2) / (beta0/2 |u|_H1^2) = %.4f over 5 presets x 100", margin)};
}

// 3. Discrete surface divergence formula.
Outcome divergence_formula() {
  std::mt19937_64 rng(103);
  std::normal_distribution<double> nd;
  double worst = 0.0;
  for (int nth : {16, 64, 256}) {
    const DiskMesh m(1.0, 4, nth);
    for (int t = 0; t < 100; ++t) {
      SurfaceField z(m), x(m, SurfaceKind::Tangent);
      for (int j = 0; j < nth; ++j) {
        z.values[j] = nd(rng);
        x.values[j] = nd(rng);
      }
      const auto sc = surface_calculus(m, z, x);
      const double h = m.boundary_measure();
      const double lhs = (sc.div.values.array() * z.values.array()).sum() * h;
      const double rhs = -(x.values.array() * sc.grad.values.array()).sum() * h;
      worst = std::max(worst, std::abs(lhs - rhs));
    }
  }
  return {worst <= 1e-12, fmt("max |<div X, z> + <X, grad z>| = %.3e on 3 meshes x 100", worst)};
}

// 4. Conormal splitting on the boundary and the sign bound for the weight.
Outcome conormal() {
  const DiskMesh m(1.0, 32, 64);
  std::mt19937_64 rng(104);
  double worst = 0.0;
  for (int t = 0; t < 20; ++t) {
    const auto c = support::random_coefficients_field(m, rng);
    worst = std::max(worst, conormal_identity_check(m, support::unit_boundary_gradient(m, support::smooth_compatible_field(m, rng)), c).max_abs_residual);
  }
  const CoupledField e = build_eta0(m, 0.2).as_coupled(m);
  const auto dn = normal_derivative(m, e);
  int violations = 0;
  for (const char* name : preset_names()) {
    const auto c = preset(name, m);
    const double beta0 = validate_coefficients(c, m).beta0;
    const auto dna = conormal_derivative(m, e, c);
    for (int j = 0; j < m.nth(); ++j)
      if (!(dn.values[j] < 0.0) || !(dna.values[j] <= beta0 * dn.values[j] + 1e-12)) ++violations;
  }
  return {worst <= 1e-12 && violations == 0,
          fmt("max node residual %.3e over 20 pairs; ", worst) + std::to_string(violations) +
              " sign-bound violations over 5 presets"};
}

// 5. Manufactured-solution orders.
Outcome forward_convergence() {
  const ExperimentConfig cfg;
  const auto ie = temporal_constant_study(Scheme::ImplicitEuler, cfg.convergence_time_steps);
  const auto tr = temporal_constant_study(Scheme::Trapezoidal, cfg.convergence_time_steps);
  const auto sp = spatial_radial_study({{16, 32}, {32, 64}, {64, 128}}, cfg.convergence_spatial_steps);
  const bool ok = ie.fitted_order >= 0.9 && tr.fitted_order >= 1.7 && sp.fitted_order >= 1.7;
  return {ok, fmt("temporal IE %.3f, ", ie.fitted_order) + fmt("trapezoidal %.3f, ", tr.fitted_order) +
                  fmt("spatial %.3f", sp.fitted_order)};
}

// 6. L2 decay without sources, drifts or negative potentials.
Outcome energy_dissipation() {
  const DiskMesh m(1.0, 32, 64);
  const NormCalculator nc(m);
  std::mt19937_64 rng(106);
  int increases = 0, runs = 0;
  for (const char* name : preset_names()) {
    const CoupledOperator op(m, dissipative_part(preset(name, m)));
    for (Scheme s : {Scheme::ImplicitEuler, Scheme::Trapezoidal}) {
      const TimeStepper ts(op, 0.005, s);
      for (int k = 0; k < 10; ++k) {
        ++runs;
        double prev = std::numeric_limits<double>::infinity();
        march(ts, TimeGrid(0.0, 1.0, 200), support::random_field(m, rng).stacked(), SourcePair::zero(m),
              [&](int, const Eigen::VectorXd& y) {
                const double cur = nc.norm(CoupledField::from_stacked(m, y), NormKind::L2);
                if (cur > prev * (1.0 + 1e-14)) ++increases;
                prev = cur;
              });
      }
    }
  }
  return {increases == 0, std::to_string(increases) + " norm increases over " + std::to_string(runs) +
                              " trajectories (5 presets x 2 schemes x 10 initial states)"};
}

// 7. One implicit step against the matrix-exponential mild solution.
Outcome duhamel() {
  const DiskMesh m(1.0, 3, 6);
  std::mt19937_64 rng(107);
  const auto c = support::random_coefficients_field(m, rng);
  const CoupledOperator op(m, c);
  const Eigen::Index n = op.size();
  const Eigen::VectorXd y0 = support::smooth_random_field(m, rng).stacked();
  const Eigen::VectorXd f = support::random_field(m, rng).stacked();
  Eigen::MatrixXd w = Eigen::MatrixXd::Zero(n + 1, n + 1);
  w.topLeftCorner(n, n) = -(op.mass().cwiseInverse().asDiagonal() * Eigen::MatrixXd(op.stiffness()));
  w.col(n).head(n) = f;
  Eigen::VectorXd z0(n + 1);
  z0 << y0, 1.0;
  std::vector<double> consts;
  // dt * rho(A) <= 0.05 keeps every step in the asymptotic range.
  const double dt0 = 0.05 / support::spectral_radius(op);
  for (double dt : {dt0, dt0 / 2, dt0 / 4}) {
    const Eigen::VectorXd exact = ((dt * w).exp() * z0).head(n);
    const Eigen::VectorXd step = TimeStepper(op, dt, Scheme::ImplicitEuler).step(y0, f, f);
    consts.push_back((step - exact).norm() / (dt * dt));
  }
  const auto [lo, hi] = std::minmax_element(consts.begin(), consts.end());
  return {*lo > 0.0 && *hi / *lo < 1.3, fmt("err/dt^2 in [%.4g, ", *lo) + fmt("%.4g], ", *hi) + fmt("dt = %.3g x {1, 1/2, 1/4}", dt0)};
}

// 8. Weighted inequality surrogate.
Outcome carleman() {
  const ExperimentConfig cfg;
  const auto sweep_cfg = cfg.carleman();
  const CarlemanTable base = carleman_sweep(sweep_cfg);
  const CarlemanTable fine = carleman_sweep(sweep_cfg.refined(2));
  const double drift = std::abs(fine.max_ratio - base.max_ratio) / base.max_ratio;
  int negative = 0, above = 0;
  for (const auto* t : {&base, &fine})
    for (const auto& row : t->rows) {
      for (double v : row.terms.term_values()) negative += !(v >= 0.0);
      if (!row.skipped && !(row.terms.lhs() <= t->max_ratio * row.terms.rhs() * (1.0 + 1e-12))) ++above;
    }

  // Homogeneity: doubling z and Lz multiplies every term by 4.
  const DiskMesh m = cfg.mesh();
  const auto coeffs = cfg.preset_coefficients(m);
  const CoupledOperator op(m, coeffs);
  const TimeGrid grid = cfg.window.grid();
  const SourceBasis basis(m, cfg.n_radial, cfg.n_angular, cfg.n_surface);
  std::mt19937_64 rng(108);
  const CoupledField fg = basis.synthesize(random_coefficients(basis, rng));
  const SourcePair src =
      make_separable(fg.bulk, fg.surface, KnownPart::standard(cfg.radius, cfg.known_amplitude), m, grid,
                     cfg.window.T0())
          .pair(m);
  const Trajectory y = solve_trajectory(TimeStepper(op, grid.dt, cfg.scheme), m, CoupledField(m), src, grid);
  Trajectory z, z2;
  z.grid = z2.grid = grid;
  z.states = time_derivative(y);
  std::vector<CoupledField> lz, lz2;
  for (int k = 0; k < grid.num_points(); ++k) {
    z2.states.push_back(2.0 * z.states[std::size_t(k)]);
    lz.push_back(src.derivative(grid.t(k)));
    lz2.push_back(2.0 * lz.back());
  }
  std::vector<CarlemanWeightSet> ws;
  for (double s : cfg.s_grid) ws.emplace_back(m, build_eta0(m, cfg.omega_prime_radius), s, cfg.lambda, cfg.window.t0,
                                              cfg.window.T, coeffs);
  const auto omega = disk_mask(m, cfg.omega_radius);
  const auto a = carleman_sides(op, z, lz, ws, omega), b = carleman_sides(op, z2, lz2, ws, omega);
  double hom = 0.0;
  for (std::size_t q = 0; q < a.size(); ++q) {
    const auto ta = a[q].term_values(), tb = b[q].term_values();
    for (std::size_t k = 0; k < ta.size(); ++k)
      if (ta[k] > 0.0) hom = std::max(hom, std::abs(tb[k] - 4.0 * ta[k]) / (4.0 * ta[k]));
  }

  const bool ok = std::isfinite(base.max_ratio) && std::isfinite(fine.max_ratio) && drift < 0.25 && negative == 0 &&
                  above == 0 && hom <= 1e-10 && base.skipped == 0 && fine.skipped == 0;
  return {ok, fmt("max ratio %.4g (base), ", base.max_ratio) + fmt("%.4g (2x refined), ", fine.max_ratio) +
                  fmt("drift %.2f%%, ", 100.0 * drift) + std::to_string(negative) + " negative terms, " +
                  std::to_string(above) + " rows above max ratio, " + fmt("homogeneity error %.2e", hom)};
}

StabilityReport& stability_report() {
  static StabilityReport rep = [] {
    const ExperimentConfig cfg;
    const InverseSetup fine = cfg.inverse_setup(2);
    return stability_experiment(cfg.inverse_setup(1), &fine, cfg.stability());
  }();
  return rep;
}

// 9. Stability ratio ensemble.
Outcome stability() {
  const auto& rep = stability_report();
  const bool finite = std::isfinite(rep.base.max_ratio) && std::isfinite(rep.fine.max_ratio) &&
                      rep.base.samples.count == 50 && rep.base.pairs.count == 25;
  const bool ok = finite && rep.refined && rep.scale_invariance_error <= 1e-10 && rep.refinement_drift < 0.25;
  return {ok, fmt("max rho %.4g (base), ", rep.base.max_ratio) + fmt("%.4g (2x refined), ", rep.fine.max_ratio) +
                  fmt("drift %.2f%%, ", 100.0 * rep.refinement_drift) +
                  fmt("scale invariance %.2e", rep.scale_invariance_error)};
}

// 10. Reconstruction accuracy and Lipschitz noise response.
Outcome reconstruction() {
  const auto start = std::chrono::steady_clock::now();
  const ExperimentConfig cfg;
  const InverseProblem prob(cfg.inverse_setup());
  const SourceBasis basis(prob.mesh(), cfg.n_radial, cfg.n_angular, cfg.n_surface);
  const ForwardMatrix fm(prob, basis);
  std::mt19937_64 rng(cfg.seed);
  const Eigen::VectorXd truth = random_coefficients(basis, rng);
  const CoupledField fg = basis.synthesize(truth);
  const Reconstruction r = reconstruct(fm, prob.features(prob.forward_map(fg.bulk, fg.surface)), cfg.epsilon);
  const double err = (r.coefficients - truth).norm() / truth.norm();
  const NoiseSweep sweep = noise_sweep(prob, fm, truth, cfg.noise_levels, cfg.epsilon, cfg.seed + 1);
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  const bool ok = err <= 1e-3 && std::abs(sweep.slope - 1.0) <= 0.25 && secs <= 300.0;
  return {ok, fmt("noiseless error %.3e, ", err) + fmt("noise slope %.3f, ", sweep.slope) +
                  "basis " + std::to_string(basis.bulk_dim()) + "+" + std::to_string(basis.surface_dim()) +
                  fmt(", %.1f s", secs)};
}

// 11. No two ensemble members with equal observations and different sources.
Outcome uniqueness() {
  const auto& rep = stability_report();
  return {rep.uniqueness_violations == 0 && rep.uniqueness_pairs_checked > 0,
          std::to_string(rep.uniqueness_violations) + " violations over " +
              std::to_string(rep.uniqueness_pairs_checked) + fmt(" pairs, min observation distance %.3e",
                                                                  rep.min_observation_distance)};
}

std::string read_file(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  std::stringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

// 12. Bitwise-identical outputs for repeated runs.
Outcome determinism() {
  const ExperimentConfig cfg = load_config(std::string(DYNBC_SOURCE_DIR) + "/configs/smoke.cfg");
  int compared = 0;
  std::vector<std::string> differing;
  for (const auto& sub : subcommands()) {
    const fs::path a = support::fresh_dir("acc_" + sub + "_a"), b = support::fresh_dir("acc_" + sub + "_b");
    const RunResult ra = run_experiment(sub, cfg, a);
    const RunResult rb = run_experiment(sub, cfg, b);
    if (ra.files != rb.files) differing.push_back(sub + ":<file list>");
    for (const auto& f : ra.files) {
      if (f == "manifest.json") continue;  // carries wall-clock timestamps
      ++compared;
      if (read_file(a / f) != read_file(b / f)) differing.push_back(sub + ":" + f);
    }
  }
  std::string detail = std::to_string(compared) + " files compared across " + std::to_string(subcommands().size()) +
                       " subcommands";
  for (const auto& d : differing) detail += "; differs " + d;
  return {differing.empty() && compared > 0, detail};
}

}  // namespace

int main(int argc, char** argv) {
  const std::vector<std::pair<const char*, std::function<Outcome()>>> criteria = {
      {"structural identity", structural_identity},
      {"coercivity", coercivity},
      {"divergence formula", divergence_formula},
      {"conormal identity and bound", conormal},
      {"forward convergence", forward_convergence},
      {"energy dissipation", energy_dissipation},
      {"Duhamel oracle", duhamel},
      {"Carleman surrogate", carleman},
      {"stability surrogate", stability},
      {"reconstruction", reconstruction},
      {"uniqueness", uniqueness},
      {"determinism", determinism},
  };
  std::set<int> selected;
  for (int i = 1; i < argc; ++i) selected.insert(std::atoi(argv[i]));
  int failed = 0;
  for (std::size_t k = 0; k < criteria.size(); ++k) {
    const int id = int(k) + 1;
    if (!selected.empty() && !selected.count(id)) continue;
    const auto start = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = criteria[k].second();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    std::printf("[%s] C%02d %s: %s (%.1f s)\n", o.pass ? "PASS" : "FAIL", id, criteria[k].first, o.detail.c_str(),
                secs);
    std::fflush(stdout);
    failed += !o.pass;
  }
  return failed == 0 ? 0 : 1;
}
