#include <gtest/gtest.h>

#include <random>

#include "dynbc/inverse.hpp"
#include "test_support.hpp"

using namespace dynbc;

namespace {

WindowSetup short_window() {
  WindowSetup w;
  w.window_steps = 20;
  w.pre_steps = 4;
  return w;
}

InverseSetup small_setup(const char* name = "anisotropic", int nr = 8, int nth = 16) {
  const DiskMesh m(1.0, nr, nth);
  return InverseSetup(m, preset(name, m), short_window(), SectorMask{}, KnownPart::standard(1.0));
}

double rel_diff(const ObservationRecord& a, const ObservationRecord& b) {
  const double s = (a.snapshot.stacked() - b.snapshot.stacked()).norm() + (a.interior_dt - b.interior_dt).norm();
  return s / (a.snapshot.stacked().norm() + a.interior_dt.norm());
}

}  // namespace

TEST(Observation, MatchesStoredTrajectoryAndItsDerivative) {
  const InverseProblem prob(small_setup());
  std::mt19937_64 rng(1);
  const auto fg = support::smooth_random_field(prob.mesh(), rng);
  const SourcePair src = prob.separable(fg).pair(prob.mesh());
  const Trajectory tr = solve_trajectory(prob.stepper(), prob.mesh(), CoupledField(prob.mesh()), src, prob.grid());
  const ObservationRecord a = prob.observe(tr);
  const ObservationRecord b = prob.forward_map(fg.bulk, fg.surface);
  EXPECT_EQ(rel_diff(a, b), 0.0);
  const auto d = time_derivative(tr);
  const auto& w = prob.setup().window;
  ASSERT_EQ(a.interior_dt.rows(), w.window_steps + 1);
  for (int n = w.t0_index(); n <= w.T_index(); ++n)
    for (std::size_t q = 0; q < prob.omega_cells().size(); ++q)
      EXPECT_NEAR(a.interior_dt(n - w.t0_index(), Eigen::Index(q)),
                  d[std::size_t(n)].bulk.values[prob.omega_cells()[q]], 1e-13);
  EXPECT_EQ(a.snapshot.stacked(), tr.at(w.T0_index()).stacked());
  EXPECT_THROW(prob.observe(solve_trajectory(prob.op(), CoupledField(prob.mesh()), src, 0.0, 1.0, 4,
                                             Scheme::ImplicitEuler)),
               InvalidArgument);
}

TEST(Observation, FeatureNormIsTheObservationNorm) {
  const InverseProblem prob(small_setup());
  std::mt19937_64 rng(2);
  for (int t = 0; t < 3; ++t) {
    const auto fg = support::smooth_random_field(prob.mesh(), rng);
    const auto rec = prob.forward_map(fg.bulk, fg.surface);
    const double want = prob.norms().h2_squared(rec.snapshot) + rec.interior_l2 * rec.interior_l2;
    EXPECT_NEAR(prob.features(rec).squaredNorm(), want, 1e-12 * want);
    // The interior L2 norm by an independent trapezoid loop.
    double s = 0.0;
    for (Eigen::Index n = 0; n < rec.interior_dt.rows(); ++n) {
      const double wt = (n == 0 || n + 1 == rec.interior_dt.rows()) ? 0.5 * rec.dt : rec.dt;
      for (std::size_t q = 0; q < rec.omega_cells.size(); ++q)
        s += wt * prob.mesh().cell_area_of(rec.omega_cells[q]) * std::pow(rec.interior_dt(n, Eigen::Index(q)), 2);
    }
    EXPECT_NEAR(rec.interior_l2, std::sqrt(s), 1e-12 * std::sqrt(s));
  }
}

TEST(Observation, ForwardMapIsLinear) {
  const InverseProblem prob(small_setup("drifted"));
  std::mt19937_64 rng(3);
  const auto u = support::smooth_random_field(prob.mesh(), rng);
  const auto v = support::smooth_random_field(prob.mesh(), rng);
  const auto w = 1.5 * u - 0.25 * v;
  auto lhs = prob.forward_map(w.bulk, w.surface);
  const auto fu = prob.forward_map(u.bulk, u.surface);
  const auto fv = prob.forward_map(v.bulk, v.surface);
  ObservationRecord comb = fu;
  comb.snapshot = 1.5 * fu.snapshot - 0.25 * fv.snapshot;
  comb.interior_dt = 1.5 * fu.interior_dt - 0.25 * fv.interior_dt;
  EXPECT_LT(rel_diff(lhs, comb), 1e-9);
}

TEST(Observation, SourceNormOfConstantSource) {
  const InverseProblem prob(small_setup());
  const auto one = CoupledField::constant(prob.mesh(), 1.0);
  const double span = prob.grid().t(prob.grid().steps) - prob.grid().t_start;
  EXPECT_NEAR(prob.source_norm(SourcePair::constant(prob.mesh(), one)),
              std::sqrt(span * 3.0 * std::numbers::pi), 1e-12);
}

TEST(Observation, OmegaIsValidated) {
  const DiskMesh m(1.0, 8, 16);
  SectorMask bad;
  bad.r_out = 1.2;
  EXPECT_THROW(InverseProblem(InverseSetup(m, preset("identity", m), short_window(), bad, KnownPart::standard(1.0))),
               InvalidArgument);
  SectorMask empty;
  empty.th_lo = 0.0;
  empty.th_hi = 0.01;
  EXPECT_THROW(InverseProblem(InverseSetup(m, preset("identity", m), short_window(), empty, KnownPart::standard(1.0))),
               InvalidArgument);
}

TEST(Reconstruction, NoiselessDataIsRecovered) {
  const InverseProblem prob(small_setup());
  const SourceBasis basis(prob.mesh(), 2, 4, 4);
  const ForwardMatrix fm(prob, basis);
  EXPECT_EQ(fm.matrix().cols(), basis.dim());
  std::mt19937_64 rng(4);
  const Eigen::VectorXd truth = random_coefficients(basis, rng);
  const CoupledField fg = basis.synthesize(truth);
  const auto data = prob.features(prob.forward_map(fg.bulk, fg.surface));
  const Reconstruction r = reconstruct(fm, data, 1e-12);
  EXPECT_LT((r.coefficients - truth).norm() / truth.norm(), 1e-4);
  EXPECT_LT(r.diagnostics.relative_residual, 1e-6);
  EXPECT_GT(r.diagnostics.eig_min, 0.0);
  EXPECT_NEAR(r.diagnostics.solution_norm, r.coefficients.norm(), 0.0);
  EXPECT_EQ(r.diagnostics.basis_dim, 12);
}

TEST(Reconstruction, ErrorPaths) {
  const InverseProblem prob(small_setup());
  const SourceBasis basis(prob.mesh(), 2, 4, 4);
  const ForwardMatrix fm(prob, basis);
  const Eigen::VectorXd data = Eigen::VectorXd::Zero(fm.matrix().rows());
  EXPECT_THROW(reconstruct(fm, data, 0.0), InvalidArgument);
  EXPECT_THROW(reconstruct(fm, data, -1.0), InvalidArgument);
  EXPECT_THROW(reconstruct(fm, data, 1e-6, 10), InvalidArgument);
  EXPECT_THROW(reconstruct(fm, Eigen::VectorXd::Zero(5), 1e-6), SizeMismatch);
  EXPECT_EQ(reconstruct(fm, data, 1e-6).coefficients.norm(), 0.0);
  const SourceBasis other(DiskMesh(1.0, 4, 8), 2, 4, 4);
  EXPECT_THROW(ForwardMatrix(prob, other), SizeMismatch);
}

TEST(Noise, ZeroLevelIsIdentityAndLevelsScale) {
  const InverseProblem prob(small_setup());
  std::mt19937_64 rng(5);
  const auto fg = support::smooth_random_field(prob.mesh(), rng);
  const auto rec = prob.forward_map(fg.bulk, fg.surface);
  const auto same = add_noise(prob, rec, 0.0, rng);
  EXPECT_EQ(rel_diff(rec, same), 0.0);
  EXPECT_THROW(add_noise(prob, rec, -1.0, rng), InvalidArgument);
  const auto noisy = add_noise(prob, rec, 0.1, rng);
  const double rms = std::sqrt(rec.interior_dt.squaredNorm() / double(rec.interior_dt.size()));
  const double got = std::sqrt((noisy.interior_dt - rec.interior_dt).squaredNorm() / double(rec.interior_dt.size()));
  EXPECT_NEAR(got / rms, 0.1, 0.02);
}

TEST(Noise, SweepErrorGrowsWithNoise) {
  const InverseProblem prob(small_setup());
  const SourceBasis basis(prob.mesh(), 2, 4, 4);
  const ForwardMatrix fm(prob, basis);
  std::mt19937_64 rng(6);
  const Eigen::VectorXd truth = random_coefficients(basis, rng);
  const auto sweep = noise_sweep(prob, fm, truth, {1e-4, 1e-3, 1e-2}, 1e-10, 7);
  ASSERT_EQ(sweep.rows.size(), 3u);
  EXPECT_LT(sweep.rows[0].error, sweep.rows[2].error);
  EXPECT_GT(sweep.slope, 0.5);
  // Same seed, same numbers.
  EXPECT_EQ(noise_sweep(prob, fm, truth, {1e-4, 1e-3, 1e-2}, 1e-10, 7).rows[1].error, sweep.rows[1].error);
}

TEST(Stability, RatioStatistics) {
  const double nan = std::nan("");
  const auto s = ratio_stats({3.0, nan, 1.0, 2.0, 10.0});
  EXPECT_EQ(s.count, 4);
  EXPECT_EQ(s.skipped, 1);
  EXPECT_EQ(s.median, 2.5);
  EXPECT_EQ(s.max, 10.0);
  EXPECT_EQ(ratio_stats({2.0, 1.0, 3.0}).median, 2.0);
  EXPECT_TRUE(std::isnan(ratio_stats({nan}).max));
  EXPECT_TRUE(std::isnan(safe_ratio(0.0, 0.0)));
  EXPECT_TRUE(std::isinf(safe_ratio(1.0, 0.0)));
}

TEST(Stability, SmallExperimentIsScaleInvariantAndInjective) {
  const InverseSetup base = small_setup("identity", 4, 8);
  const DiskMesh fm(1.0, 8, 16);
  const InverseSetup fine(fm, preset("identity", fm), short_window().refined(2), SectorMask{}, KnownPart::standard(1.0));
  StabilityConfig cfg;
  cfg.samples = 6;
  cfg.pairs = 3;
  cfg.n_radial = 2;
  cfg.n_angular = 4;
  cfg.n_surface = 4;
  const StabilityReport rep = stability_experiment(base, &fine, cfg);
  EXPECT_LE(rep.scale_invariance_error, 1e-10);
  EXPECT_EQ(rep.uniqueness_violations, 0);
  EXPECT_EQ(rep.uniqueness_pairs_checked, 9 * 8 / 2);
  EXPECT_GT(rep.min_observation_distance, 0.0);
  EXPECT_EQ(rep.base.samples.count, 6);
  EXPECT_EQ(rep.base.pairs.count, 3);
  EXPECT_TRUE(rep.refined);
  EXPECT_EQ(rep.fine.nr, 8);
  EXPECT_TRUE(std::isfinite(rep.refinement_drift));
  const StabilityReport back = stability_report_from_json(to_json(rep));
  EXPECT_EQ(back.base.sample_ratios, rep.base.sample_ratios);
  EXPECT_EQ(back.fine.max_ratio, rep.fine.max_ratio);
  EXPECT_EQ(back.uniqueness_violations, rep.uniqueness_violations);
  EXPECT_EQ(to_json(back), to_json(rep));
  cfg.samples = 1;
  cfg.pairs = 0;
  EXPECT_THROW(stability_experiment(base, nullptr, cfg), InvalidArgument);
}
