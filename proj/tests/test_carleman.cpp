#include <gtest/gtest.h>

#include <cmath>
#include <random>
#include <sstream>

#include "dynbc/carleman.hpp"
#include "test_support.hpp"

using namespace dynbc;

namespace {

Trajectory constant_trajectory(const DiskMesh& m, double c, const TimeGrid& g) {
  Trajectory z;
  z.grid = g;
  z.states.assign(std::size_t(g.num_points()), CoupledField::constant(m, c));
  return z;
}

CarlemanSweepConfig small_sweep() {
  CarlemanSweepConfig cfg;
  cfg.nr = 8;
  cfg.nth = 16;
  cfg.window.window_steps = 20;
  cfg.window.pre_steps = 4;
  cfg.ensemble = 3;
  cfg.n_radial = 2;
  cfg.n_angular = 4;
  cfg.n_surface = 4;
  return cfg;
}

}  // namespace

TEST(Eta0, ShapeAndBoundaryBehaviour) {
  const DiskMesh m(1.5, 10, 20);
  const Eta0Field e = build_eta0(m, 0.3);
  EXPECT_GT(e.values.minCoeff(), 0.0);
  EXPECT_DOUBLE_EQ(e.sup, 2.25);
  EXPECT_DOUBLE_EQ(e.value_at(1.5), 0.0);
  EXPECT_DOUBLE_EQ(e.c_bound, 3.0);
  for (int i = 0; i < m.nr(); ++i) {
    EXPECT_NEAR(e.values[m.cell(i, 3)], 2.25 - m.r(i) * m.r(i), 1e-14);
    EXPECT_NEAR(e.grad_r[m.cell(i, 3)], -2.0 * m.r(i), 1e-14);
  }
  // The only critical point sits inside omega'.
  EXPECT_GE(min_gradient_outside(m, e), 2.0 * 0.3 - 1e-12);
  EXPECT_EQ(e.as_coupled(m).surface.values.cwiseAbs().maxCoeff(), 0.0);
  EXPECT_THROW(build_eta0(m, 0.0), InvalidArgument);
  EXPECT_THROW(build_eta0(m, 1.5), InvalidArgument);
}

TEST(Weights, ClosedFormValues) {
  const DiskMesh m(1.0, 6, 12);
  const auto c = preset("identity", m);
  const CarlemanWeightSet w(m, build_eta0(m, 0.2), 3.0, 1.5, 0.6, 3.6, c);
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> ut(0.61, 3.59), ue(0.0, 1.0);
  for (int k = 0; k < 100; ++k) {
    const double t = ut(rng), eta = ue(rng);
    const double den = (t - 0.6) * (3.6 - t);
    const double alpha = (std::exp(2 * 1.5 * 1.0) - std::exp(1.5 * eta)) / den;
    const auto v = w.at_eta(t, eta);
    EXPECT_NEAR(v.alpha, alpha, 1e-13 * alpha);
    EXPECT_NEAR(v.xi, std::exp(1.5 * eta) / den, 1e-13 * v.xi);
    EXPECT_NEAR(v.log_weight, -6.0 * alpha, 1e-12 * alpha);
    EXPECT_GT(v.alpha, 0.0);
  }
  EXPECT_NEAR(w.eval(2.1, Site::Node, 3).xi, 1.0 / (1.5 * 1.5), 1e-14);
  EXPECT_EQ(w.eval(2.1, Site::Cell, 5).alpha, w.at_eta(2.1, w.eta0().values[5]).alpha);
  EXPECT_EQ(w.with_s(50.0).at_eta(0.6 + 1e-9, 0.0).weight, 0.0);  // underflow is exact zero
  EXPECT_THROW(w.denominator(0.6), InvalidArgument);
  EXPECT_THROW(w.eval(1.0, Site::Cell, m.num_cells()), InvalidArgument);
  EXPECT_THROW(w.eval(1.0, Site::Node, -1), InvalidArgument);
  EXPECT_THROW(CarlemanWeightSet(m, build_eta0(m, 0.2), 0.0, 1.0, 0.0, 1.0, c), InvalidArgument);
  EXPECT_THROW(CarlemanWeightSet(m, build_eta0(m, 0.2), 1.0, 1.0, 1.0, 1.0, c), InvalidArgument);
}

TEST(CarlemanSides, ConstantStateMatchesHandQuadrature) {
  // A constant state under the identity operator has zero time derivative,
  // zero divergence and zero gradients, so only the zero-order terms survive.
  const DiskMesh m(1.0, 6, 12);
  const auto c = preset("identity", m);
  const CoupledOperator op(m, c);
  const TimeGrid g(0.0, 1.0, 10);
  const double s = 2.0, lam = 1.2, val = 0.7;
  const CarlemanWeightSet w(m, build_eta0(m, 0.2), s, lam, 0.0, 1.0, c);
  const auto omega = disk_mask(m, 0.5);
  const auto res = carleman_sides(op, constant_trajectory(m, val, g), {}, w, omega);
  double bz = 0, ob = 0, sz = 0;
  for (int n = 1; n < 10; ++n) {
    const double t = g.t(n), den = t * (1.0 - t);
    for (Eigen::Index k = 0; k < m.num_cells(); ++k) {
      const double eta = 1.0 - std::pow(m.r(m.ring_of(k)), 2);
      const double xi = std::exp(lam * eta) / den;
      const double lw = -2.0 * s * (std::exp(2 * lam) - std::exp(lam * eta)) / den;
      const double term = g.dt * m.cell_area_of(k) * std::pow(s, 3) * std::pow(lam, 4) * std::pow(xi, 3) * val *
                          val * std::exp(lw - res.log_scale);
      bz += term;
      if (omega[std::size_t(k)]) ob += term;
    }
    const double xb = 1.0 / den, lwb = -2.0 * s * (std::exp(2 * lam) - 1.0) / den;
    sz += g.dt * 2.0 * std::numbers::pi * std::pow(s * lam * xb, 3) * val * val * std::exp(lwb - res.log_scale);
  }
  EXPECT_NEAR(res.bulk_zero, bz, 1e-12 * bz);
  EXPECT_NEAR(res.obs, ob, 1e-12 * ob);
  EXPECT_NEAR(res.surf_zero, sz, 1e-12 * sz);
  EXPECT_LT(std::abs(res.bulk_dt) + std::abs(res.bulk_div) + std::abs(res.surf_grad) + std::abs(res.surf_conormal),
            1e-20 * bz);
  EXPECT_EQ(res.time_nodes, 9);
  EXPECT_LE(res.log_scale, 0.0);
}

TEST(CarlemanSides, TermsAreNonnegativeAndQuadraticallyHomogeneous) {
  const DiskMesh m(1.0, 8, 16);
  std::mt19937_64 rng(3);
  const auto c = support::random_coefficients_field(m, rng);
  const CoupledOperator op(m, c);
  const TimeGrid g(0.0, 1.0, 16);
  Trajectory z, z2;
  z.grid = z2.grid = g;
  std::vector<CoupledField> lz, lz2;
  for (int n = 0; n <= 16; ++n) {
    z.states.push_back(support::smooth_random_field(m, rng));
    z2.states.push_back(2.0 * z.states.back());
    lz.push_back(support::random_field(m, rng));
    lz2.push_back(2.0 * lz.back());
  }
  std::vector<CarlemanWeightSet> ws;
  for (double s : {1.0, 4.0, 16.0}) ws.emplace_back(m, build_eta0(m, 0.2), s, 1.5, 0.0, 1.0, c);
  const auto omega = disk_mask(m, 0.3);
  const auto a = carleman_sides(op, z, lz, ws, omega);
  const auto b = carleman_sides(op, z2, lz2, ws, omega);
  for (std::size_t q = 0; q < ws.size(); ++q) {
    EXPECT_EQ(a[q].log_scale, b[q].log_scale);
    const auto ta = a[q].term_values(), tb = b[q].term_values();
    for (std::size_t k = 0; k < ta.size(); ++k) {
      EXPECT_GE(ta[k], 0.0) << WeightedNorms::term_names()[k];
      EXPECT_NEAR(tb[k], 4.0 * ta[k], 1e-10 * std::max(ta[k], 1e-300)) << WeightedNorms::term_names()[k];
    }
  }
  // The discrete-L variant differs only in the source terms.
  const auto d = carleman_sides(op, z, {}, ws, omega);
  EXPECT_EQ(d[1].bulk_zero, a[1].bulk_zero);
  EXPECT_NE(d[1].bulk_source, a[1].bulk_source);
}

TEST(CarlemanSides, InputsAreChecked) {
  const DiskMesh m(1.0, 4, 8);
  const auto c = preset("identity", m);
  const CoupledOperator op(m, c);
  const CarlemanWeightSet w(m, build_eta0(m, 0.2), 1.0, 1.0, 0.0, 1.0, c);
  const auto omega = disk_mask(m, 0.3);
  EXPECT_THROW(carleman_sides(op, constant_trajectory(m, 1.0, TimeGrid(0.0, 0.5, 5)), {}, w, omega),
               InvalidArgument);
  const auto z = constant_trajectory(m, 1.0, TimeGrid(0.0, 1.0, 4));
  EXPECT_THROW(carleman_sides(op, z, std::vector<CoupledField>(2, CoupledField(m)), w, omega), SizeMismatch);
  EXPECT_THROW(carleman_sides(op, z, {}, w, std::vector<char>(3, 0)), SizeMismatch);
  const CarlemanWeightSet other(m, build_eta0(m, 0.2), 1.0, 2.0, 0.0, 1.0, c);
  EXPECT_THROW(carleman_sides(op, z, {}, std::vector<CarlemanWeightSet>{w, other}, omega), InvalidArgument);
}

TEST(Sweep, SmallEnsembleProducesFiniteRatiosAndCsv) {
  const auto cfg = small_sweep();
  const CarlemanTable t = carleman_sweep(cfg);
  ASSERT_EQ(t.rows.size(), std::size_t(cfg.ensemble) * cfg.s_grid.size());
  EXPECT_EQ(t.skipped, 0);
  EXPECT_TRUE(std::isfinite(t.max_ratio));
  ASSERT_EQ(t.max_ratio_per_s.size(), cfg.s_grid.size());
  for (const auto& row : t.rows) {
    EXPECT_GT(row.terms.rhs(), 0.0);
    EXPECT_LE(row.terms.lhs(), t.max_ratio * row.terms.rhs() * (1.0 + 1e-12));
  }
  const std::string csv = carleman_table_csv(t);
  std::istringstream is(csv);
  std::string header;
  std::getline(is, header);
  EXPECT_EQ(header.rfind("member,seed,s,lambda,log_scale,bulk_dt", 0), 0u);
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), std::ptrdiff_t(t.rows.size() + 1));
  // Same seed, same table.
  EXPECT_EQ(carleman_table_csv(carleman_sweep(cfg)), csv);
}

TEST(Sweep, RejectsInvalidParameters) {
  auto cfg = small_sweep();
  cfg.s_grid = {};
  EXPECT_THROW(carleman_sweep(cfg), InvalidArgument);
  cfg.s_grid = {4, 2};
  EXPECT_THROW(carleman_sweep(cfg), InvalidArgument);
  cfg.s_grid = {0.5};
  EXPECT_THROW(carleman_sweep(cfg), InvalidArgument);
  cfg = small_sweep();
  cfg.omega_prime_radius = 0.4;
  EXPECT_THROW(carleman_sweep(cfg), InvalidArgument);
  cfg = small_sweep();
  cfg.preset = "unknown";
  EXPECT_THROW(carleman_sweep(cfg), InvalidArgument);
}
