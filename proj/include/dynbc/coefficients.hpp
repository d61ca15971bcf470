#pragma once

// Coefficient data of the coupled bulk-surface system and its ellipticity
// certificate.
//
// A is stored per cell in the orthonormal polar frame (e_r, e_theta): entries
// a_rr, a_rt (= a_tr) and a_tt. A Cartesian A(x) is the same tensor rotated by
// theta. On the circle every symmetric positive D acts as a scalar on the single
// tangent direction, so D is one number per boundary node. B is a per-cell
// polar 2-vector and b the tangential component of the surface drift.
//
// The discrete schemes only sample coefficient values. Presets are smooth by
// construction; explicit user arrays are accepted as given.

#include <Eigen/Core>
#include <json.hpp>

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <random>
#include <string>
#include <vector>

#include "dynbc/error.hpp"
#include "dynbc/mesh.hpp"

namespace dynbc {

struct ProblemCoefficients {
  Eigen::VectorXd a_rr, a_rt, a_tt;  // per cell
  Eigen::VectorXd d;                 // per node
  Eigen::VectorXd b_r, b_t;          // per cell
  Eigen::VectorXd b;                 // per node, tangential
  Eigen::VectorXd p;                 // per cell
  Eigen::VectorXd q;                 // per node

  /// Provenance for serialization ("explicit" when built from arrays).
  std::string preset = "explicit";
  nlohmann::json params = nlohmann::json::object();

  static ProblemCoefficients zeros(const DiskMesh& mesh) {
    const auto nc = mesh.num_cells(), nn = mesh.num_nodes();
    ProblemCoefficients c;
    c.a_rr = c.a_rt = c.a_tt = c.b_r = c.b_t = c.p = Eigen::VectorXd::Zero(nc);
    c.d = c.b = c.q = Eigen::VectorXd::Zero(nn);
    return c;
  }

  bool sized_for(const DiskMesh& mesh) const noexcept {
    const auto nc = mesh.num_cells(), nn = mesh.num_nodes();
    return a_rr.size() == nc && a_rt.size() == nc && a_tt.size() == nc && b_r.size() == nc &&
           b_t.size() == nc && p.size() == nc && d.size() == nn && b.size() == nn && q.size() == nn;
  }

  bool drift_free() const { return b_r.isZero(0.0) && b_t.isZero(0.0) && b.isZero(0.0); }
};

struct SymmetricEigen2 {
  double min;
  double max;
};

/// Closed-form eigenvalues of [[a, c], [c, d]].
inline SymmetricEigen2 symmetric_eigenvalues(double a, double c, double d) {
  const double mean = 0.5 * (a + d);
  const double rad = std::hypot(0.5 * (a - d), c);
  return {mean - rad, mean + rad};
}

struct EllipticityReport {
  double beta0 = 0.0;
  double A0 = 0.0;
  double mu = 0.0;
  double sup_B = 0.0;
  double sup_b = 0.0;
  double sup_p = 0.0;
  double sup_q = 0.0;
};

/// Ellipticity bounds and the coercivity shift
///   mu = beta0/2 + (|B|^2 + |b|^2) / (2 beta0) + |p| + |q|   (sup norms),
/// for which a[u,u] + mu |u|^2 >= beta0/2 |u|^2_{H1}.
inline EllipticityReport validate_coefficients(const ProblemCoefficients& c, const DiskMesh& mesh) {
  if (!c.sized_for(mesh)) throw SizeMismatch("validate_coefficients: coefficient arrays do not match the mesh");
  auto finite = [](const Eigen::VectorXd& v) { return v.allFinite(); };
  if (!(finite(c.a_rr) && finite(c.a_rt) && finite(c.a_tt) && finite(c.d) && finite(c.b_r) && finite(c.b_t) &&
        finite(c.b) && finite(c.p) && finite(c.q)))
    throw InvalidArgument("validate_coefficients: non-finite coefficient entry");

  EllipticityReport rep;
  rep.beta0 = std::numeric_limits<double>::infinity();
  rep.A0 = 0.0;
  for (Eigen::Index k = 0; k < mesh.num_cells(); ++k) {
    const auto ev = symmetric_eigenvalues(c.a_rr[k], c.a_rt[k], c.a_tt[k]);
    if (!(ev.min > 0.0)) throw NonElliptic("cell", std::size_t(k), ev.min);
    rep.beta0 = std::min(rep.beta0, ev.min);
    rep.A0 = std::max(rep.A0, ev.max);
    rep.sup_B = std::max(rep.sup_B, std::hypot(c.b_r[k], c.b_t[k]));
    rep.sup_p = std::max(rep.sup_p, std::abs(c.p[k]));
  }
  for (Eigen::Index j = 0; j < mesh.num_nodes(); ++j) {
    if (!(c.d[j] > 0.0)) throw NonElliptic("node", std::size_t(j), c.d[j]);
    rep.beta0 = std::min(rep.beta0, c.d[j]);
    rep.A0 = std::max(rep.A0, c.d[j]);
    rep.sup_b = std::max(rep.sup_b, std::abs(c.b[j]));
    rep.sup_q = std::max(rep.sup_q, std::abs(c.q[j]));
  }
  rep.mu = 0.5 * rep.beta0 + (rep.sup_B * rep.sup_B + rep.sup_b * rep.sup_b) / (2.0 * rep.beta0) + rep.sup_p +
           rep.sup_q;
  return rep;
}

// -- Presets ------------------------------------------------------------------

struct PresetParams {
  double a0 = 1.0;          // radial_scalar: A = (a0 + a1 r^2) I
  double a1 = 0.5;
  double amplitude = 1.0;   // anisotropic: a_rr = 2 + amplitude sin(theta)
  double coupling = 0.5;    // anisotropic: a_rt
  double drift = 0.5;       // drifted: |B| and |b|
  double potential = 1.0;   // drifted: p, q scale
  std::uint64_t seed = 7;   // random_smooth

  nlohmann::json to_json() const {
    return {{"a0", a0},         {"a1", a1},           {"amplitude", amplitude}, {"coupling", coupling},
            {"drift", drift},   {"potential", potential}, {"seed", seed}};
  }
  static PresetParams from_json(const nlohmann::json& j) {
    PresetParams p;
    p.a0 = j.value("a0", p.a0);
    p.a1 = j.value("a1", p.a1);
    p.amplitude = j.value("amplitude", p.amplitude);
    p.coupling = j.value("coupling", p.coupling);
    p.drift = j.value("drift", p.drift);
    p.potential = j.value("potential", p.potential);
    p.seed = j.value("seed", p.seed);
    return p;
  }
};

inline const std::array<const char*, 5>& preset_names() {
  static const std::array<const char*, 5> names = {"identity", "radial_scalar", "anisotropic", "drifted",
                                                   "random_smooth"};
  return names;
}

namespace detail {

// Low-order trigonometric expansion in theta with polynomial radial factors:
//   offset + sum_{k=1..3} (c_k cos(k theta) + s_k sin(k theta)) * (r/R)^k * w
// with sum |c_k| + |s_k| <= amplitude so the range is [offset - amp, offset + amp].
struct SmoothExpansion {
  double offset = 0.0;
  std::array<double, 3> c{}, s{};

  static SmoothExpansion draw(std::mt19937_64& rng, double offset, double amplitude) {
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    SmoothExpansion e;
    e.offset = offset;
    double total = 0.0;
    for (int k = 0; k < 3; ++k) {
      e.c[k] = u(rng);
      e.s[k] = u(rng);
      total += std::abs(e.c[k]) + std::abs(e.s[k]);
    }
    const double scale = total > 0.0 ? amplitude / total : 0.0;
    for (int k = 0; k < 3; ++k) {
      e.c[k] *= scale;
      e.s[k] *= scale;
    }
    return e;
  }

  double operator()(double rho, double theta) const {
    double v = offset;
    double rk = 1.0;
    for (int k = 0; k < 3; ++k) {
      rk *= rho;
      v += (c[k] * std::cos((k + 1) * theta) + s[k] * std::sin((k + 1) * theta)) * rk;
    }
    return v;
  }
};

}  // namespace detail

inline ProblemCoefficients preset(const std::string& name, const DiskMesh& mesh, const PresetParams& prm = {}) {
  ProblemCoefficients c = ProblemCoefficients::zeros(mesh);
  c.preset = name;
  c.params = prm.to_json();
  const double R = mesh.radius();

  auto fill_cells = [&](auto&& fn) {
    for (int i = 0; i < mesh.nr(); ++i)
      for (int j = 0; j < mesh.nth(); ++j) fn(mesh.cell(i, j), mesh.r(i), mesh.theta(j));
  };
  auto fill_nodes = [&](auto&& fn) {
    for (int j = 0; j < mesh.nth(); ++j) fn(j, mesh.theta(j));
  };

  if (name == "identity") {
    c.a_rr.setOnes();
    c.a_tt.setOnes();
    c.d.setOnes();
  } else if (name == "radial_scalar") {
    if (!(prm.a0 > 0.0) || prm.a1 < 0.0) throw InvalidArgument("radial_scalar needs a0 > 0 and a1 >= 0");
    fill_cells([&](Eigen::Index k, double r, double) { c.a_rr[k] = c.a_tt[k] = prm.a0 + prm.a1 * r * r; });
    c.d.setConstant(prm.a0 + prm.a1 * R * R);
  } else if (name == "anisotropic") {
    fill_cells([&](Eigen::Index k, double, double th) {
      c.a_rr[k] = 2.0 + prm.amplitude * std::sin(th);
      c.a_rt[k] = prm.coupling;
      c.a_tt[k] = 2.0;
    });
    fill_nodes([&](int j, double th) { c.d[j] = 1.0 + 0.5 * std::cos(th); });
  } else if (name == "drifted") {
    // Constant Cartesian drift (drift, 0) expressed in the polar frame.
    fill_cells([&](Eigen::Index k, double r, double th) {
      const double rho = r / R;
      c.a_rr[k] = c.a_tt[k] = 1.0 + 0.5 * rho * rho;
      c.a_rt[k] = 0.2 * rho;
      c.b_r[k] = prm.drift * std::cos(th);
      c.b_t[k] = -prm.drift * std::sin(th);
      c.p[k] = prm.potential * (1.0 + 0.5 * rho * rho);
    });
    fill_nodes([&](int j, double th) {
      c.d[j] = 1.5;
      c.b[j] = prm.drift * std::sin(th);
      c.q[j] = 0.5 * prm.potential;
    });
  } else if (name == "random_smooth") {
    std::mt19937_64 rng(prm.seed);
    const auto arr = detail::SmoothExpansion::draw(rng, 2.0, 0.5);
    const auto att = detail::SmoothExpansion::draw(rng, 2.0, 0.5);
    const auto art = detail::SmoothExpansion::draw(rng, 0.0, 0.5);  // min eig >= 1.5 - 0.5 > 0
    const auto br = detail::SmoothExpansion::draw(rng, 0.0, 0.3);
    const auto bt = detail::SmoothExpansion::draw(rng, 0.0, 0.3);
    const auto pp = detail::SmoothExpansion::draw(rng, 0.5, 0.4);
    const auto dd = detail::SmoothExpansion::draw(rng, 1.5, 0.5);
    const auto bb = detail::SmoothExpansion::draw(rng, 0.0, 0.3);
    const auto qq = detail::SmoothExpansion::draw(rng, 0.5, 0.4);
    fill_cells([&](Eigen::Index k, double r, double th) {
      const double rho = r / R;
      c.a_rr[k] = arr(rho, th);
      c.a_tt[k] = att(rho, th);
      c.a_rt[k] = art(rho, th);
      c.b_r[k] = br(rho, th);
      c.b_t[k] = bt(rho, th);
      c.p[k] = pp(rho, th);
    });
    fill_nodes([&](int j, double th) {
      c.d[j] = dd(1.0, th);
      c.b[j] = bb(1.0, th);
      c.q[j] = qq(1.0, th);
    });
  } else {
    throw InvalidArgument("unknown coefficient preset '" + name + "'");
  }
  return c;
}

/// Copy with drifts removed and potentials replaced by |p|, |q|.
inline ProblemCoefficients dissipative_part(ProblemCoefficients c) {
  c.b_r.setZero();
  c.b_t.setZero();
  c.b.setZero();
  c.p = c.p.cwiseAbs();
  c.q = c.q.cwiseAbs();
  return c;
}

// -- JSON ---------------------------------------------------------------------

inline nlohmann::json coefficients_to_json(const ProblemCoefficients& c, bool with_arrays = false) {
  nlohmann::json j;
  j["preset"] = c.preset;
  j["params"] = c.params;
  if (with_arrays || c.preset == "explicit") {
    auto arr = [](const Eigen::VectorXd& v) { return std::vector<double>(v.data(), v.data() + v.size()); };
    j["arrays"] = {{"a_rr", arr(c.a_rr)}, {"a_rt", arr(c.a_rt)}, {"a_tt", arr(c.a_tt)}, {"d", arr(c.d)},
                   {"b_r", arr(c.b_r)},   {"b_t", arr(c.b_t)},   {"b", arr(c.b)},       {"p", arr(c.p)},
                   {"q", arr(c.q)}};
  }
  return j;
}

inline ProblemCoefficients coefficients_from_json(const nlohmann::json& j, const DiskMesh& mesh) {
  const std::string name = j.value("preset", std::string("explicit"));
  if (name != "explicit" && !j.contains("arrays"))
    return preset(name, mesh, PresetParams::from_json(j.value("params", nlohmann::json::object())));
  if (!j.contains("arrays")) throw InvalidArgument("coefficient json: explicit set needs 'arrays'");
  const auto& a = j.at("arrays");
  auto vec = [&](const char* key, Eigen::Index n) {
    const auto v = a.at(key).get<std::vector<double>>();
    if (Eigen::Index(v.size()) != n) throw SizeMismatch(std::string("coefficient json: '") + key + "' has wrong length");
    return Eigen::VectorXd(Eigen::Map<const Eigen::VectorXd>(v.data(), n));
  };
  ProblemCoefficients c;
  const auto nc = mesh.num_cells(), nn = mesh.num_nodes();
  c.a_rr = vec("a_rr", nc);
  c.a_rt = vec("a_rt", nc);
  c.a_tt = vec("a_tt", nc);
  c.b_r = vec("b_r", nc);
  c.b_t = vec("b_t", nc);
  c.p = vec("p", nc);
  c.d = vec("d", nn);
  c.b = vec("b", nn);
  c.q = vec("q", nn);
  c.preset = name;
  c.params = j.value("params", nlohmann::json::object());
  return c;
}

}  // namespace dynbc
