#pragma once

// Experiment drivers behind the command-line tool, tabular report export and
// the run manifest.

#include <Eigen/Core>
#include <json.hpp>

#include <chrono>
#include <cstdint>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <random>
#include <set>
#include <string>
#include <variant>
#include <vector>

#include "dynbc/carleman.hpp"
#include "dynbc/config.hpp"
#include "dynbc/convergence.hpp"
#include "dynbc/error.hpp"
#include "dynbc/field_io.hpp"
#include "dynbc/forward.hpp"
#include "dynbc/inverse.hpp"
#include "dynbc/sources.hpp"

#ifndef DYNBC_VERSION
#define DYNBC_VERSION "0.0.0"
#endif

namespace dynbc {

inline constexpr const char* kVersion = DYNBC_VERSION;
inline constexpr const char* kReportSchemaVersion = "1.0";

// -- Tables --------------------------------------------------------------------

using Cell = std::variant<std::int64_t, double, std::string>;

struct ReportTable {
  std::string name;
  std::vector<std::string> columns;
  std::vector<std::vector<Cell>> rows;

  void add(std::vector<Cell> row) {
    if (row.size() != columns.size()) throw SizeMismatch("table '" + name + "': row width differs from header");
    rows.push_back(std::move(row));
  }
};

namespace detail {

inline std::string csv_cell(const Cell& c) {
  if (const auto* i = std::get_if<std::int64_t>(&c)) return std::to_string(*i);
  if (const auto* d = std::get_if<double>(&c)) return format_number(*d);
  const auto& s = std::get<std::string>(c);
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string q = "\"";
  for (char ch : s) {
    if (ch == '"') q += '"';
    q += ch;
  }
  return q + "\"";
}

inline nlohmann::json json_cell(const Cell& c) {
  if (const auto* i = std::get_if<std::int64_t>(&c)) return *i;
  if (const auto* d = std::get_if<double>(&c)) return number_or_null(*d);
  return std::get<std::string>(c);
}

}  // namespace detail

inline nlohmann::json table_to_json(const ReportTable& t) {
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& r : t.rows) {
    nlohmann::json row = nlohmann::json::array();
    for (const auto& c : r) row.push_back(detail::json_cell(c));
    rows.push_back(std::move(row));
  }
  return {{"schema_version", kReportSchemaVersion}, {"kind", "table"}, {"name", t.name}, {"columns", t.columns},
          {"rows", rows}};
}

/// Inverse of table_to_json. Integers come back as int64, other numbers as
/// double, null as NaN.
inline ReportTable table_from_json(const nlohmann::json& j) {
  if (j.at("schema_version").get<std::string>() != kReportSchemaVersion)
    throw InvalidArgument("unsupported table schema version");
  ReportTable t;
  t.name = j.at("name").get<std::string>();
  t.columns = j.at("columns").get<std::vector<std::string>>();
  for (const auto& row : j.at("rows")) {
    std::vector<Cell> r;
    for (const auto& c : row) {
      if (c.is_null()) {
        r.emplace_back(std::numeric_limits<double>::quiet_NaN());
      } else if (c.is_number_integer()) {
        r.emplace_back(c.get<std::int64_t>());
      } else if (c.is_number()) {
        r.emplace_back(c.get<double>());
      } else {
        r.emplace_back(c.get<std::string>());
      }
    }
    t.add(std::move(r));
  }
  return t;
}

/// Renders a table as "csv" or "json". Columns keep their declared order and
/// numbers use 17 significant digits (CSV) or the shortest exact form (JSON).
inline std::string export_report(const ReportTable& t, const std::string& format) {
  if (format == "csv") {
    std::string out;
    for (std::size_t k = 0; k < t.columns.size(); ++k) out += (k ? "," : "") + t.columns[k];
    out += "\n";
    for (const auto& r : t.rows) {
      for (std::size_t k = 0; k < r.size(); ++k) out += (k ? "," : "") + detail::csv_cell(r[k]);
      out += "\n";
    }
    return out;
  }
  if (format == "json") return table_to_json(t).dump(2) + "\n";
  throw InvalidArgument("unsupported report format '" + format + "' (expected csv or json)");
}

// -- Output directory and manifest -----------------------------------------------

inline constexpr const char* kOutputEnv = "DYNBC_OUT";

/// --out beats the DYNBC_OUT environment variable, which beats output.dir.
inline std::filesystem::path resolve_output_dir(const ExperimentConfig& cfg, const std::string& flag = "") {
  if (!flag.empty()) return flag;
  if (const char* env = std::getenv(kOutputEnv); env && *env) return env;
  return cfg.output_dir;
}

inline std::string utc_timestamp() {
  const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

struct RunManifest {
  std::string subcommand;
  std::string config_hash;
  std::string version = kVersion;
  std::uint64_t seed = 0;
  std::string started, finished;
  std::vector<std::string> files;

  nlohmann::json to_json() const {
    return {{"schema_version", kReportSchemaVersion},
            {"kind", "run_manifest"},
            {"tool", "dynbc"},
            {"version", version},
            {"subcommand", subcommand},
            {"config_hash", config_hash},
            {"seed", seed},
            {"started", started},
            {"finished", finished},
            {"files", files}};
  }
};

/// Writes through a temporary file in the same directory and renames it, so a
/// reader never sees a partial file.
inline void write_atomically(const std::filesystem::path& path, const std::string& text) {
  const std::filesystem::path tmp = path.string() + ".tmp";
  write_text_file(tmp.string(), text);
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) {
    std::filesystem::remove(tmp);
    throw FilesystemError("cannot move '" + tmp.string() + "' into place: " + ec.message());
  }
}

// -- Drivers -------------------------------------------------------------------

struct RunResult {
  std::vector<std::string> files;  // relative to the output directory
  nlohmann::json summary;
};

namespace detail {

class OutputDir {
 public:
  explicit OutputDir(std::filesystem::path dir) : dir_(std::move(dir)) {
    std::error_code ec;
    std::filesystem::create_directories(dir_, ec);
    if (ec || !std::filesystem::is_directory(dir_))
      throw FilesystemError("cannot create output directory '" + dir_.string() + "'");
  }
  const std::filesystem::path& path() const noexcept { return dir_; }
  void write(const std::string& name, const std::string& text) {
    write_text_file((dir_ / name).string(), text);
    files_.push_back(name);
  }
  void add(const std::vector<std::string>& names) { files_.insert(files_.end(), names.begin(), names.end()); }
  std::vector<std::string> files() const { return files_; }

 private:
  std::filesystem::path dir_;
  std::vector<std::string> files_;
};

inline std::string json_text(const nlohmann::json& j) { return j.dump(2) + "\n"; }

}  // namespace detail

inline RunResult run_forward(const ExperimentConfig& cfg, const std::filesystem::path& dir) {
  detail::OutputDir out(dir);
  const InverseSetup setup = cfg.inverse_setup();
  const DiskMesh& mesh = setup.mesh;
  const CoupledOperator op(mesh, setup.coeffs);
  const TimeGrid grid = setup.window.grid();
  const TimeStepper ts(op, grid.dt, setup.scheme, setup.rtol);
  std::mt19937_64 rng(cfg.seed);
  const SourceBasis basis(mesh, cfg.n_radial, cfg.n_angular, cfg.n_surface);

  CoupledField y0(mesh);
  if (cfg.forward_initial == "random") y0 = basis.synthesize(random_coefficients(basis, rng));
  SourcePair src;
  nlohmann::json source_info{{"kind", cfg.forward_source}};
  if (cfg.forward_source == "separable") {
    const CoupledField fg = basis.synthesize(random_coefficients(basis, rng));
    const SeparableSource s = make_separable(fg.bulk, fg.surface, setup.known, mesh, grid, setup.window.T0());
    src = s.pair(mesh);
    source_info["C0"] = s.C0;
    source_info["admissible"] = check_admissible(src, mesh, grid, s.T0, s.C0).admissible;
  } else if (cfg.forward_source == "radial") {
    src = manufactured::radial_source(mesh);
    if (cfg.forward_initial == "zero") y0 = manufactured::radial_exact(mesh, grid.t_start);
  } else {
    src = SourcePair::zero(mesh);
  }

  const Trajectory tr = solve_trajectory(ts, mesh, y0, src, grid);
  std::set<int> idx = {0, setup.window.t0_index(), setup.window.T0_index(), setup.window.T_index()};
  const std::vector<int> snaps(idx.begin(), idx.end());
  out.add(export_trajectory(tr, mesh, out.path(), snaps));

  const NormCalculator norms(mesh);
  ReportTable table{"forward_norms", {"index", "t", "l2", "h1", "h2eq"}, {}};
  for (int n : snaps) {
    const CoupledField& y = tr.at(n);
    table.add({std::int64_t(n), grid.t(n), norms.norm(y, NormKind::L2), norms.norm(y, NormKind::H1),
               norms.norm(y, NormKind::H2eq)});
  }
  out.write("forward_norms.csv", export_report(table, "csv"));
  double max_res = 0.0;
  for (double r : tr.residuals) max_res = std::max(max_res, r);
  RunResult res;
  res.summary = {{"source", source_info},
                 {"initial", cfg.forward_initial},
                 {"steps", grid.steps},
                 {"dt", grid.dt},
                 {"max_relative_residual", max_res},
                 {"h2eq_at_T0", norms.norm(tr.at(setup.window.T0_index()), NormKind::H2eq)}};
  out.write("forward_summary.json", detail::json_text(res.summary));
  res.files = out.files();
  return res;
}

inline RunResult run_convergence(const ExperimentConfig& cfg, const std::filesystem::path& dir) {
  detail::OutputDir out(dir);
  std::vector<std::pair<int, int>> meshes;
  for (int l = 0; l < cfg.convergence_levels; ++l)
    meshes.emplace_back(cfg.convergence_base_nr << l, cfg.convergence_base_nth << l);
  const DiskMesh base(cfg.radius, cfg.convergence_base_nr, cfg.convergence_base_nth);
  std::vector<ConvergenceStudy> studies;
  studies.push_back(temporal_constant_study(Scheme::ImplicitEuler, cfg.convergence_time_steps, cfg.convergence_t_end));
  studies.push_back(temporal_constant_study(Scheme::Trapezoidal, cfg.convergence_time_steps, cfg.convergence_t_end));
  studies.push_back(temporal_radial_study(Scheme::ImplicitEuler, cfg.convergence_time_steps, base, cfg.convergence_t_end));
  studies.push_back(spatial_radial_study(meshes, cfg.convergence_spatial_steps, cfg.convergence_t_end, cfg.radius));

  ReportTable table{"convergence", {"study", "level", "nr", "nth", "steps", "h", "error", "order"}, {}};
  nlohmann::json fits = nlohmann::json::object();
  for (const auto& st : studies) {
    for (const auto& r : st.rows)
      table.add({r.study, std::int64_t(r.level), std::int64_t(r.nr), std::int64_t(r.nth), std::int64_t(r.steps), r.h,
                 r.error, r.order});
    fits[st.name] = st.fitted_order;
  }
  out.write("convergence.csv", export_report(table, "csv"));
  RunResult res;
  res.summary = {{"fitted_orders", fits}};
  out.write("convergence_summary.json", detail::json_text(res.summary));
  res.files = out.files();
  return res;
}

inline nlohmann::json carleman_summary_json(const CarlemanTable& t) {
  nlohmann::json per_s = nlohmann::json::array();
  for (std::size_t q = 0; q < t.s_grid.size(); ++q)
    per_s.push_back({{"s", t.s_grid[q]}, {"max_ratio", number_or_null(t.max_ratio_per_s[q])}});
  bool nonnegative = true;
  for (const auto& row : t.rows)
    for (double v : row.terms.term_values()) nonnegative = nonnegative && v >= 0.0;
  return {{"rows", t.rows.size()},
          {"skipped", t.skipped},
          {"max_ratio", number_or_null(t.max_ratio)},
          {"per_s", per_s},
          {"terms_nonnegative", nonnegative}};
}

inline RunResult run_carleman(const ExperimentConfig& cfg, const std::filesystem::path& dir) {
  detail::OutputDir out(dir);
  const CarlemanSweepConfig cc = cfg.carleman();
  const CarlemanTable base = carleman_sweep(cc);
  out.write("carleman.csv", carleman_table_csv(base));
  RunResult res;
  res.summary = {{"lambda", cc.lambda}, {"ensemble", cc.ensemble}, {"base", carleman_summary_json(base)}};
  if (cfg.carleman_refine) {
    const CarlemanTable fine = carleman_sweep(cc.refined(2));
    out.write("carleman_refined.csv", carleman_table_csv(fine));
    res.summary["fine"] = carleman_summary_json(fine);
    res.summary["refinement_drift"] = number_or_null(std::abs(fine.max_ratio - base.max_ratio) / base.max_ratio);
  }
  out.write("carleman_summary.json", detail::json_text(res.summary));
  res.files = out.files();
  return res;
}

inline RunResult run_reconstruct(const ExperimentConfig& cfg, const std::filesystem::path& dir) {
  detail::OutputDir out(dir);
  const InverseProblem prob(cfg.inverse_setup());
  const SourceBasis basis(prob.mesh(), cfg.n_radial, cfg.n_angular, cfg.n_surface);
  const ForwardMatrix fm(prob, basis);
  std::mt19937_64 rng(cfg.seed);
  const Eigen::VectorXd truth = random_coefficients(basis, rng);
  const CoupledField fg = basis.synthesize(truth);
  const ObservationRecord clean = prob.forward_map(fg.bulk, fg.surface);
  const Reconstruction rec = reconstruct(fm, prob.features(clean), cfg.epsilon);
  const double err = (rec.coefficients - truth).norm() / truth.norm();

  const NoiseSweep sweep = noise_sweep(prob, fm, truth, cfg.noise_levels, cfg.epsilon, cfg.seed + 1);
  ReportTable nt{"noise_sweep",
                 {"delta", "relative_error", "residual", "relative_residual", "solution_norm", "condition"},
                 {}};
  for (const auto& r : sweep.rows)
    nt.add({r.delta, r.error, r.diagnostics.residual, r.diagnostics.relative_residual, r.diagnostics.solution_norm,
            r.diagnostics.condition});
  out.write("noise_sweep.csv", export_report(nt, "csv"));

  // L-curve at the median noise level.
  std::vector<double> levels = cfg.noise_levels;
  std::sort(levels.begin(), levels.end());
  const double delta = levels[levels.size() / 2];
  std::mt19937_64 nrng(cfg.seed + 2);
  const Eigen::VectorXd noisy = prob.features(add_noise(prob, clean, delta, nrng));
  ReportTable lt{"lcurve", {"epsilon", "delta", "residual", "solution_norm", "relative_error"}, {}};
  for (double eps : cfg.epsilon_grid) {
    const Reconstruction r = reconstruct(fm, noisy, eps);
    lt.add({eps, delta, r.diagnostics.residual, r.diagnostics.solution_norm,
            (r.coefficients - truth).norm() / truth.norm()});
  }
  out.write("lcurve.csv", export_report(lt, "csv"));
  out.write("source_true.csv", to_csv(fg.stacked()));
  out.write("source_reconstructed.csv", to_csv(CoupledField(rec.f, rec.g).stacked()));

  RunResult res;
  const auto& d = rec.diagnostics;
  res.summary = {{"basis_dim", d.basis_dim},
                 {"epsilon", d.epsilon},
                 {"noiseless_relative_error", err},
                 {"residual", d.residual},
                 {"relative_residual", d.relative_residual},
                 {"solution_norm", d.solution_norm},
                 {"eig_min", d.eig_min},
                 {"eig_max", d.eig_max},
                 {"condition", d.condition},
                 {"noise_slope", sweep.slope}};
  out.write("reconstruction.json", detail::json_text(res.summary));
  res.files = out.files();
  return res;
}

inline RunResult run_stability(const ExperimentConfig& cfg, const std::filesystem::path& dir) {
  detail::OutputDir out(dir);
  const InverseSetup base = cfg.inverse_setup();
  const StabilityConfig sc = cfg.stability();
  StabilityReport rep;
  if (sc.refine) {
    const InverseSetup fine = cfg.inverse_setup(2);
    rep = stability_experiment(base, &fine, sc);
  } else {
    rep = stability_experiment(base, nullptr, sc);
  }
  out.write("stability_report.json", detail::json_text(to_json(rep)));
  ReportTable t{"stability_ratios", {"level", "kind", "member", "ratio"}, {}};
  auto rows = [&](const char* level, const StabilityLevel& l) {
    for (std::size_t k = 0; k < l.sample_ratios.size(); ++k)
      t.add({std::string(level), std::string("sample"), std::int64_t(k), l.sample_ratios[k]});
    for (std::size_t k = 0; k < l.pair_ratios.size(); ++k)
      t.add({std::string(level), std::string("pair"), std::int64_t(k), l.pair_ratios[k]});
  };
  rows("base", rep.base);
  if (rep.refined) rows("fine", rep.fine);
  out.write("stability_ratios.csv", export_report(t, "csv"));
  RunResult res;
  res.summary = {{"max_ratio", number_or_null(rep.base.max_ratio)},
                 {"refinement_drift", number_or_null(rep.refinement_drift)},
                 {"scale_invariance_error", rep.scale_invariance_error},
                 {"uniqueness_violations", rep.uniqueness_violations}};
  res.files = out.files();
  return res;
}

inline const std::vector<std::string>& subcommands() {
  static const std::vector<std::string> s = {"forward", "convergence", "carleman", "reconstruct", "stability"};
  return s;
}

/// Runs one subcommand into `dir`, then writes config.cfg and manifest.json
/// (the manifest last, atomically).
inline RunResult run_experiment(const std::string& sub, const ExperimentConfig& cfg, const std::filesystem::path& dir) {
  RunManifest m;
  m.subcommand = sub;
  m.config_hash = config_hash(cfg);
  m.seed = cfg.seed;
  m.started = utc_timestamp();
  RunResult res;
  if (sub == "forward") {
    res = run_forward(cfg, dir);
  } else if (sub == "convergence") {
    res = run_convergence(cfg, dir);
  } else if (sub == "carleman") {
    res = run_carleman(cfg, dir);
  } else if (sub == "reconstruct") {
    res = run_reconstruct(cfg, dir);
  } else if (sub == "stability") {
    res = run_stability(cfg, dir);
  } else {
    throw InvalidArgument("unknown subcommand '" + sub + "'");
  }
  write_text_file((dir / "config.cfg").string(), config_to_text(cfg, false));
  res.files.push_back("config.cfg");
  m.files = res.files;
  m.finished = utc_timestamp();
  write_atomically(dir / "manifest.json", m.to_json().dump(2) + "\n");
  res.files.push_back("manifest.json");
  return res;
}

/// Machine-readable description of a failure.
inline nlohmann::json error_report(const std::exception& e) {
  nlohmann::json j{{"status", "error"}, {"message", e.what()}};
  if (const auto* err = dynamic_cast<const Error*>(&e)) {
    j["kind"] = err->kind();
  } else if (dynamic_cast<const std::filesystem::filesystem_error*>(&e) ||
             dynamic_cast<const std::ios_base::failure*>(&e)) {
    j["kind"] = "filesystem_error";
  } else {
    j["kind"] = "internal_error";
  }
  if (const auto* c = dynamic_cast<const ConfigError*>(&e)) j["key"] = c->key();
  if (const auto* s = dynamic_cast<const SolverDiverged*>(&e)) {
    j["step"] = s->step();
    j["residual"] = number_or_null(s->residual());
    j["bound"] = s->bound();
  }
  if (const auto* n = dynamic_cast<const NonElliptic*>(&e)) {
    j["where"] = n->where();
    j["index"] = n->index();
  }
  return j;
}

/// Process exit code for a failure kind.
inline int exit_code_for(const nlohmann::json& report) {
  const std::string k = report.value("kind", "");
  if (k == "config_error") return 2;
  if (k == "solver_diverged" || k == "singular_normal_equations") return 3;
  if (k == "filesystem_error") return 4;
  return 1;
}

}  // namespace dynbc
