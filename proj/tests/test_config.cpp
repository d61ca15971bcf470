#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <set>

#include "dynbc/config.hpp"
#include "dynbc/experiments.hpp"
#include "test_support.hpp"

using namespace dynbc;
namespace fs = std::filesystem;

namespace {

std::string read_file(const fs::path& p) {
  std::ifstream is(p);
  std::stringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

std::string failing_key(const std::string& text) {
  try {
    parse_config(text);
  } catch (const ConfigError& e) {
    return e.key();
  }
  return "<none>";
}

ExperimentConfig smoke() { return load_config(std::string(DYNBC_SOURCE_DIR) + "/configs/smoke.cfg"); }

}  // namespace

TEST(Config, EmptyTextGivesDefaults) {
  const ExperimentConfig c = parse_config("# nothing\n\n");
  EXPECT_EQ(c.nr, 32);
  EXPECT_EQ(c.nth, 64);
  EXPECT_EQ(c.preset, "identity");
  EXPECT_EQ(c.seed, 1u);
  EXPECT_EQ(config_to_text(c), config_to_text(ExperimentConfig{}));
}

TEST(Config, ShippedDefaultFileMatchesBuiltInDefaults) {
  const ExperimentConfig c = load_config(std::string(DYNBC_SOURCE_DIR) + "/configs/default.cfg");
  EXPECT_EQ(config_to_text(c), config_to_text(ExperimentConfig{}));
}

TEST(Config, CanonicalTextRoundTrips) {
  const ExperimentConfig c = smoke();
  EXPECT_EQ(config_to_text(parse_config(config_to_text(c))), config_to_text(c));
  EXPECT_EQ(c.nr, 8);
  EXPECT_EQ(c.convergence_time_steps, (std::vector<int>{10, 20, 40}));
}

TEST(Config, ErrorsNameTheOffendingKey) {
  EXPECT_EQ(failing_key("mesh.nr = 4\nbogus.key = 1\n"), "bogus.key");
  EXPECT_EQ(failing_key("mesh.nr = four\n"), "mesh.nr");
  EXPECT_EQ(failing_key("mesh.nr = 1\n"), "mesh.nr");
  EXPECT_EQ(failing_key("mesh.nth = 7\n"), "mesh.nth");
  EXPECT_EQ(failing_key("mesh.nr = 4\nmesh.nr = 5\n"), "mesh.nr");
  EXPECT_EQ(failing_key("time.T = 0.1\n"), "time.T");
  EXPECT_EQ(failing_key("time.scheme = rk4\n"), "time.scheme");
  EXPECT_EQ(failing_key("carleman.s_grid = 4, 2\n"), "carleman.s_grid");
  EXPECT_EQ(failing_key("carleman.discrete_L = maybe\n"), "carleman.discrete_L");
  EXPECT_EQ(failing_key("inverse.epsilon = 0\n"), "inverse.epsilon");
  EXPECT_EQ(failing_key("seed = -3\n"), "seed");
  EXPECT_EQ(failing_key("mesh.nr 4\n"), "mesh.nr 4");
  EXPECT_EQ(failing_key("mesh.nr = 8\n"), "<none>");
  try {
    load_config("/nonexistent/file.cfg");
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_EQ(e.key(), "--config");
  }
}

TEST(Config, HashIgnoresOutputDirectoryOnly) {
  ExperimentConfig a, b;
  b.output_dir = "somewhere/else";
  EXPECT_EQ(config_hash(a), config_hash(b));
  EXPECT_EQ(config_hash(a).size(), 16u);
  b.seed = 2;
  EXPECT_NE(config_hash(a), config_hash(b));
  // FNV-1a reference values.
  EXPECT_EQ(fnv1a64(""), 0xcbf29ce484222325ull);
  EXPECT_EQ(fnv1a64("a"), 0xaf63dc4c8601ec8cull);
}

TEST(Reports, CsvJsonAndUnsupportedFormats) {
  ReportTable t{"demo", {"n", "x", "label"}, {}};
  EXPECT_EQ(export_report(t, "csv"), "n,x,label\n");
  t.add({std::int64_t(3), 0.1, std::string("a,\"b\"")});
  t.add({std::int64_t(-1), std::nan(""), std::string("plain")});
  EXPECT_THROW(t.add({std::int64_t(1)}), SizeMismatch);
  const std::string csv = export_report(t, "csv");
  EXPECT_EQ(csv, "n,x,label\n3,0.10000000000000001,\"a,\"\"b\"\"\"\n-1,nan,plain\n");
  const auto j = nlohmann::json::parse(export_report(t, "json"));
  EXPECT_EQ(j.at("columns")[1], "x");
  EXPECT_TRUE(j.at("rows")[1][1].is_null());
  const ReportTable back = table_from_json(j);
  EXPECT_EQ(std::get<std::int64_t>(back.rows[0][0]), 3);
  EXPECT_EQ(std::get<double>(back.rows[0][1]), 0.1);
  EXPECT_TRUE(std::isnan(std::get<double>(back.rows[1][1])));
  EXPECT_THROW(export_report(t, "xml"), InvalidArgument);
}

TEST(Output, DirectoryPrecedence) {
  ExperimentConfig c;
  c.output_dir = "from_config";
  ::unsetenv(kOutputEnv);
  EXPECT_EQ(resolve_output_dir(c), fs::path("from_config"));
  ::setenv(kOutputEnv, "from_env", 1);
  EXPECT_EQ(resolve_output_dir(c), fs::path("from_env"));
  EXPECT_EQ(resolve_output_dir(c, "from_flag"), fs::path("from_flag"));
  ::unsetenv(kOutputEnv);
}

TEST(Output, ForwardRunWritesListedFilesDeterministically) {
  const ExperimentConfig c = smoke();
  const fs::path a = support::fresh_dir("run_a"), b = support::fresh_dir("run_b");
  const RunResult ra = run_experiment("forward", c, a);
  run_experiment("forward", c, b);
  std::set<std::string> listed(ra.files.begin(), ra.files.end()), present;
  for (const auto& e : fs::directory_iterator(a)) present.insert(e.path().filename().string());
  EXPECT_EQ(listed, present);
  for (const auto& f : listed) {
    if (f == "manifest.json") continue;
    EXPECT_EQ(read_file(a / f), read_file(b / f)) << f;
  }
  const auto m = nlohmann::json::parse(read_file(a / "manifest.json"));
  EXPECT_EQ(m.at("kind"), "run_manifest");
  EXPECT_EQ(m.at("config_hash"), config_hash(c));
  EXPECT_EQ(m.at("subcommand"), "forward");
  EXPECT_EQ(m.at("files").size(), ra.files.size() - 1);
  EXPECT_EQ(parse_config(read_file(a / "config.cfg")).nr, 8);
  EXPECT_THROW(run_experiment("nope", c, a), InvalidArgument);
}

TEST(Output, UnwritableDirectoryIsAFilesystemError) {
  const fs::path base = support::fresh_dir("blocked");
  { std::ofstream(base / "file") << "x"; }
  try {
    run_experiment("forward", smoke(), base / "file" / "sub");
    FAIL();
  } catch (const FilesystemError& e) {
    EXPECT_EQ(exit_code_for(error_report(e)), 4);
  }
}

TEST(Errors, ReportsAndExitCodes) {
  const auto cfg = error_report(ConfigError("mesh.nr", "bad"));
  EXPECT_EQ(cfg.at("kind"), "config_error");
  EXPECT_EQ(cfg.at("key"), "mesh.nr");
  EXPECT_EQ(exit_code_for(cfg), 2);
  const auto sd = error_report(SolverDiverged(7, 1e-3, 1e-10));
  EXPECT_EQ(sd.at("step"), 7);
  EXPECT_EQ(exit_code_for(sd), 3);
  EXPECT_EQ(exit_code_for(error_report(SingularNormalEquations("x"))), 3);
  const auto ne = error_report(NonElliptic("cell", 4, -0.5));
  EXPECT_EQ(ne.at("where"), "cell");
  EXPECT_EQ(exit_code_for(ne), 1);
  EXPECT_EQ(error_report(std::runtime_error("boom")).at("kind"), "internal_error");
  EXPECT_EQ(error_report(std::runtime_error("boom")).at("status"), "error");
}
