#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <json.hpp>
#include <sstream>

#include "ctd/commands.hpp"
#include "ctd/config.hpp"
#include "ctd/csvio.hpp"
#include "ctd/errors.hpp"
#include "ctd/rng.hpp"
#include "ctd/version.hpp"

using namespace ctd;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

fs::path fresh_dir(const char* name) {
  auto dir = fs::temp_directory_path() / "ctd_cli_tests" / name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void dump(const fs::path& p, const json& j) {
  std::ofstream out(p);
  out << j.dump(1) << "\n";
}

// tiny but complete experiment config; every block sized for test speed
json tiny_config(const fs::path& out_dir) {
  json j;
  j["out_dir"] = out_dir.string();
  j["seed"] = 7;
  j["dims"] = {{"d_obs", 12}, {"mlp_widths", {8}}, {"n_cells", 5}, {"d_act", 4}};
  j["train"] = {{"k_trunc", 8}, {"epochs", 2},   {"rollout_steps", 64},
                {"batch_rollouts", 2}, {"lr", 0.002}, {"seed", 1},
                {"speed_lo", 1.0},     {"speed_hi", 2.0}};
  j["rollout"] = {{"speeds", {1.0, 2.0}}, {"steps", 120}, {"warmup", 20}};
  j["fixed_points"] = {{"n_inits", 6}, {"max_iters", 3000},
                       {"grad_resolution", 5}, {"decay_steps", 40}};
  j["perturb_neural"] = {{"pc_index", 1}, {"magnitude", 1.0},
                         {"t_apply", 60}, {"steps", 160}};
  j["perturb_physical"] = {{"magnitude", 0.5}, {"duration_ms", 100.0},
                           {"t_apply", 40},    {"horizon_steps", 200},
                           {"sustain_steps", 50}};
  j["grid"] = {{"magnitudes", {0.0, 1.0}}, {"durations_ms", {100.0}},
               {"n_agents", 3},            {"t_apply", 40},
               {"horizon_steps", 200},     {"sustain_steps", 50}};
  return j;
}

}  // namespace

TEST_CASE("metadata line carries version, config hash, and seed") {
  std::string m = meta_line("00ff00ff00ff00ff", 42);
  CHECK(m == std::string("# ctdlab ") + kToolVersion +
                 " config=00ff00ff00ff00ff seed=42");
}

TEST_CASE("fnv1a matches published reference values") {
  CHECK(fnv1a_hex("") == "cbf29ce484222325");
  CHECK(fnv1a_hex("a") == "af63dc4c8601ec8c");
  CHECK(fnv1a_hex("foobar") == "85944171f73967e8");
}

TEST_CASE("float formatting round trips exactly") {
  for (double v : {0.1, 1.0 / 3.0, 1e-300, -2.5e17, 0.0}) {
    CHECK(std::stod(fmt_double(v)) == v);
  }
}

TEST_CASE("csv writer and reader round trip") {
  auto dir = fresh_dir("csv");
  auto path = dir / "t.csv";
  {
    CsvWriter w(path.string(), meta_line("abc", 1), {"x", "y"});
    w.row({1.5, -2.0});
    w.row({0.1, 1e-12});
  }
  CsvTable t = read_csv(path.string());
  CHECK(t.meta.find("# ctdlab") == 0);
  REQUIRE(t.header == std::vector<std::string>{"x", "y"});
  REQUIRE(t.values.rows() == 2);
  CHECK(t.values(0, 0) == 1.5);
  CHECK(t.values(1, 1) == 1e-12);
}

TEST_CASE("csv writer rejects ragged rows, reader rejects bad cells") {
  auto dir = fresh_dir("csv_bad");
  auto path = dir / "bad.csv";
  {
    CsvWriter w(path.string(), meta_line("abc", 1), {"x", "y"});
    CHECK_THROWS_AS(w.row({1.0}), ConfigError);
    w.row({1.0, 2.0});
  }
  std::ofstream(path, std::ios::app) << "1.0,not_a_number\n";
  CHECK_THROWS_AS(read_csv(path.string()), ParseError);
  CHECK_THROWS_AS(read_csv((dir / "missing.csv").string()), ConfigError);
}

TEST_CASE("seed derivation is stable and collision-averse") {
  CHECK(derive_seed(1, 2, 3) == derive_seed(1, 2, 3));
  CHECK(derive_seed(1, 2, 3) != derive_seed(1, 3, 2));
  CHECK(derive_seed(1, 2) != derive_seed(2, 1));
  CHECK(derive_seed(0, 0) != 0);
  Rng a(derive_seed(9, 1)), b(derive_seed(9, 2));
  CHECK(a.uniform() != b.uniform());
}

TEST_CASE("experiment config rejects unknown keys with a clear message") {
  auto dir = fresh_dir("cfg");
  auto path = dir / "bad.json";
  json j = tiny_config(dir / "out");
  j["outdir"] = "typo";
  dump(path, j);
  try {
    load_experiment_config(path.string());
    FAIL("expected ConfigError");
  } catch (const ConfigError& e) {
    CHECK(std::string(e.what()).find("outdir") != std::string::npos);
  }
}

TEST_CASE("experiment config validates referenced files eagerly") {
  auto dir = fresh_dir("cfg_files");
  json j = tiny_config(dir / "out");
  j["weights"] = (dir / "does_not_exist.json").string();
  auto path = dir / "cfg.json";
  dump(path, j);
  try {
    load_experiment_config(path.string());
    FAIL("expected ConfigError");
  } catch (const ConfigError& e) {
    CHECK(std::string(e.what()).find("does_not_exist") != std::string::npos);
  }
  CHECK_THROWS_AS(load_experiment_config((dir / "absent.json").string()),
                  ConfigError);
  std::ofstream(dir / "garbage.json") << "{{{";
  CHECK_THROWS_AS(load_experiment_config((dir / "garbage.json").string()),
                  ParseError);
}

TEST_CASE("full command pipeline produces every artifact") {
  auto dir = fresh_dir("pipeline");
  auto out1 = dir / "train_out";

  // train
  auto cfg_path = dir / "train.json";
  dump(cfg_path, tiny_config(out1));
  ExperimentConfig cfg = load_experiment_config(cfg_path.string());
  CHECK(cfg.config_hash.size() == 16);
  cmd_train(cfg, 1);
  CHECK(fs::exists(out1 / "weights.json"));
  CHECK(fs::exists(out1 / "train_report.json"));
  CHECK(fs::exists(out1 / "loss.csv"));

  // rollout + pca with the trained weights
  auto out2 = dir / "analysis_out";
  json j2 = tiny_config(out2);
  j2["weights"] = (out1 / "weights.json").string();
  auto cfg2_path = dir / "analysis.json";
  dump(cfg2_path, j2);
  ExperimentConfig cfg2 = load_experiment_config(cfg2_path.string());
  cmd_rollout(cfg2, 1);
  CHECK(fs::exists(out2 / "dataset.csv"));
  cmd_pca(cfg2, 1);
  CHECK(fs::exists(out2 / "basis.json"));
  CHECK(fs::exists(out2 / "variance.csv"));

  // byte-identical rerun of the dataset
  std::string first = slurp(out2 / "dataset.csv");
  cmd_rollout(cfg2, 1);
  CHECK(first == slurp(out2 / "dataset.csv"));

  // downstream analyses with weights + basis
  auto out3 = dir / "probe_out";
  json j3 = tiny_config(out3);
  j3["weights"] = (out1 / "weights.json").string();
  j3["basis"] = (out2 / "basis.json").string();
  auto cfg3_path = dir / "probe.json";
  dump(cfg3_path, j3);
  ExperimentConfig cfg3 = load_experiment_config(cfg3_path.string());

  cmd_fixed_points(cfg3, 1);
  CHECK(fs::exists(out3 / "fixed_points.json"));
  CHECK(fs::exists(out3 / "eigvals.csv"));
  CHECK(fs::exists(out3 / "grad_field_fp0.csv"));
  CHECK(fs::exists(out3 / "decay_fp0.csv"));
  {
    std::ifstream in(out3 / "fixed_points.json");
    json rep;
    in >> rep;
    CHECK(rep.contains("fixed_points"));
    CHECK(rep["candidates_summary"]["n_inits"] == 6);
  }

  cmd_perturb_neural(cfg3, 1);
  CHECK(fs::exists(out3 / "trace_pair.csv"));
  {
    std::ifstream in(out3 / "perturb_metrics.json");
    json m;
    in >> m;
    CHECK(m.contains("phase_shift_rad"));
    CHECK(m.contains("tangentiality_at_apply"));
    CHECK(m["pc_index"] == 1);
  }

  cmd_perturb_physical(cfg3, 1);
  CHECK(fs::exists(out3 / "physical_trace.csv"));
  {
    std::ifstream in(out3 / "physical_result.json");
    json m;
    in >> m;
    CHECK(m["magnitude_bw"] == 0.5);
  }

  cmd_robustness_grid(cfg3, 1);
  CHECK(fs::exists(out3 / "grid.csv"));
  CsvTable grid = read_csv((out3 / "grid.csv").string());
  REQUIRE(grid.values.rows() == 2);  // 2 magnitudes x 1 duration
  // zero-magnitude row recovers every agent
  CHECK(grid.values(0, 0) == 0.0);
  CHECK(grid.values(0, 4) == 1.0);

  // byte-identical rerun of the grid
  std::string gfirst = slurp(out3 / "grid.csv");
  cmd_robustness_grid(cfg3, 1);
  CHECK(gfirst == slurp(out3 / "grid.csv"));

  // rerunning with another seed changes the hash line but still works
  json j4 = tiny_config(out3);
  j4["weights"] = (out1 / "weights.json").string();
  j4["basis"] = (out2 / "basis.json").string();
  j4["seed"] = 8;
  dump(cfg3_path, j4);
  ExperimentConfig cfg4 = load_experiment_config(cfg3_path.string());
  CHECK(cfg4.config_hash != cfg3.config_hash);

  fs::remove_all(dir);
}

TEST_CASE("commands that need files fail with actionable errors") {
  auto dir = fresh_dir("cmd_err");
  auto cfg_path = dir / "cfg.json";
  dump(cfg_path, tiny_config(dir / "out"));
  ExperimentConfig cfg = load_experiment_config(cfg_path.string());
  CHECK_THROWS_AS(cmd_rollout(cfg, 1), ConfigError);       // no weights
  CHECK_THROWS_AS(cmd_perturb_neural(cfg, 1), ConfigError);
  fs::remove_all(dir);
}
