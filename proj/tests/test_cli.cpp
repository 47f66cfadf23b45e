#include <catch2/catch_amalgamated.hpp>

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include <nlohmann/json.hpp>

namespace fs = std::filesystem;

namespace {

struct CliResult {
  int exit_code = -1;
  std::string out;
  std::string err;
};

fs::path fresh_dir(const std::string& tag) {
  fs::path dir = fs::temp_directory_path() / ("flare_cli_" + tag);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  REQUIRE(in.good());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// env: extra prefix like "FLARE_SIM_OUT=/tmp/x " (trailing space included)
CliResult run_cli(const std::string& args, const std::string& env = "") {
  fs::path dir = fresh_dir("streams");
  fs::path out = dir / "out.txt", err = dir / "err.txt";
  std::string cmd = env + std::string(FLARE_SIM_BINARY) + " " + args + " >" +
                    out.string() + " 2>" + err.string();
  int status = std::system(cmd.c_str());
  CliResult r;
  r.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  r.out = slurp(out);
  r.err = slurp(err);
  return r;
}

fs::path write_config(const fs::path& dir, const std::string& extra) {
  std::string base =
      "model.kind=quadratic\n"
      "model.width=32\n"
      "model.noise_sigma=1\n"
      "run.n_clients=4\n"
      "run.rounds=12\n"
      "run.gamma=0.05\n"
      "run.eval_every=4\n"
      "sparsity.r_percent=10\n"
      "strategy.kind=ec\n";
  fs::path p = dir / "run.cfg";
  std::ofstream out(p);
  out << base << "output.dir=" << (dir / "bundle").string() << "\n" << extra;
  return p;
}

}  // namespace

TEST_CASE("invalid config exits 2 and lists every violation") {
  fs::path dir = fresh_dir("badcfg");
  fs::path cfg = dir / "bad.cfg";
  std::ofstream(cfg) << "model.kind=banana\nrun.gamma=fast\nwho=what\n";
  CliResult r = run_cli("run " + cfg.string());
  CHECK(r.exit_code == 2);
  CHECK(r.err.find("model.kind") != std::string::npos);
  CHECK(r.err.find("run.gamma") != std::string::npos);
  CHECK(r.err.find("unknown key: who") != std::string::npos);
  CHECK(r.err.find("missing required key") != std::string::npos);

  CliResult missing = run_cli("run " + (dir / "nofile.cfg").string());
  CHECK(missing.exit_code == 2);
}

TEST_CASE("run is reproducible byte for byte across workers") {
  fs::path dir = fresh_dir("repro");
  fs::path cfg = write_config(dir, "");

  CliResult r1 = run_cli("run " + cfg.string());
  REQUIRE(r1.exit_code == 0);
  std::string metrics1 = slurp(dir / "bundle" / "metrics.csv");

  CliResult r2 = run_cli("run " + cfg.string());
  REQUIRE(r2.exit_code == 0);
  CHECK(slurp(dir / "bundle" / "metrics.csv") == metrics1);

  CliResult r3 = run_cli("--workers 2 run " + cfg.string());
  REQUIRE(r3.exit_code == 0);
  CHECK(slurp(dir / "bundle" / "metrics.csv") == metrics1);

  // 12 rounds, eval every 4 -> rows at 0,4,8,12 plus the header
  int lines = 0;
  for (char c : metrics1) lines += (c == '\n');
  CHECK(lines == 5);

  auto summary = nlohmann::json::parse(slurp(dir / "bundle" / "summary.json"));
  CHECK(summary["final"]["round"] == 12);
  CHECK(summary.contains("wall_ms_total"));
  CHECK(summary["config"].get<std::string>().find("run.rounds=12") !=
        std::string::npos);
}

TEST_CASE("FLARE_SIM_OUT overrides the configured output directory") {
  fs::path dir = fresh_dir("envout");
  fs::path cfg = write_config(dir, "");
  fs::path forced = dir / "forced";
  CliResult r =
      run_cli("run " + cfg.string(), "FLARE_SIM_OUT=" + forced.string() + " ");
  REQUIRE(r.exit_code == 0);
  CHECK(fs::exists(forced / "metrics.csv"));
  CHECK_FALSE(fs::exists(dir / "bundle" / "metrics.csv"));
}

TEST_CASE("sweep writes one bundle per grid point plus index.csv") {
  fs::path dir = fresh_dir("sweep");
  fs::path cfg = write_config(dir, "");
  std::string grid =
      " --grid sparsity.r_percent=5,20 --grid strategy.kind=ec,fedavg";
  std::string out_dir = (dir / "grid").string();

  CliResult r = run_cli("sweep " + cfg.string() + grid,
                        "FLARE_SIM_OUT=" + out_dir + " ");
  REQUIRE(r.exit_code == 0);
  std::string index = slurp(fs::path(out_dir) / "index.csv");
  CHECK(index.find("dir,status,sparsity.r_percent,strategy.kind") == 0);
  for (int p = 0; p < 4; ++p) {
    std::string name = "point_" + std::to_string(p);
    CHECK(index.find(name + ",ok,") != std::string::npos);
    CHECK(fs::exists(fs::path(out_dir) / name / "metrics.csv"));
    CHECK(fs::exists(fs::path(out_dir) / name / "summary.json"));
  }

  std::string metrics0 = slurp(fs::path(out_dir) / "point_0" / "metrics.csv");
  CliResult again = run_cli("sweep " + cfg.string() + grid,
                            "FLARE_SIM_OUT=" + out_dir + " ");
  REQUIRE(again.exit_code == 0);
  CHECK(slurp(fs::path(out_dir) / "index.csv") == index);
  CHECK(slurp(fs::path(out_dir) / "point_0" / "metrics.csv") == metrics0);
}

TEST_CASE("sweep records invalid points without aborting the grid") {
  fs::path dir = fresh_dir("sweepbad");
  fs::path cfg = write_config(dir, "");
  std::string out_dir = (dir / "grid").string();
  CliResult r = run_cli("sweep " + cfg.string() +
                            " --grid sparsity.r_percent=10,500",
                        "FLARE_SIM_OUT=" + out_dir + " ");
  REQUIRE(r.exit_code == 0);
  std::string index = slurp(fs::path(out_dir) / "index.csv");
  CHECK(index.find("point_0,ok,10") != std::string::npos);
  CHECK(index.find("point_1,config_error,500") != std::string::npos);
}

TEST_CASE("bounds with tau=0 reports identical flare and ec values") {
  CliResult r = run_cli("bounds --tau 0 --delta 0.2");
  REQUIRE(r.exit_code == 0);
  auto j = nlohmann::json::parse(r.out);
  CHECK(j["p_tau"] == 0.0);
  CHECK(j["flare_convex"] == j["ec_convex"]);
  CHECK(j["flare_nonconvex"] == j["ec_nonconvex"]);

  CliResult reg = run_cli("bounds --tau 50 --delta 0.2");
  auto jr = nlohmann::json::parse(reg.out);
  CHECK(jr["flare_convex"].get<double>() < jr["ec_convex"].get<double>());
  CHECK(jr["p_tau"].get<double>() > 0.0);
}

TEST_CASE("bounds delta sweep matches the closed-form excess ratio") {
  CliResult r = run_cli("bounds --tau 50 --sweep-delta 0.1,0.02");
  REQUIRE(r.exit_code == 0);
  auto j = nlohmann::json::parse(r.out);
  REQUIRE(j["delta_sweep"].size() == 2);
  for (const auto& row : j["delta_sweep"]) {
    CHECK_THAT(row["excess_ratio"].get<double>(),
               Catch::Matchers::WithinRel(row["sqrt_inv_1p"].get<double>(),
                                          1e-10));
  }
  // the gap widens as delta shrinks (p grows)
  CHECK(j["delta_sweep"][1]["excess_ratio"].get<double>() <
        j["delta_sweep"][0]["excess_ratio"].get<double>());
}

TEST_CASE("bounds rejects out-of-domain parameters with exit 2") {
  CHECK(run_cli("bounds --delta 1.5").exit_code == 2);
  CHECK(run_cli("bounds --gamma 0").exit_code == 2);
}

TEST_CASE("verify exits 0 with one line per invariant") {
  CliResult r = run_cli("verify");
  CHECK(r.exit_code == 0);
  CHECK(r.out.find("FAIL") == std::string::npos);
  int lines = 0;
  for (char c : r.out) lines += (c == '\n');
  CHECK(lines >= 15);
}
