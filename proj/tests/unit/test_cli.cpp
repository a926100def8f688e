#include <catch_amalgamated.hpp>

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

namespace fs = std::filesystem;

namespace {

const std::string kCli = VOLEX_CLI;
const std::string kConfigs = VOLEX_CONFIG_DIR;

fs::path scratch(const std::string& name) {
  auto p = fs::temp_directory_path() / ("volex_cli_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

int run(const std::string& args, const std::string& env = "") {
  const std::string cmd = env + " " + kCli + " " + args + " >/dev/null 2>" + (fs::temp_directory_path() / "volex_cli_err").string();
  const int rc = std::system(cmd.c_str());
  return WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string last_stderr() { return slurp(fs::temp_directory_path() / "volex_cli_err"); }

std::vector<std::string> lines(const fs::path& p) {
  std::istringstream in(slurp(p));
  std::vector<std::string> out;
  for (std::string l; std::getline(in, l);) out.push_back(l);
  return out;
}

fs::path write_config(const fs::path& dir, const std::string& text) {
  const auto p = dir / "run.toml";
  std::ofstream(p) << text;
  return p;
}

const char* kSmallSweep = R"([market]
kappa = 0.0001
kappa_tilde = 0.01
horizon = 1.0
x0 = 10.0

[volume]
model = "perturbed_ou"
u_bar = 100.0
sigma = 0.3
rho = 2.0

[simulation]
n_paths = 300
n_steps = 100
seed = 1
epsilons = [0.0, 0.5, 1.0]
strategies = ["static", "adaptive", "anticipating"]

[paths]
epsilon = 0.5
path_index = 2
)";

}  // namespace

TEST_CASE("missing config exits with a config error naming the path") {
  CHECK(run("simulate --config /nonexistent/volex.toml --quiet") == 2);
  const auto err = last_stderr();
  CHECK(err.find("/nonexistent/volex.toml") != std::string::npos);
  CHECK(nlohmann::json::parse(err)["error"] == "config");
}

TEST_CASE("usage errors") {
  CHECK(run("") == 2);
  CHECK(run("simulate") == 2);
  CHECK(run("--version") == 0);
}

TEST_CASE("schema violations exit 2") {
  const auto dir = scratch("schema");
  const auto cfg = write_config(dir, std::string(kSmallSweep) + "bogus = 1\n");
  CHECK(run("simulate --quiet --config " + cfg.string()) == 2);
  CHECK(last_stderr().find("bogus") != std::string::npos);
  std::string bad = kSmallSweep;
  bad.replace(bad.find("n_paths = 300"), 13, "n_paths = 1");
  CHECK(run("simulate --quiet --config " + write_config(dir, bad).string()) == 2);
  CHECK(run("simulate --quiet --config " + write_config(dir, "[market]\nx0 = ten\n").string()) == 2);
  CHECK(run("simulate --quiet --config " + cfg.string(), "VOLEX_SEED=abc") == 2);
}

TEST_CASE("simulate writes the sweep, paths and manifest") {
  const auto dir = scratch("simulate");
  const auto cfg = write_config(dir, kSmallSweep);
  REQUIRE(run("simulate --quiet --config " + cfg.string() + " --out-dir " + (dir / "out").string()) == 0);
  const auto sweep = lines(dir / "out" / "sweep.csv");
  REQUIRE(sweep.size() == 1 + 3 * 3);
  CHECK(sweep[0] == "epsilon,rho,strategy,J,IS,stderr,n_paths");
  const auto paths = lines(dir / "out" / "paths.csv");
  CHECK(paths.size() == 1 + 101);
  CHECK(paths[0] == "t,v,x_stat,x_adap,x_ant");
  const auto m = nlohmann::json::parse(slurp(dir / "out" / "manifest.json"));
  CHECK(m["seed"] == 1);
  CHECK(m["config_hash"].get<std::string>().size() == 40);
  for (const auto& f : m["outputs"]) CHECK(fs::exists(dir / "out" / f.get<std::string>()));
}

TEST_CASE("seeded runs are reproducible") {
  const auto dir = scratch("seed");
  const auto cfg = write_config(dir, kSmallSweep).string();
  const auto a = (dir / "a").string(), b = (dir / "b").string(), c = (dir / "c").string();
  const auto d = (dir / "d").string();
  REQUIRE(run("simulate --quiet --seed 7 --config " + cfg + " --out-dir " + a) == 0);
  REQUIRE(run("simulate --quiet --seed 7 --threads 3 --config " + cfg + " --out-dir " + b) == 0);
  REQUIRE(run("simulate --quiet --config " + cfg + " --out-dir " + c, "VOLEX_SEED=7") == 0);
  REQUIRE(run("simulate --quiet --config " + cfg + " --out-dir " + d) == 0);
  for (const char* f : {"sweep.csv", "paths.csv"}) {
    CHECK(slurp(dir / "a" / f) == slurp(dir / "b" / f));
    CHECK(slurp(dir / "a" / f) == slurp(dir / "c" / f));
  }
  CHECK(slurp(dir / "a" / "sweep.csv") != slurp(dir / "d" / "sweep.csv"));
  CHECK(nlohmann::json::parse(slurp(dir / "c" / "manifest.json"))["seed"] == 7);
  // --seed wins over the environment.
  REQUIRE(run("simulate --quiet --seed 1 --config " + cfg + " --out-dir " + b, "VOLEX_SEED=7") == 0);
  CHECK(slurp(dir / "b" / "sweep.csv") == slurp(dir / "d" / "sweep.csv"));
}

TEST_CASE("pde on the Black-Scholes validation config") {
  const auto dir = scratch("pde");
  REQUIRE(run("pde --quiet --config " + kConfigs + "/bs_validation.toml --out-dir " + dir.string()) == 0);
  const auto rows = lines(dir / "lambda_sweep.csv");
  REQUIRE(rows.size() == 4);
  CHECK(rows[0] == "lambda,J,W0,W0_exact,rel_error");
  double prev = 0.0;
  for (std::size_t i = 1; i < rows.size(); ++i) {
    std::vector<double> cols;
    std::stringstream ss(rows[i]);
    for (std::string c; std::getline(ss, c, ',');) cols.push_back(std::stod(c));
    CHECK(cols[1] >= prev);
    prev = cols[1];
    CHECK(std::abs(cols[4]) < 1e-3);
  }
  const auto report = nlohmann::json::parse(slurp(dir / "manifest.json"))["report"];
  CHECK(report["J_monotone_in_lambda"] == true);
  CHECK(report["max_W0_rel_error"].get<double>() < 1e-3);
  CHECK(lines(dir / "surface.csv")[0] == "t,y,W");
  CHECK(nlohmann::json::parse(slurp(dir / "diagnostics.json")).size() == 3);
}

TEST_CASE("pde rejects an empty lambda list") {
  const auto dir = scratch("pde_empty");
  std::string text = slurp(kConfigs + "/bs_validation.toml");
  text.replace(text.find("lambdas = [1, 10, 100]"), 22, "lambdas = []");
  CHECK(run("pde --quiet --config " + write_config(dir, text).string() + " --out-dir " + dir.string()) == 2);
  CHECK(last_stderr().find("lambdas") != std::string::npos);
  text.replace(text.find("lambdas = []"), 12, "lambdas = [10, 1]");
  CHECK(run("pde --quiet --config " + write_config(dir, text).string() + " --out-dir " + dir.string()) == 2);
}

TEST_CASE("appendix B config") {
  const auto dir = scratch("appendix_b");
  REQUIRE(run("simulate --quiet --config " + kConfigs + "/appendix_b.toml --out-dir " + dir.string()) == 0);
  const auto rows = lines(dir / "appendix_b.csv");
  CHECK(rows[0] == "t,x,X");
  CHECK(rows.size() == 1 + 1001);
}

TEST_CASE("figures merges per-figure outputs") {
  const auto dir = scratch("figures");
  const auto cfg = write_config(dir, kSmallSweep).string();
  REQUIRE(run("simulate --quiet --config " + cfg + " --out-dir " + (dir / "fig_a").string()) == 0);
  REQUIRE(run("simulate --quiet --config " + cfg + " --seed 3 --out-dir " + (dir / "fig_b").string()) == 0);
  REQUIRE(run("figures --quiet " + dir.string()) == 0);
  const auto costs = lines(dir / "figures_costs.csv");
  CHECK(costs[0] == "figure,epsilon,rho,strategy,J,IS,stderr,n_paths");
  CHECK(costs.size() == 1 + 2 * 9);
  CHECK(costs[1].rfind("fig_a,0,2,static,", 0) == 0);
  const auto paths = lines(dir / "figures_paths.csv");
  CHECK(paths.size() == 1 + 2 * 101);
  CHECK(run("figures --quiet " + (dir / "missing").string()) == 2);
}

TEST_CASE("bundled configs parse") {
  for (const char* name : {"paper_fig1", "paper_fig2", "paper_fig3a", "paper_fig3b", "paper_fig4a", "paper_fig4b",
                           "bs_validation", "appendix_b"}) {
    INFO(name);
    CHECK(fs::exists(kConfigs + "/" + name + ".toml"));
  }
  const auto dir = scratch("fig2");
  REQUIRE(run("simulate --quiet --config " + kConfigs + "/paper_fig2.toml --out-dir " + dir.string()) == 0);
  CHECK(lines(dir / "paths.csv").size() == 1 + 501);
}

TEST_CASE("bundled cost sweep has three strategies per epsilon") {
  const auto dir = scratch("fig1");
  REQUIRE(run("simulate --quiet --config " + kConfigs + "/paper_fig1.toml --out-dir " + dir.string()) == 0);
  const auto rows = lines(dir / "sweep.csv");
  REQUIRE(rows.size() == 1 + 3 * 11);
  CHECK(rows[1].rfind("0,0.3,static,", 0) == 0);
  CHECK(rows[33].rfind("1,0.3,anticipating,", 0) == 0);
}
