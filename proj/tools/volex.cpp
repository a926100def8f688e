// volex: simulate / pde / figures front end.

#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <openssl/evp.h>

#include <CLI11.hpp>
#include <json.hpp>

#include "config.hpp"
#include "volex/csv.hpp"
#include "volex/errors.hpp"
#include "volex/expansion.hpp"
#include "volex/hjb.hpp"
#include "volex/montecarlo.hpp"
#include "volex/strategies.hpp"

#ifndef VOLEX_VERSION
#define VOLEX_VERSION "0.0.0"
#endif

namespace fs = std::filesystem;
using nlohmann::json;
using namespace volex;
using volex::cli::Config;

namespace {

struct Options {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out_dir = ".";
  int threads = 0;  // 0: take from config
  bool quiet = false;
  std::string figures_dir;
};

/// SHA-1 of the git blob object for `data`, as `git hash-object` prints it.
std::string git_blob_hash(const std::string& data) {
  const std::string obj = "blob " + std::to_string(data.size()) + '\0' + data;
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (!EVP_Digest(obj.data(), obj.size(), md, &len, EVP_sha1(), nullptr)) {
    throw std::runtime_error("SHA-1 digest failed");
  }
  std::ostringstream hex;
  for (unsigned int i = 0; i < len; ++i) hex << std::hex << std::setw(2) << std::setfill('0') << int(md[i]);
  return hex.str();
}

class Run {
public:
  Run(std::string command, const Options& opt) : command_(std::move(command)), opt_(opt) {
    start_ = std::chrono::steady_clock::now();
    fs::create_directories(opt.out_dir);
  }

  std::ofstream open(const std::string& name) {
    const auto path = (fs::path(opt_.out_dir) / name).string();
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ConfigError("cannot write '" + path + "'");
    outputs_.push_back(name);
    return out;
  }

  void log(const std::string& msg) const {
    if (!opt_.quiet) std::cerr << msg << '\n';
  }

  json report = json::object();

  void finish(const Config* cfg, std::optional<std::uint64_t> seed) {
    json m;
    m["tool"] = "volex";
    m["version"] = VOLEX_VERSION;
    m["command"] = command_;
    if (cfg) {
      m["config_path"] = cfg->path();
      m["config_hash"] = git_blob_hash(cfg->text());
      m["config"] = cfg->echo();
    }
    if (seed) m["seed"] = *seed;
    m["report"] = report;
    m["outputs"] = outputs_;
    m["wall_clock_seconds"] = std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
    auto out = open("manifest.json");
    out << m.dump(2) << '\n';
  }

private:
  std::string command_;
  const Options& opt_;
  std::chrono::steady_clock::time_point start_;
  std::vector<std::string> outputs_;
};

/// Seed precedence: --seed, then VOLEX_SEED, then the config value.
std::uint64_t resolve_seed(const Options& opt, const Config& cfg, std::uint64_t from_config) {
  if (opt.seed) return *opt.seed;
  if (const char* env = std::getenv("VOLEX_SEED"); env && *env) {
    try {
      std::size_t used = 0;
      const auto v = std::stoull(env, &used);
      if (used != std::string(env).size()) throw std::invalid_argument(env);
      return v;
    } catch (const std::exception&) {
      throw ConfigError("VOLEX_SEED='" + std::string(env) + "' is not an unsigned integer");
    }
  }
  (void)cfg;
  return from_config;
}

int threads_for(const Options& opt, const Config& cfg, const std::string& section) {
  if (opt.threads > 0) return opt.threads;
  return static_cast<int>(cfg.integer(section, "threads", 1));
}

void write_appendix_b(const Config& cfg, Run& run) {
  const auto params = cli::market_params(cfg);
  AppendixBParams ab;
  ab.mu = cfg.required("appendix_b", "mu");
  ab.sigma = cfg.num("appendix_b", "sigma", ab.sigma);
  ab.v0 = cfg.num("appendix_b", "v0", ab.v0);
  const TimeGrid grid(params.horizon, static_cast<int>(cfg.integer("appendix_b", "n_steps", 1000)));
  const auto sched = appendix_b_strategy(params, ab, grid);
  auto out = run.open("appendix_b.csv");
  out << "t,x,X\n";
  for (int k = 0; k <= grid.n_steps(); ++k) csv::row(out, grid.t(k), sched.rates()[k], sched.holdings()[k]);
  const char* names[] = {"oscillatory", "critical", "exponential"};
  run.report["appendix_b"] = {{"case", names[static_cast<int>(appendix_b_case(params, ab))]},
                              {"mu_tilde", ab.mu_tilde()},
                              {"discriminant", ab.discriminant(params)},
                              {"gamma", ab.gamma(params)},
                              {"cost", appendix_b_cost(params, ab, sched, grid)},
                              {"min_rate", sched.min_rate()}};
}

int cmd_simulate(const Options& opt) {
  const auto cfg = Config::load(opt.config);
  Run run("simulate", opt);
  std::optional<std::uint64_t> seed;
  if (cfg.has("appendix_b")) write_appendix_b(cfg, run);
  if (cfg.has("volume")) {
    const auto params = cli::market_params(cfg);
    const auto model = cli::volume_model(cfg, params.horizon);
    seed = resolve_seed(opt, cfg, static_cast<std::uint64_t>(cfg.integer("simulation", "seed", 1)));
    const int threads = threads_for(opt, cfg, "simulation");
    SweepResult result;
    std::optional<ExperimentConfig> exp;
    if (model.get_if<PerturbedOU>()) {
      exp = cli::experiment_config(cfg);
      exp->seed = *seed;
      exp->threads = threads;
      run.log("simulate: " + std::to_string(exp->epsilons.size() * exp->rhos.size()) + " sweep points, " +
              std::to_string(exp->n_paths) + " paths each");
      result = epsilon_sweep(*exp);
    } else {
      const auto strategies =
          cli::strategy_list(cfg, {StrategyKind::Twap, StrategyKind::ExpectedVwap, StrategyKind::ExactVwap});
      const auto n_paths = static_cast<std::size_t>(cfg.integer("simulation", "n_paths", 50000));
      if (n_paths < 2) throw ConfigError(cfg.path() + ": [simulation] n_paths must be >= 2");
      const TimeGrid grid(params.horizon, static_cast<int>(cfg.integer("simulation", "n_steps", 500)));
      CostEvaluator eval(params, model, grid, strategies, cfg.num("simulation", "delta_liq", 0.02));
      const auto costs = eval.run(n_paths, *seed, threads);
      for (std::size_t s = 0; s < strategies.size(); ++s) {
        result.rows.push_back({0.0, 0.0, strategies[s], make_cost_report(params, costs.per_strategy[s]),
                               costs.floor_events[s]});
      }
      if (const auto* bs = model.get_if<TimeDepBS>()) {
        run.report["closed_form_J"] = bs_adaptive_value(params, bs->v0, bs->drift, bs->vol);
      }
    }
    {
      auto out = run.open("sweep.csv");
      result.write_csv(out);
    }
    json floors = json::array();
    for (const auto& r : result.rows) {
      if (r.strategy == StrategyKind::Adaptive) {
        floors.push_back({{"epsilon", r.epsilon}, {"rho", r.rho}, {"floor_events", r.floor_events}});
      }
    }
    if (!floors.empty()) run.report["adaptive_floor_events"] = floors;
    if (cfg.has("paths")) {
      if (!exp) throw ConfigError(cfg.path() + ": [paths] needs a perturbed_ou volume model");
      const auto sample = sample_paths(*exp, cfg.num("paths", "epsilon", exp->epsilons.front()),
                                       cfg.num("paths", "rho", exp->rhos.front()),
                                       static_cast<std::size_t>(cfg.integer("paths", "path_index", 0)));
      auto out = run.open("paths.csv");
      sample.write_csv(out);
    }
    run.log("simulate: wrote " + (fs::path(opt.out_dir) / "sweep.csv").string());
  }
  if (!cfg.has("volume") && !cfg.has("appendix_b")) {
    throw ConfigError(cfg.path() + ": nothing to simulate (no [volume] or [appendix_b] section)");
  }
  run.finish(&cfg, seed);
  return 0;
}

int cmd_pde(const Options& opt) {
  const auto cfg = Config::load(opt.config);
  Run run("pde", opt);
  const auto params = cli::market_params(cfg);
  const auto model = cli::volume_model(cfg, params.horizon);
  if (!cfg.has("pde", "lambdas")) throw ConfigError(cfg.path() + ": missing required key [pde] lambdas");
  const auto lambdas = cfg.numbers("pde", "lambdas");
  if (lambdas.empty()) throw ConfigError(cfg.path() + ": [pde] lambdas must not be empty");
  for (std::size_t i = 0; i < lambdas.size(); ++i) {
    if (!(lambdas[i] > 0.0) || (i > 0 && !(lambdas[i] > lambdas[i - 1]))) {
      throw ConfigError(cfg.path() + ": [pde] lambdas must be positive and increasing");
    }
  }
  PdeGrid grid;
  grid.n_t = static_cast<int>(cfg.integer("pde", "n_t", grid.n_t));
  grid.n_y = static_cast<int>(cfg.integer("pde", "n_y", grid.n_y));
  grid.half_width_sd = cfg.num("pde", "half_width_sd", grid.half_width_sd);
  SolverOptions so;
  so.boundary = cli::boundary_mode(cfg);
  so.theta = cfg.num("pde", "theta", so.theta);
  so.newton = cfg.flag("pde", "newton", so.newton);
  try {
    grid.validate();
  } catch (const DomainError& e) {
    throw ConfigError(cfg.path() + ": " + e.what());
  }
  const double x0 = params.x0;
  run.log("pde: solving " + std::to_string(lambdas.size()) + " penalized problems");
  const auto sweep = lambda_sweep(model, lambdas, x0, grid, so, threads_for(opt, cfg, "pde"));

  std::optional<TimeDepBS> bs;
  if (!model.get_if<PerturbedOU>()) bs = detail::as_black_scholes(model);
  const double v0 = model.initial_volume();
  {
    auto out = run.open("lambda_sweep.csv");
    out << "lambda,J,W0,W0_exact,rel_error\n";
    for (const auto& e : sweep.entries) {
      const double w = e.surface.initial_value();
      const double exact = bs ? bs_closed_form_w(*bs, params.horizon, e.lambda, 0.0, v0) : std::nan("");
      csv::row(out, e.lambda, e.j, w, exact, bs ? w / exact - 1.0 : std::nan(""));
    }
  }
  {
    auto out = run.open("surface.csv");
    sweep.entries.back().surface.write_csv(out, static_cast<int>(cfg.integer("pde", "surface_stride", 20)));
  }
  json diag = json::array();
  bool monotone = true;
  for (std::size_t i = 0; i < sweep.entries.size(); ++i) {
    diag.push_back({{"lambda", sweep.entries[i].lambda}, {"diagnostics", sweep.entries[i].surface.diagnostics.to_json()}});
    if (i > 0 && sweep.entries[i].j < sweep.entries[i - 1].j) monotone = false;
  }
  {
    auto out = run.open("diagnostics.json");
    out << diag.dump(2) << '\n';
  }
  run.report["J_extrapolated"] = sweep.extrapolated;
  run.report["J_monotone_in_lambda"] = monotone;
  if (bs) {
    const double j = bs_adaptive_value(params, bs->v0, bs->drift, bs->vol);
    double worst = 0.0;
    for (const auto& e : sweep.entries) {
      const double exact = bs_closed_form_w(*bs, params.horizon, e.lambda, 0.0, v0);
      worst = std::max(worst, std::abs(e.surface.initial_value() / exact - 1.0));
    }
    run.report["J_closed_form"] = j;
    run.report["J_extrapolated_rel_error"] = sweep.extrapolated / j - 1.0;
    run.report["max_W0_rel_error"] = worst;
    run.log("pde: max closed-form rel. error " + csv::format(worst));
  }
  run.finish(&cfg, std::nullopt);
  return 0;
}

std::vector<std::string> read_lines(const fs::path& p) {
  std::ifstream in(p);
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (!line.empty()) lines.push_back(line);
  }
  return lines;
}

/// Merges `<dir>/<figure>/sweep.csv` and `paths.csv` into two tables keyed by figure name.
int cmd_figures(const Options& opt) {
  const fs::path root(opt.figures_dir);
  if (!fs::is_directory(root)) throw ConfigError("figures: '" + root.string() + "' is not a directory");
  std::vector<fs::path> dirs;
  for (const auto& entry : fs::directory_iterator(root)) {
    if (entry.is_directory()) dirs.push_back(entry.path());
  }
  std::sort(dirs.begin(), dirs.end());
  Run run("figures", opt);
  auto costs = run.open("figures_costs.csv");
  auto paths = run.open("figures_paths.csv");
  costs << "figure,epsilon,rho,strategy,J,IS,stderr,n_paths\n";
  paths << "figure,t,v,x_stat,x_adap,x_ant\n";
  int merged = 0;
  for (const auto& d : dirs) {
    const auto name = d.filename().string();
    for (auto [file, out, header] : {std::tuple{"sweep.csv", &costs, "epsilon,rho,strategy,J,IS,stderr,n_paths"},
                                     std::tuple{"paths.csv", &paths, "t,v,x_stat,x_adap,x_ant"}}) {
      const auto p = d / file;
      if (!fs::exists(p)) continue;
      const auto lines = read_lines(p);
      if (lines.empty() || lines[0] != header) throw ConfigError("figures: unexpected header in " + p.string());
      for (std::size_t i = 1; i < lines.size(); ++i) *out << name << ',' << lines[i] << '\n';
      ++merged;
    }
  }
  if (merged == 0) throw ConfigError("figures: no sweep.csv or paths.csv under '" + root.string() + "'");
  run.report["merged_files"] = merged;
  run.finish(nullptr, std::nullopt);
  return 0;
}

void error_line(const char* kind, const std::string& msg) {
  std::cerr << json{{"error", kind}, {"message", msg}}.dump() << '\n';
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Volume-dependent optimal execution: Monte Carlo, HJB and expansion tools"};
  app.set_version_flag("--version", VOLEX_VERSION);
  app.require_subcommand(1);
  Options opt;
  std::uint64_t seed_flag = 0;

  auto add_common = [&](CLI::App* sub, bool needs_config) {
    auto* c = sub->add_option("--config", opt.config, "experiment config file");
    if (needs_config) c->required();
    sub->add_option("--seed", seed_flag, "RNG seed (overrides VOLEX_SEED and the config)");
    sub->add_option("--out-dir", opt.out_dir, "output directory")->capture_default_str();
    sub->add_option("--threads", opt.threads, "worker threads (default: config value or 1)")
        ->check(CLI::NonNegativeNumber);
    sub->add_flag("--quiet", opt.quiet, "suppress progress messages");
  };
  auto* sim = app.add_subcommand("simulate", "Monte Carlo cost sweep (sweep.csv, paths.csv, manifest.json)");
  add_common(sim, true);
  auto* pde = app.add_subcommand("pde", "penalized HJB solves and lambda sweep (lambda_sweep.csv, surface.csv)");
  add_common(pde, true);
  auto* fig = app.add_subcommand("figures", "merge per-figure outputs into plot-ready tables");
  add_common(fig, false);
  fig->add_option("dir", opt.figures_dir, "directory holding one subdirectory per figure run")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);
    error_line("usage", e.what());
    return 2;
  }
  for (auto* sub : {sim, pde, fig}) {
    if (sub->parsed() && sub->count("--seed")) opt.seed = seed_flag;
  }
  if (fig->parsed() && opt.out_dir == ".") opt.out_dir = opt.figures_dir;

  try {
    if (sim->parsed()) return cmd_simulate(opt);
    if (pde->parsed()) return cmd_pde(opt);
    return cmd_figures(opt);
  } catch (const ConfigError& e) {
    error_line("config", e.what());
    return 2;
  } catch (const SolverError& e) {
    error_line("numerical", e.what());
    return 3;
  } catch (const UnsupportedRegime& e) {
    error_line("numerical", e.what());
    return 3;
  } catch (const DomainError& e) {
    error_line("config", e.what());
    return 2;
  } catch (const StructuralError& e) {
    error_line("config", e.what());
    return 2;
  } catch (const std::exception& e) {
    error_line("internal", e.what());
    return 1;
  }
}
