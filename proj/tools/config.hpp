#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>
#include <json.hpp>

#include "volex/coefficient.hpp"
#include "volex/core.hpp"
#include "volex/errors.hpp"
#include "volex/hjb.hpp"
#include "volex/montecarlo.hpp"
#include "volex/strategies.hpp"
#include "volex/volume.hpp"

namespace volex::cli {

namespace pt = boost::property_tree;

/// Sectioned `key = value` file. Values may be quoted strings, bare scalars or
/// bracketed comma lists, so the bundled files also parse as TOML.
class Config {
public:
  static Config load(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("cannot read config '" + path + "'");
    std::stringstream buf;
    buf << in.rdbuf();
    Config c;
    c.path_ = path;
    c.text_ = buf.str();
    std::istringstream is(c.text_);
    try {
      pt::read_ini(is, c.tree_);
    } catch (const pt::ini_parser_error& e) {
      throw ConfigError(path + ":" + std::to_string(e.line()) + ": " + e.message());
    }
    c.check_schema();
    return c;
  }

  [[nodiscard]] const std::string& text() const { return text_; }
  [[nodiscard]] const std::string& path() const { return path_; }
  [[nodiscard]] bool has(const std::string& section) const { return tree_.get_child_optional(section).has_value(); }
  [[nodiscard]] bool has(const std::string& section, const std::string& key) const {
    return tree_.get_optional<std::string>(section + "." + key).has_value();
  }

  [[nodiscard]] std::string str(const std::string& section, const std::string& key, const std::string& dflt) const {
    auto v = tree_.get_optional<std::string>(section + "." + key);
    return v ? unquote(*v) : dflt;
  }

  [[nodiscard]] double num(const std::string& section, const std::string& key, double dflt) const {
    if (!has(section, key)) return dflt;
    return parse_double(section, key, str(section, key, ""));
  }

  [[nodiscard]] double required(const std::string& section, const std::string& key) const {
    if (!has(section, key)) throw ConfigError(path_ + ": missing required key [" + section + "] " + key);
    return num(section, key, 0.0);
  }

  [[nodiscard]] long long integer(const std::string& section, const std::string& key, long long dflt) const {
    const double v = num(section, key, static_cast<double>(dflt));
    if (v != std::floor(v)) throw ConfigError(path_ + ": [" + section + "] " + key + " must be an integer");
    return static_cast<long long>(v);
  }

  [[nodiscard]] bool flag(const std::string& section, const std::string& key, bool dflt) const {
    if (!has(section, key)) return dflt;
    const auto s = str(section, key, "");
    if (s == "true" || s == "1") return true;
    if (s == "false" || s == "0") return false;
    throw ConfigError(path_ + ": [" + section + "] " + key + " must be true or false");
  }

  [[nodiscard]] std::vector<std::string> strings(const std::string& section, const std::string& key) const {
    std::string s = str(section, key, "");
    if (!s.empty() && s.front() == '[') s.erase(0, 1);
    if (!s.empty() && s.back() == ']') s.pop_back();
    std::vector<std::string> out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ',')) {
      item = unquote(trim(item));
      if (!item.empty()) out.push_back(item);
    }
    return out;
  }

  [[nodiscard]] std::vector<double> numbers(const std::string& section, const std::string& key) const {
    std::vector<double> out;
    for (const auto& s : strings(section, key)) out.push_back(parse_double(section, key, s));
    return out;
  }

  /// Path relative to the config file's directory.
  [[nodiscard]] std::string resolve(const std::string& file) const {
    std::filesystem::path p(file);
    if (p.is_absolute()) return file;
    return (std::filesystem::path(path_).parent_path() / p).string();
  }

  [[nodiscard]] nlohmann::json echo() const {
    nlohmann::json j = nlohmann::json::object();
    for (const auto& [section, body] : tree_) {
      auto& s = j[section];
      s = nlohmann::json::object();
      for (const auto& [key, val] : body) s[key] = unquote(val.data());
    }
    return j;
  }

private:
  static std::string trim(std::string s) {
    s.erase(0, s.find_first_not_of(" \t\r"));
    s.erase(s.find_last_not_of(" \t\r") + 1);
    return s;
  }
  static std::string unquote(std::string s) {
    s = trim(s);
    if (s.size() >= 2 && (s.front() == '"' || s.front() == '\'') && s.back() == s.front()) {
      return s.substr(1, s.size() - 2);
    }
    return s;
  }

  [[nodiscard]] double parse_double(const std::string& section, const std::string& key, const std::string& s) const {
    try {
      std::size_t used = 0;
      const double v = std::stod(s, &used);
      if (used != s.size()) throw std::invalid_argument(s);
      return v;
    } catch (const std::exception&) {
      throw ConfigError(path_ + ": [" + section + "] " + key + " = '" + s + "' is not a number");
    }
  }

  void check_schema() const {
    static const std::map<std::string, std::set<std::string>> known = {
        {"market", {"kappa", "kappa_tilde", "horizon", "x0"}},
        {"volume", {"model", "v0", "b", "sigma", "table", "u_bar", "epsilon", "rho", "v_bar"}},
        {"simulation",
         {"n_paths", "n_steps", "seed", "epsilons", "rhos", "strategies", "delta_liq", "allow_negative",
          "threads"}},
        {"paths", {"epsilon", "rho", "path_index"}},
        {"pde",
         {"lambdas", "n_t", "n_y", "half_width_sd", "boundary", "theta", "newton", "surface_stride", "threads"}},
        {"appendix_b", {"mu", "sigma", "v0", "n_steps"}},
    };
    for (const auto& [section, body] : tree_) {
      auto it = known.find(section);
      if (it == known.end()) throw ConfigError(path_ + ": unknown section [" + section + "]");
      if (!body.data().empty() && body.empty()) {
        throw ConfigError(path_ + ": key '" + section + "' outside any section");
      }
      for (const auto& kv : body) {
        if (!it->second.count(kv.first)) {
          throw ConfigError(path_ + ": unknown key '" + kv.first + "' in [" + section + "]");
        }
      }
    }
  }

  std::string path_;
  std::string text_;
  pt::ptree tree_;
};

inline MarketParams market_params(const Config& c) {
  MarketParams p;
  p.kappa = c.num("market", "kappa", p.kappa);
  p.kappa_tilde = c.num("market", "kappa_tilde", p.kappa_tilde);
  p.horizon = c.num("market", "horizon", p.horizon);
  p.x0 = c.num("market", "x0", p.x0);
  p.validate();
  return p;
}

/// Volume model from [volume]. Coefficient tables (`table = file.csv`) supply
/// `b,sigma` for time_dep_bs or `u_bar` for perturbed_ou.
inline VolumeModel volume_model(const Config& c, double horizon) {
  const auto kind = c.str("volume", "model", "");
  std::map<std::string, Coefficient> table;
  if (c.has("volume", "table")) table = read_coefficient_csv(c.resolve(c.str("volume", "table", "")));
  auto column = [&](const std::string& name, double dflt) {
    if (auto it = table.find(name); it != table.end()) return it->second;
    return Coefficient::constant(c.num("volume", name, dflt));
  };
  if (kind == "time_dep_bs") {
    return VolumeModel(TimeDepBS{c.num("volume", "v0", 100.0), column("b", 0.0), column("sigma", 0.0)}, horizon);
  }
  if (kind == "perturbed_ou") {
    return VolumeModel(PerturbedOU{column("u_bar", 100.0), c.num("volume", "epsilon", 0.0),
                                   c.num("volume", "rho", 1.0), c.num("volume", "sigma", 0.3)},
                       horizon);
  }
  if (kind == "constant") return VolumeModel(ConstantVolume{c.num("volume", "v_bar", 100.0)}, horizon);
  throw ConfigError(c.path() + ": [volume] model must be time_dep_bs, perturbed_ou or constant (got '" + kind + "')");
}

inline std::vector<StrategyKind> strategy_list(const Config& c, std::vector<StrategyKind> dflt) {
  if (!c.has("simulation", "strategies")) return dflt;
  std::vector<StrategyKind> out;
  for (const auto& s : c.strings("simulation", "strategies")) out.push_back(parse_strategy(s));
  if (out.empty()) throw ConfigError(c.path() + ": [simulation] strategies is empty");
  return out;
}

inline ExperimentConfig experiment_config(const Config& c) {
  ExperimentConfig e;
  e.params = market_params(c);
  const auto model = volume_model(c, e.params.horizon);
  const auto* ou = model.get_if<PerturbedOU>();
  if (!ou) throw ConfigError(c.path() + ": experiment sweeps need [volume] model = perturbed_ou");
  e.u_bar = ou->u_bar;
  e.sigma = ou->sigma;
  e.epsilons = c.has("simulation", "epsilons") ? c.numbers("simulation", "epsilons") : std::vector{ou->epsilon};
  e.rhos = c.has("simulation", "rhos") ? c.numbers("simulation", "rhos") : std::vector{ou->rho};
  e.strategies = strategy_list(c, e.strategies);
  e.n_paths = static_cast<std::size_t>(c.integer("simulation", "n_paths", static_cast<long long>(e.n_paths)));
  e.n_steps = static_cast<int>(c.integer("simulation", "n_steps", e.n_steps));
  e.seed = static_cast<std::uint64_t>(c.integer("simulation", "seed", static_cast<long long>(e.seed)));
  e.delta_liq = c.num("simulation", "delta_liq", e.delta_liq);
  e.allow_negative = c.flag("simulation", "allow_negative", e.allow_negative);
  e.threads = static_cast<int>(c.integer("simulation", "threads", e.threads));
  if (e.epsilons.empty() || e.rhos.empty()) throw ConfigError(c.path() + ": empty epsilon or rho list");
  try {
    e.validate();
  } catch (const DomainError& err) {
    throw ConfigError(c.path() + ": " + err.what());
  }
  return e;
}

inline BoundaryMode boundary_mode(const Config& c) {
  const auto s = c.str("pde", "boundary", "auto");
  if (s == "auto") return BoundaryMode::Auto;
  if (s == "natural") return BoundaryMode::Natural;
  if (s == "closed_form") return BoundaryMode::ClosedForm;
  if (s == "log_linear") return BoundaryMode::LogLinear;
  throw ConfigError(c.path() + ": [pde] boundary must be auto, natural, closed_form or log_linear");
}

}  // namespace volex::cli
