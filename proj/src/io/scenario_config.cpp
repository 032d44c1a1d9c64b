#include "reloop/io/scenario_config.hpp"

#include <algorithm>
#include <cerrno>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <map>
#include <set>
#include <sstream>

#include "reloop/errors.hpp"

namespace reloop::io {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split_list(const std::string& list) {
  std::vector<std::string> out;
  std::stringstream ss(list);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

struct Location {
  std::size_t line;
  std::size_t column;
};

double to_real(const std::string& v, Location at, const std::string& key) {
  errno = 0;
  char* end = nullptr;
  const double d = std::strtod(v.c_str(), &end);
  if (v.empty() || end != v.c_str() + v.size() || errno == ERANGE) {
    throw ParseError("key '" + key + "': expected a number, got '" + v + "'", at.line, at.column);
  }
  return d;
}

std::size_t to_count(const std::string& v, Location at, const std::string& key) {
  if (v.empty() || v.find_first_not_of("0123456789") != std::string::npos) {
    throw ParseError("key '" + key + "': expected a non-negative integer, got '" + v + "'",
                     at.line, at.column);
  }
  errno = 0;
  const unsigned long long n = std::strtoull(v.c_str(), nullptr, 10);
  if (errno == ERANGE) throw ParseError("key '" + key + "': value out of range", at.line, at.column);
  return static_cast<std::size_t>(n);
}

}  // namespace

std::vector<EstimatorId> parse_estimator_list(const std::string& list) {
  std::vector<EstimatorId> out;
  for (const std::string& name : split_list(list)) {
    const auto id = parse_estimator_id(name);
    if (!id) throw ConfigError("unknown estimator '" + name + "'");
    if (std::find(out.begin(), out.end(), *id) == out.end()) out.push_back(*id);
  }
  if (out.empty()) throw ConfigError("empty estimator list");
  // Reporting order regardless of the order given.
  std::vector<EstimatorId> ordered;
  for (EstimatorId id : all_estimators()) {
    if (std::find(out.begin(), out.end(), id) != out.end()) ordered.push_back(id);
  }
  return ordered;
}

ScenarioConfig parse_scenario(std::istream& in) {
  ScenarioConfig cfg;
  ScenarioSpec& s = cfg.spec;
  using Setter = std::function<void(const std::string&, Location, const std::string&)>;
  auto real = [](double& field) -> Setter {
    return [&field](const std::string& v, Location at, const std::string& key) {
      field = to_real(v, at, key);
    };
  };
  auto count = [](std::size_t& field) -> Setter {
    return [&field](const std::string& v, Location at, const std::string& key) {
      field = to_count(v, at, key);
    };
  };
  const std::map<std::string, Setter> setters = {
      {"n", count(s.n)},
      {"p", real(s.p)},
      {"k", count(s.k)},
      {"rho", real(s.rho)},
      {"nonlinear_share", real(s.nonlinear_share)},
      {"intercept", real(s.intercept)},
      {"tau", real(s.tau)},
      {"tau_het", real(s.tau_het)},
      {"group_share_sample", real(s.group_share_sample)},
      {"group_share_population", real(s.group_share_population)},
      {"group_effect_gap", real(s.group_effect_gap)},
      {"remnant_size", count(s.remnant_size)},
      {"remnant_shift", real(s.remnant_shift)},
      {"remnant_lambda", real(s.remnant_lambda)},
      {"replications", count(cfg.replications)},
      {"alpha", real(cfg.alpha)},
      {"trees", count(cfg.forest.trees)},
      {"min_leaf", count(cfg.forest.min_leaf)},
      {"mtry", count(cfg.forest.mtry)},
      {"max_depth",
       [&cfg](const std::string& v, Location at, const std::string& key) {
         cfg.forest.max_depth = to_count(v, at, key);
       }},
      {"mode",
       [&cfg](const std::string& v, Location at, const std::string&) {
         if (v == "monte_carlo") {
           cfg.mode = SimulationMode::MonteCarlo;
         } else if (v == "exact") {
           cfg.mode = SimulationMode::Exact;
         } else {
           throw ParseError("key 'mode': expected monte_carlo or exact, got '" + v + "'",
                            at.line, at.column);
         }
       }},
      {"estimators",
       [&cfg](const std::string& v, Location at, const std::string&) {
         try {
           cfg.estimators = parse_estimator_list(v);
         } catch (const ConfigError& e) {
           throw ParseError(std::string("key 'estimators': ") + e.what(), at.line, at.column);
         }
       }},
      {"baselines",
       [&cfg](const std::string& v, Location at, const std::string&) {
         cfg.baselines.clear();
         for (const std::string& name : split_list(v)) {
           if (!parse_estimator_id(name)) {
             throw ParseError("key 'baselines': unknown estimator '" + name + "'", at.line,
                              at.column);
           }
           cfg.baselines.push_back(name);
         }
       }},
  };

  std::set<std::string> seen;
  std::string raw;
  std::size_t line = 0;
  while (std::getline(in, raw)) {
    ++line;
    const auto hash = raw.find('#');
    const std::string text = hash == std::string::npos ? raw : raw.substr(0, hash);
    if (trim(text).empty()) continue;
    const auto eq = text.find('=');
    const std::size_t key_col = text.find_first_not_of(" \t") + 1;
    if (eq == std::string::npos) throw ParseError("expected 'key = value'", line, key_col);
    const std::string key = trim(text.substr(0, eq));
    const std::string value = trim(text.substr(eq + 1));
    const auto value_pos = text.find_first_not_of(" \t", eq + 1);
    const Location at{line, value_pos == std::string::npos ? eq + 2 : value_pos + 1};
    const auto it = setters.find(key);
    if (it == setters.end()) throw ParseError("unknown key '" + key + "'", line, key_col);
    if (!seen.insert(key).second) throw ParseError("repeated key '" + key + "'", line, key_col);
    it->second(value, at, key);
  }
  s.validate();
  if (!(cfg.alpha > 0.0 && cfg.alpha < 1.0)) throw ConfigError("scenario: alpha must lie in (0,1)");
  if (cfg.replications == 0) throw ConfigError("scenario: replications must be at least 1");
  if (cfg.forest.trees == 0) throw ConfigError("scenario: trees must be at least 1");
  if (cfg.forest.min_leaf == 0) throw ConfigError("scenario: min_leaf must be at least 1");
  return cfg;
}

ScenarioConfig load_scenario_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open " + path);
  try {
    return parse_scenario(in);
  } catch (const ParseError& e) {
    throw ParseError(path + ": " + e.what(), e.line(), e.column());
  }
}

nlohmann::ordered_json to_json(const ScenarioConfig& c) {
  const ScenarioSpec& s = c.spec;
  nlohmann::ordered_json j;
  j["n"] = s.n;
  j["p"] = s.p;
  j["k"] = s.k;
  j["rho"] = s.rho;
  j["nonlinear_share"] = s.nonlinear_share;
  j["intercept"] = s.intercept;
  j["tau"] = s.tau;
  j["tau_het"] = s.tau_het;
  j["group_share_sample"] = s.group_share_sample;
  j["group_share_population"] = s.group_share_population;
  j["group_effect_gap"] = s.group_effect_gap;
  j["remnant_size"] = s.remnant_size;
  j["remnant_shift"] = s.remnant_shift;
  j["remnant_lambda"] = s.remnant_lambda;
  j["mode"] = c.mode == SimulationMode::Exact ? "exact" : "monte_carlo";
  j["replications"] = c.replications;
  j["estimators"] = nlohmann::ordered_json::array();
  for (EstimatorId id : c.estimators) j["estimators"].push_back(std::string(to_string(id)));
  j["baselines"] = c.baselines;
  j["alpha"] = c.alpha;
  j["trees"] = c.forest.trees;
  j["min_leaf"] = c.forest.min_leaf;
  j["mtry"] = c.forest.mtry;
  j["max_depth"] = c.forest.max_depth ? nlohmann::ordered_json(*c.forest.max_depth)
                                      : nlohmann::ordered_json(nullptr);
  return j;
}

}  // namespace reloop::io
