#pragma once

#include <algorithm>
#include <charconv>
#include <cstdint>
#include <fstream>
#include <istream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "errors.hpp"

namespace gldiff {

// Flat key = value format. '#' starts a comment, blank lines are ignored,
// lists are comma separated. Every key has a default; unknown keys are errors.
enum class FieldType { integer, real, text, real_list };

struct FieldSpec {
  std::string key;
  FieldType type;
  std::string default_value;
  std::string doc;
};

inline const std::vector<FieldSpec>& config_schema() {
  static const std::vector<FieldSpec> schema{
      {"suite", FieldType::text, "", "name of the experiment (see list-suites)"},
      {"dim", FieldType::integer, "2", "matrix dimension r"},
      {"mu", FieldType::real, "3", "drift parameter"},
      {"beta", FieldType::integer, "0", "1 real, 2 complex, 0 both where a suite supports both"},
      {"paths", FieldType::integer, "5000", "Monte Carlo paths per sample"},
      {"samples", FieldType::integer, "200000", "Monte Carlo budget for Bessel and kappa estimates"},
      {"kappa_budget", FieldType::integer, "20000", "Monte Carlo budget per kappa lattice point"},
      {"horizon", FieldType::real, "50", "time horizon T of long runs"},
      {"dt", FieldType::real, "0.001", "time step"},
      {"t", FieldType::real, "1", "observation time"},
      {"times", FieldType::real_list, "0.5,1,2", "observation times"},
      {"joint", FieldType::real_list, "0.5,1.5", "two-time joint test pair"},
      {"alpha", FieldType::real, "0.01", "test level"},
      {"permutations", FieldType::integer, "200", "energy-distance permutations"},
      {"energy_cap", FieldType::integer, "1000", "max points per group in the energy test"},
      {"probe_seed", FieldType::integer, "7", "seed of the probe vectors"},
      {"tail_tol", FieldType::real, "0.0001", "relative tail for integrals to infinity"},
      {"mean_tol", FieldType::real, "0.05", "relative tolerance on means"},
      {"tolerance", FieldType::real, "0.07", "absolute tolerance (Lyapunov rates)"},
      {"ks_bound", FieldType::real, "0.1", "KS distance bound for scaling limits"},
      {"sanity_bound", FieldType::real, "0.05", "KS distance bound for oracle sanity checks"},
      {"bandwidth", FieldType::real, "0.2", "conditioning radius in log singular values"},
      {"control_mu", FieldType::real, "2", "mu of the negative control, 0 for none"},
      {"control_paths", FieldType::integer, "1000", "paths of the Burke negative control"},
      {"index", FieldType::real, "1.5", "Bessel index of the scalar PDE check"},
      {"points", FieldType::real_list, "0.5,1,2", "scalar arguments of the PDE check"},
      {"max_dim", FieldType::integer, "6", "largest dimension of Mellin indices"},
      {"count", FieldType::integer, "1000", "number of random Mellin indices"},
      {"gamma", FieldType::real, "1", "drift of the scaling limit"},
      {"c_ladder", FieldType::real_list, "2,4,8", "scaling parameters c"},
      {"mu_z", FieldType::real, "1.5", "drift of the Z flow in the spectrum check"},
      {"log_lo", FieldType::real, "-6", "kappa lattice: smallest log eigenvalue"},
      {"log_hi", FieldType::real, "8", "kappa lattice: largest log eigenvalue"},
      {"grid_points", FieldType::integer, "21", "kappa lattice points per axis"},
      {"seed", FieldType::integer, "1", "master seed"},
      {"out", FieldType::text, "results", "output directory"},
  };
  return schema;
}

inline const FieldSpec& field_spec(const std::string& key) {
  for (const auto& f : config_schema())
    if (f.key == key) return f;
  throw ConfigError("unknown key '" + key + "'");
}

class Config {
 public:
  static Config defaults() {
    Config c;
    for (const auto& f : config_schema()) c.values_[f.key] = f.default_value;
    return c;
  }

  static Config parse(std::istream& is) {
    Config c = defaults();
    std::map<std::string, int> seen;
    std::string line;
    int no = 0;
    while (std::getline(is, line)) {
      ++no;
      if (auto h = line.find('#'); h != std::string::npos) line.erase(h);
      line = trim(line);
      if (line.empty()) continue;
      const auto eq = line.find('=');
      if (eq == std::string::npos) throw ConfigError("line " + std::to_string(no) + ": expected key = value");
      const std::string key = trim(line.substr(0, eq)), value = trim(line.substr(eq + 1));
      if (seen.count(key)) throw ConfigError("line " + std::to_string(no) + ": duplicate key '" + key + "'");
      seen[key] = no;
      try {
        c.set(key, value);
      } catch (const ConfigError& e) {
        std::string msg = e.what();
        if (msg.rfind("ConfigError: ", 0) == 0) msg.erase(0, 13);
        throw ConfigError("line " + std::to_string(no) + ": " + msg);
      }
    }
    return c;
  }

  static Config load(const std::string& file) {
    std::ifstream is(file);
    if (!is) throw ConfigError("cannot read " + file);
    return parse(is);
  }

  // type-checked assignment
  void set(const std::string& key, const std::string& value) {
    const FieldSpec& f = field_spec(key);
    switch (f.type) {
      case FieldType::integer: to_integer(key, value); break;
      case FieldType::real: to_real(key, value); break;
      case FieldType::real_list: to_list(key, value); break;
      case FieldType::text: break;
    }
    values_[key] = value;
  }

  std::int64_t integer(const std::string& key) const { return to_integer(key, raw(key)); }
  double real(const std::string& key) const { return to_real(key, raw(key)); }
  std::vector<double> list(const std::string& key) const { return to_list(key, raw(key)); }
  const std::string& text(const std::string& key) const { return raw(key); }
  const std::map<std::string, std::string>& values() const { return values_; }

 private:
  const std::string& raw(const std::string& key) const {
    auto it = values_.find(key);
    if (it == values_.end()) throw ConfigError("unknown key '" + key + "'");
    return it->second;
  }

  static std::string trim(const std::string& s) {
    const auto a = s.find_first_not_of(" \t\r");
    if (a == std::string::npos) return "";
    return s.substr(a, s.find_last_not_of(" \t\r") - a + 1);
  }

  static std::int64_t to_integer(const std::string& key, const std::string& v) {
    std::int64_t x = 0;
    auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), x);
    if (ec != std::errc() || p != v.data() + v.size()) throw ConfigError(key + ": '" + v + "' is not an integer");
    return x;
  }

  static double to_real(const std::string& key, const std::string& v) {
    double x = 0.0;
    auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), x);
    if (ec != std::errc() || p != v.data() + v.size()) throw ConfigError(key + ": '" + v + "' is not a number");
    return x;
  }

  static std::vector<double> to_list(const std::string& key, const std::string& v) {
    std::vector<double> out;
    std::stringstream ss(v);
    std::string item;
    while (std::getline(ss, item, ',')) out.push_back(to_real(key, trim(item)));
    if (out.empty()) throw ConfigError(key + ": empty list");
    return out;
  }

  std::map<std::string, std::string> values_;
};

}  // namespace gldiff
