#pragma once

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <limits>
#include <ostream>
#include <string>

#include "verify.hpp"

namespace gldiff {

using Json = nlohmann::ordered_json;

namespace detail {

// JSON has no inf/nan; they are written as strings.
inline Json number(double x) {
  if (std::isfinite(x)) return x;
  if (std::isnan(x)) return "nan";
  return x > 0 ? "inf" : "-inf";
}

inline std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string q = "\"";
  for (char c : s) q += c == '"' ? std::string("\"\"") : std::string(1, c);
  return q + "\"";
}

}  // namespace detail

// Runtime is not part of the report; it goes to the run manifest.
inline Json report_json(const VerificationReport& rep) {
  using detail::number;
  Json j;
  j["identity"] = rep.identity;
  j["seed"] = rep.seed;
  j["alpha"] = number(rep.alpha);
  j["passed"] = rep.passed();
  Json tests = Json::array();
  for (const auto& t : rep.tests) {
    Json jt;
    jt["label"] = t.label;
    jt["n_a"] = t.n_a;
    jt["n_b"] = t.n_b;
    jt["energy_statistic"] = number(t.energy.statistic);
    jt["energy_p"] = number(t.energy.p_value);
    jt["permutations"] = t.energy.permutations;
    jt["ks_min_p_bonferroni"] = number(t.ks_min_p_bonferroni);
    jt["expect_reject"] = t.expect_reject;
    jt["rejected"] = t.rejected;
    jt["passed"] = t.passed();
    Json fs = Json::array();
    for (const auto& f : t.functionals)
      fs.push_back({{"name", f.name},
                    {"mean_a", number(f.a.mean)},
                    {"se_a", number(f.a.std_error)},
                    {"mean_b", number(f.b.mean)},
                    {"se_b", number(f.b.std_error)},
                    {"ks_D", number(f.ks.statistic)},
                    {"ks_p", number(f.ks.p_value)}});
    jt["functionals"] = std::move(fs);
    tests.push_back(std::move(jt));
  }
  j["tests"] = std::move(tests);
  Json metrics = Json::array();
  for (const auto& m : rep.metrics)
    metrics.push_back({{"name", m.name},
                       {"value", number(m.value)},
                       {"std_error", number(m.std_error)},
                       {"target", number(m.target)},
                       {"tolerance", number(m.tolerance)},
                       {"passed", m.passed},
                       {"blocking", m.blocking}});
  j["metrics"] = std::move(metrics);
  j["notes"] = rep.notes;
  return j;
}

// kind,label,name,value,reference,passed,blocking
inline void write_summary_csv(std::ostream& os, const VerificationReport& rep) {
  using detail::csv_field;
  os << "kind,label,name,value,reference,passed,blocking\n" << std::setprecision(10);
  for (const auto& t : rep.tests) {
    os << "test," << csv_field(t.label) << ",energy_p," << t.energy.p_value << ',' << rep.alpha << ','
       << t.passed() << ",1\n";
    os << "test," << csv_field(t.label) << ",ks_min_p_bonferroni," << t.ks_min_p_bonferroni << ',' << rep.alpha
       << ",,0\n";
  }
  for (const auto& m : rep.metrics)
    os << "metric,," << csv_field(m.name) << ',' << m.value << ',' << m.target << ',' << m.passed << ','
       << m.blocking << '\n';
}

// Long format: series,index,value. Two-sample functionals appear as
// "<test>/<functional>/a" and ".../b".
inline void write_sample_dump_csv(std::ostream& os, const VerificationReport& rep) {
  using detail::csv_field;
  os << "series,index,value\n" << std::setprecision(17);
  auto emit = [&](const std::string& series, const std::vector<double>& v) {
    const std::string s = csv_field(series);
    for (std::size_t i = 0; i < v.size(); ++i) os << s << ',' << i << ',' << v[i] << '\n';
  };
  for (const auto& t : rep.tests)
    for (const auto& f : t.functionals) {
      emit(t.label + "/" + f.name + "/a", f.a_values);
      emit(t.label + "/" + f.name + "/b", f.b_values);
    }
  for (const auto& s : rep.samples) emit(s.name, s.values);
}

// Long format histograms over a common range per functional:
// series,bin_lo,bin_hi,density
inline void write_histogram_csv(std::ostream& os, const VerificationReport& rep, int bins = 40) {
  using detail::csv_field;
  os << "series,bin_lo,bin_hi,density\n" << std::setprecision(10);
  auto hist = [&](const std::string& series, const std::vector<double>& v, double lo, double hi) {
    if (v.empty() || !(hi > lo)) return;
    std::vector<double> count(bins, 0.0);
    const double w = (hi - lo) / bins;
    for (double x : v) {
      if (!std::isfinite(x)) continue;
      const int b = std::clamp(static_cast<int>((x - lo) / w), 0, bins - 1);
      count[b] += 1.0;
    }
    const std::string s = csv_field(series);
    for (int b = 0; b < bins; ++b)
      os << s << ',' << lo + b * w << ',' << lo + (b + 1) * w << ',' << count[b] / (v.size() * w) << '\n';
  };
  auto range = [](std::vector<double> v) {
    std::erase_if(v, [](double x) { return !std::isfinite(x); });
    if (v.size() < 2) return std::pair<double, double>{0.0, 0.0};
    std::sort(v.begin(), v.end());
    // range without the extreme 0.5% on each side
    const std::size_t k = v.size() / 200;
    return std::pair<double, double>{v[k], v[v.size() - 1 - k]};
  };
  for (const auto& t : rep.tests)
    for (const auto& f : t.functionals) {
      std::vector<double> both = f.a_values;
      both.insert(both.end(), f.b_values.begin(), f.b_values.end());
      const auto [lo, hi] = range(both);
      hist(t.label + "/" + f.name + "/a", f.a_values, lo, hi);
      hist(t.label + "/" + f.name + "/b", f.b_values, lo, hi);
    }
  for (const auto& s : rep.samples) {
    const auto [lo, hi] = range(s.values);
    hist(s.name, s.values, lo, hi);
  }
}

}  // namespace gldiff
