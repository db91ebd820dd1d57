#include "pstrat/estimate.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <ostream>
#include <sstream>

#include "pstrat/error.hpp"

namespace pstrat {

bool EstimateSet::has(Stratum s) const {
  return std::any_of(strata.begin(), strata.end(),
                     [s](const StratumEstimate& e) { return e.stratum == s; });
}

const StratumEstimate& EstimateSet::at(Stratum s) const {
  for (const auto& e : strata) {
    if (e.stratum == s) return e;
  }
  throw EstimationError("stratum " + std::string(to_string(s)) + " was not estimated");
}

StratumEstimate& EstimateSet::at(Stratum s) {
  return const_cast<StratumEstimate&>(static_cast<const EstimateSet&>(*this).at(s));
}

void finalize(StratumEstimate& est, double level) {
  est.itt = est.mu1 - est.mu0;
  const double half = normal_critical_value(level) * est.se;
  est.ci_lo = est.itt - half;
  est.ci_hi = est.itt + half;
}

WeightedMean arm_mean(const Dataset& data, std::span<const double> unit_weights, int z) {
  if (unit_weights.size() != data.size()) throw ValidationError("weight vector length mismatch");
  std::vector<double> w, y;
  for (std::size_t i = 0; i < data.size(); ++i) {
    if (data.z(i) != z) continue;
    w.push_back(unit_weights[i]);
    y.push_back(data.y(i));
  }
  return weighted_mean(w, y);
}

WeightedMean cell_mean(const Dataset& data, int z, int d) {
  std::vector<double> w, y;
  for (std::size_t i = 0; i < data.size(); ++i) {
    if (data.z(i) == z && data.d(i) == d) {
      w.push_back(1.0);
      y.push_back(data.y(i));
    }
  }
  if (w.empty()) {
    throw EstimationError("empty cell (z=" + std::to_string(z) + ", d=" + std::to_string(d) + ")");
  }
  return weighted_mean(w, y);
}

StratumEstimate weighted_difference(const Dataset& data, Stratum stratum,
                                    std::span<const double> w1, std::span<const double> w0,
                                    double level) {
  StratumEstimate est;
  est.stratum = stratum;
  WeightedMean treated, control;
  try {
    treated = arm_mean(data, w1, 1);
    control = arm_mean(data, w0, 0);
  } catch (const EstimationError&) {
    throw EstimationError("zero weight mass for stratum " + std::string(to_string(stratum)) +
                          " in one arm");
  }
  est.mu1 = treated.mean;
  est.mu0 = control.mean;
  est.n_eff1 = treated.mass;
  est.n_eff0 = control.mass;
  est.se = std::sqrt(treated.variance + control.variance);
  finalize(est, level);
  return est;
}

void check_estimate(const EstimateSet& est) {
  for (const auto& e : est.strata) {
    const auto name = std::string(to_string(e.stratum));
    if (e.itt != e.mu1 - e.mu0) throw InvariantViolation("itt != mu1 - mu0 for " + name);
    // A percentile interval may legitimately miss the point estimate.
    if (est.ci_method == CIMethod::AnalyticNormal && !(e.ci_lo <= e.itt && e.itt <= e.ci_hi)) {
      throw InvariantViolation("confidence interval excludes the estimate for " + name);
    }
    if (!(e.ci_lo <= e.ci_hi)) throw InvariantViolation("inverted confidence interval for " + name);
    if (!e.fixed_by_assumption && !(e.n_eff1 > 0.0 && e.n_eff0 > 0.0)) {
      throw InvariantViolation("non-positive effective sample size for " + name);
    }
  }
}

nlohmann::json to_json(const EstimateSet& est) {
  nlohmann::json j;
  j["design"] = to_string(est.design);
  j["assumption"] = to_string(est.assumption);
  j["method"] = est.method;
  j["level"] = est.level;
  j["ci_method"] = to_string(est.ci_method);
  nlohmann::json strata = nlohmann::json::object();
  for (const auto& e : est.strata) {
    strata[std::string(stratum_key(e.stratum))] = {
        {"mu1", e.mu1},       {"mu0", e.mu0},       {"itt", e.itt},
        {"se", e.se},         {"ci_lo", e.ci_lo},   {"ci_hi", e.ci_hi},
        {"n_eff_1", e.n_eff1}, {"n_eff_0", e.n_eff0}, {"fixed_by_assumption", e.fixed_by_assumption}};
  }
  j["strata"] = strata;
  j["notes"] = est.notes;
  return j;
}

void write_estimate_csv(std::ostream& out, const EstimateSet& est, bool header) {
  static constexpr const char* kFields[] = {"mu1", "mu0", "itt", "se", "ci_lo", "ci_hi",
                                            "n_eff_1", "n_eff_0"};
  if (header) {
    out << "design,assumption,method";
    for (const auto& e : est.strata) {
      for (const auto* f : kFields) out << ',' << stratum_key(e.stratum) << '_' << f;
    }
    out << '\n';
  }
  out << to_string(est.design) << ',' << to_string(est.assumption) << ',' << est.method;
  for (const auto& e : est.strata) {
    for (const double v : {e.mu1, e.mu0, e.itt, e.se, e.ci_lo, e.ci_hi, e.n_eff1, e.n_eff0}) {
      out << ',' << format_double(v);
    }
  }
  out << '\n';
}

std::string render_table(const EstimateSet& est) {
  std::ostringstream os;
  os << "design: " << to_string(est.design) << "   assumption: " << to_string(est.assumption)
     << "   method: " << est.method << '\n';
  char line[160];
  std::snprintf(line, sizeof line, "%-14s %10s %10s %10s %10s %22s\n", "stratum", "mu1", "mu0",
                "ITT", "SE", "CI");
  os << line;
  for (const auto& e : est.strata) {
    char ci[64];
    std::snprintf(ci, sizeof ci, "[%.4f, %.4f]", e.ci_lo, e.ci_hi);
    std::snprintf(line, sizeof line, "%-14s %10.4f %10.4f %10.4f %10.4f %22s%s\n",
                  std::string(to_string(e.stratum)).c_str(), e.mu1, e.mu0, e.itt, e.se, ci,
                  e.fixed_by_assumption ? "  (fixed)" : "");
    os << line;
  }
  for (const auto& note : est.notes) os << "note: " << note << '\n';
  return os.str();
}

}  // namespace pstrat
