#pragma once

#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "pstrat/dataset.hpp"
#include "pstrat/variance.hpp"

namespace pstrat {

struct StratumEstimate {
  Stratum stratum = Stratum::High;
  double mu1 = 0.0;
  double mu0 = 0.0;
  double itt = 0.0;
  double se = 0.0;
  double ci_lo = 0.0;
  double ci_hi = 0.0;
  double n_eff1 = 0.0;
  double n_eff0 = 0.0;
  // ITT pinned by an exclusion restriction rather than estimated.
  bool fixed_by_assumption = false;
};

struct EstimateSet {
  Design design = Design::OneSided;
  Assumption assumption = Assumption::WeakPI;
  std::string method;
  double level = 0.95;
  CIMethod ci_method = CIMethod::AnalyticNormal;
  std::vector<StratumEstimate> strata;
  std::vector<std::string> notes;

  bool has(Stratum s) const;
  // Throws EstimationError when the stratum was not estimated.
  const StratumEstimate& at(Stratum s) const;
  StratumEstimate& at(Stratum s);
};

// Sets itt = mu1 - mu0 and the normal CI from se.
void finalize(StratumEstimate& est, double level);

// Weighted mean over the units of arm z; weights are indexed by unit.
WeightedMean arm_mean(const Dataset& data, std::span<const double> unit_weights, int z);

// Plain mean of the (z, d) cell. Throws EstimationError when empty.
WeightedMean cell_mean(const Dataset& data, int z, int d);

// Weighted difference in means: treated units weighted by w1, controls by w0.
StratumEstimate weighted_difference(const Dataset& data, Stratum stratum,
                                    std::span<const double> w1, std::span<const double> w0,
                                    double level);

// itt = mu1 - mu0, ci contains itt, positive mass in each estimated arm.
// Throws InvariantViolation.
void check_estimate(const EstimateSet& est);

nlohmann::json to_json(const EstimateSet& est);
void write_estimate_csv(std::ostream& out, const EstimateSet& est, bool header);
std::string render_table(const EstimateSet& est);

}  // namespace pstrat
