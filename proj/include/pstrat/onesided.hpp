#pragma once

#include <cstdint>
#include <vector>

#include <nlohmann/json.hpp>

#include "pstrat/dataset.hpp"
#include "pstrat/estimate.hpp"
#include "pstrat/pscore.hpp"

namespace pstrat {

// Per-unit analysis weights for one target stratum. Only treated entries of
// `treated` and control entries of `control` are read.
struct StratumWeights {
  Stratum stratum = Stratum::High;
  std::vector<double> treated;
  std::vector<double> control;
};

// Weak PI: treated weight 1{observed dose matches}, control weight = score.
// Strong PI: both arms weighted by the score.
StratumWeights onesided_weights(const Dataset& data, const PrincipalScoreSet& scores,
                                Stratum stratum, Assumption assumption);

EstimateSet estimate_weighting_weak(const Dataset& data, const PrincipalScoreSet& scores,
                                    double level = 0.95);
EstimateSet estimate_weighting_strong(const Dataset& data, const PrincipalScoreSet& scores,
                                      double level = 0.95);

// Difference in means within the predicted-High (score >= treated-arm High
// fraction) and predicted-Low subgroups. Targets the effect for units
// predicted to be High Takers, not ITT_h itself.
EstimateSet estimate_discrete_subgroup(const Dataset& data, const PrincipalScoreSet& scores,
                                       double level = 0.95);

// Single binary covariate plug-in moment estimators (WeakPI or StrongPI).
EstimateSet estimate_binary_plugin(const Dataset& data, Assumption assumption,
                                   double level = 0.95);

// Exclusion restriction for Low Takers (ITT_l = 0): ITT_h is the Wald ratio.
EstimateSet estimate_er_onesided(const Dataset& data, double level = 0.95);

struct ImplicationRow {
  Stratum stratum = Stratum::High;
  double direct_mean = 0.0;    // observed treated mean of the stratum
  double weighted_mean = 0.0;  // score-weighted treated mean (Strong PI)
  double contrast = 0.0;
  double se = 0.0;
  double z = 0.0;
  bool reject = false;
};

struct ImplicationTest {
  std::vector<ImplicationRow> rows;
  int n_boot = 0;
  int failed_replicates = 0;
  double alpha = 0.05;
};

// Contrast between the direct and the Strong-PI treated-side means, with a
// bootstrap standard error over treated units (scores held fixed). Only the
// treated half of Strong PI is testable this way.
ImplicationTest strong_pi_implication_test(const Dataset& data, const PrincipalScoreSet& scores,
                                           int n_boot = 1000, std::uint64_t seed = 0,
                                           double alpha = 0.05);

nlohmann::json to_json(const ImplicationTest& test);

}  // namespace pstrat
