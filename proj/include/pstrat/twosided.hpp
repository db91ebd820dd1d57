#pragma once

#include <vector>

#include "pstrat/dataset.hpp"
#include "pstrat/estimate.hpp"
#include "pstrat/pscore.hpp"

namespace pstrat {

struct StrataProportions {
  double pi_a = 0.0;
  double pi_c = 0.0;
  double pi_n = 0.0;
};

// Marginal stratum shares from the observed take-up in each arm. Throws
// EstimationError when the complier share is not positive.
StrataProportions strata_proportions(const Dataset& data);

// Per-unit Weak-PI analysis weights for the three strata.
//   z=1,d=1: (a, c, n) = (pa/(pc+pa), pc/(pc+pa), 0)
//   z=0,d=0: (0, pc/(pc+pn), pn/(pc+pn))
//   z=1,d=0: (0, 0, 1)    z=0,d=1: (1, 0, 0)
struct TwoSidedWeights {
  std::vector<double> a;
  std::vector<double> c;
  std::vector<double> n;

  const std::vector<double>& of(Stratum s) const;
};

TwoSidedWeights twosided_weights(const Dataset& data, const PrincipalScoreSet& scores);

// Strata with no weight in either arm (e.g. no always-takers at all) are
// omitted from the result; weight in only one arm is an error.
EstimateSet estimate_strong_twosided(const Dataset& data, const PrincipalScoreSet& scores,
                                     double level = 0.95);
EstimateSet estimate_weak_twosided(const Dataset& data, const PrincipalScoreSet& scores,
                                   double level = 0.95);

// Weak PI on the treated side (a vs c split by phi = pc/(pc+pa)) and the
// exclusion restriction for Never Takers on the control side.
EstimateSet estimate_weak_er_nt(const Dataset& data, const PrincipalScoreSet& scores,
                                double level = 0.95);

// Exclusion restrictions for both Always and Never Takers: the usual IV
// (Wald) estimate for Compliers.
EstimateSet estimate_iv_both_er(const Dataset& data, double level = 0.95);

}  // namespace pstrat
