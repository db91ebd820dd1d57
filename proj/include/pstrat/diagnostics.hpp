#pragma once

#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

#include "pstrat/dataset.hpp"
#include "pstrat/pscore.hpp"

namespace pstrat {

// Which side of the comparison is observed directly and which is a
// score-weighted prediction, as (treated side, control side).
enum class BalanceMode {
  ObservedVsObserved,
  ObservedVsPredicted,
  PredictedVsObserved,
  PredictedVsPredicted,
};

std::string_view to_string(BalanceMode mode);

// (mean_t - mean_c) / sqrt((sd_t^2 + sd_c^2) / 2). Throws ValidationError for
// negative sds or when both are zero.
double normalized_difference(double mean_t, double mean_c, double sd_t, double sd_c);

inline constexpr int kPooledBin = -1;

struct BalanceRow {
  std::string covariate;
  Stratum stratum = Stratum::High;
  BalanceMode mode = BalanceMode::ObservedVsObserved;
  int bin = kPooledBin;  // one-sided score bin, or kPooledBin
  double mean_t = 0.0;
  double mean_c = 0.0;
  double sd_t = 0.0;
  double sd_c = 0.0;
  double delta = 0.0;
  // False when both sds are zero; delta is then NaN.
  bool defined = true;
};

struct BalanceReport {
  std::vector<BalanceRow> rows;
  std::vector<std::string> warnings;
};

// Per covariate and stratum: treated units vs controls, both weighted by the
// stratum's Weak-PI weights. Strata with no weight in either arm are skipped.
BalanceReport balance_report_twosided(const Dataset& data, const PrincipalScoreSet& scores);

// Treated units are cut into quantile bins of the High score; within each
// bin observed High and Low takers are compared. One pooled row per covariate
// averages the within-bin mean differences with bin-size weights, scaled by
// the overall High/Low sds.
BalanceReport balance_within_bins_onesided(const Dataset& data, const PrincipalScoreSet& scores,
                                           int n_bins = 5);

// covariate,stratum,mode,mean_t,mean_c,sd_t,sd_c,delta,bin
void write_balance_csv(std::ostream& out, const BalanceReport& report);
// Long format for plotting normalized differences by stratum:
// stratum,covariate,delta,abs_delta. Pooled rows only.
void write_balance_plot_data(std::ostream& out, const BalanceReport& report);

}  // namespace pstrat
