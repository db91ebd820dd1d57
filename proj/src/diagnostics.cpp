#include "pstrat/diagnostics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <ostream>

#include "pstrat/error.hpp"
#include "pstrat/twosided.hpp"

namespace pstrat {

namespace {

struct Moments {
  double mean = 0.0;
  double sd = 0.0;
  double mass = 0.0;
};

// Weighted mean and sd with denominator sum(w).
template <class WeightFn>
Moments weighted_moments(const Eigen::MatrixXd& x, Eigen::Index col,
                         const std::vector<std::size_t>& rows, WeightFn weight) {
  Moments m;
  double sum = 0.0;
  for (const auto i : rows) {
    const double w = weight(i);
    m.mass += w;
    sum += w * x(static_cast<Eigen::Index>(i), col);
  }
  if (m.mass <= 0.0) return m;
  m.mean = sum / m.mass;
  // A constant column must give sd exactly 0, not roundoff.
  bool constant = true;
  double first = 0.0;
  bool seen = false;
  for (const auto i : rows) {
    if (weight(i) <= 0.0) continue;
    const double v = x(static_cast<Eigen::Index>(i), col);
    if (seen && v != first) {
      constant = false;
      break;
    }
    first = v;
    seen = true;
  }
  if (constant) {
    m.mean = first;
    return m;
  }
  double ss = 0.0;
  for (const auto i : rows) {
    const double r = x(static_cast<Eigen::Index>(i), col) - m.mean;
    ss += weight(i) * r * r;
  }
  m.sd = std::sqrt(std::max(0.0, ss / m.mass));
  return m;
}

void fill_delta(BalanceRow& row) {
  if (row.sd_t == 0.0 && row.sd_c == 0.0) {
    row.defined = false;
    row.delta = std::numeric_limits<double>::quiet_NaN();
  } else {
    row.delta = normalized_difference(row.mean_t, row.mean_c, row.sd_t, row.sd_c);
  }
}

BalanceMode mode_for(Stratum s) {
  switch (s) {
    case Stratum::Always: return BalanceMode::PredictedVsObserved;
    case Stratum::Never: return BalanceMode::ObservedVsPredicted;
    case Stratum::Complier: return BalanceMode::PredictedVsPredicted;
    default: return BalanceMode::ObservedVsObserved;
  }
}

std::string delta_text(const BalanceRow& row) {
  return row.defined ? format_double(row.delta) : std::string("NA");
}

}  // namespace

std::string_view to_string(BalanceMode mode) {
  switch (mode) {
    case BalanceMode::ObservedVsObserved: return "observed_vs_observed";
    case BalanceMode::ObservedVsPredicted: return "observed_vs_predicted";
    case BalanceMode::PredictedVsObserved: return "predicted_vs_observed";
    case BalanceMode::PredictedVsPredicted: return "predicted_vs_predicted";
  }
  return "?";
}

double normalized_difference(double mean_t, double mean_c, double sd_t, double sd_c) {
  if (!(sd_t >= 0.0) || !(sd_c >= 0.0)) {
    throw ValidationError("standard deviations must be non-negative");
  }
  if (sd_t == 0.0 && sd_c == 0.0) {
    throw ValidationError("normalized difference is undefined when both sds are zero");
  }
  return (mean_t - mean_c) / std::sqrt((sd_t * sd_t + sd_c * sd_c) / 2.0);
}

BalanceReport balance_report_twosided(const Dataset& data, const PrincipalScoreSet& scores) {
  const auto w = twosided_weights(data, scores);
  const auto treated = data.arm(1);
  const auto control = data.arm(0);
  BalanceReport report;
  for (const auto s : strata_of(Design::TwoSided)) {
    const auto& ws = w.of(s);
    const auto weight = [&](std::size_t i) { return ws[i]; };
    double m1 = 0.0, m0 = 0.0;
    for (const auto i : treated) m1 += ws[i];
    for (const auto i : control) m0 += ws[i];
    if (m1 == 0.0 && m0 == 0.0) {
      report.warnings.push_back("no " + std::string(to_string(s)) + "s: stratum skipped");
      continue;
    }
    if (m1 == 0.0 || m0 == 0.0) {
      throw EstimationError("stratum " + std::string(to_string(s)) + " has no weight in the " +
                            (m1 == 0.0 ? "treated" : "control") + " arm");
    }
    for (Eigen::Index k = 0; k < data.x().cols(); ++k) {
      const auto t = weighted_moments(data.x(), k, treated, weight);
      const auto c = weighted_moments(data.x(), k, control, weight);
      BalanceRow row;
      row.covariate = data.covariate_names()[static_cast<std::size_t>(k)];
      row.stratum = s;
      row.mode = mode_for(s);
      row.mean_t = t.mean;
      row.mean_c = c.mean;
      row.sd_t = t.sd;
      row.sd_c = c.sd;
      fill_delta(row);
      report.rows.push_back(std::move(row));
    }
  }
  return report;
}

BalanceReport balance_within_bins_onesided(const Dataset& data, const PrincipalScoreSet& scores,
                                           int n_bins) {
  if (data.design() != Design::OneSided || scores.design != Design::OneSided) {
    throw ValidationError("binned balance needs one-sided data and scores");
  }
  if (scores.size() != data.size()) throw ValidationError("principal scores do not cover the dataset");
  if (n_bins < 2) throw ValidationError("n_bins must be at least 2");

  auto treated = data.arm(1);
  std::stable_sort(treated.begin(), treated.end(), [&](std::size_t a, std::size_t b) {
    return scores(a, Stratum::High) < scores(b, Stratum::High);
  });
  // Rank-based quantile bins; tied scores share the bin of the first tie.
  const auto m = treated.size();
  std::vector<std::vector<std::size_t>> bins(static_cast<std::size_t>(n_bins));
  int current = 0;
  for (std::size_t r = 0; r < m; ++r) {
    const auto i = treated[r];
    const bool tie = r > 0 && scores(i, Stratum::High) == scores(treated[r - 1], Stratum::High);
    if (!tie) current = static_cast<int>(r * static_cast<std::size_t>(n_bins) / m);
    bins[static_cast<std::size_t>(current)].push_back(i);
  }

  BalanceReport report;
  const auto one = [](std::size_t) { return 1.0; };
  const auto k_cols = data.x().cols();
  std::vector<double> diff_sum(static_cast<std::size_t>(k_cols), 0.0);
  std::vector<double> high_sum(static_cast<std::size_t>(k_cols), 0.0);
  std::vector<double> low_sum(static_cast<std::size_t>(k_cols), 0.0);
  double used = 0.0;
  std::vector<std::size_t> all_high, all_low;

  for (std::size_t b = 0; b < bins.size(); ++b) {
    if (bins[b].empty()) continue;
    std::vector<std::size_t> high, low;
    for (const auto i : bins[b]) (data.d(i) == 1 ? high : low).push_back(i);
    if (high.size() < 2 || low.size() < 2) {
      report.warnings.push_back("bin " + std::to_string(b) + " has fewer than 2 units per dose group: skipped");
      continue;
    }
    all_high.insert(all_high.end(), high.begin(), high.end());
    all_low.insert(all_low.end(), low.begin(), low.end());
    const double size = static_cast<double>(bins[b].size());
    used += size;
    for (Eigen::Index k = 0; k < k_cols; ++k) {
      const auto h = weighted_moments(data.x(), k, high, one);
      const auto l = weighted_moments(data.x(), k, low, one);
      BalanceRow row;
      row.covariate = data.covariate_names()[static_cast<std::size_t>(k)];
      row.stratum = Stratum::High;
      row.bin = static_cast<int>(b);
      row.mean_t = h.mean;
      row.mean_c = l.mean;
      row.sd_t = h.sd;
      row.sd_c = l.sd;
      fill_delta(row);
      report.rows.push_back(std::move(row));
      const auto kk = static_cast<std::size_t>(k);
      diff_sum[kk] += size * (h.mean - l.mean);
      high_sum[kk] += size * h.mean;
      low_sum[kk] += size * l.mean;
    }
  }
  if (used == 0.0) throw EstimationError("no score bin has at least 2 High and 2 Low takers");

  for (Eigen::Index k = 0; k < k_cols; ++k) {
    const auto kk = static_cast<std::size_t>(k);
    BalanceRow row;
    row.covariate = data.covariate_names()[kk];
    row.stratum = Stratum::High;
    row.mean_t = high_sum[kk] / used;
    row.mean_c = low_sum[kk] / used;
    row.sd_t = weighted_moments(data.x(), k, all_high, one).sd;
    row.sd_c = weighted_moments(data.x(), k, all_low, one).sd;
    if (row.sd_t == 0.0 && row.sd_c == 0.0) {
      row.defined = false;
      row.delta = std::numeric_limits<double>::quiet_NaN();
    } else {
      row.delta = (diff_sum[kk] / used) / std::sqrt((row.sd_t * row.sd_t + row.sd_c * row.sd_c) / 2.0);
    }
    report.rows.push_back(std::move(row));
  }
  return report;
}

void write_balance_csv(std::ostream& out, const BalanceReport& report) {
  out << "covariate,stratum,mode,mean_t,mean_c,sd_t,sd_c,delta,bin\n";
  for (const auto& r : report.rows) {
    out << r.covariate << ',' << stratum_key(r.stratum) << ',' << to_string(r.mode) << ','
        << format_double(r.mean_t) << ',' << format_double(r.mean_c) << ','
        << format_double(r.sd_t) << ',' << format_double(r.sd_c) << ',' << delta_text(r) << ','
        << (r.bin == kPooledBin ? std::string("all") : std::to_string(r.bin)) << '\n';
  }
}

void write_balance_plot_data(std::ostream& out, const BalanceReport& report) {
  out << "stratum,covariate,delta,abs_delta\n";
  for (const auto& r : report.rows) {
    if (r.bin != kPooledBin) continue;
    out << stratum_key(r.stratum) << ',' << r.covariate << ',' << delta_text(r) << ','
        << (r.defined ? format_double(std::abs(r.delta)) : std::string("NA")) << '\n';
  }
}

}  // namespace pstrat
