#include "pstrat/onesided.hpp"

#include <array>
#include <cmath>
#include <map>
#include <optional>

#include "pstrat/error.hpp"
#include "pstrat/rng.hpp"

namespace pstrat {

namespace {

constexpr double kMinHighShare = 0.02;

void require_onesided(const Dataset& data, const PrincipalScoreSet& scores) {
  if (data.design() != Design::OneSided) {
    throw ValidationError("one-sided estimator called on a two-sided dataset");
  }
  if (scores.design != Design::OneSided || scores.size() != data.size()) {
    throw ValidationError("principal scores do not cover the dataset");
  }
}

EstimateSet from_weights(const Dataset& data, const PrincipalScoreSet& scores,
                         Assumption assumption, std::string method, double level) {
  require_onesided(data, scores);
  EstimateSet out;
  out.design = Design::OneSided;
  out.assumption = assumption;
  out.method = std::move(method);
  out.level = level;
  for (const auto s : strata_of(Design::OneSided)) {
    const auto w = onesided_weights(data, scores, s, assumption);
    out.strata.push_back(weighted_difference(data, s, w.treated, w.control, level));
  }
  return out;
}

}  // namespace

StratumWeights onesided_weights(const Dataset& data, const PrincipalScoreSet& scores,
                                Stratum stratum, Assumption assumption) {
  require_onesided(data, scores);
  if (stratum != Stratum::High && stratum != Stratum::Low) {
    throw ValidationError("one-sided strata are High and Low takers");
  }
  if (assumption != Assumption::WeakPI && assumption != Assumption::StrongPI) {
    throw ValidationError("one-sided weights are defined for weak-pi and strong-pi");
  }
  const int dose = stratum == Stratum::High ? 1 : 0;
  StratumWeights w;
  w.stratum = stratum;
  w.treated.resize(data.size());
  w.control.resize(data.size());
  for (std::size_t i = 0; i < data.size(); ++i) {
    const double score = scores(i, stratum);
    w.control[i] = score;
    w.treated[i] = assumption == Assumption::StrongPI ? score : (data.d(i) == dose ? 1.0 : 0.0);
  }
  return w;
}

EstimateSet estimate_weighting_weak(const Dataset& data, const PrincipalScoreSet& scores,
                                    double level) {
  return from_weights(data, scores, Assumption::WeakPI, "weighting", level);
}

EstimateSet estimate_weighting_strong(const Dataset& data, const PrincipalScoreSet& scores,
                                      double level) {
  return from_weights(data, scores, Assumption::StrongPI, "weighting", level);
}

EstimateSet estimate_discrete_subgroup(const Dataset& data, const PrincipalScoreSet& scores,
                                       double level) {
  require_onesided(data, scores);
  const auto counts = cell_counts(data);
  const double treated = static_cast<double>(counts[1][0] + counts[1][1]);
  if (treated == 0.0) throw EstimationError("no treated units");
  const double threshold = static_cast<double>(counts[1][1]) / treated;

  std::vector<double> in_high(data.size()), in_low(data.size());
  for (std::size_t i = 0; i < data.size(); ++i) {
    const bool predicted_high = scores(i, Stratum::High) >= threshold;
    in_high[i] = predicted_high ? 1.0 : 0.0;
    in_low[i] = predicted_high ? 0.0 : 1.0;
  }

  EstimateSet out;
  out.design = Design::OneSided;
  out.assumption = Assumption::StrongPI;
  out.method = "subgroup";
  out.level = level;
  for (const auto s : strata_of(Design::OneSided)) {
    const auto& w = s == Stratum::High ? in_high : in_low;
    try {
      out.strata.push_back(weighted_difference(data, s, w, w, level));
    } catch (const EstimationError&) {
      throw EstimationError("subgroup method: predicted-" +
                            std::string(s == Stratum::High ? "High" : "Low") +
                            " group is empty in one arm at threshold " + format_double(threshold) +
                            " (degenerate score distribution)");
    }
  }
  out.notes.push_back(
      "subgroup estimates target the average impact for units predicted to be High (Low) "
      "Takers, threshold = treated-arm High share " + format_double(threshold));
  return out;
}

EstimateSet estimate_binary_plugin(const Dataset& data, Assumption assumption, double level) {
  if (data.design() != Design::OneSided) throw ValidationError("plug-in estimator is one-sided");
  if (assumption != Assumption::WeakPI && assumption != Assumption::StrongPI) {
    throw ValidationError("plug-in estimator supports weak-pi and strong-pi");
  }
  if (data.num_covariates() != 1) {
    throw ValidationError("plug-in estimator needs exactly one covariate");
  }
  std::map<double, int> level_of;
  for (std::size_t i = 0; i < data.size(); ++i) level_of.emplace(data.x()(static_cast<Eigen::Index>(i), 0), 0);
  if (level_of.size() != 2) {
    throw ValidationError("plug-in estimator needs a binary covariate (found " +
                          std::to_string(level_of.size()) + " distinct values)");
  }
  int next = 0;
  for (auto& [value, id] : level_of) id = next++;
  std::vector<int> cell(data.size());
  for (std::size_t i = 0; i < data.size(); ++i) cell[i] = level_of.at(data.x()(static_cast<Eigen::Index>(i), 0));

  // Cell means and tallies per (x, z), and dose tallies among treated.
  struct Cell {
    std::vector<double> w[2];
    std::vector<double> y[2];
    double high = 0.0;
  };
  std::array<Cell, 2> cells;
  for (std::size_t i = 0; i < data.size(); ++i) {
    auto& c = cells[static_cast<std::size_t>(cell[i])];
    const auto z = static_cast<std::size_t>(data.z(i));
    c.w[z].push_back(1.0);
    c.y[z].push_back(data.y(i));
    if (z == 1 && data.d(i) == 1) c.high += 1.0;
  }
  const double n_total = static_cast<double>(data.size());
  const double n_control = static_cast<double>(data.arm_size(0));
  std::array<WeightedMean, 2> mean1, mean0;
  std::array<double, 2> pi_high{}, p_control{}, p_pooled{};
  for (std::size_t x = 0; x < 2; ++x) {
    const auto& c = cells[x];
    if (c.w[0].empty() || c.w[1].empty()) {
      throw EstimationError("plug-in estimator: covariate cell " + format_double(
                                std::next(level_of.begin(), static_cast<long>(x))->first) +
                            " is empty in the " + (c.w[0].empty() ? "control" : "treated") +
                            " arm");
    }
    mean1[x] = weighted_mean(c.w[1], c.y[1]);
    mean0[x] = weighted_mean(c.w[0], c.y[0]);
    pi_high[x] = c.high / static_cast<double>(c.w[1].size());
    p_control[x] = static_cast<double>(c.w[0].size()) / n_control;
    p_pooled[x] = static_cast<double>(c.w[0].size() + c.w[1].size()) / n_total;
  }

  EstimateSet out;
  out.design = Design::OneSided;
  out.assumption = assumption;
  out.method = "plugin";
  out.level = level;
  for (const auto s : strata_of(Design::OneSided)) {
    const bool high = s == Stratum::High;
    // Bayes-rule weights p(x | s) up to the normalizing pi_s.
    const auto& px = assumption == Assumption::WeakPI ? p_control : p_pooled;
    std::array<double, 2> wx{};
    for (std::size_t x = 0; x < 2; ++x) wx[x] = (high ? pi_high[x] : 1.0 - pi_high[x]) * px[x];
    const double wsum = wx[0] + wx[1];
    if (!(wsum > 0.0)) {
      throw EstimationError("plug-in estimator: no " + std::string(to_string(s)) + "s in the data");
    }
    for (auto& v : wx) v /= wsum;

    StratumEstimate est;
    est.stratum = s;
    double var0 = 0.0;
    for (std::size_t x = 0; x < 2; ++x) {
      est.mu0 += wx[x] * mean0[x].mean;
      var0 += wx[x] * wx[x] * mean0[x].variance;
    }
    est.n_eff0 = n_control;
    double var1 = 0.0;
    if (assumption == Assumption::WeakPI) {
      const auto direct = cell_mean(data, 1, high ? 1 : 0);
      est.mu1 = direct.mean;
      var1 = direct.variance;
      est.n_eff1 = direct.mass;
    } else {
      for (std::size_t x = 0; x < 2; ++x) {
        est.mu1 += wx[x] * mean1[x].mean;
        var1 += wx[x] * wx[x] * mean1[x].variance;
      }
      est.n_eff1 = static_cast<double>(data.arm_size(1));
    }
    est.se = std::sqrt(var0 + var1);
    finalize(est, level);
    out.strata.push_back(est);
  }
  return out;
}

EstimateSet estimate_er_onesided(const Dataset& data, double level) {
  if (data.design() != Design::OneSided) throw ValidationError("estimator is one-sided");
  const auto high = cell_mean(data, 1, 1);
  const auto low = cell_mean(data, 1, 0);
  std::vector<double> ones(data.size(), 1.0);
  const auto control = arm_mean(data, ones, 0);
  const double pi = high.mass / (high.mass + low.mass);
  if (pi <= kMinHighShare) {
    throw EstimationError("High Taker share " + format_double(pi) + " is below " +
                          format_double(kMinHighShare) + "; the Wald ratio is unstable");
  }

  EstimateSet out;
  out.design = Design::OneSided;
  out.assumption = Assumption::ERNeverTakersOnly;
  out.method = "wald";
  out.level = level;

  StratumEstimate h;
  h.stratum = Stratum::High;
  h.mu1 = high.mean;
  h.mu0 = (control.mean - (1.0 - pi) * low.mean) / pi;
  h.se = std::sqrt(high.variance + control.variance / (pi * pi) +
                   std::pow((1.0 - pi) / pi, 2) * low.variance);
  h.n_eff1 = high.mass;
  h.n_eff0 = control.mass;
  finalize(h, level);

  StratumEstimate l;
  l.stratum = Stratum::Low;
  l.mu1 = low.mean;
  l.mu0 = low.mean;
  l.n_eff1 = low.mass;
  l.n_eff0 = 0.0;
  l.fixed_by_assumption = true;
  finalize(l, level);
  out.strata = {h, l};
  out.notes.push_back("ITT_l fixed at 0 by the exclusion restriction");
  return out;
}

namespace {

struct Contrast {
  double direct = 0.0;
  double weighted = 0.0;
};

// Treated-side contrast for one stratum over the listed treated units.
std::optional<Contrast> implication_contrast(const Dataset& data, const PrincipalScoreSet& scores,
                                             Stratum stratum,
                                             std::span<const std::size_t> treated) {
  const int dose = stratum == Stratum::High ? 1 : 0;
  double direct_sum = 0.0, direct_n = 0.0, w_sum = 0.0, wy_sum = 0.0;
  for (const auto i : treated) {
    const double w = scores(i, stratum);
    w_sum += w;
    wy_sum += w * data.y(i);
    if (data.d(i) == dose) {
      direct_sum += data.y(i);
      direct_n += 1.0;
    }
  }
  if (direct_n == 0.0 || !(w_sum > 0.0)) return std::nullopt;
  return Contrast{direct_sum / direct_n, wy_sum / w_sum};
}

}  // namespace

ImplicationTest strong_pi_implication_test(const Dataset& data, const PrincipalScoreSet& scores,
                                           int n_boot, std::uint64_t seed, double alpha) {
  require_onesided(data, scores);
  if (n_boot < 2) throw ValidationError("implication test needs at least 2 bootstrap replicates");
  const auto treated = data.arm(1);
  ImplicationTest test;
  test.n_boot = n_boot;
  test.alpha = alpha;
  const double critical = normal_critical_value(1.0 - alpha);

  // Strata with observed treated members and positive score mass.
  std::vector<Stratum> tested;
  for (const auto s : strata_of(Design::OneSided)) {
    if (implication_contrast(data, scores, s, treated)) tested.push_back(s);
  }
  if (tested.empty()) throw EstimationError("implication test: no testable stratum");

  std::vector<std::vector<double>> draws(tested.size());
  auto rng = make_stream(seed, {0x1e57});
  std::uniform_int_distribution<std::size_t> pick(0, treated.size() - 1);
  std::vector<std::size_t> sample(treated.size());
  std::vector<double> t(tested.size());
  for (int b = 0; b < n_boot; ++b) {
    for (auto& s : sample) s = treated[pick(rng)];
    bool failed = false;
    for (std::size_t k = 0; k < tested.size() && !failed; ++k) {
      const auto c = implication_contrast(data, scores, tested[k], sample);
      if (c) {
        t[k] = c->direct - c->weighted;
      } else {
        failed = true;
      }
    }
    if (failed) {
      ++test.failed_replicates;
      continue;
    }
    for (std::size_t k = 0; k < tested.size(); ++k) draws[k].push_back(t[k]);
  }
  if (test.failed_replicates * 10 > n_boot) {
    throw EstimationError("implication test: " + std::to_string(test.failed_replicates) + " of " +
                          std::to_string(n_boot) + " bootstrap replicates had an empty dose group");
  }

  for (std::size_t k = 0; k < tested.size(); ++k) {
    const auto c = *implication_contrast(data, scores, tested[k], treated);
    ImplicationRow row;
    row.stratum = tested[k];
    row.direct_mean = c.direct;
    row.weighted_mean = c.weighted;
    row.contrast = c.direct - c.weighted;
    const auto& v = draws[k];
    double mean = 0.0;
    for (const double x : v) mean += x;
    mean /= static_cast<double>(v.size());
    double ss = 0.0;
    for (const double x : v) ss += (x - mean) * (x - mean);
    row.se = std::sqrt(ss / static_cast<double>(v.size() - 1));
    row.z = row.se > 0.0 ? row.contrast / row.se : 0.0;
    row.reject = std::abs(row.z) > critical;
    test.rows.push_back(row);
  }
  return test;
}

nlohmann::json to_json(const ImplicationTest& test) {
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& r : test.rows) {
    rows.push_back({{"stratum", stratum_key(r.stratum)},
                    {"direct_mean", r.direct_mean},
                    {"weighted_mean", r.weighted_mean},
                    {"contrast", r.contrast},
                    {"se", r.se},
                    {"z", r.z},
                    {"reject", r.reject}});
  }
  return {{"test", "strong-pi treated-side implication"},
          {"n_boot", test.n_boot},
          {"failed_replicates", test.failed_replicates},
          {"alpha", test.alpha},
          {"rows", rows}};
}

}  // namespace pstrat
