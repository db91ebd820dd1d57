#include "pstrat/twosided.hpp"

#include <algorithm>
#include <cmath>

#include "pstrat/error.hpp"

namespace pstrat {

namespace {

// Below this complier share the mixture inversion for mu_c0 blows up.
constexpr double kMinComplierShare = 0.02;

void require_twosided(const Dataset& data, const PrincipalScoreSet* scores) {
  if (data.design() != Design::TwoSided) {
    throw ValidationError("two-sided estimator called on a one-sided dataset");
  }
  if (scores && (scores->design != Design::TwoSided || scores->size() != data.size())) {
    throw ValidationError("principal scores do not cover the dataset");
  }
}

EstimateSet make_set(Assumption assumption, std::string method, double level) {
  EstimateSet out;
  out.design = Design::TwoSided;
  out.assumption = assumption;
  out.method = std::move(method);
  out.level = level;
  return out;
}

// Weighted difference in means for one stratum, or nothing when the stratum
// carries no weight in either arm.
void add_weighted(EstimateSet& out, const Dataset& data, Stratum s, const std::vector<double>& w1,
                  const std::vector<double>& w0) {
  double mass1 = 0.0, mass0 = 0.0;
  for (std::size_t i = 0; i < data.size(); ++i) {
    (data.z(i) == 1 ? mass1 : mass0) += data.z(i) == 1 ? w1[i] : w0[i];
  }
  if (mass1 == 0.0 && mass0 == 0.0 && s != Stratum::Complier) {
    out.notes.push_back("no " + std::string(to_string(s)) + "s: stratum omitted");
    return;
  }
  out.strata.push_back(weighted_difference(data, s, w1, w0, out.level));
}

struct MaybeMean {
  bool present = false;
  WeightedMean m;
};

MaybeMean optional_cell(const Dataset& data, int z, int d) {
  const auto counts = cell_counts(data);
  if (counts[static_cast<std::size_t>(z)][static_cast<std::size_t>(d)] == 0) return {};
  return {true, cell_mean(data, z, d)};
}

// Control-side complier mean under the Never-Taker exclusion restriction:
// Y00 (pc + pn)/pc - Y10 pn/pc.
void complier_control_side(StratumEstimate& c, const StrataProportions& p, const WeightedMean& y00,
                           const MaybeMean& y10, double& variance) {
  const double k00 = (p.pi_c + p.pi_n) / p.pi_c;
  c.mu0 = y00.mean * k00;
  variance += k00 * k00 * y00.variance;
  if (y10.present && p.pi_n > 0.0) {
    const double k10 = p.pi_n / p.pi_c;
    c.mu0 -= y10.m.mean * k10;
    variance += k10 * k10 * y10.m.variance;
  }
  c.n_eff0 = y00.mass;
}

void note_outcome_range(EstimateSet& out, const Dataset& data, const StratumEstimate& c) {
  const auto [lo, hi] = std::minmax_element(data.y().begin(), data.y().end());
  if (c.mu0 < *lo || c.mu0 > *hi) {
    out.notes.push_back("warning: complier control mean " + format_double(c.mu0) +
                        " lies outside the observed outcome range");
  }
}

StratumEstimate fixed_stratum(Stratum s, const WeightedMean& m) {
  StratumEstimate e;
  e.stratum = s;
  e.mu1 = m.mean;
  e.mu0 = m.mean;
  e.n_eff1 = m.mass;
  e.n_eff0 = m.mass;
  e.fixed_by_assumption = true;
  return e;
}

}  // namespace

StrataProportions strata_proportions(const Dataset& data) {
  require_twosided(data, nullptr);
  const auto counts = cell_counts(data);
  const double n0 = static_cast<double>(counts[0][0] + counts[0][1]);
  const double n1 = static_cast<double>(counts[1][0] + counts[1][1]);
  if (n0 == 0.0 || n1 == 0.0) throw EstimationError("both arms must be non-empty");
  StrataProportions p;
  p.pi_a = static_cast<double>(counts[0][1]) / n0;
  p.pi_n = static_cast<double>(counts[1][0]) / n1;
  p.pi_c = 1.0 - p.pi_a - p.pi_n;
  if (p.pi_c <= 0.0) {
    throw EstimationError("estimated complier share " + format_double(p.pi_c) +
                          " is not positive: monotonicity or the design is violated");
  }
  return p;
}

const std::vector<double>& TwoSidedWeights::of(Stratum s) const {
  switch (s) {
    case Stratum::Always: return a;
    case Stratum::Complier: return c;
    case Stratum::Never: return n;
    default: break;
  }
  throw ValidationError("two-sided weights exist for a, c and n only");
}

TwoSidedWeights twosided_weights(const Dataset& data, const PrincipalScoreSet& scores) {
  require_twosided(data, &scores);
  const auto n = data.size();
  TwoSidedWeights w{std::vector<double>(n), std::vector<double>(n), std::vector<double>(n)};
  for (std::size_t i = 0; i < n; ++i) {
    const double pa = scores(i, Stratum::Always);
    const double pc = scores(i, Stratum::Complier);
    const double pn = scores(i, Stratum::Never);
    const int z = data.z(i);
    const int d = data.d(i);
    if (z == 1 && d == 1) {
      if (!(pc + pa > 0.0)) {
        throw EstimationError("unit " + std::to_string(i) +
                              " (z=1, d=1) has zero complier and always-taker score");
      }
      w.a[i] = pa / (pc + pa);
      w.c[i] = pc / (pc + pa);
    } else if (z == 0 && d == 0) {
      if (!(pc + pn > 0.0)) {
        throw EstimationError("unit " + std::to_string(i) +
                              " (z=0, d=0) has zero complier and never-taker score");
      }
      w.n[i] = pn / (pc + pn);
      w.c[i] = pc / (pc + pn);
    } else if (z == 1 && d == 0) {
      w.n[i] = 1.0;
    } else if (z == 0 && d == 1) {
      w.a[i] = 1.0;
    } else {
      throw ValidationError("unit " + std::to_string(i) + " has an invalid (z, d) pair");
    }
  }
  return w;
}

EstimateSet estimate_strong_twosided(const Dataset& data, const PrincipalScoreSet& scores,
                                     double level) {
  require_twosided(data, &scores);
  auto out = make_set(Assumption::StrongPI, "weighting", level);
  for (const auto s : strata_of(Design::TwoSided)) {
    const Eigen::VectorXd col = scores.column(s);
    const std::vector<double> w(col.data(), col.data() + col.size());
    add_weighted(out, data, s, w, w);
  }
  return out;
}

EstimateSet estimate_weak_twosided(const Dataset& data, const PrincipalScoreSet& scores,
                                   double level) {
  const auto w = twosided_weights(data, scores);
  auto out = make_set(Assumption::WeakPI, "weighting", level);
  for (const auto s : strata_of(Design::TwoSided)) add_weighted(out, data, s, w.of(s), w.of(s));
  return out;
}

EstimateSet estimate_weak_er_nt(const Dataset& data, const PrincipalScoreSet& scores,
                                double level) {
  require_twosided(data, &scores);
  const auto p = strata_proportions(data);
  if (p.pi_c <= kMinComplierShare) {
    throw EstimationError("complier share " + format_double(p.pi_c) + " is at or below " +
                          format_double(kMinComplierShare) +
                          "; the exclusion-restriction mixture inversion is unstable");
  }
  const auto y00 = cell_mean(data, 0, 0);
  const auto y01 = optional_cell(data, 0, 1);
  const auto y10 = optional_cell(data, 1, 0);

  // phi = pc / (pc + pa) splits the z=1, d=1 cell into compliers and always-takers.
  std::vector<double> phi(data.size(), 0.0), one_minus_phi(data.size(), 0.0);
  std::size_t n11 = 0;
  for (std::size_t i = 0; i < data.size(); ++i) {
    if (data.z(i) != 1 || data.d(i) != 1) continue;
    ++n11;
    const double pa = scores(i, Stratum::Always);
    const double pc = scores(i, Stratum::Complier);
    if (!(pc + pa > 0.0)) {
      throw EstimationError("unit " + std::to_string(i) +
                            " (z=1, d=1) has zero complier and always-taker score");
    }
    phi[i] = pc / (pc + pa);
    one_minus_phi[i] = 1.0 - phi[i];
  }
  if (n11 == 0) throw EstimationError("empty cell (z=1, d=1)");

  auto out = make_set(Assumption::WeakPIWithERNeverTakers, "weighting+er", level);

  if (y01.present) {
    StratumEstimate a;
    a.stratum = Stratum::Always;
    const auto treated = arm_mean(data, one_minus_phi, 1);
    a.mu1 = treated.mean;
    a.mu0 = y01.m.mean;
    a.se = std::sqrt(treated.variance + y01.m.variance);
    a.n_eff1 = treated.mass;
    a.n_eff0 = y01.m.mass;
    finalize(a, level);
    out.strata.push_back(a);
  } else {
    out.notes.push_back("no always-takers: stratum omitted");
  }

  StratumEstimate c;
  c.stratum = Stratum::Complier;
  const auto treated = arm_mean(data, phi, 1);
  c.mu1 = treated.mean;
  c.n_eff1 = treated.mass;
  double variance = treated.variance;
  complier_control_side(c, p, y00, y10, variance);
  c.se = std::sqrt(variance);
  finalize(c, level);
  out.strata.push_back(c);
  note_outcome_range(out, data, c);

  if (y10.present) {
    auto n = fixed_stratum(Stratum::Never, y10.m);
    finalize(n, level);
    out.strata.push_back(n);
  }
  return out;
}

EstimateSet estimate_iv_both_er(const Dataset& data, double level) {
  require_twosided(data, nullptr);
  const auto p = strata_proportions(data);
  if (p.pi_c <= kMinComplierShare) {
    throw EstimationError("complier share " + format_double(p.pi_c) + " is at or below " +
                          format_double(kMinComplierShare) + "; weak instrument");
  }
  const auto y11 = cell_mean(data, 1, 1);
  const auto y00 = cell_mean(data, 0, 0);
  const auto y01 = optional_cell(data, 0, 1);
  const auto y10 = optional_cell(data, 1, 0);

  auto out = make_set(Assumption::BothExclusionRestrictions, "iv", level);
  if (y01.present) {
    auto a = fixed_stratum(Stratum::Always, y01.m);
    finalize(a, level);
    out.strata.push_back(a);
  }

  StratumEstimate c;
  c.stratum = Stratum::Complier;
  const double k11 = (p.pi_c + p.pi_a) / p.pi_c;
  c.mu1 = y11.mean * k11;
  double variance = k11 * k11 * y11.variance;
  if (y01.present && p.pi_a > 0.0) {
    const double k01 = p.pi_a / p.pi_c;
    c.mu1 -= y01.m.mean * k01;
    variance += k01 * k01 * y01.m.variance;
  }
  c.n_eff1 = y11.mass;
  complier_control_side(c, p, y00, y10, variance);
  c.se = std::sqrt(variance);
  finalize(c, level);
  out.strata.push_back(c);
  note_outcome_range(out, data, c);

  if (y10.present) {
    auto n = fixed_stratum(Stratum::Never, y10.m);
    finalize(n, level);
    out.strata.push_back(n);
  }
  return out;
}

}  // namespace pstrat
