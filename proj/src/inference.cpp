#include "pstrat/inference.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <thread>

#include "pstrat/error.hpp"
#include "pstrat/onesided.hpp"
#include "pstrat/twosided.hpp"

namespace pstrat {

namespace {

constexpr double kMaxBootstrapFailureShare = 0.10;

struct Replicate {
  bool ok = false;
  std::string reason;
  std::vector<std::pair<Stratum, double>> itt;
};

}  // namespace

std::string_view to_string(EstimatorKind kind) {
  switch (kind) {
    case EstimatorKind::Weighting: return "weighting";
    case EstimatorKind::Subgroup: return "subgroup";
    case EstimatorKind::Plugin: return "plugin";
  }
  return "?";
}

EstimatorKind parse_estimator_kind(std::string_view text) {
  if (text == "weighting") return EstimatorKind::Weighting;
  if (text == "subgroup") return EstimatorKind::Subgroup;
  if (text == "plugin") return EstimatorKind::Plugin;
  throw ValidationError("unknown estimator '" + std::string(text) + "'");
}

void PipelineSpec::check(Design design) const {
  check_assumption_legal(design, assumption);
  if (design == Design::TwoSided && estimator != EstimatorKind::Weighting) {
    throw ValidationError("the " + std::string(to_string(estimator)) +
                          " estimator applies to one-sided designs only");
  }
  if (design == Design::OneSided && score == ScoreMethod::JointEM) {
    throw ValidationError("the joint score method applies to two-sided designs only");
  }
  if (estimator == EstimatorKind::Subgroup && assumption != Assumption::StrongPI) {
    throw ValidationError("the subgroup estimator is defined under strong-pi only");
  }
  if (estimator == EstimatorKind::Plugin && assumption != Assumption::StrongPI &&
      assumption != Assumption::WeakPI) {
    throw ValidationError("the plug-in estimator is defined under strong-pi or weak-pi");
  }
  if (score == ScoreMethod::Supplied) throw ValidationError("a pipeline must fit its own scores");
}

bool PipelineSpec::needs_scores(Design design) const {
  if (design == Design::OneSided) {
    return assumption != Assumption::ERNeverTakersOnly && estimator != EstimatorKind::Plugin;
  }
  return assumption != Assumption::BothExclusionRestrictions;
}

PipelineResult run_pipeline(const Dataset& data, const PipelineSpec& spec, double level) {
  spec.check(data.design());
  PipelineResult result;
  if (spec.needs_scores(data.design())) {
    result.scores = estimate_scores(data, spec.score);
    check_simplex(*result.scores);
  }
  const auto& scores = result.scores;

  if (data.design() == Design::OneSided) {
    if (spec.assumption == Assumption::ERNeverTakersOnly) {
      result.estimates = estimate_er_onesided(data, level);
    } else if (spec.estimator == EstimatorKind::Plugin) {
      result.estimates = estimate_binary_plugin(data, spec.assumption, level);
    } else if (spec.estimator == EstimatorKind::Subgroup) {
      result.estimates = estimate_discrete_subgroup(data, *scores, level);
    } else if (spec.assumption == Assumption::StrongPI) {
      result.estimates = estimate_weighting_strong(data, *scores, level);
    } else {
      result.estimates = estimate_weighting_weak(data, *scores, level);
    }
  } else {
    switch (spec.assumption) {
      case Assumption::StrongPI:
        result.estimates = estimate_strong_twosided(data, *scores, level);
        break;
      case Assumption::WeakPI:
        result.estimates = estimate_weak_twosided(data, *scores, level);
        break;
      case Assumption::WeakPIWithERNeverTakers:
        result.estimates = estimate_weak_er_nt(data, *scores, level);
        break;
      case Assumption::BothExclusionRestrictions:
        result.estimates = estimate_iv_both_er(data, level);
        break;
      case Assumption::ERNeverTakersOnly:
        throw ValidationError("er-nt applies to one-sided designs only");
    }
  }
  if (scores) {
    for (const auto& w : scores->warnings) result.estimates.notes.push_back("scores: " + w);
  }
  check_estimate(result.estimates);
  return result;
}

std::vector<std::size_t> stratified_resample(const Dataset& data, Rng& rng) {
  std::vector<std::size_t> rows;
  rows.reserve(data.size());
  for (const int z : {0, 1}) {
    const auto arm = data.arm(z);
    if (arm.empty()) continue;
    std::uniform_int_distribution<std::size_t> pick(0, arm.size() - 1);
    for (std::size_t k = 0; k < arm.size(); ++k) rows.push_back(arm[pick(rng)]);
  }
  return rows;
}

nlohmann::json to_json(const BootstrapCensus& census) {
  nlohmann::json reasons = nlohmann::json::object();
  for (const auto& [reason, count] : census.reasons) reasons[reason] = count;
  return {{"requested", census.requested}, {"failed", census.failed}, {"reasons", reasons}};
}

double sorted_quantile(const std::vector<double>& sorted, double q) {
  if (sorted.empty()) throw EstimationError("quantile of an empty sample");
  const double pos = q * static_cast<double>(sorted.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const auto hi = std::min(lo + 1, sorted.size() - 1);
  const double frac = pos - static_cast<double>(lo);
  return sorted[lo] + frac * (sorted[hi] - sorted[lo]);
}

BootstrapResult bootstrap_ci(const Dataset& data, const PipelineSpec& spec, const CIConfig& config) {
  config.check();
  BootstrapResult out;
  out.estimates = run_pipeline(data, spec, config.level).estimates;

  const int n_boot = config.n_boot;
  std::vector<Replicate> reps(static_cast<std::size_t>(n_boot));
  std::atomic<int> next{0};
  const auto worker = [&] {
    for (int r = next++; r < n_boot; r = next++) {
      auto& rep = reps[static_cast<std::size_t>(r)];
      try {
        auto rng = make_stream(config.seed, {static_cast<std::uint64_t>(r)});
        const auto rows = stratified_resample(data, rng);
        const auto est = run_pipeline(data.subset(rows), spec, config.level).estimates;
        for (const auto& s : out.estimates.strata) {
          if (!est.has(s.stratum)) throw EstimationError("stratum " + std::string(stratum_key(s.stratum)) + " absent");
          rep.itt.emplace_back(s.stratum, est.at(s.stratum).itt);
        }
        rep.ok = true;
      } catch (const std::exception& e) {
        rep.ok = false;
        rep.itt.clear();
        rep.reason = e.what();
      }
    }
  };
  const int jobs = std::max(1, std::min(config.jobs, n_boot));
  std::vector<std::thread> pool;
  for (int j = 1; j < jobs; ++j) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();

  out.census.requested = n_boot;
  for (const auto& rep : reps) {
    if (rep.ok) continue;
    ++out.census.failed;
    ++out.census.reasons[rep.reason];
  }
  if (out.census.failed > kMaxBootstrapFailureShare * n_boot) {
    throw EstimationError("bootstrap: " + std::to_string(out.census.failed) + " of " +
                          std::to_string(n_boot) + " replicates failed; census " +
                          to_json(out.census).dump());
  }

  const double tail = (1.0 - config.level) / 2.0;
  for (std::size_t k = 0; k < out.estimates.strata.size(); ++k) {
    auto& s = out.estimates.strata[k];
    std::vector<double> draws;
    for (const auto& rep : reps) {
      if (rep.ok) draws.push_back(rep.itt[k].second);
    }
    std::sort(draws.begin(), draws.end());
    double mean = 0.0;
    for (const double v : draws) mean += v;
    mean /= static_cast<double>(draws.size());
    double ss = 0.0;
    for (const double v : draws) ss += (v - mean) * (v - mean);
    s.se = draws.size() > 1 ? std::sqrt(ss / static_cast<double>(draws.size() - 1)) : 0.0;
    s.ci_lo = sorted_quantile(draws, tail);
    s.ci_hi = sorted_quantile(draws, 1.0 - tail);
  }
  out.estimates.ci_method = CIMethod::BootstrapPercentile;
  check_estimate(out.estimates);
  if (out.census.failed > 0) {
    out.estimates.notes.push_back("bootstrap: " + std::to_string(out.census.failed) +
                                  " replicates failed and were dropped");
  }
  return out;
}

PipelineResult estimate_with_ci(const Dataset& data, const PipelineSpec& spec,
                                const CIConfig& config, BootstrapCensus* census) {
  config.check();
  auto result = run_pipeline(data, spec, config.level);
  if (config.method == CIMethod::BootstrapPercentile) {
    auto boot = bootstrap_ci(data, spec, config);
    result.estimates = std::move(boot.estimates);
    if (census) *census = boot.census;
  }
  return result;
}

}  // namespace pstrat
