#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "pstrat/dataset.hpp"
#include "pstrat/estimate.hpp"
#include "pstrat/pscore.hpp"
#include "pstrat/rng.hpp"
#include "pstrat/variance.hpp"

namespace pstrat {

// One-sided estimator family. Two-sided pipelines always use weighting, or
// the IV/ER estimators implied by the assumption.
enum class EstimatorKind { Weighting, Subgroup, Plugin };

std::string_view to_string(EstimatorKind kind);
EstimatorKind parse_estimator_kind(std::string_view text);

struct PipelineSpec {
  ScoreMethod score = ScoreMethod::MarginalLogit;
  Assumption assumption = Assumption::WeakPI;
  EstimatorKind estimator = EstimatorKind::Weighting;

  // Throws ValidationError for combinations that are not defined.
  void check(Design design) const;
  bool needs_scores(Design design) const;
};

struct PipelineResult {
  std::optional<PrincipalScoreSet> scores;
  EstimateSet estimates;
};

// Fit scores (when the estimator uses them) and estimate, with analytic CIs.
PipelineResult run_pipeline(const Dataset& data, const PipelineSpec& spec, double level = 0.95);

// Row indices of a bootstrap sample drawn with replacement within each arm,
// keeping both arm sizes.
std::vector<std::size_t> stratified_resample(const Dataset& data, Rng& rng);

struct BootstrapCensus {
  int requested = 0;
  int failed = 0;
  std::map<std::string, int> reasons;
};

nlohmann::json to_json(const BootstrapCensus& census);

struct BootstrapResult {
  EstimateSet estimates;  // point estimates from the full data, percentile CIs
  BootstrapCensus census;
};

// Percentile CIs from n_boot replicates, each re-running the whole pipeline
// (score fit included) on a stratified resample. Replicate r draws from the
// stream (seed, r), so the result does not depend on config.jobs. Throws
// EstimationError with the census when more than 10% of replicates fail.
BootstrapResult bootstrap_ci(const Dataset& data, const PipelineSpec& spec, const CIConfig& config);

// Analytic or bootstrap CIs as configured.
PipelineResult estimate_with_ci(const Dataset& data, const PipelineSpec& spec,
                                const CIConfig& config, BootstrapCensus* census = nullptr);

// Linear-interpolation sample quantile of sorted values, q in [0,1].
double sorted_quantile(const std::vector<double>& sorted, double q);

}  // namespace pstrat
