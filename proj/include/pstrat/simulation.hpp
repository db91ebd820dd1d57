#pragma once

#include <array>
#include <cstdint>
#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "pstrat/dataset.hpp"
#include "pstrat/variance.hpp"

namespace pstrat {

enum class AssignmentScheme { Complete, Bernoulli };

struct SimConfig {
  int n = 2000;
  double p_treat = 0.5;
  double eta0 = 0.0;
  double eta1 = 1.0;
  double alpha = 0.0;
  double beta0 = 0.5;
  double beta1 = 0.0;
  double tau = 0.5;
  double gamma0 = 0.0;
  double gamma1 = 0.0;
  double delta0 = 0.0;
  double delta1 = 0.0;
  double sigma_y = 1.0;
  double sigma_tau = 0.1;
  AssignmentScheme assignment = AssignmentScheme::Complete;

  // Throws ValidationError.
  void check() const;
};

struct SimDraw {
  Dataset data;
  std::vector<int> high;     // true stratum: 1 = High Taker
  std::vector<double> tau;   // true unit effect Y(1) - Y(0)
  std::vector<double> pi;    // true principal score
};

// One data set from the one-sided DGP (covariate column "x"). Deterministic
// in (config, seed).
SimDraw simulate(const SimConfig& config, std::uint64_t seed);

struct TrueEstimands {
  double itt_h = 0.0;
  double itt_l = 0.0;
  double p_high = 0.0;
  double mean_x_high = 0.0;  // E[x | H = 1]
  double mean_x_low = 0.0;   // E[x | H = 0]
};

// Population ITT_h, ITT_l by adaptive quadrature over x on [-10, 10].
TrueEstimands true_estimands(const SimConfig& config);

enum class StudyMethod { Sub, Wt, WkWt };

std::string_view to_string(StudyMethod method);
StudyMethod parse_study_method(std::string_view text);

struct StudyCell {
  double beta1 = 0.0;
  double gamma0 = 0.0;
  double gamma1 = 0.0;
};

struct StudyConfig {
  SimConfig base;
  std::vector<StudyCell> cells;
  std::vector<StudyMethod> methods{StudyMethod::Sub, StudyMethod::Wt, StudyMethod::WkWt};
  int reps = 1000;
  std::uint64_t seed = 0;
  // Scores from the DGP truth instead of a per-replicate logit fit.
  bool oracle_scores = false;
  CIConfig ci;
  int jobs = 1;

  void check() const;
};

// Keys: base (SimConfig fields), grid {beta1, gamma0, gamma1: [...]} or
// cells [{beta1, gamma0, gamma1}], methods, reps, seed, scores
// ("logit" | "oracle"), ci ("analytic" | "bootstrap"), n_boot.
// Unknown keys are rejected with ValidationError.
StudyConfig parse_study_config(const nlohmann::json& j);
SimConfig parse_sim_config(const nlohmann::json& j);
nlohmann::json to_json(const SimConfig& config);

struct MethodSummary {
  StudyMethod method = StudyMethod::Sub;
  double bias = 0.0;
  double coverage = 0.0;
  double mc_se = 0.0;   // MC standard error of the bias
  double mean_se = 0.0; // average reported standard error
  int n_reps = 0;
  int failures = 0;
};

struct CellResult {
  StudyCell cell;
  TrueEstimands truth;
  std::vector<MethodSummary> methods;
};

struct StudyResult {
  std::vector<CellResult> cells;
};

// Replicate r of cell c draws from stream (seed, c, r); aggregation runs in
// replicate order, so results do not depend on jobs. Throws EstimationError
// when a method fails in more than 5% of a cell's replicates.
StudyResult run_study(const StudyConfig& config);

// beta1,gamma0,gamma1,itt_h_true,bias_<m>...,coverage_<m>...,mcse_<m>...,
// n_reps_<m>...,failures_<m>...
void write_study_csv(std::ostream& out, const StudyResult& result);

// Two-sided DGP used by tests and balance checks: k standard normal
// covariates, strata from a multinomial logit with Compliers as reference,
// Y(0) = x'beta + shift0[s] + e, Y(1) = Y(0) + tau[s].
struct TwoSidedSimConfig {
  int n = 10000;
  int k = 2;
  double p_treat = 0.5;
  Eigen::VectorXd coef_a;  // intercept first, length k + 1
  Eigen::VectorXd coef_n;
  Eigen::VectorXd beta;    // length k
  std::array<double, 3> shift0{0.0, 0.0, 0.0};  // (a, c, n)
  std::array<double, 3> tau{0.0, 0.5, 0.0};
  double sigma_y = 1.0;
};

struct TwoSidedDraw {
  Dataset data;
  std::vector<Stratum> strata;
  Eigen::MatrixXd probs;  // N x 3 true (a, c, n) scores
};

TwoSidedDraw simulate_twosided(const TwoSidedSimConfig& config, std::uint64_t seed);

}  // namespace pstrat
