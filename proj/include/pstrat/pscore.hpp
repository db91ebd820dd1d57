#pragma once

#include <Eigen/Dense>

#include <cstddef>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "pstrat/dataset.hpp"
#include "pstrat/logit.hpp"

namespace pstrat {

enum class ScoreMethod { Cell, MarginalLogit, JointEM, Supplied };

std::string_view to_string(ScoreMethod method);
// Accepts the CLI spellings "cell", "marginal", "joint".
ScoreMethod parse_score_method(std::string_view text);

// Joint two-sided principal-score model: multinomial logit over (a, c, n)
// with Compliers as the reference category.
struct MultinomialStrataModel {
  Eigen::VectorXd coef_a;  // empty when no always-takers are observed
  Eigen::VectorXd coef_n;  // empty when no never-takers are observed
  std::vector<double> loglik_trace;
  bool converged = false;
  int iterations = 0;
};

// Per-unit stratum probabilities. Columns follow strata_of(design):
// (H, L) for one-sided data, (a, c, n) for two-sided data.
struct PrincipalScoreSet {
  Design design = Design::OneSided;
  ScoreMethod method = ScoreMethod::Supplied;
  Eigen::MatrixXd probs;

  // Two-sided cell/marginal scores: complier score before clipping.
  std::vector<double> raw_complier;
  std::size_t clipped_units = 0;

  bool separated = false;
  std::optional<LogitModel> model_high;
  std::optional<LogitModel> model_always;
  std::optional<LogitModel> model_never;
  std::optional<MultinomialStrataModel> joint;
  std::vector<std::string> warnings;

  std::size_t size() const { return static_cast<std::size_t>(probs.rows()); }
  double operator()(std::size_t unit, Stratum stratum) const;
  Eigen::VectorXd column(Stratum stratum) const;
};

// Index of a stratum's column under a design. Throws for foreign strata.
Eigen::Index stratum_column(Design design, Stratum stratum);

// Score sets built from caller-supplied values; validated against the simplex.
PrincipalScoreSet make_onesided_scores(std::span<const double> pi_high);
PrincipalScoreSet make_twosided_scores(std::span<const double> pi_a, std::span<const double> pi_c,
                                       std::span<const double> pi_n);

// Throws InvariantViolation unless every row lies on the simplex (1e-10).
void check_simplex(const PrincipalScoreSet& scores);

// One-sided: logistic regression of 1{D = H} on X among treated units,
// predicted for every unit. A separated fit is flagged, not thrown.
PrincipalScoreSet pscore_onesided(const Dataset& data, const LogitOptions& options = {});

// Nonparametric per-cell proportions. `cell_columns` selects the covariates
// defining the cells (all covariates when empty).
PrincipalScoreSet pscore_cell(const Dataset& data, std::span<const std::size_t> cell_columns = {});

// Two-sided marginal method: P(a|x) from controls, P(n|x) from treateds,
// complier score by subtraction, clipped at zero.
PrincipalScoreSet pscore_twosided_marginal(const Dataset& data, const LogitOptions& options = {});

struct JointOptions {
  int max_iterations = 500;
  double tolerance = 1e-8;
};

// Two-sided joint method: EM over the latent strata of the ambiguous cells
// (z=1,d=1 is a or c; z=0,d=0 is n or c) with a multinomial M-step.
PrincipalScoreSet pscore_twosided_joint(const Dataset& data, const JointOptions& options = {});

// Dispatches on method; for one-sided data, MarginalLogit means the logit fit.
PrincipalScoreSet estimate_scores(const Dataset& data, ScoreMethod method);

// `unit_index, pi_h, pi_l` or `unit_index, pi_a, pi_c, pi_n`.
void write_scores_csv(std::ostream& out, const PrincipalScoreSet& scores);
nlohmann::json scores_metadata(const PrincipalScoreSet& scores);

}  // namespace pstrat
