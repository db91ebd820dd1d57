#pragma once

#include <Eigen/Dense>

#include <span>

namespace pstrat {

double expit(double eta);

// Binary logistic regression. coef holds the intercept first, then one
// slope per feature column.
struct LogitModel {
  Eigen::VectorXd coef;
  bool converged = false;
  // Complete or quasi-complete separation: the coefficient norm ran past
  // the divergence bound or some fitted probability is saturated. The last
  // iterate is kept in coef.
  bool separated = false;
  int iterations = 0;
  double max_abs_score = 0.0;
};

struct LogitOptions {
  double score_tolerance = 1e-8;
  int max_iterations = 100;
  double ridge = 1e-10;
  double divergence_norm = 30.0;
  // |linear predictor| beyond this at a weighted unit (fitted probability
  // within ~1e-6 of 0 or 1) marks the fit as separated.
  double saturation_eta = 14.0;
};

// Weighted Bernoulli maximum likelihood by iteratively reweighted least
// squares. features is N x k without the intercept column; labels are 0/1.
// Separation is reported through the model flags, not thrown.
LogitModel fit_logit(const Eigen::MatrixXd& features, const Eigen::VectorXd& labels,
                     const Eigen::VectorXd& weights, const LogitOptions& options = {});

// Throws EstimationError when the model did not converge.
double predict_proba(const LogitModel& model, std::span<const double> x);

// Fitted probabilities for every row, without the convergence check.
Eigen::VectorXd predict_rows(const LogitModel& model, const Eigen::MatrixXd& features);

// Multinomial logistic regression on soft (fractional) category counts.
// Category `reference` has its linear predictor pinned at zero; coef has one
// column per category (the reference column stays zero).
struct MultinomialFit {
  Eigen::MatrixXd coef;  // (k+1) x K
  bool converged = false;
  int iterations = 0;
  double objective = 0.0;  // sum_i sum_k r_ik log p_ik
};

MultinomialFit fit_multinomial(const Eigen::MatrixXd& features, const Eigen::MatrixXd& targets,
                               Eigen::Index reference, const Eigen::MatrixXd& start,
                               double ridge = 1e-10);

// N x K category probabilities under the given coefficients.
Eigen::MatrixXd multinomial_probabilities(const Eigen::MatrixXd& features,
                                          const Eigen::MatrixXd& coef);

// [1, features] design matrix.
Eigen::MatrixXd with_intercept(const Eigen::MatrixXd& features);

}  // namespace pstrat
