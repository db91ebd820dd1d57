#include "pstrat/logit.hpp"

#include <cmath>
#include <string>

#include "pstrat/error.hpp"

namespace pstrat {

namespace {

// log(1 + exp(eta)) without overflow.
double softplus(double eta) {
  return eta > 0.0 ? eta + std::log1p(std::exp(-eta)) : std::log1p(std::exp(eta));
}

double bernoulli_loglik(const Eigen::MatrixXd& design, const Eigen::VectorXd& labels,
                        const Eigen::VectorXd& weights, const Eigen::VectorXd& beta) {
  const Eigen::VectorXd eta = design * beta;
  double ll = 0.0;
  for (Eigen::Index i = 0; i < eta.size(); ++i) {
    if (weights(i) == 0.0) continue;
    ll += weights(i) * (labels(i) * eta(i) - softplus(eta(i)));
  }
  return ll;
}

double soft_objective(const Eigen::MatrixXd& targets, const Eigen::MatrixXd& probs) {
  double q = 0.0;
  for (Eigen::Index i = 0; i < targets.rows(); ++i) {
    for (Eigen::Index k = 0; k < targets.cols(); ++k) {
      if (targets(i, k) > 0.0) q += targets(i, k) * std::log(probs(i, k));
    }
  }
  return q;
}

}  // namespace

double expit(double eta) {
  if (eta >= 0.0) return 1.0 / (1.0 + std::exp(-eta));
  const double e = std::exp(eta);
  return e / (1.0 + e);
}

Eigen::MatrixXd with_intercept(const Eigen::MatrixXd& features) {
  Eigen::MatrixXd design(features.rows(), features.cols() + 1);
  design.col(0).setOnes();
  design.rightCols(features.cols()) = features;
  return design;
}

LogitModel fit_logit(const Eigen::MatrixXd& features, const Eigen::VectorXd& labels,
                     const Eigen::VectorXd& weights, const LogitOptions& options) {
  const Eigen::Index n = features.rows();
  const Eigen::Index p = features.cols() + 1;
  if (labels.size() != n || weights.size() != n) {
    throw ValidationError("fit_logit: labels/weights length does not match features");
  }
  if ((weights.array() < 0.0).any()) throw ValidationError("fit_logit: negative weight");

  const Eigen::Index n_positive = (weights.array() > 0.0).count();
  if (n_positive < p) {
    throw EstimationError("logistic fit needs at least " + std::to_string(p) +
                          " units with positive weight, got " + std::to_string(n_positive));
  }

  LogitModel model;
  model.coef = Eigen::VectorXd::Zero(p);
  const double mass_one = (weights.array() * labels.array()).sum();
  const double mass_zero = (weights.array() * (1.0 - labels.array())).sum();
  if (mass_one <= 0.0 || mass_zero <= 0.0) {
    model.separated = true;
    model.max_abs_score = std::abs(mass_one - 0.5 * (mass_one + mass_zero));
    return model;
  }

  const Eigen::MatrixXd design = with_intercept(features);
  Eigen::VectorXd beta = Eigen::VectorXd::Zero(p);
  for (int iter = 0;; ++iter) {
    const Eigen::VectorXd eta = design * beta;
    Eigen::VectorXd prob(n);
    for (Eigen::Index i = 0; i < n; ++i) prob(i) = expit(eta(i));
    const Eigen::VectorXd resid = weights.cwiseProduct(labels - prob);
    const Eigen::VectorXd score = design.transpose() * resid;
    model.max_abs_score = score.cwiseAbs().maxCoeff();
    model.iterations = iter;
    if (model.max_abs_score < options.score_tolerance) {
      model.converged = true;
      break;
    }
    if (iter == options.max_iterations) break;

    const Eigen::VectorXd irls_w = weights.cwiseProduct(prob.cwiseProduct(
        (1.0 - prob.array()).matrix()));
    Eigen::MatrixXd info = design.transpose() * irls_w.asDiagonal() * design;
    info.diagonal().array() += options.ridge;
    const Eigen::VectorXd step = info.ldlt().solve(score);

    const double ll_old = bernoulli_loglik(design, labels, weights, beta);
    double t = 1.0;
    Eigen::VectorXd candidate = beta + step;
    while (t > 1e-10 &&
           bernoulli_loglik(design, labels, weights, candidate) < ll_old - 1e-12 * std::abs(ll_old)) {
      t *= 0.5;
      candidate = beta + t * step;
    }
    beta = candidate;
    if (beta.norm() > options.divergence_norm) {
      model.separated = true;
      model.iterations = iter + 1;
      break;
    }
  }
  model.coef = beta;
  if (!model.separated) {
    // Separated data can meet the score tolerance before the coefficients
    // diverge; fitted probabilities pinned at 0 or 1 give it away.
    const Eigen::VectorXd eta = design * beta;
    for (Eigen::Index i = 0; i < n; ++i) {
      if (weights(i) > 0.0 && std::abs(eta(i)) > options.saturation_eta) {
        model.separated = true;
        break;
      }
    }
  }
  return model;
}

double predict_proba(const LogitModel& model, std::span<const double> x) {
  if (!model.converged) throw EstimationError("predict_proba: logistic model did not converge");
  if (static_cast<Eigen::Index>(x.size()) + 1 != model.coef.size()) {
    throw ValidationError("predict_proba: covariate vector has length " +
                          std::to_string(x.size()) + ", model expects " +
                          std::to_string(model.coef.size() - 1));
  }
  double eta = model.coef(0);
  for (std::size_t j = 0; j < x.size(); ++j) eta += model.coef(static_cast<Eigen::Index>(j) + 1) * x[j];
  return expit(eta);
}

Eigen::VectorXd predict_rows(const LogitModel& model, const Eigen::MatrixXd& features) {
  const Eigen::VectorXd eta =
      (features * model.coef.tail(model.coef.size() - 1)).array() + model.coef(0);
  Eigen::VectorXd prob(eta.size());
  for (Eigen::Index i = 0; i < eta.size(); ++i) prob(i) = expit(eta(i));
  return prob;
}

Eigen::MatrixXd multinomial_probabilities(const Eigen::MatrixXd& features,
                                          const Eigen::MatrixXd& coef) {
  const Eigen::MatrixXd eta = with_intercept(features) * coef;
  Eigen::MatrixXd probs(eta.rows(), eta.cols());
  for (Eigen::Index i = 0; i < eta.rows(); ++i) {
    const double top = eta.row(i).maxCoeff();
    double total = 0.0;
    for (Eigen::Index k = 0; k < eta.cols(); ++k) {
      probs(i, k) = std::exp(eta(i, k) - top);
      total += probs(i, k);
    }
    probs.row(i) /= total;
  }
  return probs;
}

MultinomialFit fit_multinomial(const Eigen::MatrixXd& features, const Eigen::MatrixXd& targets,
                               Eigen::Index reference, const Eigen::MatrixXd& start,
                               double ridge) {
  const Eigen::Index n = features.rows();
  const Eigen::Index p = features.cols() + 1;
  const Eigen::Index K = targets.cols();
  if (targets.rows() != n || start.rows() != p || start.cols() != K || reference < 0 ||
      reference >= K) {
    throw ValidationError("fit_multinomial: inconsistent dimensions");
  }

  MultinomialFit fit;
  fit.coef = start;
  fit.coef.col(reference).setZero();
  if (K == 1) {
    fit.converged = true;
    return fit;
  }

  const Eigen::MatrixXd design = with_intercept(features);
  const Eigen::VectorXd row_mass = targets.rowwise().sum();
  // Free categories, in order, skipping the reference.
  std::vector<Eigen::Index> free;
  for (Eigen::Index k = 0; k < K; ++k) {
    if (k != reference) free.push_back(k);
  }
  const auto m = static_cast<Eigen::Index>(free.size());

  Eigen::MatrixXd probs = multinomial_probabilities(features, fit.coef);
  fit.objective = soft_objective(targets, probs);
  constexpr int kMaxIterations = 100;
  for (int iter = 0; iter < kMaxIterations; ++iter) {
    Eigen::VectorXd grad(m * p);
    for (Eigen::Index a = 0; a < m; ++a) {
      const Eigen::VectorXd r =
          targets.col(free[a]) - row_mass.cwiseProduct(probs.col(free[a]));
      grad.segment(a * p, p) = design.transpose() * r;
    }
    fit.iterations = iter;
    if (grad.cwiseAbs().maxCoeff() < 1e-9) {
      fit.converged = true;
      break;
    }
    Eigen::MatrixXd info(m * p, m * p);
    for (Eigen::Index a = 0; a < m; ++a) {
      for (Eigen::Index b = a; b < m; ++b) {
        Eigen::VectorXd w(n);
        for (Eigen::Index i = 0; i < n; ++i) {
          const double pa = probs(i, free[a]);
          const double pb = probs(i, free[b]);
          w(i) = row_mass(i) * (a == b ? pa * (1.0 - pa) : -pa * pb);
        }
        const Eigen::MatrixXd block = design.transpose() * w.asDiagonal() * design;
        info.block(a * p, b * p, p, p) = block;
        if (a != b) info.block(b * p, a * p, p, p) = block.transpose();
      }
    }
    info.diagonal().array() += ridge;
    const Eigen::VectorXd step = info.ldlt().solve(grad);

    double t = 1.0;
    Eigen::MatrixXd candidate = fit.coef;
    Eigen::MatrixXd cand_probs;
    double cand_obj = 0.0;
    while (true) {
      candidate = fit.coef;
      for (Eigen::Index a = 0; a < m; ++a) candidate.col(free[a]) += t * step.segment(a * p, p);
      cand_probs = multinomial_probabilities(features, candidate);
      cand_obj = soft_objective(targets, cand_probs);
      if (cand_obj >= fit.objective || t < 1e-10) break;
      t *= 0.5;
    }
    if (cand_obj < fit.objective) {
      // No ascent direction left at machine precision.
      fit.converged = true;
      break;
    }
    fit.coef = candidate;
    probs = cand_probs;
    const double gain = cand_obj - fit.objective;
    fit.objective = cand_obj;
    if (gain <= 1e-14 * std::max(1.0, std::abs(cand_obj))) {
      fit.converged = true;
      break;
    }
  }
  return fit;
}

}  // namespace pstrat
