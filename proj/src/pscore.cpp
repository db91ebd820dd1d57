#include "pstrat/pscore.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <ostream>
#include <sstream>

#include "pstrat/error.hpp"

namespace pstrat {

namespace {

constexpr double kSimplexTolerance = 1e-10;
constexpr std::size_t kMaxCells = 20;

struct Clipped {
  double a, c, n;
  bool clipped;
};

// Negative complier scores go to zero; (a, n) are rescaled to sum to one.
Clipped clip_complier(double a, double n) {
  const double c = 1.0 - a - n;
  if (c >= 0.0) return {a, c, n, false};
  const double total = a + n;
  return {a / total, 0.0, n / total, true};
}

std::string describe_cell(const std::vector<double>& key, const Dataset& data,
                          std::span<const std::size_t> columns) {
  std::ostringstream os;
  os << '(';
  for (std::size_t j = 0; j < key.size(); ++j) {
    if (j) os << ", ";
    os << data.covariate_names()[columns[j]] << '=' << format_double(key[j]);
  }
  os << ')';
  return os.str();
}

Eigen::MatrixXd rows_of(const Eigen::MatrixXd& x, const std::vector<std::size_t>& rows) {
  Eigen::MatrixXd out(static_cast<Eigen::Index>(rows.size()), x.cols());
  for (std::size_t r = 0; r < rows.size(); ++r) {
    out.row(static_cast<Eigen::Index>(r)) = x.row(static_cast<Eigen::Index>(rows[r]));
  }
  return out;
}

LogitModel fit_dose_model(const Dataset& data, int arm, const LogitOptions& options) {
  const auto rows = data.arm(arm);
  Eigen::VectorXd labels(static_cast<Eigen::Index>(rows.size()));
  for (std::size_t r = 0; r < rows.size(); ++r) {
    labels(static_cast<Eigen::Index>(r)) = data.d(rows[r]) == 1 ? 1.0 : 0.0;
  }
  const Eigen::VectorXd weights = Eigen::VectorXd::Ones(labels.size());
  return fit_logit(rows_of(data.x(), rows), labels, weights, options);
}

void require_design(const Dataset& data, Design design, std::string_view op) {
  if (data.design() != design) {
    throw ValidationError(std::string(op) + " requires a " + std::string(to_string(design)) +
                          " dataset");
  }
}

}  // namespace

std::string_view to_string(ScoreMethod method) {
  switch (method) {
    case ScoreMethod::Cell: return "cell";
    case ScoreMethod::MarginalLogit: return "marginal";
    case ScoreMethod::JointEM: return "joint";
    case ScoreMethod::Supplied: return "supplied";
  }
  return "?";
}

ScoreMethod parse_score_method(std::string_view text) {
  if (text == "cell") return ScoreMethod::Cell;
  if (text == "marginal" || text == "logit") return ScoreMethod::MarginalLogit;
  if (text == "joint") return ScoreMethod::JointEM;
  throw ValidationError("unknown score method '" + std::string(text) + "'");
}

Eigen::Index stratum_column(Design design, Stratum stratum) {
  const auto strata = strata_of(design);
  const auto it = std::find(strata.begin(), strata.end(), stratum);
  if (it == strata.end()) {
    throw ValidationError("stratum " + std::string(to_string(stratum)) + " is not part of a " +
                          std::string(to_string(design)) + " design");
  }
  return static_cast<Eigen::Index>(it - strata.begin());
}

double PrincipalScoreSet::operator()(std::size_t unit, Stratum stratum) const {
  return probs(static_cast<Eigen::Index>(unit), stratum_column(design, stratum));
}

Eigen::VectorXd PrincipalScoreSet::column(Stratum stratum) const {
  return probs.col(stratum_column(design, stratum));
}

void check_simplex(const PrincipalScoreSet& scores) {
  for (Eigen::Index i = 0; i < scores.probs.rows(); ++i) {
    for (Eigen::Index k = 0; k < scores.probs.cols(); ++k) {
      const double v = scores.probs(i, k);
      if (!(v >= 0.0 && v <= 1.0)) {
        throw InvariantViolation("principal score outside [0,1] at unit " + std::to_string(i));
      }
    }
    if (std::abs(scores.probs.row(i).sum() - 1.0) > kSimplexTolerance) {
      throw InvariantViolation("principal scores do not sum to one at unit " + std::to_string(i));
    }
  }
}

PrincipalScoreSet make_onesided_scores(std::span<const double> pi_high) {
  PrincipalScoreSet scores;
  scores.design = Design::OneSided;
  scores.probs.resize(static_cast<Eigen::Index>(pi_high.size()), 2);
  for (std::size_t i = 0; i < pi_high.size(); ++i) {
    scores.probs(static_cast<Eigen::Index>(i), 0) = pi_high[i];
    scores.probs(static_cast<Eigen::Index>(i), 1) = 1.0 - pi_high[i];
  }
  check_simplex(scores);
  return scores;
}

PrincipalScoreSet make_twosided_scores(std::span<const double> pi_a, std::span<const double> pi_c,
                                       std::span<const double> pi_n) {
  if (pi_a.size() != pi_c.size() || pi_a.size() != pi_n.size()) {
    throw ValidationError("score columns have mismatched lengths");
  }
  PrincipalScoreSet scores;
  scores.design = Design::TwoSided;
  scores.probs.resize(static_cast<Eigen::Index>(pi_a.size()), 3);
  for (std::size_t i = 0; i < pi_a.size(); ++i) {
    const auto r = static_cast<Eigen::Index>(i);
    scores.probs(r, 0) = pi_a[i];
    scores.probs(r, 1) = pi_c[i];
    scores.probs(r, 2) = pi_n[i];
  }
  scores.raw_complier.assign(pi_c.begin(), pi_c.end());
  check_simplex(scores);
  return scores;
}

PrincipalScoreSet pscore_onesided(const Dataset& data, const LogitOptions& options) {
  require_design(data, Design::OneSided, "pscore_onesided");
  const auto counts = cell_counts(data);
  if (counts[1][1] < 2 || counts[1][0] < 2) {
    throw EstimationError("one-sided score model needs at least 2 treated units per dose (H=" +
                          std::to_string(counts[1][1]) + ", L=" + std::to_string(counts[1][0]) +
                          ")");
  }
  PrincipalScoreSet scores;
  scores.design = Design::OneSided;
  scores.method = ScoreMethod::MarginalLogit;
  auto model = fit_dose_model(data, 1, options);
  const Eigen::VectorXd pi = predict_rows(model, data.x());
  scores.probs.resize(pi.size(), 2);
  scores.probs.col(0) = pi;
  scores.probs.col(1) = (1.0 - pi.array()).matrix();
  if (model.separated || !model.converged) {
    scores.separated = model.separated;
    scores.warnings.push_back(model.separated
                                  ? "dose model is separated; scores are from the last iterate"
                                  : "dose model did not converge");
  }
  scores.model_high = std::move(model);
  check_simplex(scores);
  return scores;
}

PrincipalScoreSet pscore_cell(const Dataset& data, std::span<const std::size_t> cell_columns) {
  std::vector<std::size_t> columns(cell_columns.begin(), cell_columns.end());
  if (columns.empty()) {
    for (std::size_t j = 0; j < data.num_covariates(); ++j) columns.push_back(j);
  }
  for (const auto c : columns) {
    if (c >= data.num_covariates()) throw ValidationError("cell column index out of range");
  }

  std::map<std::vector<double>, std::size_t> cell_of_key;
  std::vector<std::size_t> cell(data.size());
  for (std::size_t i = 0; i < data.size(); ++i) {
    std::vector<double> key;
    key.reserve(columns.size());
    for (const auto c : columns) {
      key.push_back(data.x()(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(c)));
    }
    const auto [it, inserted] = cell_of_key.emplace(std::move(key), cell_of_key.size());
    cell[i] = it->second;
    if (cell_of_key.size() > kMaxCells) {
      throw EstimationError("cell scores need discrete covariates: more than " +
                            std::to_string(kMaxCells) + " distinct covariate patterns");
    }
  }
  std::vector<const std::vector<double>*> key_of_cell(cell_of_key.size());
  for (const auto& [key, id] : cell_of_key) key_of_cell[id] = &key;

  // tallies[cell][z][d]
  std::vector<std::array<std::array<double, 2>, 2>> tallies(cell_of_key.size());
  for (std::size_t i = 0; i < data.size(); ++i) {
    if (!data.has_dose(i)) continue;
    tallies[cell[i]][static_cast<std::size_t>(data.z(i))][static_cast<std::size_t>(data.d(i))] += 1.0;
  }

  PrincipalScoreSet scores;
  scores.design = data.design();
  scores.method = ScoreMethod::Cell;
  const auto n = static_cast<Eigen::Index>(data.size());

  if (data.design() == Design::OneSided) {
    std::vector<double> pi_high(cell_of_key.size());
    for (std::size_t c = 0; c < tallies.size(); ++c) {
      const double treated = tallies[c][1][0] + tallies[c][1][1];
      if (treated == 0.0) {
        throw EstimationError("cell " + describe_cell(*key_of_cell[c], data, columns) +
                              " has no treated units");
      }
      pi_high[c] = tallies[c][1][1] / treated;
    }
    scores.probs.resize(n, 2);
    for (std::size_t i = 0; i < data.size(); ++i) {
      scores.probs(static_cast<Eigen::Index>(i), 0) = pi_high[cell[i]];
      scores.probs(static_cast<Eigen::Index>(i), 1) = 1.0 - pi_high[cell[i]];
    }
    check_simplex(scores);
    return scores;
  }

  std::vector<Clipped> per_cell(cell_of_key.size());
  std::vector<double> raw(cell_of_key.size());
  for (std::size_t c = 0; c < tallies.size(); ++c) {
    const double controls = tallies[c][0][0] + tallies[c][0][1];
    const double treated = tallies[c][1][0] + tallies[c][1][1];
    if (controls == 0.0 || treated == 0.0) {
      throw EstimationError("cell " + describe_cell(*key_of_cell[c], data, columns) +
                            (controls == 0.0 ? " has no control units" : " has no treated units"));
    }
    const double a = tallies[c][0][1] / controls;
    const double nv = tallies[c][1][0] / treated;
    raw[c] = 1.0 - a - nv;
    per_cell[c] = clip_complier(a, nv);
    if (per_cell[c].clipped) {
      scores.warnings.push_back("cell " + describe_cell(*key_of_cell[c], data, columns) +
                                ": complier score " + format_double(raw[c]) + " clipped to 0");
    }
  }
  scores.probs.resize(n, 3);
  scores.raw_complier.resize(data.size());
  for (std::size_t i = 0; i < data.size(); ++i) {
    const auto& s = per_cell[cell[i]];
    const auto r = static_cast<Eigen::Index>(i);
    scores.probs(r, 0) = s.a;
    scores.probs(r, 1) = s.c;
    scores.probs(r, 2) = s.n;
    scores.raw_complier[i] = raw[cell[i]];
    if (s.clipped) ++scores.clipped_units;
  }
  check_simplex(scores);
  return scores;
}

PrincipalScoreSet pscore_twosided_marginal(const Dataset& data, const LogitOptions& options) {
  require_design(data, Design::TwoSided, "pscore_twosided_marginal");
  const auto counts = cell_counts(data);
  for (int z = 0; z < 2; ++z) {
    for (int d = 0; d < 2; ++d) {
      if (counts[static_cast<std::size_t>(z)][static_cast<std::size_t>(d)] == 0) {
        throw EstimationError(
            "marginal two-sided scores need both values of d in both arms; cell (z=" +
            std::to_string(z) + ", d=" + std::to_string(d) +
            ") is empty. Without always-takers or never-takers the design is one-sided: "
            "relabel and use the one-sided score model");
      }
    }
  }
  auto always = fit_dose_model(data, 0, options);
  auto takeup = fit_dose_model(data, 1, options);
  if (always.separated || !always.converged) {
    throw EstimationError("always-taker model (controls) is separated or did not converge");
  }
  if (takeup.separated || !takeup.converged) {
    throw EstimationError("never-taker model (treated) is separated or did not converge");
  }

  const Eigen::VectorXd pa = predict_rows(always, data.x());
  const Eigen::VectorXd p_take = predict_rows(takeup, data.x());

  PrincipalScoreSet scores;
  scores.design = Design::TwoSided;
  scores.method = ScoreMethod::MarginalLogit;
  scores.probs.resize(pa.size(), 3);
  scores.raw_complier.resize(data.size());
  for (Eigen::Index i = 0; i < pa.size(); ++i) {
    const double nv = 1.0 - p_take(i);
    const auto s = clip_complier(pa(i), nv);
    scores.probs(i, 0) = s.a;
    scores.probs(i, 1) = s.c;
    scores.probs(i, 2) = s.n;
    scores.raw_complier[static_cast<std::size_t>(i)] = 1.0 - pa(i) - nv;
    if (s.clipped) ++scores.clipped_units;
  }
  if (scores.clipped_units > 0) {
    scores.warnings.push_back(std::to_string(scores.clipped_units) +
                              " units had negative complier scores clipped to 0; consider the "
                              "joint method");
  }
  scores.model_always = std::move(always);
  // Stored as the never-taker model: coefficients of P(D=0 | x, Z=1).
  takeup.coef = -takeup.coef;
  scores.model_never = std::move(takeup);
  check_simplex(scores);
  return scores;
}

PrincipalScoreSet pscore_twosided_joint(const Dataset& data, const JointOptions& options) {
  require_design(data, Design::TwoSided, "pscore_twosided_joint");
  const auto counts = cell_counts(data);
  const bool has_always = counts[0][1] > 0;
  const bool has_never = counts[1][0] > 0;

  // Model categories: complier always, plus whichever other strata are
  // observed somewhere. An unobserved stratum has maximum-likelihood mass 0.
  std::vector<Stratum> categories;
  if (has_always) categories.push_back(Stratum::Always);
  categories.push_back(Stratum::Complier);
  if (has_never) categories.push_back(Stratum::Never);
  const auto K = static_cast<Eigen::Index>(categories.size());
  const auto index_of = [&](Stratum s) -> Eigen::Index {
    const auto it = std::find(categories.begin(), categories.end(), s);
    return it == categories.end() ? -1 : static_cast<Eigen::Index>(it - categories.begin());
  };
  const Eigen::Index ia = index_of(Stratum::Always);
  const Eigen::Index ic = index_of(Stratum::Complier);
  const Eigen::Index in = index_of(Stratum::Never);

  const auto n = static_cast<Eigen::Index>(data.size());
  Eigen::MatrixXd resp = Eigen::MatrixXd::Zero(n, K);

  PrincipalScoreSet scores;
  scores.design = Design::TwoSided;
  scores.method = ScoreMethod::JointEM;

  // Initial posteriors for ambiguous units from the marginal method.
  std::optional<PrincipalScoreSet> start;
  if (has_always && has_never) {
    try {
      start = pscore_twosided_marginal(data);
    } catch (const EstimationError&) {
      scores.warnings.push_back("marginal initialization failed; using uniform split");
    }
  }
  auto e_step = [&](const Eigen::MatrixXd* probs) {
    for (Eigen::Index i = 0; i < n; ++i) {
      const auto u = static_cast<std::size_t>(i);
      resp.row(i).setZero();
      const int z = data.z(u);
      const int d = data.d(u);
      if (z == 0 && d == 1) {
        resp(i, ia) = 1.0;
      } else if (z == 1 && d == 0) {
        resp(i, in) = 1.0;
      } else {
        const Eigen::Index other = (z == 1) ? ia : in;
        if (other < 0) {
          resp(i, ic) = 1.0;
          continue;
        }
        double p_other = 0.5;
        double p_c = 0.5;
        if (probs != nullptr) {
          p_other = (*probs)(i, other);
          p_c = (*probs)(i, ic);
        } else if (start) {
          p_other = start->probs(i, other == ia ? 0 : 2);
          p_c = start->probs(i, 1);
        }
        const double total = p_other + p_c;
        if (total > 0.0) {
          resp(i, other) = p_other / total;
          resp(i, ic) = p_c / total;
        } else {
          resp(i, other) = 0.5;
          resp(i, ic) = 0.5;
        }
      }
    }
  };
  auto observed_loglik = [&](const Eigen::MatrixXd& probs) {
    double ll = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
      const auto u = static_cast<std::size_t>(i);
      const int z = data.z(u);
      const int d = data.d(u);
      double mass = 0.0;
      if (z == 0 && d == 1) {
        mass = probs(i, ia);
      } else if (z == 1 && d == 0) {
        mass = probs(i, in);
      } else {
        const Eigen::Index other = (z == 1) ? ia : in;
        mass = probs(i, ic) + (other >= 0 ? probs(i, other) : 0.0);
      }
      ll += std::log(mass);
    }
    return ll;
  };

  e_step(nullptr);
  MultinomialStrataModel model;
  const auto p = static_cast<Eigen::Index>(data.num_covariates()) + 1;
  Eigen::MatrixXd coef = Eigen::MatrixXd::Zero(p, K);
  Eigen::MatrixXd probs;
  for (int iter = 0; iter < options.max_iterations; ++iter) {
    const auto fit = fit_multinomial(data.x(), resp, ic, coef);
    coef = fit.coef;
    probs = multinomial_probabilities(data.x(), coef);
    const double ll = observed_loglik(probs);
    model.iterations = iter + 1;
    if (!model.loglik_trace.empty()) {
      const double prev = model.loglik_trace.back();
      if (ll < prev - options.tolerance) {
        throw InvariantViolation("EM observed-data log-likelihood decreased from " +
                                 format_double(prev) + " to " + format_double(ll));
      }
      model.loglik_trace.push_back(ll);
      if (std::abs(ll - prev) < options.tolerance) {
        model.converged = true;
        break;
      }
    } else {
      model.loglik_trace.push_back(ll);
    }
    e_step(&probs);
  }
  if (!model.converged) scores.warnings.push_back("EM reached the iteration limit");

  for (Eigen::Index k = 0; k < K; ++k) {
    if (resp.col(k).sum() < 1e-8) {
      scores.warnings.push_back("stratum " + std::string(to_string(categories[static_cast<std::size_t>(k)])) +
                                " has no posterior mass");
    }
  }
  if (ia >= 0) model.coef_a = coef.col(ia);
  if (in >= 0) model.coef_n = coef.col(in);

  scores.probs = Eigen::MatrixXd::Zero(n, 3);
  if (ia >= 0) scores.probs.col(0) = probs.col(ia);
  scores.probs.col(1) = probs.col(ic);
  if (in >= 0) scores.probs.col(2) = probs.col(in);
  scores.raw_complier.assign(scores.probs.col(1).data(), scores.probs.col(1).data() + n);
  scores.joint = std::move(model);
  check_simplex(scores);
  return scores;
}

PrincipalScoreSet estimate_scores(const Dataset& data, ScoreMethod method) {
  switch (method) {
    case ScoreMethod::Cell:
      return pscore_cell(data);
    case ScoreMethod::MarginalLogit:
      return data.design() == Design::OneSided ? pscore_onesided(data)
                                               : pscore_twosided_marginal(data);
    case ScoreMethod::JointEM:
      if (data.design() == Design::OneSided) {
        throw ValidationError("the joint score method applies to two-sided designs only");
      }
      return pscore_twosided_joint(data);
    case ScoreMethod::Supplied:
      break;
  }
  throw ValidationError("supplied scores cannot be estimated");
}

void write_scores_csv(std::ostream& out, const PrincipalScoreSet& scores) {
  out << "unit_index";
  for (const auto s : strata_of(scores.design)) out << ",pi_" << stratum_key(s);
  out << '\n';
  for (Eigen::Index i = 0; i < scores.probs.rows(); ++i) {
    out << i;
    for (Eigen::Index k = 0; k < scores.probs.cols(); ++k) out << ',' << format_double(scores.probs(i, k));
    out << '\n';
  }
}

namespace {

nlohmann::json logit_json(const LogitModel& m) {
  return {{"coef", std::vector<double>(m.coef.data(), m.coef.data() + m.coef.size())},
          {"converged", m.converged},
          {"separated", m.separated},
          {"iterations", m.iterations},
          {"max_abs_score", m.max_abs_score}};
}

std::vector<double> to_vec(const Eigen::VectorXd& v) {
  return std::vector<double>(v.data(), v.data() + v.size());
}

}  // namespace

nlohmann::json scores_metadata(const PrincipalScoreSet& scores) {
  nlohmann::json j;
  j["design"] = to_string(scores.design);
  j["method"] = to_string(scores.method);
  j["n_units"] = scores.size();
  j["clipped_units"] = scores.clipped_units;
  j["separated"] = scores.separated;
  j["warnings"] = scores.warnings;
  if (scores.model_high) j["model_high"] = logit_json(*scores.model_high);
  if (scores.model_always) j["model_always"] = logit_json(*scores.model_always);
  if (scores.model_never) j["model_never"] = logit_json(*scores.model_never);
  if (scores.joint) {
    j["joint"] = {{"coef_a", to_vec(scores.joint->coef_a)},
                  {"coef_n", to_vec(scores.joint->coef_n)},
                  {"reference", "complier"},
                  {"converged", scores.joint->converged},
                  {"iterations", scores.joint->iterations},
                  {"loglik_trace", scores.joint->loglik_trace}};
  }
  return j;
}

}  // namespace pstrat
