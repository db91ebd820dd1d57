#include "pstrat/simulation.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <functional>
#include <numeric>
#include <optional>
#include <ostream>
#include <set>
#include <thread>

#include <boost/math/constants/constants.hpp>
#include <boost/math/quadrature/gauss_kronrod.hpp>

#include "pstrat/error.hpp"
#include "pstrat/inference.hpp"
#include "pstrat/logit.hpp"
#include "pstrat/onesided.hpp"
#include "pstrat/pscore.hpp"
#include "pstrat/rng.hpp"

namespace pstrat {

namespace {

constexpr double kMaxStudyFailureShare = 0.05;

std::vector<int> assign(int n, double p, AssignmentScheme scheme, Rng& rng) {
  std::vector<int> z(static_cast<std::size_t>(n), 0);
  if (scheme == AssignmentScheme::Bernoulli) {
    std::bernoulli_distribution coin(p);
    for (auto& zi : z) zi = coin(rng) ? 1 : 0;
    return z;
  }
  const auto n1 = static_cast<std::size_t>(std::llround(n * p));
  std::fill(z.begin(), z.begin() + static_cast<std::ptrdiff_t>(n1), 1);
  std::shuffle(z.begin(), z.end(), rng);
  return z;
}

double integrate(const std::function<double(double)>& f) {
  using boost::math::quadrature::gauss_kronrod;
  return gauss_kronrod<double, 61>::integrate(f, -10.0, 10.0, 15, 1e-10);
}

struct RepOutcome {
  bool ok = false;
  double itt = 0.0;
  double se = 0.0;
  bool covered = false;
};

PipelineSpec spec_for(StudyMethod m) {
  PipelineSpec spec;
  spec.score = ScoreMethod::MarginalLogit;
  spec.assumption = m == StudyMethod::WkWt ? Assumption::WeakPI : Assumption::StrongPI;
  spec.estimator = m == StudyMethod::Sub ? EstimatorKind::Subgroup : EstimatorKind::Weighting;
  return spec;
}

EstimateSet run_method(StudyMethod m, const Dataset& data, const PrincipalScoreSet& scores,
                       double level) {
  switch (m) {
    case StudyMethod::Sub: return estimate_discrete_subgroup(data, scores, level);
    case StudyMethod::Wt: return estimate_weighting_strong(data, scores, level);
    case StudyMethod::WkWt: return estimate_weighting_weak(data, scores, level);
  }
  throw ValidationError("unknown study method");
}

template <class T>
T get_number(const nlohmann::json& j, const char* key) {
  if (!j.is_number()) throw ValidationError(std::string("config key '") + key + "' must be a number");
  return j.get<T>();
}

std::vector<double> number_list(const nlohmann::json& j, const char* key) {
  if (j.is_number()) return {j.get<double>()};
  if (!j.is_array() || j.empty()) {
    throw ValidationError(std::string("config key '") + key + "' must be a number or a non-empty list");
  }
  std::vector<double> out;
  for (const auto& v : j) out.push_back(get_number<double>(v, key));
  return out;
}

}  // namespace

void SimConfig::check() const {
  if (n < 4) throw ValidationError("n must be at least 4");
  if (!(p_treat > 0.0 && p_treat < 1.0)) throw ValidationError("p_treat must lie in (0, 1)");
  if (!(sigma_y >= 0.0) || !(sigma_tau >= 0.0)) throw ValidationError("noise sds must be >= 0");
  for (const double v : {eta0, eta1, alpha, beta0, beta1, tau, gamma0, gamma1, delta0, delta1}) {
    if (!std::isfinite(v)) throw ValidationError("simulation coefficients must be finite");
  }
}

SimDraw simulate(const SimConfig& config, std::uint64_t seed) {
  config.check();
  auto rng = make_stream(seed, {});
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> unif(0.0, 1.0);

  const auto n = static_cast<std::size_t>(config.n);
  Eigen::MatrixXd x(config.n, 1);
  std::vector<int> high(n);
  std::vector<double> tau(n), pi(n), y0(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double xi = normal(rng);
    x(static_cast<Eigen::Index>(i), 0) = xi;
    pi[i] = expit(config.eta0 + config.eta1 * xi);
    high[i] = unif(rng) < pi[i] ? 1 : 0;
    const double h = high[i];
    y0[i] = config.alpha + config.beta0 * xi + config.gamma0 * h + config.delta0 * h * xi +
            config.sigma_y * normal(rng);
    tau[i] = config.tau + config.beta1 * xi + config.gamma1 * h + config.delta1 * h * xi +
             config.sigma_tau * normal(rng);
  }
  auto z = assign(config.n, config.p_treat, config.assignment, rng);
  std::vector<int> d(n);
  std::vector<double> y(n);
  for (std::size_t i = 0; i < n; ++i) {
    d[i] = z[i] == 1 ? high[i] : kNoDose;
    y[i] = y0[i] + (z[i] == 1 ? tau[i] : 0.0);
  }
  Dataset data(Design::OneSided, std::move(z), std::move(d), std::move(y), std::move(x), {"x"});
  return {std::move(data), std::move(high), std::move(tau), std::move(pi)};
}

TrueEstimands true_estimands(const SimConfig& config) {
  config.check();
  const double inv_sqrt_2pi = boost::math::constants::one_div_root_two_pi<double>();
  const auto phi = [&](double x) { return inv_sqrt_2pi * std::exp(-0.5 * x * x); };
  const auto e = [&](double x) { return expit(config.eta0 + config.eta1 * x); };

  TrueEstimands t;
  t.p_high = integrate([&](double x) { return e(x) * phi(x); });
  const double x_high = integrate([&](double x) { return x * e(x) * phi(x); });
  const double x_low = integrate([&](double x) { return x * (1.0 - e(x)) * phi(x); });
  t.mean_x_high = x_high / t.p_high;
  t.mean_x_low = x_low / (1.0 - t.p_high);
  t.itt_h = config.tau + config.gamma1 + (config.beta1 + config.delta1) * t.mean_x_high;
  t.itt_l = config.tau + config.beta1 * t.mean_x_low;
  return t;
}

std::string_view to_string(StudyMethod method) {
  switch (method) {
    case StudyMethod::Sub: return "Sub";
    case StudyMethod::Wt: return "Wt";
    case StudyMethod::WkWt: return "WkWt";
  }
  return "?";
}

StudyMethod parse_study_method(std::string_view text) {
  if (text == "Sub") return StudyMethod::Sub;
  if (text == "Wt") return StudyMethod::Wt;
  if (text == "WkWt") return StudyMethod::WkWt;
  throw ValidationError("unknown study method '" + std::string(text) + "' (expected Sub, Wt or WkWt)");
}

void StudyConfig::check() const {
  base.check();
  if (cells.empty()) throw ValidationError("the study has no cells");
  if (methods.empty()) throw ValidationError("the study has no methods");
  if (reps < 1) throw ValidationError("reps must be at least 1");
  if (jobs < 1) throw ValidationError("jobs must be at least 1");
  ci.check();
  if (oracle_scores && ci.method == CIMethod::BootstrapPercentile) {
    throw ValidationError("bootstrap CIs refit scores and cannot use oracle scores");
  }
}

SimConfig parse_sim_config(const nlohmann::json& j) {
  if (!j.is_object()) throw ValidationError("'base' must be an object");
  SimConfig c;
  for (const auto& [key, v] : j.items()) {
    if (key == "n") c.n = get_number<int>(v, "n");
    else if (key == "p_treat") c.p_treat = get_number<double>(v, "p_treat");
    else if (key == "eta0") c.eta0 = get_number<double>(v, "eta0");
    else if (key == "eta1") c.eta1 = get_number<double>(v, "eta1");
    else if (key == "alpha") c.alpha = get_number<double>(v, "alpha");
    else if (key == "beta0") c.beta0 = get_number<double>(v, "beta0");
    else if (key == "beta1") c.beta1 = get_number<double>(v, "beta1");
    else if (key == "tau") c.tau = get_number<double>(v, "tau");
    else if (key == "gamma0") c.gamma0 = get_number<double>(v, "gamma0");
    else if (key == "gamma1") c.gamma1 = get_number<double>(v, "gamma1");
    else if (key == "delta0") c.delta0 = get_number<double>(v, "delta0");
    else if (key == "delta1") c.delta1 = get_number<double>(v, "delta1");
    else if (key == "sigma_y") c.sigma_y = get_number<double>(v, "sigma_y");
    else if (key == "sigma_tau") c.sigma_tau = get_number<double>(v, "sigma_tau");
    else if (key == "assignment") {
      const auto s = v.is_string() ? v.get<std::string>() : std::string();
      if (s == "complete") c.assignment = AssignmentScheme::Complete;
      else if (s == "bernoulli") c.assignment = AssignmentScheme::Bernoulli;
      else throw ValidationError("'assignment' must be \"complete\" or \"bernoulli\"");
    } else {
      throw ValidationError("unknown simulation parameter '" + key + "'");
    }
  }
  c.check();
  return c;
}

nlohmann::json to_json(const SimConfig& c) {
  return {{"n", c.n},           {"p_treat", c.p_treat},
          {"eta0", c.eta0},     {"eta1", c.eta1},
          {"alpha", c.alpha},   {"beta0", c.beta0},
          {"beta1", c.beta1},   {"tau", c.tau},
          {"gamma0", c.gamma0}, {"gamma1", c.gamma1},
          {"delta0", c.delta0}, {"delta1", c.delta1},
          {"sigma_y", c.sigma_y}, {"sigma_tau", c.sigma_tau},
          {"assignment", c.assignment == AssignmentScheme::Complete ? "complete" : "bernoulli"}};
}

StudyConfig parse_study_config(const nlohmann::json& j) {
  if (!j.is_object()) throw ValidationError("study config must be a JSON object");
  StudyConfig c;
  bool have_grid = false, have_cells = false;
  for (const auto& [key, v] : j.items()) {
    if (key == "base") {
      c.base = parse_sim_config(v);
    } else if (key == "grid") {
      if (!v.is_object()) throw ValidationError("'grid' must be an object");
      std::vector<double> b1{0.0}, g0{0.0}, g1{0.0};
      for (const auto& [gk, gv] : v.items()) {
        if (gk == "beta1") b1 = number_list(gv, "grid.beta1");
        else if (gk == "gamma0") g0 = number_list(gv, "grid.gamma0");
        else if (gk == "gamma1") g1 = number_list(gv, "grid.gamma1");
        else throw ValidationError("unknown grid axis '" + gk + "'");
      }
      for (const double a : b1)
        for (const double b : g0)
          for (const double g : g1) c.cells.push_back({a, b, g});
      have_grid = true;
    } else if (key == "cells") {
      if (!v.is_array()) throw ValidationError("'cells' must be a list");
      for (const auto& cell : v) {
        if (!cell.is_object()) throw ValidationError("each cell must be an object");
        StudyCell sc;
        for (const auto& [ck, cv] : cell.items()) {
          if (ck == "beta1") sc.beta1 = get_number<double>(cv, "beta1");
          else if (ck == "gamma0") sc.gamma0 = get_number<double>(cv, "gamma0");
          else if (ck == "gamma1") sc.gamma1 = get_number<double>(cv, "gamma1");
          else throw ValidationError("unknown cell key '" + ck + "'");
        }
        c.cells.push_back(sc);
      }
      have_cells = true;
    } else if (key == "methods") {
      if (!v.is_array()) throw ValidationError("'methods' must be a list");
      c.methods.clear();
      for (const auto& m : v) {
        if (!m.is_string()) throw ValidationError("methods must be strings");
        c.methods.push_back(parse_study_method(m.get<std::string>()));
      }
    } else if (key == "reps") {
      c.reps = get_number<int>(v, "reps");
    } else if (key == "seed") {
      if (!v.is_number_unsigned()) throw ValidationError("'seed' must be a non-negative integer");
      c.seed = v.get<std::uint64_t>();
    } else if (key == "scores") {
      const auto s = v.is_string() ? v.get<std::string>() : std::string();
      if (s == "logit") c.oracle_scores = false;
      else if (s == "oracle") c.oracle_scores = true;
      else throw ValidationError("'scores' must be \"logit\" or \"oracle\"");
    } else if (key == "ci") {
      if (!v.is_string()) throw ValidationError("'ci' must be a string");
      c.ci.method = parse_ci_method(v.get<std::string>());
    } else if (key == "n_boot") {
      c.ci.n_boot = get_number<int>(v, "n_boot");
    } else if (key == "level") {
      c.ci.level = get_number<double>(v, "level");
    } else if (key == "description") {
      // free text
    } else {
      throw ValidationError("unknown study config key '" + key + "'");
    }
  }
  if (have_grid && have_cells) throw ValidationError("give either 'grid' or 'cells', not both");
  if (!have_grid && !have_cells) c.cells.push_back({c.base.beta1, c.base.gamma0, c.base.gamma1});
  std::set<StudyMethod> seen(c.methods.begin(), c.methods.end());
  if (seen.size() != c.methods.size()) throw ValidationError("duplicate study method");
  c.check();
  return c;
}

StudyResult run_study(const StudyConfig& config) {
  config.check();
  const auto n_cells = config.cells.size();
  const auto n_methods = config.methods.size();
  const auto reps = static_cast<std::size_t>(config.reps);

  std::vector<SimConfig> sims(n_cells, config.base);
  std::vector<TrueEstimands> truth(n_cells);
  for (std::size_t c = 0; c < n_cells; ++c) {
    sims[c].beta1 = config.cells[c].beta1;
    sims[c].gamma0 = config.cells[c].gamma0;
    sims[c].gamma1 = config.cells[c].gamma1;
    truth[c] = true_estimands(sims[c]);
  }

  // outcomes[(c * reps + r) * n_methods + m]
  std::vector<RepOutcome> outcomes(n_cells * reps * n_methods);
  const std::size_t n_tasks = n_cells * reps;
  std::atomic<std::size_t> next{0};
  const auto worker = [&] {
    for (std::size_t t = next++; t < n_tasks; t = next++) {
      const auto c = t / reps;
      const auto r = t % reps;
      RepOutcome* out = &outcomes[t * n_methods];
      const double target = truth[c].itt_h;
      const auto seed = derive_seed(config.seed, {c, r});
      std::optional<SimDraw> draw;
      std::optional<PrincipalScoreSet> scores;
      try {
        draw = simulate(sims[c], seed);
        if (config.ci.method == CIMethod::AnalyticNormal) {
          scores = config.oracle_scores ? make_onesided_scores(draw->pi) : pscore_onesided(draw->data);
        }
      } catch (const std::exception&) {
        continue;  // every method fails for this replicate
      }
      for (std::size_t m = 0; m < n_methods; ++m) {
        try {
          EstimateSet est;
          if (config.ci.method == CIMethod::AnalyticNormal) {
            est = run_method(config.methods[m], draw->data, *scores, config.ci.level);
          } else {
            auto ci = config.ci;
            ci.seed = derive_seed(seed, {m});
            ci.jobs = 1;
            est = bootstrap_ci(draw->data, spec_for(config.methods[m]), ci).estimates;
          }
          const auto& h = est.at(Stratum::High);
          out[m] = {true, h.itt, h.se, h.ci_lo <= target && target <= h.ci_hi};
        } catch (const std::exception&) {
          out[m] = {};
        }
      }
    }
  };
  const auto jobs = std::max<std::size_t>(1, std::min<std::size_t>(static_cast<std::size_t>(config.jobs), n_tasks));
  std::vector<std::thread> pool;
  for (std::size_t j = 1; j < jobs; ++j) pool.emplace_back(worker);
  worker();
  for (auto& th : pool) th.join();

  StudyResult result;
  for (std::size_t c = 0; c < n_cells; ++c) {
    CellResult cell{config.cells[c], truth[c], {}};
    for (std::size_t m = 0; m < n_methods; ++m) {
      MethodSummary s;
      s.method = config.methods[m];
      double sum = 0.0, sum_se = 0.0;
      int covered = 0;
      std::vector<double> errors;
      for (std::size_t r = 0; r < reps; ++r) {
        const auto& o = outcomes[(c * reps + r) * n_methods + m];
        if (!o.ok) {
          ++s.failures;
          continue;
        }
        errors.push_back(o.itt - truth[c].itt_h);
        sum += errors.back();
        sum_se += o.se;
        covered += o.covered ? 1 : 0;
      }
      if (s.failures > kMaxStudyFailureShare * config.reps) {
        throw EstimationError("method " + std::string(to_string(s.method)) + " failed in " +
                              std::to_string(s.failures) + " of " + std::to_string(config.reps) +
                              " replicates of cell (beta1=" + format_double(cell.cell.beta1) +
                              ", gamma0=" + format_double(cell.cell.gamma0) +
                              ", gamma1=" + format_double(cell.cell.gamma1) + ")");
      }
      s.n_reps = static_cast<int>(errors.size());
      if (s.n_reps > 0) {
        s.bias = sum / s.n_reps;
        s.mean_se = sum_se / s.n_reps;
        s.coverage = static_cast<double>(covered) / s.n_reps;
        double ss = 0.0;
        for (const double e : errors) ss += (e - s.bias) * (e - s.bias);
        s.mc_se = s.n_reps > 1 ? std::sqrt(ss / (s.n_reps - 1) / s.n_reps) : 0.0;
      }
      cell.methods.push_back(s);
    }
    result.cells.push_back(std::move(cell));
  }
  return result;
}

void write_study_csv(std::ostream& out, const StudyResult& result) {
  if (result.cells.empty()) return;
  const auto& methods = result.cells.front().methods;
  out << "beta1,gamma0,gamma1,itt_h_true";
  for (const char* field : {"bias", "coverage", "mcse", "n_reps", "failures"}) {
    for (const auto& m : methods) out << ',' << field << '_' << to_string(m.method);
  }
  out << '\n';
  for (const auto& cell : result.cells) {
    out << format_double(cell.cell.beta1) << ',' << format_double(cell.cell.gamma0) << ','
        << format_double(cell.cell.gamma1) << ',' << format_double(cell.truth.itt_h);
    for (const auto& m : cell.methods) out << ',' << format_double(m.bias);
    for (const auto& m : cell.methods) out << ',' << format_double(m.coverage);
    for (const auto& m : cell.methods) out << ',' << format_double(m.mc_se);
    for (const auto& m : cell.methods) out << ',' << m.n_reps;
    for (const auto& m : cell.methods) out << ',' << m.failures;
    out << '\n';
  }
}

TwoSidedDraw simulate_twosided(const TwoSidedSimConfig& config, std::uint64_t seed) {
  const auto k = config.k;
  if (config.n < 4 || k < 0) throw ValidationError("invalid two-sided simulation size");
  if (config.coef_a.size() != k + 1 || config.coef_n.size() != k + 1 || config.beta.size() != k) {
    throw ValidationError("two-sided simulation coefficients have the wrong length");
  }
  if (!(config.p_treat > 0.0 && config.p_treat < 1.0)) throw ValidationError("p_treat must lie in (0, 1)");
  auto rng = make_stream(seed, {});
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> unif(0.0, 1.0);

  const auto n = static_cast<std::size_t>(config.n);
  Eigen::MatrixXd x(config.n, k);
  Eigen::MatrixXd probs(config.n, 3);
  std::vector<Stratum> strata(n);
  std::vector<double> y0(n), y1(n);
  for (std::size_t i = 0; i < n; ++i) {
    const auto row = static_cast<Eigen::Index>(i);
    for (Eigen::Index j = 0; j < k; ++j) x(row, j) = normal(rng);
    const double eta_a = config.coef_a(0) + x.row(row).dot(config.coef_a.tail(k));
    const double eta_n = config.coef_n(0) + x.row(row).dot(config.coef_n.tail(k));
    const double top = std::max({eta_a, 0.0, eta_n});
    const double ea = std::exp(eta_a - top), ec = std::exp(-top), en = std::exp(eta_n - top);
    const double total = ea + ec + en;
    probs(row, 0) = ea / total;
    probs(row, 1) = ec / total;
    probs(row, 2) = en / total;
    const double u = unif(rng);
    const int s = u < probs(row, 0) ? 0 : (u < probs(row, 0) + probs(row, 1) ? 1 : 2);
    strata[i] = s == 0 ? Stratum::Always : (s == 1 ? Stratum::Complier : Stratum::Never);
    y0[i] = x.row(row).dot(config.beta) + config.shift0[static_cast<std::size_t>(s)] +
            config.sigma_y * normal(rng);
    y1[i] = y0[i] + config.tau[static_cast<std::size_t>(s)];
  }
  auto z = assign(config.n, config.p_treat, AssignmentScheme::Complete, rng);
  std::vector<int> d(n);
  std::vector<double> y(n);
  for (std::size_t i = 0; i < n; ++i) {
    d[i] = strata[i] == Stratum::Always ? 1 : (strata[i] == Stratum::Never ? 0 : z[i]);
    y[i] = z[i] == 1 ? y1[i] : y0[i];
  }
  std::vector<std::string> names;
  for (int j = 1; j <= k; ++j) names.push_back("x" + std::to_string(j));
  Dataset data(Design::TwoSided, std::move(z), std::move(d), std::move(y), std::move(x),
               std::move(names));
  return {std::move(data), std::move(strata), std::move(probs)};
}

}  // namespace pstrat
