#include <doctest.h>

#include <cmath>
#include <random>
#include <sstream>

#include "pstrat/error.hpp"
#include "pstrat/logit.hpp"
#include "pstrat/onesided.hpp"
#include "pstrat/simulation.hpp"

using namespace pstrat;

namespace {

const MethodSummary& summary(const CellResult& cell, StudyMethod m) {
  for (const auto& s : cell.methods) {
    if (s.method == m) return s;
  }
  throw std::runtime_error("method missing");
}

}  // namespace

TEST_CASE("complete randomization treats exactly round(n p) units") {
  SimConfig c;
  c.n = 2001;
  c.p_treat = 0.5;
  const auto draw = simulate(c, 1);
  CHECK(draw.data.arm_size(1) == 1001);
  c.n = 2000;
  CHECK(simulate(c, 2).data.arm_size(1) == 1000);
}

TEST_CASE("Bernoulli assignment varies the arm size") {
  SimConfig c;
  c.assignment = AssignmentScheme::Bernoulli;
  bool varied = false;
  for (std::uint64_t s = 0; s < 5; ++s) varied = varied || simulate(c, s).data.arm_size(1) != 1000;
  CHECK(varied);
}

TEST_CASE("High-taker share is within three standard errors of the truth") {
  SimConfig c;
  c.n = 20000;
  const auto truth = true_estimands(c);
  for (std::uint64_t seed = 1; seed <= 3; ++seed) {
    const auto draw = simulate(c, seed);
    double h = 0;
    for (const int v : draw.high) h += v;
    const double se = std::sqrt(truth.p_high * (1 - truth.p_high) / c.n);
    CHECK(std::abs(h / c.n - truth.p_high) < 3 * se);
  }
}

TEST_CASE("treated units reveal their stratum and controls do not") {
  const auto draw = simulate(SimConfig{}, 4);
  for (std::size_t i = 0; i < draw.data.size(); ++i) {
    if (draw.data.z(i) == 1) {
      CHECK(draw.data.d(i) == draw.high[i]);
    } else {
      CHECK_FALSE(draw.data.has_dose(i));
    }
  }
}

TEST_CASE("simulation is deterministic in the seed") {
  SimConfig c;
  c.n = 500;
  const auto a = simulate(c, 42), b = simulate(c, 42), d = simulate(c, 43);
  bool differs = false;
  for (std::size_t i = 0; i < a.data.size(); ++i) {
    CHECK(a.data.y(i) == b.data.y(i));
    CHECK(a.data.z(i) == b.data.z(i));
    differs = differs || a.data.y(i) != d.data.y(i);
  }
  CHECK(differs);
}

TEST_CASE("noiseless data with a constant effect gives exactly the effect") {
  SimConfig c;
  c.n = 1000;
  c.sigma_y = 0;
  c.sigma_tau = 0;
  c.beta0 = 0;
  const auto draw = simulate(c, 9);
  const auto scores = pscore_onesided(draw.data);
  for (const auto& est : {estimate_weighting_weak(draw.data, scores),
                          estimate_weighting_strong(draw.data, scores),
                          estimate_discrete_subgroup(draw.data, scores)}) {
    CHECK(est.at(Stratum::High).itt == doctest::Approx(0.5).epsilon(1e-12));
  }
}

TEST_CASE("quadrature truth agrees with a large Monte Carlo draw") {
  SimConfig c;
  c.beta1 = 0.25;
  c.gamma1 = 0.2;
  c.delta1 = 0.1;
  const auto truth = true_estimands(c);
  std::mt19937_64 rng(2024);
  std::normal_distribution<double> normal;
  // Rao-Blackwellized over the stratum draw.
  double wh = 0, wxh = 0, wl = 0, wxl = 0;
  for (int i = 0; i < 10000000; ++i) {
    const double x = normal(rng);
    const double p = 1.0 / (1.0 + std::exp(-(c.eta0 + c.eta1 * x)));
    wh += p;
    wxh += p * x;
    wl += 1 - p;
    wxl += (1 - p) * x;
  }
  const double itt_h = c.tau + c.gamma1 + (c.beta1 + c.delta1) * wxh / wh;
  const double itt_l = c.tau + c.beta1 * wxl / wl;
  CHECK(std::abs(truth.itt_h - itt_h) < 1e-3);
  CHECK(std::abs(truth.itt_l - itt_l) < 1e-3);
  CHECK(std::abs(truth.p_high - wh / 1e7) < 1e-3);
}

TEST_CASE("a flat score makes the truth independent of x") {
  SimConfig c;
  c.eta1 = 0;
  c.gamma1 = 0.3;
  c.beta1 = 0.7;
  const auto t = true_estimands(c);
  CHECK(t.itt_h == doctest::Approx(c.tau + c.gamma1).epsilon(1e-10));
  CHECK(t.itt_l == doctest::Approx(c.tau).epsilon(1e-10));
  CHECK(t.p_high == doctest::Approx(0.5).epsilon(1e-10));
}

TEST_CASE("study configs are parsed strictly") {
  using nlohmann::json;
  const auto c = parse_study_config(json::parse(
      R"({"grid": {"beta1": [0, 0.1], "gamma1": 0.5}, "reps": 10, "seed": 3,
          "methods": ["Wt", "Sub"], "base": {"n": 500}})"));
  CHECK(c.cells.size() == 2);
  CHECK(c.cells[1].beta1 == 0.1);
  CHECK(c.cells[1].gamma1 == 0.5);
  CHECK(c.base.n == 500);
  CHECK(c.methods.size() == 2);
  CHECK_THROWS_AS(parse_study_config(json::parse(R"({"grid": {"beta1": [0]}, "rpes": 10})")),
                  ValidationError);
  CHECK_THROWS_AS(parse_study_config(json::parse(R"({"grid": {"beta2": [0]}})")), ValidationError);
  CHECK_THROWS_AS(parse_study_config(json::parse(R"({"cells": [{"beta1": 0}], "methods": ["Foo"]})")),
                  ValidationError);
  CHECK_THROWS_AS(parse_study_config(json::parse(R"({"cells": [{"beta1": 0}], "base": {"n": 2}})")),
                  ValidationError);
  CHECK_THROWS_AS(parse_study_config(json::parse(R"({"grid": {"beta1": []}})")), ValidationError);
  CHECK_THROWS_AS(parse_study_config(json::parse(R"({"cells": [{"beta1": 0}], "seed": -1})")),
                  ValidationError);
  CHECK_THROWS_AS(parse_sim_config(json::parse(R"({"eta": 1})")), ValidationError);
  CHECK(parse_sim_config(to_json(SimConfig{})).n == 2000);
}

TEST_CASE("sim config round-trips through json") {
  SimConfig c;
  c.gamma0 = 0.2;
  c.assignment = AssignmentScheme::Bernoulli;
  const auto back = parse_sim_config(to_json(c));
  CHECK(back.gamma0 == 0.2);
  CHECK(back.assignment == AssignmentScheme::Bernoulli);
}

TEST_CASE("study results do not depend on the number of jobs") {
  StudyConfig c;
  c.cells = {{0.0, 0.0, 0.0}, {0.25, 0.0, 0.0}};
  c.reps = 40;
  c.seed = 99;
  c.base.n = 400;
  std::ostringstream one, four;
  c.jobs = 1;
  write_study_csv(one, run_study(c));
  c.jobs = 4;
  write_study_csv(four, run_study(c));
  CHECK(one.str() == four.str());
}

TEST_CASE("Monte Carlo pattern: effect heterogeneity and principal ignorability violations") {
  StudyConfig c;
  // Heterogeneity in x; then Y(1) and Y(0) depending on the stratum itself.
  c.cells = {{0.25, 0.0, 0.0}, {0.0, 0.0, 0.5}, {0.0, 0.5, 0.0}};
  c.reps = 1000;
  c.seed = 7;
  c.jobs = 2;
  const auto r = run_study(c);
  REQUIRE(r.cells.size() == 3);

  // Subgroup targets a different estimand and drifts with beta1; weighting does not.
  CHECK(summary(r.cells[0], StudyMethod::Sub).bias > 0.05);
  CHECK(std::abs(summary(r.cells[0], StudyMethod::Wt).bias) < 0.02);
  CHECK(std::abs(summary(r.cells[0], StudyMethod::WkWt).bias) < 0.02);
  CHECK(summary(r.cells[0], StudyMethod::Wt).coverage > 0.92);

  // Stratum-dependent effect: strong PI fails, weak PI still holds.
  CHECK(summary(r.cells[1], StudyMethod::Wt).bias < -0.2);
  CHECK(std::abs(summary(r.cells[1], StudyMethod::WkWt).bias) < 0.02);

  // Stratum-dependent control outcome: weak PI fails too.
  CHECK(summary(r.cells[2], StudyMethod::WkWt).bias > 0.2);
  for (const auto& cell : r.cells) {
    for (const auto& m : cell.methods) CHECK(m.failures == 0);
  }
}
